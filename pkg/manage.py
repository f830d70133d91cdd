#!/usr/bin/env python
"""Django's command-line utility for C-NAT tasks."""
import os
import sys

# Comandos que miden latencia: BLAS en un solo hilo antes de importar numpy.
SINGLE_THREAD_COMMANDS = {'bench', 'generate'}


def main():
    """Run C-NAT commands."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'cnat.settings.development')
    if len(sys.argv) > 1 and sys.argv[1] in SINGLE_THREAD_COMMANDS:
        for var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
            os.environ.setdefault(var, '1')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
