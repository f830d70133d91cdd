"""
Settings package de C-NAT.

NO apuntar DJANGO_SETTINGS_MODULE a 'cnat.settings' directamente.
Usar el modulo especifico del entorno:

    - cnat.settings.development  (portátil, CI, tests)
    - cnat.settings.production   (servidor de experimentos)

manage.py usa development por defecto.
"""
