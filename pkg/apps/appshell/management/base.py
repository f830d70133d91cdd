"""
Clase base de los management commands de C-NAT.

Convierte cualquier CnatError en CommandError (código de salida distinto
de cero, mensaje por stderr) y ofrece los argumentos comunes --config y
--seed.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from apps.appshell.config import load_config
from apps.numcore.exceptions import CnatError

logger = logging.getLogger(__name__)


class CnatCommand(BaseCommand):

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CnatError as exc:
            logger.error(f'[{exc.code}] {exc}')
            raise CommandError(f'[{exc.code}] {exc}') from exc

    def add_config_argument(self, parser):
        parser.add_argument('--config', help='Fichero de configuración (secciones [model], [train], ...)')

    def add_seed_argument(self, parser, required=False):
        parser.add_argument('--seed', type=int, required=required, default=None if required else 0,
                            help='Semilla de todas las fuentes de aleatoriedad')

    def load_config(self, options, overrides=None):
        return load_config(options.get('config'), overrides)

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def progress(self, message):
        logger.info(message)
        self.stdout.write(message)
