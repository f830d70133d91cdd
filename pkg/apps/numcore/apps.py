from django.apps import AppConfig


class NumcoreConfig(AppConfig):
    name = 'apps.numcore'
    verbose_name = 'Núcleo numérico'
