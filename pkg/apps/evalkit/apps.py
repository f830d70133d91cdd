from django.apps import AppConfig


class EvalkitConfig(AppConfig):
    name = 'apps.evalkit'
    verbose_name = 'Métricas y benchmark'
