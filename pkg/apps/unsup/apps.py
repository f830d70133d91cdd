from django.apps import AppConfig


class UnsupConfig(AppConfig):
    name = 'apps.unsup'
    verbose_name = 'Pseudo-explicaciones no supervisadas'
