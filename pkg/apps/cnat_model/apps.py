from django.apps import AppConfig


class CnatModelConfig(AppConfig):
    name = 'apps.cnat_model'
    verbose_name = 'Red C-NAT'
