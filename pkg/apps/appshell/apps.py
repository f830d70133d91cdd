from django.apps import AppConfig


class AppshellConfig(AppConfig):
    name = 'apps.appshell'
    verbose_name = 'Datos, vocabulario y CLI'
