from django.apps import AppConfig


class WeaksupConfig(AppConfig):
    name = 'apps.weaksup'
    verbose_name = 'Supervisión débil'
