from django.apps import AppConfig


class CklsConfig(AppConfig):
    name = 'ckls'
    verbose_name = 'CKLS Transformation Lab'
