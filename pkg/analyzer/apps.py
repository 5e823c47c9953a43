from django.apps import AppConfig


class AnalyzerAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'analyzer'
    verbose_name = 'QUIC HTTP object analyzer'
