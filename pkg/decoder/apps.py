from django.apps import AppConfig


class DecoderAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'decoder'
