"""
Django settings for the ARRBench project.

The project has no HTTP surface: Django provides the settings layer, the run
registry (ORM on SQLite) and the command-line surface (management commands).

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from dotenv import load_dotenv
import os
load_dotenv()
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Only used by Django internals (no sessions or signing happen here).
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'arrbench-local-only-secret-key')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',

    'rest_framework',

    'numerics',
    'encoder',
    'decoder',
    'corpus',
    'training',
    'metrics',
    'experiments',
]


# Database
# The run registry mirrors every run directory's manifest.json.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv('ARR_DB_PATH', str(BASE_DIR / 'db.sqlite3')),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

ARR_LOG_LEVEL = os.getenv('ARR_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamped': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'timestamped',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': ARR_LOG_LEVEL,
    },
}


# Experiment outputs
# All command outputs go under a timestamped run directory below this root.
ARR_OUTPUT_ROOT = Path(os.getenv('ARR_OUTPUT_ROOT', str(BASE_DIR / 'runs')))

# Desk-scale defaults. Full-scale values are selectable through config files.
ARR_DEFAULTS = {
    'encoder': {
        'frame_size': 16,
        'channels': 3,
        'patch_size': 8,
        'embed_dim': 32,
        'depth': 2,
        'heads': 4,
        'n_frames': 4,
        'mlp_ratio': 4,
        'temporal_attention': True,
        'seed': 0,
    },
    'decoder': {
        'model_dim': 64,
        'depth': 4,
        'heads': 4,
        'max_T': 16,
        'mlp_ratio': 4,
        'causal': True,
        'seed': 0,
    },
    'sampling': {
        'tau_a': 1.0,
        'T': 8,
        'n': 4,
        'fps': 30.0,
        'gap_strategy': 'unknown',
        'seed': 0,
    },
    'training': {
        'mode': 'label_only',
        'epochs': 50,
        'warmup_epochs': 20,
        'cosine_epochs': 30,
        'lr': 1e-4,
        'weight_decay': 4e-5,
        'batch_size': 8,
        'beta1': 0.9,
        'beta2': 0.999,
        'eps': 1e-8,
        'rec_weight': 1.0,
        'pre_weight': 1.0,
        'val_fraction': 0.1,
        'dtype': 'float64',
        'encoder_tuning': 'full',
        'pretrain_frames': 8,
        'pretrain_interval': 1,
        'seed': 0,
    },
    'synthetic': {
        'k': 20,
        'succ': 5,
        'num': 50000,
        'len': 9,
        'sigma': 0.25,
        'seed': 0,
    },
}
