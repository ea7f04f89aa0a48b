"""
Django settings for the softcorr project.
Every numerical default of the toolkit is read from the environment here.
"""

import os
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='django-insecure-softcorr-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition
DJANGO_APPS = [
    'django.contrib.contenttypes',
]

LOCAL_APPS = [
    'graphs',
    'potentials',
    'inference',
    'learning',
    'scenes',
    'harness',
]

INSTALLED_APPS = DJANGO_APPS + LOCAL_APPS

# Database configuration
USE_SQLITE = config('USE_SQLITE', default=True, cast=bool)

if USE_SQLITE:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': config('DB_NAME', default='softcorr_db'),
            'USER': config('DB_USER', default='postgres'),
            'PASSWORD': config('DB_PASSWORD', default=''),
            'HOST': config('DB_HOST', default='localhost'),
            'PORT': config('DB_PORT', default='5432'),
        }
    }

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Multimodal CRF defaults
MMCRF = {
    # Cost of label combinations that never occur (latent pairwise tables)
    'PENALTY': config('MMCRF_PENALTY', default=1000.0, cast=float),
    # Truncation depth of standalone inference
    'TRW_ITERATIONS': config('MMCRF_TRW_ITERATIONS', default=20, cast=int),
    # Truncation depth used inside the training risk
    'LEARNING_ITERATIONS': config('MMCRF_LEARNING_ITERATIONS', default=10, cast=int),
    'DAMPING': config('MMCRF_DAMPING', default=0.0, cast=float),
    'TOLERANCE': config('MMCRF_TOLERANCE', default=0.0, cast=float),
    # 'uniform' spanning-tree bound or 'loopy' (rho = 1)
    'EDGE_APPEARANCE': config('MMCRF_EDGE_APPEARANCE', default='uniform'),
    'LAMBDA': config('MMCRF_LAMBDA', default=1e-3, cast=float),
    'OUTER_ITERATIONS': config('MMCRF_OUTER_ITERATIONS', default=5, cast=int),
    'STEP_SIZE': config('MMCRF_STEP_SIZE', default=1.0, cast=float),
    'OPTIMIZER': config('MMCRF_OPTIMIZER', default='line-search'),
    'SEED': config('MMCRF_SEED', default=0, cast=int),
    'BRUTE_FORCE_LIMIT': config('MMCRF_BRUTE_FORCE_LIMIT', default=10_000_000, cast=int),
}

# Celery Configuration
CELERY_BROKER_URL = config('REDIS_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('REDIS_URL', default='redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
# Scenes are inferred in-process unless a worker pool is explicitly wanted
CELERY_TASK_ALWAYS_EAGER = config('CELERY_TASK_ALWAYS_EAGER', default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True

# Logging Configuration
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {message}',
            'style': '{',
        },
        'trace': {
            'format': '{message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': BASE_DIR / 'logs' / 'softcorr.log',
            'maxBytes': 5 * 1024 * 1024,
            'backupCount': 3,
            'formatter': 'verbose',
        },
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
        'trace_file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs' / 'training.jsonl',
            'formatter': 'trace',
        },
    },
    'loggers': {
        'learning.trace': {
            'handlers': ['trace_file', 'console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': LOG_LEVEL,
    },
}

# Create logs directory if it doesn't exist
os.makedirs(BASE_DIR / 'logs', exist_ok=True)
