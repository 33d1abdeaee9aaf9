"""
Django settings for ckls_lab project.
CKLS -> CIR -> OU transformation lab (library + management commands).
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only management commands run here; there is no request handling.
SECRET_KEY = 'django-insecure-ckls-lab-commands-only'

DEBUG = False

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'ckls',
]

# No models, no database
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Logging: reports go to stdout, diagnostics to stderr
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'ckls': {
            'handlers': ['stderr'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}

# Custom settings (anything not listed falls back to ckls.conf.DEFAULTS)
CKLS = {
    'SEED': 42,
    'DT': 1e-3,
    'N_PATHS': 100_000,
    'CHUNK_SIZE': 10_000,
    'N_JOBS': 1,
}
