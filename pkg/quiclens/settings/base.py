"""
Base Django settings for the quiclens project.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Only the admin and the read-only API use this; the analyzer itself never signs anything.
SECRET_KEY = os.getenv('SECRET_KEY', 'quiclens-insecure-dev-key')

# Application definition
INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'analyzer',
    'rest_framework',  # Serializers for output records and the read-only API
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'quiclens.urls'
WSGI_APPLICATION = 'quiclens.wsgi.application'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

STATIC_URL = 'static/'

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.LimitOffsetPagination',
    'PAGE_SIZE': 100,
}

# Analyzer defaults. Lengths are in bytes, times in seconds, *_RTTS in multiples of RTT.
# Every value can be overridden from the environment and again per run from the CLI.
QUICLENS_ANALYZER = {
    'L_REQ_INITIAL': int(os.getenv('QUICLENS_L_REQ_INITIAL', 100)),
    'L_REQ': int(os.getenv('QUICLENS_L_REQ', 50)),
    'L_RESP': int(os.getenv('QUICLENS_L_RESP', 35)),
    'MTU_INIT': int(os.getenv('QUICLENS_MTU_INIT', 1200)),
    'MTU_SLACK': int(os.getenv('QUICLENS_MTU_SLACK', 8)),
    'RTT_DEFAULT': float(os.getenv('QUICLENS_RTT_DEFAULT', 0.1)),
    'DELTA_T_REQ': float(os.getenv('QUICLENS_DELTA_T_REQ', 1.0)),
    'DELTA_T_RESP': float(os.getenv('QUICLENS_DELTA_T_RESP', 1.0)),
    'OUTPUT_WAIT_RTTS': float(os.getenv('QUICLENS_OUTPUT_WAIT_RTTS', 1.0)),
    'ASSOC_MIN_RTTS': float(os.getenv('QUICLENS_ASSOC_MIN_RTTS', 1.0)),
    'ASSOC_MAX_RTTS': float(os.getenv('QUICLENS_ASSOC_MAX_RTTS', 20.0)),
    'IDLE_RTTS': float(os.getenv('QUICLENS_IDLE_RTTS', 20.0)),
    'N_REQ_CAP': int(os.getenv('QUICLENS_N_REQ_CAP', 64)),
    'ACK_WINDOW': int(os.getenv('QUICLENS_ACK_WINDOW', 10)),
    'ACK_MARGIN': int(os.getenv('QUICLENS_ACK_MARGIN', 10)),
    'ZERO_RTT_MIN_LEN': int(os.getenv('QUICLENS_ZERO_RTT_MIN_LEN', 100)),
    'ZERO_RTT_MAX_LEN': int(os.getenv('QUICLENS_ZERO_RTT_MAX_LEN', 1000)),
    'FLOW_TIMEOUT': float(os.getenv('QUICLENS_FLOW_TIMEOUT', 600.0)),
}

QUICLENS_SCHEMA_VERSION = '1.0'
