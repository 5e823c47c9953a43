"""
WSGI entry point serving the admin and the read-only API over stored runs.
"""
import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'quiclens.settings')

application = get_wsgi_application()
