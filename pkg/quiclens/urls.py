"""
URL configuration for the quiclens project.

Only the admin and the read-only API over stored analysis runs are routed;
the analyzer itself runs from ``manage.py`` commands.
"""
from django.contrib import admin
from django.urls import include, path

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/', include('analyzer.urls')),
]
