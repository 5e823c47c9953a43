from django.urls import include, path
from rest_framework.routers import DefaultRouter

from . import views

router = DefaultRouter()
router.register('runs', views.AnalysisRunViewSet)
router.register('connections', views.ConnectionRecordViewSet, basename='connection')
router.register('objects', views.HttpObjectViewSet, basename='httpobject')

urlpatterns = [
    path('', include(router.urls)),
]
