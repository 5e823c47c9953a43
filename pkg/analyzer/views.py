from rest_framework import viewsets

from .models import AnalysisRun, ConnectionRecord, HttpObject
from .serializers import AnalysisRunSerializer, ConnectionRecordSerializer, HttpObjectSerializer


class AnalysisRunViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = AnalysisRun.objects.all()
    serializer_class = AnalysisRunSerializer


class ConnectionRecordViewSet(viewsets.ReadOnlyModelViewSet):
    """Stored connection summaries; ``?run=<id>`` narrows to one run"""
    serializer_class = ConnectionRecordSerializer

    def get_queryset(self):
        queryset = ConnectionRecord.objects.all()
        run = self.request.query_params.get('run')
        if run is not None:
            queryset = queryset.filter(run_id=run)
        return queryset


class HttpObjectViewSet(viewsets.ReadOnlyModelViewSet):
    """Stored objects; filter with ``?connection=<id>`` or ``?super=true``"""
    serializer_class = HttpObjectSerializer

    def get_queryset(self):
        queryset = HttpObject.objects.select_related('connection')
        params = self.request.query_params
        if 'connection' in params:
            queryset = queryset.filter(connection_id=params['connection'])
        if 'super' in params:
            queryset = queryset.filter(is_super=params['super'].lower() == 'true')
        return queryset
