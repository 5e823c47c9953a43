"""
DRF serializers.

The record serializers turn analyzer emissions into the output envelope shared
by the JSON-Lines and CSV writers and by storage; the model serializers back
the read-only API.
"""
from django.conf import settings
from rest_framework import serializers

from .models import AnalysisRun, ConnectionRecord, HttpObject
from .services.connection import ConnectionSummary


def to_us(seconds):
    return None if seconds is None else round(seconds * 1_000_000)


class TimestampField(serializers.Field):
    """Seconds rendered as integer microseconds"""

    def __init__(self, **kwargs):
        kwargs['read_only'] = True
        super().__init__(**kwargs)

    def to_representation(self, value):
        return to_us(value)


class OffsetField(TimestampField):
    """Seconds since the start of the connection, at microsecond precision"""

    def to_representation(self, value):
        return round(value - self.context['origin'], 6)


class EnumValueField(serializers.Field):
    def __init__(self, **kwargs):
        kwargs['read_only'] = True
        super().__init__(**kwargs)

    def to_representation(self, value):
        return value.value


class HttpObjectRecordSerializer(serializers.Serializer):
    request_start_us = TimestampField(source='request_start')
    request_start_offset = OffsetField(source='request_start')
    request_size = serializers.IntegerField()
    request_packets = serializers.IntegerField()
    response_start_us = TimestampField(source='response_start')
    response_start_offset = OffsetField(source='response_start')
    response_end_us = TimestampField(source='response_end')
    response_end_offset = OffsetField(source='response_end')
    response_size = serializers.IntegerField()
    response_packets = serializers.IntegerField()
    pair_count = serializers.IntegerField()
    is_super = serializers.BooleanField()
    association = EnumValueField()
    zero_rtt = serializers.BooleanField()
    max_ack_len_up = serializers.IntegerField()
    max_ack_len_down = serializers.IntegerField()
    ack_len_window_up = serializers.SerializerMethodField()
    ack_len_window_down = serializers.SerializerMethodField()
    time_to_first_byte = serializers.FloatField()
    time_to_last_byte = serializers.FloatField()
    download_rate = serializers.FloatField()
    request_positions = serializers.ListField(child=serializers.IntegerField())
    response_positions = serializers.ListField(child=serializers.IntegerField())

    def get_ack_len_window_up(self, obj):
        return list(obj.ack_len_window_snapshot.get('up', []))

    def get_ack_len_window_down(self, obj):
        return list(obj.ack_len_window_snapshot.get('down', []))


class ConnectionSummarySerializer(serializers.Serializer):
    connection_start_us = TimestampField(source='connection_start')
    duration = serializers.FloatField()
    total_request_size = serializers.IntegerField()
    total_response_size = serializers.IntegerField()
    total_request_packets = serializers.IntegerField()
    total_response_packets = serializers.IntegerField()
    individual_pair_count = serializers.IntegerField()
    estimated_object_count = serializers.IntegerField()
    multiplexing_level = serializers.FloatField()
    no_objects = serializers.BooleanField()
    rtt_used = serializers.FloatField()
    rtt_source = EnumValueField()
    mtu_up = serializers.IntegerField()
    mtu_down = serializers.IntegerField()
    client_inferred = serializers.BooleanField()
    total_packets = serializers.IntegerField()
    zero_rtt_requests = serializers.IntegerField()
    discarded_response_size = serializers.IntegerField()
    discarded_response_packets = serializers.IntegerField()
    max_ack_len_up = serializers.IntegerField()
    max_ack_len_down = serializers.IntegerField()


class OutputEnvelopeSerializer(serializers.Serializer):
    """
    One output line: ``record_type`` is ``object`` or ``summary`` and ``payload``
    holds the record fields. Takes an Emission.
    """
    record_type = serializers.SerializerMethodField()
    schema_version = serializers.SerializerMethodField()
    connection_key = serializers.CharField(source='key')
    generation = serializers.IntegerField()
    emitted_at_us = TimestampField(source='at')
    payload = serializers.SerializerMethodField()

    def get_record_type(self, emission):
        return 'summary' if emission.is_summary else 'object'

    def get_schema_version(self, emission):
        return self.context.get('schema_version', settings.QUICLENS_SCHEMA_VERSION)

    def get_payload(self, emission):
        serializer_class = (ConnectionSummarySerializer if isinstance(emission.record, ConnectionSummary)
                            else HttpObjectRecordSerializer)
        return dict(serializer_class(emission.record, context={'origin': emission.origin}).data)


OBJECT_FIELDS = list(HttpObjectRecordSerializer().fields)
SUMMARY_FIELDS = list(ConnectionSummarySerializer().fields)
ENVELOPE_FIELDS = ['record_type', 'schema_version', 'connection_key', 'generation', 'emitted_at_us']
CSV_FIELDS = ENVELOPE_FIELDS + OBJECT_FIELDS + [f for f in SUMMARY_FIELDS if f not in OBJECT_FIELDS]


class HttpObjectSerializer(serializers.ModelSerializer):
    class Meta:
        model = HttpObject
        fields = '__all__'


class ConnectionRecordSerializer(serializers.ModelSerializer):
    object_count = serializers.IntegerField(source='http_objects.count', read_only=True)

    class Meta:
        model = ConnectionRecord
        fields = '__all__'


class AnalysisRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = AnalysisRun
        fields = '__all__'
