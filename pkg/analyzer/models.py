from django.db import models


class AnalysisRun(models.Model):
    """
    One analyzer run over a capture, stored when ``analyze --store`` is given
    """
    source_path = models.CharField(max_length=500)
    mode = models.CharField(max_length=10)  # 'online' or 'offline'
    schema_version = models.CharField(max_length=10)
    config = models.JSONField(default=dict)
    ingest_stats = models.JSONField(default=dict)
    connection_count = models.IntegerField(default=0)
    object_count = models.IntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.source_path} ({self.mode}, {self.created_at:%Y-%m-%d %H:%M})"


class ConnectionRecord(models.Model):
    """
    Connection-level summary of one generation of a QUIC connection
    """
    run = models.ForeignKey(AnalysisRun, on_delete=models.CASCADE, related_name='connections')
    connection_key = models.CharField(max_length=255)
    generation = models.IntegerField(default=0)
    client_ip = models.GenericIPAddressField()
    client_port = models.IntegerField()
    server_ip = models.GenericIPAddressField()
    server_port = models.IntegerField()
    quic_cid = models.CharField(max_length=40, blank=True)  # hex
    client_inferred = models.BooleanField(default=True)

    connection_start = models.FloatField()
    duration = models.FloatField()
    total_request_size = models.BigIntegerField(default=0)
    total_response_size = models.BigIntegerField(default=0)
    total_request_packets = models.IntegerField(default=0)
    total_response_packets = models.IntegerField(default=0)
    individual_pair_count = models.IntegerField(default=0)
    estimated_object_count = models.IntegerField(default=0)
    multiplexing_level = models.FloatField(default=1.0)
    no_objects = models.BooleanField(default=False)

    rtt_used = models.FloatField()
    rtt_source = models.CharField(max_length=30)
    mtu_up = models.IntegerField()
    mtu_down = models.IntegerField()
    max_ack_len_up = models.IntegerField(default=0)
    max_ack_len_down = models.IntegerField(default=0)

    total_packets = models.IntegerField(default=0)
    zero_rtt_requests = models.IntegerField(default=0)
    discarded_response_size = models.BigIntegerField(default=0)
    discarded_response_packets = models.IntegerField(default=0)

    class Meta:
        unique_together = ('run', 'connection_key', 'generation')
        ordering = ['run', 'connection_start']

    def __str__(self):
        return f"{self.connection_key} gen {self.generation}"


class HttpObject(models.Model):
    """
    An estimated HTTP request-response object; a super object when it groups
    several interleaved pairs
    """
    connection = models.ForeignKey(ConnectionRecord, on_delete=models.CASCADE, related_name='http_objects')
    sequence = models.IntegerField()  # order of emission within the run

    request_start = models.FloatField()
    request_size = models.IntegerField()
    request_packets = models.IntegerField()
    response_start = models.FloatField(null=True, blank=True)
    response_end = models.FloatField(null=True, blank=True)
    response_size = models.BigIntegerField(default=0)
    response_packets = models.IntegerField(default=0)

    pair_count = models.IntegerField(default=1)
    is_super = models.BooleanField(default=False)
    association = models.CharField(max_length=20)  # 'valid', 'suspect_timing' or 'no_response'
    zero_rtt = models.BooleanField(default=False)

    max_ack_len_up = models.IntegerField(default=0)
    max_ack_len_down = models.IntegerField(default=0)
    ack_len_window = models.JSONField(default=dict)  # {'up': [...], 'down': [...]}

    time_to_first_byte = models.FloatField(null=True, blank=True)
    time_to_last_byte = models.FloatField(null=True, blank=True)
    download_rate = models.FloatField(null=True, blank=True)  # bytes per second

    class Meta:
        ordering = ['sequence']
        indexes = [
            models.Index(fields=['connection', 'request_start'], name='analyzer_obj_conn_start_idx'),
        ]

    def __str__(self):
        kind = 'super object' if self.is_super else 'object'
        return f"{kind} @{self.request_start:.6f} ({self.request_size}B / {self.response_size}B)"
