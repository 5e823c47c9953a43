"""
Persists an AnalysisResult as AnalysisRun / ConnectionRecord / HttpObject rows.
"""
import logging

from django.conf import settings
from django.db import transaction

from analyzer.models import AnalysisRun, ConnectionRecord, HttpObject

logger = logging.getLogger(__name__)


def _connection_row(run, summary):
    key = summary.connection_key
    return ConnectionRecord(
        run=run,
        connection_key=str(key),
        generation=summary.generation,
        client_ip=key.client_ip,
        client_port=key.client_port,
        server_ip=key.server_ip,
        server_port=key.server_port,
        quic_cid=key.quic_cid.hex(),
        client_inferred=summary.client_inferred,
        connection_start=summary.connection_start,
        duration=summary.duration,
        total_request_size=summary.total_request_size,
        total_response_size=summary.total_response_size,
        total_request_packets=summary.total_request_packets,
        total_response_packets=summary.total_response_packets,
        individual_pair_count=summary.individual_pair_count,
        estimated_object_count=summary.estimated_object_count,
        multiplexing_level=summary.multiplexing_level,
        no_objects=summary.no_objects,
        rtt_used=summary.rtt_used,
        rtt_source=summary.rtt_source.value,
        mtu_up=summary.mtu_up,
        mtu_down=summary.mtu_down,
        max_ack_len_up=summary.max_ack_len_up,
        max_ack_len_down=summary.max_ack_len_down,
        total_packets=summary.total_packets,
        zero_rtt_requests=summary.zero_rtt_requests,
        discarded_response_size=summary.discarded_response_size,
        discarded_response_packets=summary.discarded_response_packets,
    )


def _object_row(connection, sequence, obj):
    return HttpObject(
        connection=connection,
        sequence=sequence,
        request_start=obj.request_start,
        request_size=obj.request_size,
        request_packets=obj.request_packets,
        response_start=obj.response_start,
        response_end=obj.response_end,
        response_size=obj.response_size,
        response_packets=obj.response_packets,
        pair_count=obj.pair_count,
        is_super=obj.is_super,
        association=obj.association.value,
        zero_rtt=obj.zero_rtt,
        max_ack_len_up=obj.max_ack_len_up,
        max_ack_len_down=obj.max_ack_len_down,
        ack_len_window=obj.ack_len_window_snapshot,
        time_to_first_byte=obj.time_to_first_byte,
        time_to_last_byte=obj.time_to_last_byte,
        download_rate=obj.download_rate,
    )


@transaction.atomic
def store_result(result, source_path):
    """
    Save one analyzer run.

    Args:
        result: AnalysisResult
        source_path: capture the run was made from

    Returns:
        The saved AnalysisRun
    """
    objects = [e for e in result.emissions if not e.is_summary]
    summaries = [e for e in result.emissions if e.is_summary]
    run = AnalysisRun.objects.create(
        source_path=str(source_path),
        mode=result.mode,
        schema_version=settings.QUICLENS_SCHEMA_VERSION,
        config=result.config.as_dict(),
        ingest_stats=result.stats.as_dict(),
        connection_count=result.connection_count,
        object_count=len(objects),
    )

    connections = ConnectionRecord.objects.bulk_create([_connection_row(run, e.record) for e in summaries])
    by_identity = {(c.connection_key, c.generation): c for c in connections}
    if any(c.pk is None for c in connections):
        # Backends without RETURNING on bulk insert
        by_identity = {(c.connection_key, c.generation): c for c in run.connections.all()}

    HttpObject.objects.bulk_create([
        _object_row(by_identity[(str(e.key), e.generation)], sequence, e.record)
        for sequence, e in enumerate(objects)
    ])
    logger.info(f"Stored run {run.pk}: {len(connections)} connections, {len(objects)} objects")
    return run
