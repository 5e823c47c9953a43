"""
Fixture builders shared by the analyzer tests: single PacketRecords, raw QUIC
header bytes and labeled synthetic traces of the three reference shapes
(sequential objects, multiplexed objects, 0-RTT resumption).
"""
from analyzer.services.core_model import Direction, HeaderForm, LongPacketType, PacketRecord
from analyzer.services.ingest import RawDatagram, encode_varint, stream_records
from analyzer.services.synth import Pattern, single

CLIENT = ('10.0.0.2', 50000)
SERVER = ('192.0.2.10', 443)
DCID = bytes.fromhex('a1a2a3a4a5a6a7a8')
SCID = bytes.fromhex('b1b2b3b4b5b6b7b8')


def packet(t, length, upstream=True, long_type=None, coalesced=1, position=0, udp_len=None):
    """A PacketRecord at ``t`` seconds; a long header when ``long_type`` is given"""
    return PacketRecord(
        timestamp_us=round(t * 1_000_000),
        direction=Direction.CLIENT_TO_SERVER if upstream else Direction.SERVER_TO_CLIENT,
        udp_payload_len=udp_len or length,
        quic_packet_len=length,
        header_form=HeaderForm.SHORT if long_type is None else HeaderForm.LONG,
        long_packet_type=long_type,
        quic_packets_in_datagram=coalesced,
        position_index=position,
    )


def packets(rows):
    """PacketRecords from (t, length, upstream[, long_type]) tuples, positions in order"""
    out = []
    for position, row in enumerate(rows):
        t, length, upstream = row[:3]
        long_type = row[3] if len(row) > 3 else None
        out.append(packet(t, length, upstream, long_type, position=position))
    return out


def long_header(packet_type, length, dcid=DCID, scid=SCID, version=1):
    """Long-header packet bytes of exactly ``length`` bytes"""
    head = bytes([0xC0 | (int(packet_type) << 4) | 0x01]) + version.to_bytes(4, 'big')
    head += bytes([len(dcid)]) + dcid + bytes([len(scid)]) + scid
    if packet_type is LongPacketType.INITIAL:
        head += encode_varint(0)
    remaining = length - len(head) - 2
    return head + (0x4000 | remaining).to_bytes(2, 'big') + bytes(remaining)


def short_header(length, dcid=SCID):
    return b'\x41' + dcid + bytes(length - 1 - len(dcid))


def datagram(t_us, upstream, payload, client=CLIENT, server=SERVER):
    src, dst = (client, server) if upstream else (server, client)
    return RawDatagram(t_us, src[0], src[1], dst[0], dst[1], payload, 'C2S' if upstream else 'S2C')


def handshake_records():
    """
    A 1-RTT handshake with a 100 ms RTT, one request and one four-packet
    response, as PacketRecords of a single connection.
    """
    return packets([
        (0.0, 1252, True, LongPacketType.INITIAL),
        (0.1, 1252, False, LongPacketType.HANDSHAKE),
        (0.1005, 90, True, LongPacketType.HANDSHAKE),
        (0.101, 70, True),       # client control stream
        (0.2, 400, True),        # request
        (0.3, 30, False),        # server ACK
        (0.32, 1200, False),     # response head
        (0.321, 1252, False),
        (0.322, 1252, False),
        (0.323, 300, False),     # response tail
        (0.3232, 28, True),      # client ACK
    ])


def records_by_key(datagrams):
    """{ConnectionKey: [PacketRecord]} in capture order"""
    grouped = {}
    for key, record in stream_records(datagrams):
        grouped.setdefault(key, []).append(record)
    return grouped


def sequential_trace(**overrides):
    """Two sequential request-response pairs after a 1-RTT handshake"""
    options = dict(n_pairs=2, rtt=0.6, seed=2)
    options.update(overrides)
    return single(Pattern.VIDEO_SEQUENTIAL, **options)


def multiplexed_trace(**overrides):
    """Three pairs whose responses are interleaved"""
    options = dict(n_pairs=3, mux_degree=3, rtt=0.1, seed=3)
    options.update(overrides)
    return single(Pattern.WEB_MULTIPLEXED, **options)


def zero_rtt_trace(**overrides):
    """A resumed connection carrying its first request in 0-RTT"""
    options = dict(n_pairs=2, rtt=0.1, seed=4)
    options.update(overrides)
    return single(Pattern.ZERO_RTT_RESUME, **options)
