"""
Capture ingestion: pcap / pcapng via dpkt, or the line-oriented ``.qevents``
format, turned into ordered PacketRecord streams keyed by connection.
"""
import ipaddress
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import dpkt

from analyzer.exceptions import IngestIoError, MalformedHeader, MalformedInput, UnsupportedLinkType
from .core_model import (
    QUIC_PORT, ConnectionKey, HeaderForm, LongPacketType, PacketRecord, normalize_key,
)

logger = logging.getLogger(__name__)

HEADER_FORM_BIT = 0x80
FIXED_BIT = 0x40
LONG_TYPE_MASK = 0x30

# pcap link-layer header types the reader can strip
LINKTYPE_NULL = 0
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW_VARIANTS = (12, 14, 101)
LINKTYPE_LOOP = 108
LINKTYPE_LINUX_SLL = 113
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229

PCAPNG_MAGIC = b'\x0a\x0d\x0d\x0a'


@dataclass(frozen=True)
class RawDatagram:
    timestamp_us: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes
    direction_hint: Optional[str] = None  # 'C2S' / 'S2C' when the producer knows it


@dataclass(frozen=True)
class QuicPacketFacts:
    header_form: HeaderForm
    long_packet_type: Optional[LongPacketType]
    quic_packet_len: int
    dcid: bytes = b''
    version: Optional[int] = None


@dataclass
class IngestStats:
    frames: int = 0
    datagrams: int = 0
    records: int = 0
    skipped_non_udp: int = 0
    skipped_non_quic: int = 0
    skipped_fragments: int = 0
    malformed: int = 0
    padding_bytes: int = 0
    flows_evicted: int = 0

    def as_dict(self):
        return asdict(self)


def read_varint(data, offset):
    """Decode a QUIC variable-length integer; returns (value, next offset)"""
    if offset >= len(data):
        raise MalformedHeader("Truncated variable-length integer", offset)
    first = data[offset]
    length = 1 << (first >> 6)
    if offset + length > len(data):
        raise MalformedHeader("Truncated variable-length integer", offset)
    value = first & 0x3F
    for byte in data[offset + 1:offset + length]:
        value = (value << 8) | byte
    return value, offset + length


def encode_varint(value):
    if value < 0x40:
        return bytes([value])
    if value < 0x4000:
        return (value | 0x4000).to_bytes(2, 'big')
    if value < 0x40000000:
        return (value | 0x80000000).to_bytes(4, 'big')
    return (value | 0xC000000000000000).to_bytes(8, 'big')


def parse_header_facts(udp_payload):
    """
    Walk the coalesced QUIC packets of one UDP payload.

    Long headers are delimited by their Length field (Retry and Version
    Negotiation run to the end of the datagram). A short header always consumes
    the remainder, so it can only be the last packet. Bytes after a packet
    whose first byte lacks the fixed bit are treated as padding.

    Args:
        udp_payload: non-empty UDP payload

    Returns:
        List of QuicPacketFacts, one per QUIC packet, in datagram order

    Raises:
        MalformedHeader: truncated varint, CID or Length beyond the payload
    """
    data = bytes(udp_payload)
    size = len(data)
    if size == 0:
        raise MalformedHeader("Empty UDP payload", 0)

    packets = []
    offset = 0
    while offset < size:
        first = data[offset]
        if offset > 0 and not first & FIXED_BIT:
            break

        if not first & HEADER_FORM_BIT:
            packets.append(QuicPacketFacts(HeaderForm.SHORT, None, size - offset))
            break

        pos = offset + 1
        if pos + 5 > size:
            raise MalformedHeader("Truncated long header", offset)
        version = int.from_bytes(data[pos:pos + 4], 'big')
        pos += 4
        dcid_len = data[pos]
        pos += 1
        if pos + dcid_len >= size:
            raise MalformedHeader(f"Destination CID length {dcid_len} exceeds datagram", offset)
        dcid = data[pos:pos + dcid_len]
        pos += dcid_len
        scid_len = data[pos]
        pos += 1
        if pos + scid_len > size:
            raise MalformedHeader(f"Source CID length {scid_len} exceeds datagram", offset)
        pos += scid_len

        packet_type = LongPacketType((first & LONG_TYPE_MASK) >> 4)
        if version == 0 or packet_type is LongPacketType.RETRY:
            end = size
        else:
            if packet_type is LongPacketType.INITIAL:
                token_len, pos = read_varint(data, pos)
                pos += token_len
                if pos > size:
                    raise MalformedHeader("Initial token exceeds datagram", offset)
            length, pos = read_varint(data, pos)
            end = pos + length
            if end > size:
                raise MalformedHeader(f"Long header Length {length} exceeds datagram", offset)

        packets.append(QuicPacketFacts(HeaderForm.LONG, packet_type, end - offset, dcid, version))
        offset = end

    return packets


def _ip_text(packed):
    return ipaddress.ip_address(packed).compressed


def _network_layer(linktype, buf):
    """Strip the link layer; returns a dpkt IP/IP6 object or None"""
    if linktype == LINKTYPE_ETHERNET:
        return dpkt.ethernet.Ethernet(buf).data
    if linktype in LINKTYPE_RAW_VARIANTS or linktype in (LINKTYPE_IPV4, LINKTYPE_IPV6):
        if not buf:
            return None
        return dpkt.ip6.IP6(buf) if buf[0] >> 4 == 6 else dpkt.ip.IP(buf)
    if linktype == LINKTYPE_LINUX_SLL:
        return dpkt.sll.SLL(buf).data
    if linktype in (LINKTYPE_NULL, LINKTYPE_LOOP):
        return dpkt.loopback.Loopback(buf).data
    raise UnsupportedLinkType(linktype)


def _open_pcap_reader(handle):
    magic = handle.read(4)
    handle.seek(0)
    try:
        if magic == PCAPNG_MAGIC:
            return dpkt.pcapng.Reader(handle)
        return dpkt.pcap.Reader(handle)
    except (ValueError, dpkt.dpkt.UnpackError) as e:
        raise MalformedInput(f"Not a pcap/pcapng capture: {e}") from e


def read_pcap(path, stats=None):
    """
    Yield RawDatagrams for every UDP datagram in a pcap or pcapng file.

    Non-UDP frames and IPv4 fragments are skipped and counted.
    """
    stats = stats if stats is not None else IngestStats()
    try:
        handle = open(path, 'rb')
    except OSError as e:
        raise IngestIoError(f"Cannot open capture {path}: {e}") from e

    with handle:
        reader = _open_pcap_reader(handle)
        linktype = reader.datalink()
        for timestamp, buf in reader:
            stats.frames += 1
            try:
                ip = _network_layer(linktype, buf)
            except (dpkt.dpkt.UnpackError, dpkt.dpkt.NeedData):
                stats.skipped_non_udp += 1
                continue

            if isinstance(ip, dpkt.ip.IP):
                if ip.mf or ip.offset:
                    stats.skipped_fragments += 1
                    continue
            elif not isinstance(ip, dpkt.ip6.IP6):
                stats.skipped_non_udp += 1
                continue

            udp = ip.data
            if not isinstance(udp, dpkt.udp.UDP):
                stats.skipped_non_udp += 1
                continue

            yield RawDatagram(
                timestamp_us=round(timestamp * 1_000_000),
                src_ip=_ip_text(ip.src),
                src_port=udp.sport,
                dst_ip=_ip_text(ip.dst),
                dst_port=udp.dport,
                payload=bytes(udp.data),
            )


def read_qevents(path, stats=None):
    """
    Yield RawDatagrams from a ``.qevents`` file.

    One datagram per line: ``ts_us dir src_ip src_port dst_ip dst_port hex_payload``.
    ``dir`` is informational and ignored; blank lines and ``#`` comments are skipped.
    """
    stats = stats if stats is not None else IngestStats()
    try:
        handle = open(path, 'r', encoding='ascii')
    except OSError as e:
        raise IngestIoError(f"Cannot open event file {path}: {e}") from e

    line_no = 0
    with handle:
        try:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line or line.startswith('#'):
                    continue
                parts = line.split()
                if len(parts) != 7:
                    raise MalformedInput(f"{path}:{line_no}: expected 7 fields, got {len(parts)}")
                ts_us, direction, src_ip, src_port, dst_ip, dst_port, payload = parts
                try:
                    datagram = RawDatagram(
                        timestamp_us=int(ts_us),
                        src_ip=ipaddress.ip_address(src_ip).compressed,
                        src_port=int(src_port),
                        dst_ip=ipaddress.ip_address(dst_ip).compressed,
                        dst_port=int(dst_port),
                        payload=bytes.fromhex(payload),
                        direction_hint=direction,
                    )
                except ValueError as e:
                    raise MalformedInput(f"{path}:{line_no}: {e}") from e
                stats.frames += 1
                yield datagram
        except UnicodeDecodeError as e:
            raise MalformedInput(f"{path}: non-ASCII content after line {line_no}: {e.reason}") from e


def write_qevents(handle, datagrams):
    handle.write("# ts_us dir src_ip src_port dst_ip dst_port hex_payload\n")
    for d in datagrams:
        handle.write(
            f"{d.timestamp_us} {d.direction_hint or '-'} {d.src_ip} {d.src_port} "
            f"{d.dst_ip} {d.dst_port} {d.payload.hex()}\n"
        )


def write_pcap(handle, datagrams):
    """Write datagrams as Ethernet/IPv4(or IPv6)/UDP frames"""
    writer = dpkt.pcap.Writer(handle, snaplen=65535, linktype=LINKTYPE_ETHERNET)
    for d in datagrams:
        udp = dpkt.udp.UDP(sport=d.src_port, dport=d.dst_port, data=d.payload)
        udp.ulen = len(udp)
        src = ipaddress.ip_address(d.src_ip)
        if src.version == 6:
            ip = dpkt.ip6.IP6(src=src.packed, dst=ipaddress.ip_address(d.dst_ip).packed,
                              nxt=dpkt.ip.IP_PROTO_UDP, hlim=64, data=udp)
            ip.plen = len(udp)
            eth_type = dpkt.ethernet.ETH_TYPE_IP6
        else:
            ip = dpkt.ip.IP(src=src.packed, dst=ipaddress.ip_address(d.dst_ip).packed,
                            p=dpkt.ip.IP_PROTO_UDP, ttl=64, data=udp)
            ip.len = len(ip)
            eth_type = dpkt.ethernet.ETH_TYPE_IP
        eth = dpkt.ethernet.Ethernet(src=b'\x02\x00\x00\x00\x00\x01', dst=b'\x02\x00\x00\x00\x00\x02',
                                     type=eth_type, data=ip)
        writer.writepkt(bytes(eth), ts=d.timestamp_us / 1_000_000)


def read_datagrams(source, stats=None):
    """Pick a reader from the file suffix: .pcap / .pcapng / .cap, anything else is qevents"""
    if not isinstance(source, (str, Path)):
        return iter(source)
    suffix = Path(source).suffix.lower()
    if suffix in ('.pcap', '.pcapng', '.cap'):
        return read_pcap(source, stats)
    return read_qevents(source, stats)


@dataclass
class _FlowState:
    key: ConnectionKey
    next_position: int = 0
    next_datagram: int = 0
    short_seen: bool = False
    last_seen_us: int = 0


@dataclass
class FlowTable:
    """
    Maps UDP 5-tuples to the connection currently using them.

    With ``idle_timeout_us`` set, a flow silent for longer than that is
    forgotten; a later datagram on its 5-tuple starts a fresh flow whose
    positions count from 0 again.
    """
    flows: OrderedDict = field(default_factory=OrderedDict)
    idle_timeout_us: Optional[int] = None
    evicted: int = 0

    def _expired(self, flow, now_us):
        return self.idle_timeout_us is not None and now_us - flow.last_seen_us > self.idle_timeout_us

    def evict_idle(self, now_us):
        """Forget the least recently seen flows that have timed out"""
        while self.flows:
            five_tuple, flow = next(iter(self.flows.items()))
            if not self._expired(flow, now_us):
                break
            del self.flows[five_tuple]
            self.evicted += 1
            logger.debug(f"Flow {flow.key} evicted after {(now_us - flow.last_seen_us) / 1e6:.1f}s of silence")

    def lookup(self, datagram, facts):
        now_us = datagram.timestamp_us
        self.evict_idle(now_us)
        five_tuple = frozenset({(datagram.src_ip, datagram.src_port), (datagram.dst_ip, datagram.dst_port)})
        flow = self.flows.get(five_tuple)
        if flow is not None and self._expired(flow, now_us):
            del self.flows[five_tuple]
            self.evicted += 1
            flow = None
        lead = facts[0]

        if flow is None:
            if lead.header_form is not HeaderForm.LONG and QUIC_PORT not in (datagram.src_port, datagram.dst_port):
                return None
            key = normalize_key(datagram.src_ip, datagram.src_port, datagram.dst_ip, datagram.dst_port,
                                lead.header_form, lead.dcid)
            flow = self.flows[five_tuple] = _FlowState(key)
            logger.debug(f"New flow {key}")
        else:
            upstream = (datagram.src_ip, datagram.src_port) == (flow.key.client_ip, flow.key.client_port)
            if (upstream and flow.short_seen and lead.long_packet_type is LongPacketType.INITIAL
                    and lead.dcid != flow.key.quic_cid):
                # Fresh Initial reusing a finished connection's 5-tuple
                flow = self.flows[five_tuple] = _FlowState(flow.key.with_cid(lead.dcid))
                logger.info(f"5-tuple reused by a new connection, now {flow.key}")

        flow.last_seen_us = now_us
        self.flows.move_to_end(five_tuple)
        return flow


def stream_records(source, stats=None, flow_table=None):
    """
    Turn a capture into (ConnectionKey, PacketRecord) pairs in capture order.

    Args:
        source: path to a pcap/pcapng/qevents file, or an iterable of RawDatagram
        stats: optional IngestStats to fill
        flow_table: optional FlowTable, shared when several sources are chained

    Yields:
        (ConnectionKey, PacketRecord); position_index counts per flow and starts
        again at 0 when the flow table forgot an idle flow
    """
    stats = stats if stats is not None else IngestStats()
    flow_table = flow_table if flow_table is not None else FlowTable()

    for datagram in read_datagrams(source, stats):
        stats.datagrams += 1
        payload = datagram.payload
        if not payload or not payload[0] & FIXED_BIT:
            stats.skipped_non_quic += 1
            continue
        try:
            facts = parse_header_facts(payload)
        except MalformedHeader as e:
            stats.malformed += 1
            logger.warning(
                f"Malformed QUIC datagram at {datagram.timestamp_us}us "
                f"{datagram.src_ip}:{datagram.src_port} -> {datagram.dst_ip}:{datagram.dst_port}: {e}"
            )
            continue

        evicted = flow_table.evicted
        flow = flow_table.lookup(datagram, facts)
        stats.flows_evicted += flow_table.evicted - evicted
        if flow is None:
            stats.skipped_non_quic += 1
            continue

        direction = flow.key.direction_of(datagram.src_ip, datagram.src_port)
        stats.padding_bytes += len(payload) - sum(f.quic_packet_len for f in facts)
        for f in facts:
            record = PacketRecord(
                timestamp_us=datagram.timestamp_us,
                direction=direction,
                udp_payload_len=len(payload),
                quic_packet_len=f.quic_packet_len,
                header_form=f.header_form,
                long_packet_type=f.long_packet_type,
                quic_packets_in_datagram=len(facts),
                position_index=flow.next_position,
                datagram_index=flow.next_datagram,
                dcid=f.dcid,
            )
            flow.next_position += 1
            stats.records += 1
            if f.header_form is HeaderForm.SHORT:
                flow.short_seen = True
            yield flow.key, record
        flow.next_datagram += 1
