"""
Shared vocabulary for every analyzer module: directions, connection keys,
per-packet records and the immutable analyzer configuration.
"""
import enum
import ipaddress
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from django.conf import settings

from analyzer.exceptions import ConfigError

logger = logging.getLogger(__name__)

QUIC_PORT = 443


class Direction(enum.Enum):
    CLIENT_TO_SERVER = 'c2s'
    SERVER_TO_CLIENT = 's2c'

    @property
    def reverse(self):
        if self is Direction.CLIENT_TO_SERVER:
            return Direction.SERVER_TO_CLIENT
        return Direction.CLIENT_TO_SERVER

    @property
    def label(self):
        return 'up' if self is Direction.CLIENT_TO_SERVER else 'down'


class HeaderForm(enum.Enum):
    LONG = 'long'
    SHORT = 'short'


class LongPacketType(enum.IntEnum):
    """QUIC v1 long-header type, taken from bits 0x30 of the first byte"""
    INITIAL = 0x0
    ZERO_RTT = 0x1
    HANDSHAKE = 0x2
    RETRY = 0x3


def format_endpoint(ip, port):
    address = ipaddress.ip_address(ip)
    if address.version == 6:
        return f"[{address.compressed}]:{port}"
    return f"{address.compressed}:{port}"


def parse_endpoint(text):
    host, _, port = text.rpartition(':')
    host = host.strip('[]')
    return ipaddress.ip_address(host).compressed, int(port)


@dataclass(frozen=True)
class ConnectionKey:
    """
    Direction-normalized identity of one QUIC connection.

    The client endpoint always comes first. ``quic_cid`` is the destination
    connection ID of the client's first long-header packet, empty when no long
    header was seen. ``client_inferred`` is not part of the identity: it is
    False when the client side had to be guessed.
    """
    client_ip: str
    client_port: int
    server_ip: str
    server_port: int
    quic_cid: bytes = b''
    transport: str = 'udp'
    client_inferred: bool = field(default=True, compare=False)

    def __str__(self):
        client = format_endpoint(self.client_ip, self.client_port)
        server = format_endpoint(self.server_ip, self.server_port)
        return f"{client}>{server}#{self.quic_cid.hex()}"

    @classmethod
    def parse(cls, text):
        """Inverse of ``str()``; ``client_inferred`` defaults to True"""
        endpoints, _, cid = text.partition('#')
        client, _, server = endpoints.partition('>')
        client_ip, client_port = parse_endpoint(client)
        server_ip, server_port = parse_endpoint(server)
        return cls(client_ip, client_port, server_ip, server_port, bytes.fromhex(cid))

    @property
    def five_tuple(self):
        """Order-free flow identity used to demultiplex datagrams"""
        return frozenset({(self.client_ip, self.client_port), (self.server_ip, self.server_port)})

    def direction_of(self, src_ip, src_port):
        if (src_ip, src_port) == (self.client_ip, self.client_port):
            return Direction.CLIENT_TO_SERVER
        return Direction.SERVER_TO_CLIENT

    def with_cid(self, quic_cid):
        return replace(self, quic_cid=quic_cid)


def normalize_key(src_ip, src_port, dst_ip, dst_port, first_header_form, quic_cid=b''):
    """
    Build the direction-normalized key for a new UDP flow.

    Args:
        src_ip, src_port, dst_ip, dst_port: endpoints of the first packet seen
        first_header_form: HeaderForm of that packet
        quic_cid: destination CID of the packet when it has a long header

    Returns:
        ConnectionKey whose client is the long-header sender. A flow first seen
        on a short header is provisionally keyed on its first sender, unless that
        sender talks from port 443 to another port, in which case the receiver is
        taken as the client. Either way ``client_inferred`` is False.
    """
    src_ip = ipaddress.ip_address(src_ip).compressed
    dst_ip = ipaddress.ip_address(dst_ip).compressed
    if first_header_form is HeaderForm.LONG:
        return ConnectionKey(src_ip, src_port, dst_ip, dst_port, quic_cid)

    if src_port == QUIC_PORT and dst_port != QUIC_PORT:
        logger.debug(f"Mid-capture flow {src_ip}:{src_port} -> {dst_ip}:{dst_port}, client taken as receiver")
        return ConnectionKey(dst_ip, dst_port, src_ip, src_port, b'', client_inferred=False)
    return ConnectionKey(src_ip, src_port, dst_ip, dst_port, b'', client_inferred=False)


@dataclass(frozen=True)
class PacketRecord:
    """
    One QUIC packet observed inside a UDP datagram.

    Coalesced packets of one datagram share ``timestamp_us``, ``udp_payload_len``,
    ``datagram_index`` and ``quic_packets_in_datagram``.
    """
    timestamp_us: int
    direction: Direction
    udp_payload_len: int
    quic_packet_len: int
    header_form: HeaderForm
    long_packet_type: Optional[LongPacketType] = None
    quic_packets_in_datagram: int = 1
    position_index: int = 0
    datagram_index: int = 0
    dcid: bytes = b''

    def __post_init__(self):
        if self.quic_packet_len > self.udp_payload_len:
            raise ValueError(f"QUIC packet ({self.quic_packet_len}B) larger than its datagram ({self.udp_payload_len}B)")
        if self.quic_packets_in_datagram < 1:
            raise ValueError("quic_packets_in_datagram must be positive")
        if (self.long_packet_type is not None) != (self.header_form is HeaderForm.LONG):
            raise ValueError("long_packet_type is set exactly for long headers")

    @property
    def timestamp(self):
        return self.timestamp_us / 1_000_000

    @property
    def is_long(self):
        return self.header_form is HeaderForm.LONG

    @property
    def is_zero_rtt(self):
        return self.long_packet_type is LongPacketType.ZERO_RTT

    @property
    def upstream(self):
        return self.direction is Direction.CLIENT_TO_SERVER


@dataclass(frozen=True)
class TimingConfig:
    """All timers, in multiples of the connection RTT"""
    delta_t_req: float = 1.0
    delta_t_resp: float = 1.0
    association_min_rtts: float = 1.0
    association_max_rtts: float = 20.0
    idle_rtts: float = 20.0
    output_wait_rtts: float = 1.0

    def __post_init__(self):
        if not 0 < self.association_min_rtts < self.association_max_rtts:
            raise ConfigError(
                f"Need 0 < association_min_rtts < association_max_rtts, "
                f"got {self.association_min_rtts} and {self.association_max_rtts}"
            )
        for name in ('delta_t_req', 'delta_t_resp', 'idle_rtts', 'output_wait_rtts'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


# Settings key -> AnalyzerConfig / TimingConfig attribute
_SETTINGS_MAP = {
    'L_REQ_INITIAL': 'l_req_initial',
    'L_REQ': 'l_req',
    'L_RESP': 'l_resp',
    'MTU_INIT': 'mtu_init',
    'MTU_SLACK': 'mtu_slack',
    'RTT_DEFAULT': 'rtt_default',
    'N_REQ_CAP': 'n_req_cap',
    'ACK_WINDOW': 'ack_window',
    'ACK_MARGIN': 'ack_margin',
    'ZERO_RTT_MIN_LEN': 'zero_rtt_min_len',
    'ZERO_RTT_MAX_LEN': 'zero_rtt_max_len',
    'FLOW_TIMEOUT': 'flow_timeout',
    'DELTA_T_REQ': 'delta_t_req',
    'DELTA_T_RESP': 'delta_t_resp',
    'ASSOC_MIN_RTTS': 'association_min_rtts',
    'ASSOC_MAX_RTTS': 'association_max_rtts',
    'IDLE_RTTS': 'idle_rtts',
    'OUTPUT_WAIT_RTTS': 'output_wait_rtts',
}


@dataclass(frozen=True)
class AnalyzerConfig:
    timing: TimingConfig = field(default_factory=TimingConfig)
    l_req_initial: int = 100
    l_req: int = 50
    l_resp: int = 35
    mtu_init: int = 1200
    mtu_slack: int = 8
    rtt_default: float = 0.1
    n_req_cap: int = 64
    ack_window: int = 10
    ack_margin: int = 10
    zero_rtt_min_len: int = 100
    zero_rtt_max_len: int = 1000
    flow_timeout: float = 600.0

    def __post_init__(self):
        if self.rtt_default <= 0:
            raise ConfigError("rtt_default must be positive")
        if self.n_req_cap < 1:
            raise ConfigError("n_req_cap must be at least 1")
        if self.ack_window < 1:
            raise ConfigError("ack_window must be at least 1")
        if min(self.l_req_initial, self.l_req, self.l_resp) < 1:
            raise ConfigError("Length thresholds must be positive")
        if self.mtu_init <= self.mtu_slack:
            raise ConfigError("mtu_init must exceed mtu_slack")
        if not 0 < self.zero_rtt_min_len <= self.zero_rtt_max_len:
            raise ConfigError("Need 0 < zero_rtt_min_len <= zero_rtt_max_len")
        if self.flow_timeout <= 0:
            raise ConfigError("flow_timeout must be positive")

    @classmethod
    def from_settings(cls, **overrides):
        """
        Build a config from ``settings.QUICLENS_ANALYZER`` plus per-run overrides.

        Overrides use attribute names (``l_req``, ``idle_rtts``...); None values are ignored.
        """
        values = {}
        for key, value in getattr(settings, 'QUICLENS_ANALYZER', {}).items():
            if key not in _SETTINGS_MAP:
                raise ConfigError(f"Unknown QUICLENS_ANALYZER setting {key}")
            values[_SETTINGS_MAP[key]] = value
        values.update({k: v for k, v in overrides.items() if v is not None})

        timing_names = {f.name for f in fields(TimingConfig)}
        config_names = {f.name for f in fields(cls)} - {'timing'}
        unknown = set(values) - timing_names - config_names
        if unknown:
            raise ConfigError(f"Unknown analyzer parameters: {', '.join(sorted(unknown))}")
        try:
            timing = TimingConfig(**{k: v for k, v in values.items() if k in timing_names})
            return cls(timing=timing, **{k: v for k, v in values.items() if k in config_names})
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    def as_dict(self):
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != 'timing'}
        data.update({f.name: getattr(self.timing, f.name) for f in fields(self.timing)})
        return data


def rtt_deadline(last_time, multiple, rtt):
    """Time at which a timer of ``multiple`` RTTs armed at ``last_time`` fires.

    A timer has fired at ``now`` only when ``deadline < now`` (strictly greater elapsed).
    """
    return last_time + multiple * rtt


@dataclass(frozen=True)
class TimerExpired:
    """Lazy timeout event: the pending timer of a machine fired at ``at`` (seconds)"""
    at: float


@dataclass(frozen=True)
class ResponseStarted:
    """The response machine took the first packet of a new response at ``at``"""
    at: float
