"""
Labeled synthetic QUIC traces.

Each connection is a handshake (or a 0-RTT resumption) followed by request /
response exchanges shaped after a traffic pattern. Headers are framed so the
ingest parser can walk them; payload bytes are random. The observation point
sits next to the client: client packets are seen when sent, server packets one
RTT after the client packet that triggered them.
"""
import enum
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from analyzer.exceptions import ConfigError, IngestIoError, MalformedInput
from .core_model import ConnectionKey, LongPacketType
from .ingest import RawDatagram, write_pcap, write_qevents

logger = logging.getLogger(__name__)

QUIC_VERSION_1 = 0x00000001
CID_LEN = 8
LABELS_SCHEMA_VERSION = '1.0'

ACK_BASE_LEN = 28
ACK_RANGE_LEN = 4
ACK_MAX_LEN = 120
CONTROL_LEN = 70
HANDSHAKE_DONE_LEN = 30
CLIENT_FINISHED_LEN = 90
MIN_DATA_LEN = 150

SERVER_IPS = ('192.0.2.10', '198.51.100.20', '203.0.113.30')


class Pattern(enum.Enum):
    VIDEO_SEQUENTIAL = 'video_sequential'
    WEB_MULTIPLEXED = 'web_multiplexed'
    LOGIN = 'login'
    BULK_DOWNLOAD = 'bulk_download'
    BULK_UPLOAD = 'bulk_upload'
    ZERO_RTT_RESUME = 'zero_rtt_resume'


class LabelRole(enum.Enum):
    HANDSHAKE = 'handshake'
    REQUEST_DATA = 'request_data'
    RESPONSE_DATA = 'response_data'
    ACK = 'ack'
    CONTROL = 'control'


@dataclass(frozen=True)
class ScenarioConfig:
    rtt: float = 0.1
    mtu_up: int = 1252
    mtu_down: int = 1252
    pattern: Pattern = Pattern.VIDEO_SEQUENTIAL
    n_pairs: int = 2
    loss_rate: float = 0.0
    ack_every: int = 2
    seed: int = 0
    mux_degree: int = 3
    client_ip: str = '10.0.0.2'
    client_port: int = 50000
    server_ip: str = SERVER_IPS[0]
    server_port: int = 443
    start_us: int = 1_700_000_000_000_000

    def __post_init__(self):
        if self.rtt <= 0:
            raise ConfigError("rtt must be positive")
        for name in ('mtu_up', 'mtu_down'):
            if not 1200 <= getattr(self, name) <= 1360:
                raise ConfigError(f"{name} must lie in [1200, 1360], got {getattr(self, name)}")
        if not 0 <= self.loss_rate < 1:
            raise ConfigError("loss_rate must lie in [0, 1)")
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be at least 1")
        if self.ack_every < 1:
            raise ConfigError("ack_every must be at least 1")
        if self.mux_degree < 1:
            raise ConfigError("mux_degree must be at least 1")
        if not isinstance(self.pattern, Pattern):
            raise ConfigError(f"Unknown pattern {self.pattern!r}")


@dataclass
class PairTruth:
    pair_id: int
    request_start_us: int = None
    request_size: int = 0
    request_packets: int = 0
    response_start_us: int = None
    response_end_us: int = None
    response_size: int = 0
    response_packets: int = 0
    zero_rtt: bool = False


@dataclass
class ConnectionLabels:
    """
    Ground truth of one connection.

    ``roles`` is indexed by the packet ordinal within the connection (the
    analyzer's ``position_index``); each entry is ``[pair_id or None, role, direction]``
    with direction ``up`` or ``down``.
    """
    connection_key: str
    pattern: str
    rtt: float
    mtu_up: int
    mtu_down: int
    loss_rate: float
    seed: int
    roles: list = field(default_factory=list)
    pairs: list = field(default_factory=list)

    @property
    def packet_count(self):
        return len(self.roles)

    def as_dict(self):
        data = asdict(self)
        data['packet_count'] = self.packet_count
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                connection_key=data['connection_key'],
                pattern=data['pattern'],
                rtt=float(data['rtt']),
                mtu_up=int(data['mtu_up']),
                mtu_down=int(data['mtu_down']),
                loss_rate=float(data['loss_rate']),
                seed=int(data['seed']),
                roles=[list(r) for r in data['roles']],
                pairs=[PairTruth(**p) for p in data['pairs']],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInput(f"Bad connection label record: {e}") from e


def _long_packet(packet_type, length, dcid, scid, rng):
    """A long-header packet of exactly ``length`` bytes with a 2-byte Length field"""
    first = 0xC0 | (int(packet_type) << 4) | 0x01
    header = bytes([first]) + QUIC_VERSION_1.to_bytes(4, 'big')
    header += bytes([len(dcid)]) + dcid + bytes([len(scid)]) + scid
    if packet_type is LongPacketType.INITIAL:
        header += b'\x00'  # empty token
    remaining = length - len(header) - 2
    if remaining < 1:
        raise ConfigError(f"Long header packet of {length}B is too short to frame")
    return header + (0x4000 | remaining).to_bytes(2, 'big') + rng.bytes(remaining)


def _short_packet(length, dcid, rng):
    first = 0x40 | int(rng.integers(0, 0x40))
    return bytes([first]) + dcid + rng.bytes(length - 1 - len(dcid))


class _TraceBuilder:
    """Accumulates the datagrams and labels of one connection"""

    def __init__(self, config, rng):
        self.config = config
        self.rng = rng
        self.client_cid = rng.bytes(CID_LEN)
        self.server_cid = rng.bytes(CID_LEN)
        self.initial_dcid = rng.bytes(CID_LEN)
        self.datagrams = []  # (t seconds, seq, upstream, [(payload, role, pair_id)])
        # Loss ranges the acking side still reports; key: ACK sender is the client
        self.open_ranges = {True: 0, False: 0}
        self.pairs = {}

    @property
    def rtt(self):
        return self.config.rtt

    def send(self, t, upstream, packets):
        self.datagrams.append((t, len(self.datagrams), upstream, packets))

    def long(self, packet_type, length, upstream):
        if not upstream:
            dcid, scid = self.client_cid, self.server_cid
        elif packet_type in (LongPacketType.INITIAL, LongPacketType.ZERO_RTT):
            # Client keeps its random DCID until the server's SCID is known
            dcid, scid = self.initial_dcid, self.client_cid
        else:
            dcid, scid = self.server_cid, self.client_cid
        return _long_packet(packet_type, length, dcid, scid, self.rng)

    def short(self, length, upstream):
        return _short_packet(length, self.server_cid if upstream else self.client_cid, self.rng)

    def ack(self, t, upstream):
        length = min(ACK_MAX_LEN, ACK_BASE_LEN + ACK_RANGE_LEN * self.open_ranges[upstream])
        self.send(t, upstream, [(self.short(length, upstream), LabelRole.ACK, None)])

    def handshake(self, t0):
        """1-RTT handshake; returns the time the client can send its first request"""
        step = min(0.0003, self.rtt / 100)
        self.send(t0, True, [(self.long(LongPacketType.INITIAL, self.config.mtu_up, True), LabelRole.HANDSHAKE, None)])
        self._server_flight(t0 + self.rtt, step)
        t1 = t0 + self.rtt + 3 * step
        self.send(t1, True, [(self.long(LongPacketType.HANDSHAKE, CLIENT_FINISHED_LEN, True), LabelRole.HANDSHAKE, None)])
        self.send(t1 + step / 2, True, [(self.short(CONTROL_LEN, True), LabelRole.CONTROL, None)])
        self.send(t1 + self.rtt, False, [(self.short(HANDSHAKE_DONE_LEN, False), LabelRole.CONTROL, None)])
        return t1 + step

    def _server_flight(self, t, step):
        mtu_down = self.config.mtu_down
        initial_len = int(self.rng.integers(120, 200))
        self.send(t, False, [
            (self.long(LongPacketType.INITIAL, initial_len, False), LabelRole.HANDSHAKE, None),
            (self.long(LongPacketType.HANDSHAKE, mtu_down - initial_len, False), LabelRole.HANDSHAKE, None),
        ])
        self.send(t + step, False, [(self.long(LongPacketType.HANDSHAKE, mtu_down, False), LabelRole.HANDSHAKE, None)])
        last_len = int(self.rng.integers(300, 900))
        self.send(t + 2 * step, False, [(self.long(LongPacketType.HANDSHAKE, last_len, False), LabelRole.HANDSHAKE, None)])

    def zero_rtt_opening(self, t0, pair_id, request_len):
        """
        Resumption: Initial coalesced with a 0-RTT control packet, then the
        0-RTT request alone in its datagram. Returns the request time.
        """
        step = min(0.0003, self.rtt / 100)
        control_len = CONTROL_LEN
        self.send(t0, True, [
            (self.long(LongPacketType.INITIAL, self.config.mtu_up - control_len, True), LabelRole.HANDSHAKE, None),
            (self.long(LongPacketType.ZERO_RTT, control_len, True), LabelRole.CONTROL, None),
        ])
        t_req = t0 + step
        self.send(t_req, True, [(self.long(LongPacketType.ZERO_RTT, request_len, True), LabelRole.REQUEST_DATA, pair_id)])
        self._record(pair_id, t_req, request_len, request=True)
        self.pairs[pair_id].zero_rtt = True

        self._server_flight(t0 + self.rtt, step)
        t1 = t0 + self.rtt + 3 * step
        self.send(t1, True, [(self.long(LongPacketType.HANDSHAKE, CLIENT_FINISHED_LEN, True), LabelRole.HANDSHAKE, None)])
        self.send(t1 + self.rtt, False, [(self.short(HANDSHAKE_DONE_LEN, False), LabelRole.CONTROL, None)])
        return t_req

    def _record(self, pair_id, t, length, request):
        truth = self.pairs.setdefault(pair_id, PairTruth(pair_id))
        if request:
            truth.request_size += length
            truth.request_packets += 1
        else:
            truth.response_size += length
            truth.response_packets += 1

    def _with_loss(self, sizes, mtu):
        """Mark MTU-sized packets lost after the observer and add their retransmissions before the tail"""
        lost = [s == mtu and self.rng.random() < self.config.loss_rate for s in sizes]
        if not any(lost):
            return [(s, False) for s in sizes]
        flagged = list(zip(sizes, lost))
        return flagged[:-1] + [(mtu, False)] * sum(lost) + flagged[-1:]

    def request(self, t, pair_id, sizes, pace):
        """Client request packets starting at ``t``; returns the time of the last one"""
        flagged = self._with_loss(sizes, self.config.mtu_up)
        last = len(flagged) - 1
        for i, (size, lost) in enumerate(flagged):
            ts = t + i * pace
            self.send(ts, True, [(self.short(size, True), LabelRole.REQUEST_DATA, pair_id)])
            self._record(pair_id, ts, size, request=True)
            if lost:
                self.open_ranges[False] = self.open_ranges[False] + 1
            if (i + 1) % self.config.ack_every == 0 or i == last:
                self.ack(ts + self.rtt * 1.01, upstream=False)
        return t + last * pace

    def responses(self, t, streams, pace):
        """
        Server response packets starting at ``t``; ``streams`` maps pair_id to
        packet sizes and several streams are interleaved round-robin. Returns
        the time of the last packet.
        """
        queues = {pid: self._with_loss(sizes, self.config.mtu_down) for pid, sizes in streams.items()}
        order = []
        while any(queues.values()):
            for pid in list(queues):
                if queues[pid]:
                    order.append((pid, *queues[pid].pop(0)))
        ack_gap = min(0.00005, pace / 2)
        ts = t
        for i, (pid, size, lost) in enumerate(order):
            ts = t + i * pace
            self.send(ts, False, [(self.short(size, False), LabelRole.RESPONSE_DATA, pid)])
            self._record(pid, ts, size, request=False)
            if lost:
                self.open_ranges[True] = self.open_ranges[True] + 1
            if (i + 1) % self.config.ack_every == 0 or i == len(order) - 1:
                self.ack(ts + ack_gap, upstream=True)
        return ts

    def finalize(self):
        """Sort datagrams, fix microsecond timestamps and derive labels"""
        config = self.config
        self.datagrams.sort(key=lambda d: (d[0], d[1]))
        client = (config.client_ip, config.client_port)
        server = (config.server_ip, config.server_port)

        raws, roles = [], []
        last_us = None
        for t, _, upstream, packets in self.datagrams:
            ts_us = config.start_us + round(t * 1_000_000)
            if last_us is not None and ts_us <= last_us:
                ts_us = last_us + 1
            last_us = ts_us
            src, dst = (client, server) if upstream else (server, client)
            payload = b''.join(p for p, _, _ in packets)
            raws.append(RawDatagram(ts_us, src[0], src[1], dst[0], dst[1], payload,
                                    'C2S' if upstream else 'S2C'))
            for _, role, pid in packets:
                roles.append([pid, role.value, 'up' if upstream else 'down'])
                if pid is None:
                    continue
                truth = self.pairs[pid]
                if role is LabelRole.REQUEST_DATA and truth.request_start_us is None:
                    truth.request_start_us = ts_us
                elif role is LabelRole.RESPONSE_DATA:
                    if truth.response_start_us is None:
                        truth.response_start_us = ts_us
                    truth.response_end_us = ts_us

        key = ConnectionKey(config.client_ip, config.client_port, config.server_ip, config.server_port,
                            self.initial_dcid)
        labels = ConnectionLabels(
            connection_key=str(key),
            pattern=config.pattern.value,
            rtt=config.rtt,
            mtu_up=config.mtu_up,
            mtu_down=config.mtu_down,
            loss_rate=config.loss_rate,
            seed=config.seed,
            roles=roles,
            pairs=[self.pairs[pid] for pid in sorted(self.pairs)],
        )
        return raws, labels


def _response_sizes(rng, mtu, n_mtu):
    head = mtu - int(rng.integers(20, 100))
    tail = int(rng.integers(MIN_DATA_LEN, 600))
    return [head] + [mtu] * n_mtu + [tail]


def _pair_plan(pattern, rng, config):
    """(request sizes, response sizes) for one pair of the given pattern"""
    mtu_up, mtu_down = config.mtu_up, config.mtu_down
    if pattern is Pattern.VIDEO_SEQUENTIAL:
        return [int(rng.integers(300, 700))], _response_sizes(rng, mtu_down, int(rng.integers(20, 60)))
    if pattern is Pattern.BULK_DOWNLOAD:
        return [int(rng.integers(200, 400))], _response_sizes(rng, mtu_down, int(rng.integers(100, 250)))
    if pattern is Pattern.BULK_UPLOAD:
        request = [mtu_up] * int(rng.integers(5, 30)) + [int(rng.integers(MIN_DATA_LEN, 600))]
        return request, [int(rng.integers(200, 400))]
    if pattern is Pattern.LOGIN:
        request = [int(rng.integers(600, 1100))]
        if rng.random() < 0.5:
            return request, [int(rng.integers(200, 1000))]
        return request, [mtu_down - int(rng.integers(20, 100)), int(rng.integers(MIN_DATA_LEN, 600))]
    # Web pages and the requests following a 0-RTT opening
    return [int(rng.integers(MIN_DATA_LEN, 500))], _response_sizes(rng, mtu_down, int(rng.integers(1, 12)))


def generate(config):
    """
    Generate one labeled connection.

    Args:
        config: ScenarioConfig

    Returns:
        (list of RawDatagram in capture order, ConnectionLabels)
    """
    rng = np.random.default_rng(config.seed)
    builder = _TraceBuilder(config, rng)
    rtt = config.rtt
    pace = min(float(rng.uniform(0.0002, 0.001)), rtt / 10)

    def think():
        return float(rng.uniform(0.1, 0.3)) * rtt

    def client_gap():
        # Spans both sides of the response timeout
        return float(rng.uniform(0.2, 4.0)) * rtt

    pair_id = 0
    if config.pattern is Pattern.ZERO_RTT_RESUME:
        request_len = int(rng.integers(MIN_DATA_LEN, 900))
        t_req = builder.zero_rtt_opening(0.0, pair_id, request_len)
        _, response = _pair_plan(Pattern.WEB_MULTIPLEXED, rng, config)
        t = builder.responses(t_req + rtt + think(), {pair_id: response}, pace) + client_gap()
        pair_id += 1
    else:
        t = builder.handshake(0.0)

    group = config.mux_degree if config.pattern is Pattern.WEB_MULTIPLEXED else 1
    while pair_id < config.n_pairs:
        members = list(range(pair_id, min(pair_id + group, config.n_pairs)))
        streams = {}
        t_last = t
        for i, pid in enumerate(members):
            request, response = _pair_plan(config.pattern, rng, config)
            t_last = builder.request(t + i * 0.05 * rtt, pid, request, pace)
            streams[pid] = response
        t = builder.responses(t_last + rtt + think(), streams, pace) + client_gap()
        pair_id += len(members)

    raws, labels = builder.finalize()
    logger.debug(f"Generated {config.pattern.value} connection {labels.connection_key}: "
                 f"{len(raws)} datagrams, {labels.packet_count} packets, {len(labels.pairs)} pairs")
    return raws, labels


def generate_corpus(connections, seed=0, patterns=None, n_pairs=3, loss_rate=0.0, mux_degree=3,
                    rtts=(0.01, 0.1, 0.6), mtus=(1200, 1252, 1350), ack_every=2, mtus_up=None, mtus_down=None):
    """
    Generate several connections cycling through the patterns, overlapping in time.

    RTTs and MTUs are drawn per connection; ``mtus_up`` and ``mtus_down`` narrow
    one direction and fall back to ``mtus``.

    Returns:
        (datagrams merged in capture order, list of ConnectionLabels)
    """
    patterns = list(patterns or Pattern)
    mtus_up = mtus_up or mtus
    mtus_down = mtus_down or mtus
    rng = np.random.default_rng(seed)
    start_us = ScenarioConfig.start_us
    traces, labels = [], []
    for i in range(connections):
        config = ScenarioConfig(
            rtt=float(rng.choice(rtts)),
            mtu_up=int(rng.choice(mtus_up)),
            mtu_down=int(rng.choice(mtus_down)),
            pattern=patterns[i % len(patterns)],
            n_pairs=n_pairs,
            loss_rate=loss_rate,
            ack_every=ack_every,
            seed=int(rng.integers(0, 2 ** 31)),
            mux_degree=mux_degree,
            client_ip=f"10.0.{i // 250}.{i % 250 + 2}",
            client_port=49152 + i % 16000,
            server_ip=SERVER_IPS[i % len(SERVER_IPS)],
            start_us=start_us,
        )
        raws, connection_labels = generate(config)
        traces.append(raws)
        labels.append(connection_labels)
        start_us += int(rng.integers(1_000, 50_000))

    merged = [d for _, _, d in sorted(
        ((d.timestamp_us, i, d) for i, raws in enumerate(traces) for d in raws),
        key=lambda item: (item[0], item[1]),
    )]
    logger.info(f"Generated corpus of {connections} connections, {len(merged)} datagrams (seed {seed})")
    return merged, labels


def single(pattern, **overrides):
    """Shortcut: generate one connection of ``pattern`` with ScenarioConfig overrides"""
    return generate(replace(ScenarioConfig(), pattern=pattern, **overrides))


def write_labels(handle, labels):
    json.dump(
        {'schema_version': LABELS_SCHEMA_VERSION, 'connections': [l.as_dict() for l in labels]},
        handle, indent=1,
    )


def read_labels(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise IngestIoError(f"Cannot read labels {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedInput(f"{path}: not a labels file ({e})") from e
    if 'connections' not in data:
        raise MalformedInput(f"{path}: missing 'connections'")
    return [ConnectionLabels.from_dict(c) for c in data['connections']]


def write_corpus(directory, datagrams, labels, pcap=False):
    """Write ``trace.qevents``, ``labels.json`` and optionally ``trace.pcap`` into ``directory``"""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {'qevents': directory / 'trace.qevents', 'labels': directory / 'labels.json'}
    try:
        with open(paths['qevents'], 'w', encoding='ascii') as f:
            write_qevents(f, datagrams)
        with open(paths['labels'], 'w') as f:
            write_labels(f, labels)
        if pcap:
            paths['pcap'] = directory / 'trace.pcap'
            with open(paths['pcap'], 'wb') as f:
                write_pcap(f, datagrams)
    except OSError as e:
        raise IngestIoError(f"Cannot write corpus to {directory}: {e}") from e
    return paths
