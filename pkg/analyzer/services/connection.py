"""
Per-connection orchestration: routes every PacketRecord through the adaptive
parameters and the request, response and match machines, fires their timers
lazily in deadline order and closes the connection after it has been idle.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Optional

from .core_model import AnalyzerConfig, ConnectionKey, Direction, HeaderForm, rtt_deadline
from .matcher import HttpObjectRecord, Matcher
from .params import ParameterTracker, RttSource
from .request_sm import RequestMachine, detect_zero_rtt_request
from .response_sm import ResponseMachine

logger = logging.getLogger(__name__)


class PacketRole(enum.Enum):
    """How the analyzer classified a packet"""
    HANDSHAKE = 'handshake'
    CONTROL = 'control'
    NON_DATA = 'non_data'
    REQUEST_DATA = 'request_data'
    RESPONSE_DATA = 'response_data'
    DROPPED = 'dropped'


@dataclass(frozen=True)
class ConnectionSummary:
    connection_key: ConnectionKey
    generation: int
    connection_start: float
    duration: float
    total_request_size: int
    total_response_size: int
    total_request_packets: int
    total_response_packets: int
    individual_pair_count: int
    estimated_object_count: int
    multiplexing_level: float
    rtt_used: float
    rtt_source: RttSource
    mtu_up: int
    mtu_down: int
    client_inferred: bool
    total_packets: int = 0
    zero_rtt_requests: int = 0
    no_objects: bool = False
    discarded_response_size: int = 0
    discarded_response_packets: int = 0
    max_ack_len_up: int = 0
    max_ack_len_down: int = 0
    emitted_at: Optional[float] = None


@dataclass(frozen=True)
class Emission:
    """One output record with the logical time and identity used to order output"""
    at: float
    ordinal: int
    generation: int
    seq: int
    key: ConnectionKey
    origin: float
    record: object

    @property
    def sort_key(self):
        return (self.at, self.ordinal, self.generation, self.seq)

    @property
    def is_summary(self):
        return isinstance(self.record, ConnectionSummary)


def summarize(key, generation, objects, params, counters, at):
    """
    Build the connection-level summary from the objects of one generation.

    Totals are sums over the emitted objects. A connection without objects
    reports a multiplexing level of 1.0 and sets ``no_objects``.
    """
    pairs = sum(o.pair_count for o in objects)
    estimate = params.rtt_estimator.estimate
    return ConnectionSummary(
        connection_key=key,
        generation=generation,
        connection_start=counters['connection_start'],
        duration=counters['last_packet_time'] - counters['first_packet_time'],
        total_request_size=sum(o.request_size for o in objects),
        total_response_size=sum(o.response_size for o in objects),
        total_request_packets=sum(o.request_packets for o in objects),
        total_response_packets=sum(o.response_packets for o in objects),
        individual_pair_count=pairs,
        estimated_object_count=len(objects),
        multiplexing_level=pairs / len(objects) if objects else 1.0,
        rtt_used=estimate.rtt,
        rtt_source=estimate.source,
        mtu_up=params.mtu.l_mtu_up,
        mtu_down=params.mtu.l_mtu_down,
        client_inferred=key.client_inferred,
        total_packets=counters['total_packets'],
        zero_rtt_requests=counters['zero_rtt_requests'],
        no_objects=not objects,
        discarded_response_size=counters['discarded_response_size'],
        discarded_response_packets=counters['discarded_response_packets'],
        max_ack_len_up=params.max_ack_len(Direction.CLIENT_TO_SERVER),
        max_ack_len_down=params.max_ack_len(Direction.SERVER_TO_CLIENT),
        emitted_at=at,
    )


class ConnectionTracker:
    """
    All analyzer state of one connection.

    Args:
        key: ConnectionKey
        config: AnalyzerConfig
        ordinal: order of first appearance of the connection in the capture
        log_classes: keep a (position_index, PacketRole) log for diagnostics
        generation, seq: numbering to resume from when an earlier tracker of
            the same connection was retired
    """

    def __init__(self, key, config=None, ordinal=0, log_classes=False, generation=0, seq=0):
        self.key = key
        self.config = config or AnalyzerConfig()
        self.ordinal = ordinal
        self.log_classes = log_classes
        self.classifications = []
        self.generation = generation - 1
        self.seq = seq
        self.closed = True

    def _open(self):
        timing = self.config.timing
        self.generation += 1
        self.closed = False
        self.params = ParameterTracker(self.config)
        self.requests = RequestMachine(timing)
        self.responses = ResponseMachine(timing)
        self.matcher = Matcher(timing, self.config.n_req_cap, ack_snapshot=self.params.ack_snapshot)
        self.objects = []
        self.zero_rtt_accepted_in_flight = False
        self.counters = {
            'connection_start': None,
            'first_packet_time': None,
            'last_packet_time': None,
            'total_packets': 0,
            'zero_rtt_requests': 0,
            'discarded_response_size': 0,
            'discarded_response_packets': 0,
        }
        if self.generation:
            logger.info(f"Connection {self.key} reopened as generation {self.generation}")

    @property
    def rtt(self):
        return self.params.rtt

    @property
    def last_packet_time(self):
        return None if self.closed else self.counters['last_packet_time']

    @property
    def origin(self):
        start = self.counters['connection_start']
        return self.counters['first_packet_time'] if start is None else start

    def idle_deadline(self):
        if self.last_packet_time is None:
            return None
        return rtt_deadline(self.last_packet_time, self.config.timing.idle_rtts, self.rtt)

    def _emission(self, at, record):
        emission = Emission(at, self.ordinal, self.generation, self.seq, self.key, self.origin, record)
        self.seq += 1
        if isinstance(record, HttpObjectRecord):
            self.objects.append(record)
        return emission

    def _to_matcher(self, estimates, is_request):
        out = []
        for est in estimates:
            if is_request:
                objects = self.matcher.on_request(est, self.rtt)
            else:
                objects = self.matcher.on_response(est, self.rtt)
            out.extend(self._emission(o.emitted_at, o) for o in objects)
        return out

    def _advance(self, now):
        """Fire every pending timer whose deadline lies strictly before ``now``"""
        out = []
        while True:
            rtt = self.rtt
            due = [
                (deadline, rank)
                for rank, deadline in enumerate((
                    self.requests.deadline(rtt),
                    self.responses.deadline(rtt),
                    self.matcher.deadline(rtt),
                ))
                if deadline is not None and deadline < now
            ]
            if not due:
                return out
            at, rank = min(due)
            if rank == 0:
                out.extend(self._to_matcher([self.requests.expire(at)], is_request=True))
            elif rank == 1:
                out.extend(self._to_matcher([self.responses.expire(at)], is_request=False))
            else:
                out.extend(self._emission(o.emitted_at, o) for o in self.matcher.expire(at, rtt))

    def _classify(self, pkt):
        """Returns (role, emissions) for one packet after its timers have been advanced"""
        params = self.params
        if pkt.is_long:
            if pkt.is_zero_rtt and detect_zero_rtt_request(pkt, self.config, self.zero_rtt_accepted_in_flight):
                self.zero_rtt_accepted_in_flight = True
                self.counters['zero_rtt_requests'] += 1
                params.mark_first_request()
                estimate = self.requests.on_zero_rtt(pkt)
                return PacketRole.REQUEST_DATA, self._to_matcher([estimate], is_request=True)
            return PacketRole.HANDSHAKE, []

        if pkt.quic_packet_len < params.threshold(pkt.direction):
            params.record_nondata(pkt)
            return PacketRole.NON_DATA, []
        if pkt.quic_packets_in_datagram > 1:
            return PacketRole.CONTROL, []

        large = params.is_large(pkt)
        if pkt.upstream:
            params.mark_first_request()
            estimates = self.requests.on_packet(pkt, large, self.rtt)
            return PacketRole.REQUEST_DATA, self._to_matcher(estimates, is_request=True)

        dropped = self.responses.dropped_packets
        estimates = self.responses.on_packet(pkt, large, self.rtt, self.matcher.requests_received)
        if self.responses.dropped_packets != dropped:
            self.counters['discarded_response_size'] += pkt.quic_packet_len
            self.counters['discarded_response_packets'] += 1
            return PacketRole.DROPPED, []
        out = self._to_matcher(estimates, is_request=False)
        if self.responses.pending[0] is pkt:
            started = self.matcher.on_response_start(pkt.timestamp, self.rtt)
            out.extend(self._emission(o.emitted_at, o) for o in started)
        return PacketRole.RESPONSE_DATA, out

    def process(self, pkt):
        """
        Consume one packet of this connection.

        Closes the current generation first when the packet arrives after the
        idle deadline, then fires due timers, updates the adaptive parameters
        and dispatches the packet.

        Returns:
            List of Emissions (objects and possibly a summary)
        """
        out = self.check_idle(pkt.timestamp)
        if self.closed:
            self._open()
        out.extend(self._advance(pkt.timestamp))

        counters = self.counters
        if counters['first_packet_time'] is None:
            counters['first_packet_time'] = pkt.timestamp
        if counters['connection_start'] is None and pkt.upstream:
            counters['connection_start'] = pkt.timestamp
        counters['last_packet_time'] = pkt.timestamp
        counters['total_packets'] += 1

        self.params.observe(pkt)
        if pkt.header_form is HeaderForm.SHORT:
            self.requests.handshake_complete = True
        if not pkt.upstream:
            self.zero_rtt_accepted_in_flight = False

        role, emitted = self._classify(pkt)
        if self.log_classes:
            self.classifications.append((pkt.position_index, role))
        out.extend(emitted)
        return out

    def close(self, at):
        """
        Flush all machines at logical time ``at``, emit the summary and clear
        the connection's memory. A later packet opens the next generation.
        """
        if self.closed:
            return []
        out = self._advance(at)
        request = self.requests.flush(at)
        if request:
            out.extend(self._to_matcher([request], is_request=True))
        response = self.responses.flush(at)
        if response:
            out.extend(self._to_matcher([response], is_request=False))
        out.extend(self._emission(o.emitted_at, o) for o in self.matcher.flush(at, self.rtt))

        counters = dict(self.counters)
        counters['discarded_response_size'] += self.matcher.discarded_bytes
        counters['discarded_response_packets'] += self.matcher.discarded_packets
        if counters['connection_start'] is None:
            counters['connection_start'] = counters['first_packet_time']
        summary = summarize(self.key, self.generation, self.objects, self.params, counters, at)
        out.append(self._emission(at, summary))
        logger.debug(
            f"Connection {self.key} closed: {summary.estimated_object_count} objects, "
            f"{summary.individual_pair_count} pairs, rtt {summary.rtt_used:.4f}s"
        )
        self.closed = True
        self.params = self.requests = self.responses = self.matcher = None
        self.objects = []
        return out

    def check_idle(self, now):
        """
        Close the connection when it has been quiet for more than idle_rtts·RTT.

        Returns:
            List of Emissions ending with the summary, or an empty list
        """
        deadline = self.idle_deadline()
        if deadline is None or not deadline < now:
            return []
        return self.close(deadline)

    def finish(self):
        """End of trace: close at the idle deadline regardless of what follows"""
        deadline = self.idle_deadline()
        if deadline is None:
            return []
        return self.close(deadline)


def run_offline(key, packets, config=None, ordinal=0, log_classes=False):
    """
    Run one connection's complete packet list through the pipeline.

    Args:
        key: ConnectionKey
        packets: PacketRecords of the connection in capture order
        config: AnalyzerConfig

    Returns:
        (list of Emission, ConnectionTracker); emissions are in sort_key order
        and include one summary per generation
    """
    tracker = ConnectionTracker(key, config, ordinal, log_classes)
    emissions = []
    for pkt in packets:
        emissions.extend(tracker.process(pkt))
    emissions.extend(tracker.finish())
    emissions.sort(key=lambda e: e.sort_key)
    return emissions, tracker


def split_emissions(emissions):
    """(objects, summaries) from a list of Emissions"""
    objects = [e.record for e in emissions if not e.is_summary]
    summaries = [e.record for e in emissions if e.is_summary]
    return objects, summaries
