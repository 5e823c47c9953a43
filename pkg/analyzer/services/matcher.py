"""
Request-response matching: pairs request and response estimates into HTTP
objects, grouping interleaved pairs into super objects.

States: -1 initial, 0 idle, 1 waiting for response, 2 waiting to output.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

from .core_model import ResponseStarted, TimerExpired, TimingConfig, rtt_deadline
from .request_sm import RequestEstimate
from .response_sm import ResponseEstimate

logger = logging.getLogger(__name__)


class MatchState(enum.Enum):
    INITIAL = -1
    IDLE = 0
    WAITING_FOR_RESPONSE = 1
    WAITING_TO_OUTPUT = 2


class Association(enum.Enum):
    VALID = 'valid'
    SUSPECT_TIMING = 'suspect_timing'
    NO_RESPONSE = 'no_response'


def validate_association(req_start, resp_start, rtt, timing=None):
    """
    Check the request-to-response gap against the association window.

    Valid when association_min_rtts·rtt < resp_start − req_start < association_max_rtts·rtt.
    The flag is informational; pairs are never reassigned because of it.
    """
    timing = timing or TimingConfig()
    if resp_start is None:
        return Association.NO_RESPONSE
    gap = resp_start - req_start
    if timing.association_min_rtts * rtt < gap < timing.association_max_rtts * rtt:
        return Association.VALID
    return Association.SUSPECT_TIMING


@dataclass(frozen=True)
class HttpObjectRecord:
    """One estimated HTTP object; a super object when it groups several pairs"""
    request_start: float
    request_size: int
    request_packets: int
    response_start: Optional[float]
    response_end: Optional[float]
    response_size: int
    response_packets: int
    pair_count: int
    association: Association
    zero_rtt: bool = False
    ack_len_window_snapshot: dict = field(default_factory=dict)
    request_positions: tuple = ()
    response_positions: tuple = ()
    emitted_at: Optional[float] = None

    @property
    def is_super(self):
        return self.pair_count > 1

    @property
    def max_ack_len_up(self):
        return max(self.ack_len_window_snapshot.get('up') or [0])

    @property
    def max_ack_len_down(self):
        return max(self.ack_len_window_snapshot.get('down') or [0])

    @property
    def time_to_first_byte(self):
        if self.response_start is None:
            return None
        return self.response_start - self.request_start

    @property
    def time_to_last_byte(self):
        if self.response_end is None:
            return None
        return self.response_end - self.request_start

    @property
    def download_rate(self):
        """Response bytes per second; undefined for single-packet responses"""
        if self.response_start is None or self.response_end <= self.response_start:
            return None
        return self.response_size / (self.response_end - self.response_start)


def build_object(requests, responses, rtt, timing, emitted_at, ack_snapshot=None):
    request_start = requests[0].start_time
    response_start = responses[0].start_time if responses else None
    return HttpObjectRecord(
        request_start=request_start,
        request_size=sum(r.size for r in requests),
        request_packets=sum(r.packet_count for r in requests),
        response_start=response_start,
        response_end=max(r.end_time for r in responses) if responses else None,
        response_size=sum(r.size for r in responses),
        response_packets=sum(r.packet_count for r in responses),
        pair_count=len(requests),
        association=validate_association(request_start, response_start, rtt, timing),
        zero_rtt=any(r.is_zero_rtt for r in requests),
        ack_len_window_snapshot=ack_snapshot or {},
        request_positions=tuple(p for r in requests for p in r.positions),
        response_positions=tuple(p for r in responses for p in r.positions),
        emitted_at=emitted_at,
    )


class Matcher:
    """
    Match state machine for one connection.

    Args:
        timing: TimingConfig
        n_req_cap: maximum pairs grouped in one object
        ack_snapshot: optional callable returning the current ACK-length windows,
            recorded on every emitted object
    """

    def __init__(self, timing, n_req_cap=64, ack_snapshot=None):
        self.timing = timing
        self.n_req_cap = n_req_cap
        self.ack_snapshot = ack_snapshot or (lambda: {})
        self.state = MatchState.INITIAL
        self.open_requests = []
        self.open_responses = []
        self.held_requests = []
        self.last_event_time = None
        self.requests_received = 0
        self.discarded_bytes = 0
        self.discarded_packets = 0
        # A response of the open group is still being received
        self.response_open = False

    def deadline(self, rtt):
        if self.response_open:
            return None
        if self.state is MatchState.WAITING_FOR_RESPONSE:
            return rtt_deadline(self.last_event_time, self.timing.association_max_rtts, rtt)
        if self.state is MatchState.WAITING_TO_OUTPUT:
            return rtt_deadline(self.last_event_time, self.timing.output_wait_rtts, rtt)
        return None

    def _emit(self, at, rtt):
        obj = build_object(self.open_requests, self.open_responses, rtt, self.timing, at, self.ack_snapshot())
        self.open_requests = []
        self.open_responses = []
        logger.debug(
            f"Object out: {obj.pair_count} pair(s), req {obj.request_size}B, "
            f"resp {obj.response_size}B, {obj.association.value}"
        )
        return obj

    def _seed_from_held(self, at):
        self.open_requests = self.held_requests[:self.n_req_cap]
        self.held_requests = self.held_requests[self.n_req_cap:]
        self.state = MatchState.WAITING_FOR_RESPONSE
        self.last_event_time = at

    def expire(self, at, rtt):
        """Fire the pending timer; returns the emitted objects"""
        if self.state is MatchState.WAITING_FOR_RESPONSE:
            obj = self._emit(at, rtt)
            self.state = MatchState.IDLE
            return [obj]
        if self.state is MatchState.WAITING_TO_OUTPUT:
            obj = self._emit(at, rtt)
            if self.held_requests:
                self._seed_from_held(at)
            else:
                self.state = MatchState.IDLE
            return [obj]
        return []

    def _expire_before(self, at, rtt):
        deadline = self.deadline(rtt)
        if deadline is not None and deadline < at:
            return self.expire(deadline, rtt)
        return []

    def on_request(self, estimate, rtt):
        at = estimate.emitted_at
        emitted = self._expire_before(at, rtt)
        self.requests_received += 1

        if self.state is MatchState.WAITING_TO_OUTPUT:
            if len(self.held_requests) < self.n_req_cap:
                self.held_requests.append(estimate)
                return emitted
            emitted.append(self._emit(at, rtt))
            self._seed_from_held(at)

        if self.state is MatchState.WAITING_FOR_RESPONSE:
            if len(self.open_requests) >= self.n_req_cap:
                emitted.append(self._emit(at, rtt))
            self.open_requests.append(estimate)
        else:
            self.open_requests = [estimate]
            self.state = MatchState.WAITING_FOR_RESPONSE
        self.last_event_time = at
        return emitted

    def on_response(self, estimate, rtt):
        at = estimate.emitted_at
        emitted = self._expire_before(at, rtt)

        if self.state in (MatchState.INITIAL, MatchState.IDLE):
            self.discarded_bytes += estimate.size
            self.discarded_packets += estimate.packet_count
            logger.debug(f"Response of {estimate.size}B discarded, no open request")
            return emitted

        self.open_responses.append(estimate)
        self.response_open = False
        self.last_event_time = at
        self._check_answered()
        return emitted

    def on_response_start(self, at, rtt):
        """
        A new response began at ``at``.

        The open group counts it as answered from now on and its timers wait
        until the response is complete. When requests are held, the response
        belongs to them: the current group is output first.
        """
        emitted = self._expire_before(at, rtt)
        if self.state is MatchState.WAITING_TO_OUTPUT and self.held_requests:
            emitted.append(self._emit(at, rtt))
            self._seed_from_held(at)
        if self.state in (MatchState.WAITING_FOR_RESPONSE, MatchState.WAITING_TO_OUTPUT):
            self.response_open = True
            self.last_event_time = at
            self._check_answered()
        return emitted

    def _check_answered(self):
        answered = len(self.open_responses) + self.response_open
        if self.state is MatchState.WAITING_FOR_RESPONSE and answered >= len(self.open_requests):
            self.state = MatchState.WAITING_TO_OUTPUT

    def flush(self, at, rtt):
        """Emit the open group and any held requests"""
        self.response_open = False
        emitted = []
        while self.open_requests or self.held_requests:
            if self.open_requests:
                emitted.append(self._emit(at, rtt))
            if self.held_requests:
                self._seed_from_held(at)
        if self.state is not MatchState.INITIAL:
            self.state = MatchState.IDLE
        return emitted


def step_match(machine, event, rtt):
    """
    Functional entry point.

    Args:
        machine: Matcher
        event: RequestEstimate, ResponseStarted, ResponseEstimate or TimerExpired
        rtt: current RTT

    Returns:
        (machine, list of HttpObjectRecord)
    """
    if isinstance(event, TimerExpired):
        return machine, machine.expire(event.at, rtt)
    if isinstance(event, RequestEstimate):
        return machine, machine.on_request(event, rtt)
    if isinstance(event, ResponseStarted):
        return machine, machine.on_response_start(event.at, rtt)
    if isinstance(event, ResponseEstimate):
        return machine, machine.on_response(event, rtt)
    raise TypeError(f"Unsupported match event {event!r}")
