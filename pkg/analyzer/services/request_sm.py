"""
Request estimation: groups client-to-server data packets into HTTP requests.

States follow the numbering used in operator tooling: -1 initial, -0.5
0-RTT output, 0 idle, 0.5 waiting, 1 transmitting.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Optional

from .core_model import Direction, PacketRecord, TimerExpired, rtt_deadline

logger = logging.getLogger(__name__)


class RequestState(enum.Enum):
    INITIAL = -1
    ZERO_RTT_OUT = -0.5
    IDLE = 0
    WAITING = 0.5
    TRANSMITTING = 1


@dataclass(frozen=True)
class RequestEstimate:
    start_time: float
    size: int
    packet_count: int
    is_zero_rtt: bool = False
    positions: tuple = ()
    emitted_at: Optional[float] = None

    @classmethod
    def from_packets(cls, packets, emitted_at, is_zero_rtt=False):
        return cls(
            start_time=packets[0].timestamp,
            size=sum(p.quic_packet_len for p in packets),
            packet_count=len(packets),
            is_zero_rtt=is_zero_rtt,
            positions=tuple(p.position_index for p in packets),
            emitted_at=emitted_at,
        )


def detect_zero_rtt_request(pkt, config, accepted_in_flight=False):
    """
    Decide whether a client 0-RTT packet carries an HTTP request.

    Args:
        pkt: long-header 0-RTT PacketRecord sent by the client
        config: AnalyzerConfig (length bounds)
        accepted_in_flight: a 0-RTT request was already taken from this client flight

    Returns:
        True when the packet is alone in its datagram, its length lies in
        [zero_rtt_min_len, zero_rtt_max_len] and no other 0-RTT request was
        accepted in the same flight
    """
    if not pkt.is_zero_rtt or pkt.direction is not Direction.CLIENT_TO_SERVER:
        return False
    return (
        pkt.quic_packets_in_datagram == 1
        and config.zero_rtt_min_len <= pkt.quic_packet_len <= config.zero_rtt_max_len
        and not accepted_in_flight
    )


class RequestMachine:
    """
    Request state machine for one connection.

    Admitted packets are client-to-server, alone in their datagram and at least
    as long as the current request threshold. Timeouts are lazy: ``deadline()``
    says when the pending timer fires and ``expire()`` fires it.
    """

    def __init__(self, timing):
        self.timing = timing
        self.state = RequestState.INITIAL
        self.pending = []
        self.last_packet_time = None
        self.handshake_complete = False

    def deadline(self, rtt):
        if self.state in (RequestState.WAITING, RequestState.TRANSMITTING):
            return rtt_deadline(self.last_packet_time, self.timing.delta_t_req, rtt)
        return None

    def _emit(self, at, is_zero_rtt=False):
        estimate = RequestEstimate.from_packets(self.pending, at, is_zero_rtt)
        self.pending = []
        logger.debug(f"Request estimated: {estimate.packet_count} pkt / {estimate.size}B at {estimate.start_time:.6f}")
        return estimate

    def expire(self, at):
        """Fire the pending timer; returns the request it completes, if any"""
        if self.state not in (RequestState.WAITING, RequestState.TRANSMITTING):
            return None
        self.state = RequestState.IDLE
        return self._emit(at)

    def on_zero_rtt(self, pkt):
        """Emit a detected 0-RTT request and fall back to the initial state"""
        self.state = RequestState.ZERO_RTT_OUT
        self.pending = [pkt]
        estimate = self._emit(pkt.timestamp, is_zero_rtt=True)
        self.state = RequestState.INITIAL
        return estimate

    def on_packet(self, pkt, large, rtt):
        """
        Consume one admitted request packet.

        Returns:
            List of completed RequestEstimates (an expired one first, if the
            packet arrived after the pending timer)
        """
        emitted = []
        deadline = self.deadline(rtt)
        if deadline is not None and deadline < pkt.timestamp:
            emitted.append(self.expire(deadline))

        if self.state is RequestState.INITIAL and not self.handshake_complete:
            # Only 0-RTT requests are recognised before the handshake ends
            return emitted

        self.last_packet_time = pkt.timestamp
        self.pending.append(pkt)
        if self.state in (RequestState.INITIAL, RequestState.IDLE):
            if large:
                self.state = RequestState.WAITING
            else:
                self.state = RequestState.IDLE
                emitted.append(self._emit(pkt.timestamp))
        elif self.state is RequestState.WAITING:
            if large:
                self.state = RequestState.TRANSMITTING
            else:
                self.state = RequestState.IDLE
                emitted.append(self._emit(pkt.timestamp))
        elif self.state is RequestState.TRANSMITTING and not large:
            self.state = RequestState.IDLE
            emitted.append(self._emit(pkt.timestamp))
        return emitted

    def flush(self, at):
        """End of trace: emit whatever is pending"""
        if not self.pending:
            return None
        self.state = RequestState.IDLE
        return self._emit(at)


def step_request(machine, event, params):
    """
    Functional entry point: feed a packet or a TimerExpired to the machine.

    Args:
        machine: RequestMachine
        event: PacketRecord (admitted request packet) or TimerExpired
        params: ParameterTracker for LARGE classification and the RTT

    Returns:
        (machine, list of RequestEstimate)
    """
    if isinstance(event, TimerExpired):
        estimate = machine.expire(event.at)
        return machine, [estimate] if estimate else []
    if isinstance(event, PacketRecord):
        return machine, machine.on_packet(event, params.is_large(event), params.rtt)
    raise TypeError(f"Unsupported request event {event!r}")
