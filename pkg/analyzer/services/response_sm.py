"""
Response estimation: groups server-to-client data packets into HTTP responses.

States: -1 initial, 0 idle, 0.5 waiting-to-start, 1 transmitting, 1.5 waiting-to-end.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Optional

from .core_model import PacketRecord, TimerExpired, rtt_deadline

logger = logging.getLogger(__name__)


class ResponseState(enum.Enum):
    INITIAL = -1
    IDLE = 0
    WAIT_TO_START = 0.5
    TRANSMITTING = 1
    WAIT_TO_END = 1.5


TIMED_STATES = (ResponseState.WAIT_TO_START, ResponseState.TRANSMITTING, ResponseState.WAIT_TO_END)


@dataclass(frozen=True)
class ResponseEstimate:
    start_time: float
    end_time: float
    size: int
    packet_count: int
    positions: tuple = ()
    emitted_at: Optional[float] = None

    @classmethod
    def from_packets(cls, packets, emitted_at):
        return cls(
            start_time=packets[0].timestamp,
            end_time=packets[-1].timestamp,
            size=sum(p.quic_packet_len for p in packets),
            packet_count=len(packets),
            positions=tuple(p.position_index for p in packets),
            emitted_at=emitted_at,
        )


class ResponseMachine:
    """Response state machine for one connection; timeouts are lazy as in RequestMachine"""

    def __init__(self, timing):
        self.timing = timing
        self.state = ResponseState.INITIAL
        self.pending = []
        self.last_packet_time = None
        self.dropped_bytes = 0
        self.dropped_packets = 0

    def deadline(self, rtt):
        if self.state in TIMED_STATES:
            return rtt_deadline(self.last_packet_time, self.timing.delta_t_resp, rtt)
        return None

    def _emit(self, at):
        estimate = ResponseEstimate.from_packets(self.pending, at)
        self.pending = []
        logger.debug(
            f"Response estimated: {estimate.packet_count} pkt / {estimate.size}B "
            f"{estimate.start_time:.6f}-{estimate.end_time:.6f}"
        )
        return estimate

    def expire(self, at):
        if self.state not in TIMED_STATES:
            return None
        self.state = ResponseState.IDLE
        return self._emit(at)

    def on_packet(self, pkt, large, rtt, requests_seen):
        """
        Consume one admitted response packet.

        Args:
            pkt: server-to-client data PacketRecord
            large: packet is longer than the downstream MTU minus slack
            rtt: current RTT estimate
            requests_seen: number of requests the matcher has received so far

        Returns:
            List of completed ResponseEstimates
        """
        emitted = []
        deadline = self.deadline(rtt)
        if deadline is not None and deadline < pkt.timestamp:
            emitted.append(self.expire(deadline))

        if self.state is ResponseState.INITIAL:
            if requests_seen == 0:
                self.dropped_bytes += pkt.quic_packet_len
                self.dropped_packets += 1
                logger.debug(f"Response packet {pkt.position_index} dropped, no request yet")
                return emitted
            self.state = ResponseState.IDLE

        if self.state is ResponseState.WAIT_TO_END and large:
            # A new MTU-sized packet right after the tail opens the next response
            emitted.append(self._emit(pkt.timestamp))
            self.state = ResponseState.IDLE

        self.last_packet_time = pkt.timestamp
        self.pending.append(pkt)
        if self.state in (ResponseState.IDLE, ResponseState.WAIT_TO_START):
            self.state = ResponseState.TRANSMITTING if large else ResponseState.WAIT_TO_START
        elif self.state is ResponseState.TRANSMITTING and not large:
            self.state = ResponseState.WAIT_TO_END
        return emitted

    def flush(self, at):
        if not self.pending:
            return None
        self.state = ResponseState.IDLE
        return self._emit(at)


def step_response(machine, event, params, requests_seen):
    """
    Functional entry point mirroring ``step_request``.

    Returns:
        (machine, list of ResponseEstimate)
    """
    if isinstance(event, TimerExpired):
        estimate = machine.expire(event.at)
        return machine, [estimate] if estimate else []
    if isinstance(event, PacketRecord):
        return machine, machine.on_packet(event, params.is_large(event), params.rtt, requests_seen)
    raise TypeError(f"Unsupported response event {event!r}")
