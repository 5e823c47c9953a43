"""
Per-connection adaptive parameters: data-length thresholds driven by the
lengths of recent non-data packets, per-direction MTU auto-detection, and the
handshake RTT estimate.
"""
import enum
import logging
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .core_model import Direction, HeaderForm

logger = logging.getLogger(__name__)


class RttSource(enum.Enum):
    HANDSHAKE_MEASURED = 'handshake_measured'
    CONFIG_DEFAULT = 'config_default'


class AckLengthWindow:
    """Lengths of the most recent non-data packets seen in one direction"""

    def __init__(self, direction, capacity=10):
        self.direction = direction
        self.capacity = capacity
        self.lengths = deque(maxlen=capacity)

    def push(self, length):
        self.lengths.append(length)

    @property
    def current_max(self):
        return max(self.lengths) if self.lengths else 0

    @property
    def is_warm(self):
        return len(self.lengths) == self.capacity

    def snapshot(self):
        return list(self.lengths)

    def __len__(self):
        return len(self.lengths)


@dataclass(frozen=True)
class AdaptiveThresholds:
    l_req: int
    l_resp: int
    first_request_seen: bool = False

    def for_direction(self, direction):
        return self.l_req if direction is Direction.CLIENT_TO_SERVER else self.l_resp


def _adapted(window, floor, margin):
    if not window.is_warm:
        return floor
    return max(floor, window.current_max + margin)


def record_nondata(window, length, thresholds, config):
    """
    Push one non-data packet length and re-derive that direction's threshold.

    Once the window holds ``config.ack_window`` samples the threshold becomes
    max(floor, l_max_ack + ack_margin); before that it keeps its floor. Before
    the first request the request threshold stays at ``l_req_initial``.

    Returns:
        Updated AdaptiveThresholds
    """
    window.push(length)
    if window.direction is Direction.SERVER_TO_CLIENT:
        return replace(thresholds, l_resp=_adapted(window, config.l_resp, config.ack_margin))
    if not thresholds.first_request_seen:
        return thresholds
    return replace(thresholds, l_req=_adapted(window, config.l_req, config.ack_margin))


def mark_first_request(thresholds, window, config):
    """Switch the request threshold from its initial value to the adaptive one"""
    if thresholds.first_request_seen:
        return thresholds
    return replace(thresholds, first_request_seen=True, l_req=_adapted(window, config.l_req, config.ack_margin))


@dataclass(frozen=True)
class MtuEstimate:
    l_mtu_up: int = 1200
    l_mtu_down: int = 1200

    def for_direction(self, direction):
        return self.l_mtu_up if direction is Direction.CLIENT_TO_SERVER else self.l_mtu_down


def update_mtu(est, pkt):
    """Directional running maximum of QUIC packet lengths"""
    if pkt.direction is Direction.CLIENT_TO_SERVER:
        if pkt.quic_packet_len > est.l_mtu_up:
            return replace(est, l_mtu_up=pkt.quic_packet_len)
    elif pkt.quic_packet_len > est.l_mtu_down:
        return replace(est, l_mtu_down=pkt.quic_packet_len)
    return est


@dataclass(frozen=True)
class RttEstimate:
    rtt: float
    source: RttSource
    samples: tuple = ()


class RttEstimator:
    """
    Online handshake RTT estimation.

    A client flight starts at its first long-header packet and is closed by the
    next server long-header packet; each closed flight is one sample. The
    estimate freezes at the first short header in either direction.
    """

    def __init__(self, default_rtt):
        self.default_rtt = default_rtt
        self.samples = []
        self.frozen = False
        self._flight_start = None
        self._estimate = RttEstimate(default_rtt, RttSource.CONFIG_DEFAULT)

    def observe(self, pkt):
        if self.frozen:
            return
        if pkt.header_form is HeaderForm.SHORT:
            self.frozen = True
            self._flight_start = None
            logger.debug(f"RTT frozen at {self._estimate.rtt:.6f}s ({self._estimate.source.value})")
            return

        if pkt.direction is Direction.CLIENT_TO_SERVER:
            if self._flight_start is None:
                self._flight_start = pkt.timestamp
        elif self._flight_start is not None:
            self.samples.append(pkt.timestamp - self._flight_start)
            self._flight_start = None
            self._estimate = RttEstimate(float(np.mean(self.samples)), RttSource.HANDSHAKE_MEASURED,
                                         tuple(self.samples))

    @property
    def estimate(self):
        return self._estimate


def estimate_rtt(handshake_packets, default_rtt=0.1):
    """
    Estimate the RTT from the long-header phase of a connection.

    Args:
        handshake_packets: PacketRecords in time order
        default_rtt: fallback when no client flight was answered

    Returns:
        RttEstimate, ``CONFIG_DEFAULT`` when no sample exists
    """
    estimator = RttEstimator(default_rtt)
    for pkt in handshake_packets:
        estimator.observe(pkt)
        if estimator.frozen:
            break
    return estimator.estimate


class ParameterTracker:
    """Bundles every adaptive parameter of one connection"""

    def __init__(self, config):
        self.config = config
        self.thresholds = AdaptiveThresholds(config.l_req_initial, config.l_resp)
        self.windows = {
            Direction.CLIENT_TO_SERVER: AckLengthWindow(Direction.CLIENT_TO_SERVER, config.ack_window),
            Direction.SERVER_TO_CLIENT: AckLengthWindow(Direction.SERVER_TO_CLIENT, config.ack_window),
        }
        self.mtu = MtuEstimate(config.mtu_init, config.mtu_init)
        self.rtt_estimator = RttEstimator(config.rtt_default)

    @property
    def rtt(self):
        return self.rtt_estimator.estimate.rtt

    def observe(self, pkt):
        self.mtu = update_mtu(self.mtu, pkt)
        self.rtt_estimator.observe(pkt)

    def threshold(self, direction):
        return self.thresholds.for_direction(direction)

    def is_large(self, pkt):
        return pkt.quic_packet_len > self.mtu.for_direction(pkt.direction) - self.config.mtu_slack

    def record_nondata(self, pkt):
        window = self.windows[pkt.direction]
        before = self.thresholds
        self.thresholds = record_nondata(window, pkt.quic_packet_len, self.thresholds, self.config)
        if self.thresholds != before:
            logger.debug(f"Thresholds now l_req={self.thresholds.l_req} l_resp={self.thresholds.l_resp}")

    def mark_first_request(self):
        self.thresholds = mark_first_request(
            self.thresholds, self.windows[Direction.CLIENT_TO_SERVER], self.config)

    def ack_snapshot(self):
        return {d.label: self.windows[d].snapshot() for d in Direction}

    def max_ack_len(self, direction):
        return self.windows[direction].current_max
