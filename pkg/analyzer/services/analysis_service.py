"""
Capture-level analysis: feeds every connection of a capture through its
ConnectionTracker, online (one pass over the merged stream) or offline
(grouped per connection, optionally on a worker pool).
"""
import heapq
import logging
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from analyzer.exceptions import ConfigError
from .connection import ConnectionTracker, run_offline, split_emissions
from .core_model import AnalyzerConfig
from .ingest import FlowTable, IngestStats, stream_records

logger = logging.getLogger(__name__)

MODES = ('online', 'offline')


@dataclass
class AnalysisResult:
    emissions: list
    stats: IngestStats
    config: AnalyzerConfig
    mode: str
    classifications: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def objects(self):
        return split_emissions(self.emissions)[0]

    @property
    def summaries(self):
        return split_emissions(self.emissions)[1]

    @property
    def connection_count(self):
        return len({e.key for e in self.emissions if e.is_summary})


class _ReorderBuffer:
    """Holds emissions until no connection can still produce an earlier one"""

    def __init__(self):
        self.pending = []

    def add(self, emissions):
        for e in emissions:
            heapq.heappush(self.pending, (e.sort_key, e))

    def release(self, watermark):
        while self.pending and self.pending[0][0][0] < watermark:
            yield heapq.heappop(self.pending)[1]

    def drain(self):
        while self.pending:
            yield heapq.heappop(self.pending)[1]


def horizon(tracker):
    """
    Lower bound on the logical time of anything a live tracker can still emit.

    While the handshake RTT is still moving, deadlines may shift, so the bound
    falls back to the start of the connection.
    """
    if tracker.closed:
        return None
    if not tracker.params.rtt_estimator.frozen:
        return tracker.counters['first_packet_time']
    rtt = tracker.rtt
    deadlines = [
        tracker.requests.deadline(rtt),
        tracker.responses.deadline(rtt),
        tracker.matcher.deadline(rtt),
        tracker.idle_deadline(),
    ]
    return min(d for d in deadlines if d is not None)


class _LiveConnections:
    """
    Trackers of an online run. A tracker closed on idle is dropped and only its
    numbering is kept, until its flow has been silent past the flow timeout.
    """

    def __init__(self, config, log_classes, classifications):
        self.config = config
        self.log_classes = log_classes
        self.classifications = classifications
        self.by_key = {}
        self.by_ordinal = {}
        # key -> (ordinal, next generation, next seq, last packet us)
        self.retired = OrderedDict()
        self.next_ordinal = 0

    def tracker_for(self, key, pkt):
        """Returns (tracker, emissions of an earlier flow the packet replaces)"""
        emitted = []
        tracker = self.by_key.get(key)
        if tracker is not None and pkt.position_index == 0:
            # The flow table restarted this flow
            emitted = tracker.finish()
            self.retire(tracker, keep=False)
            tracker = None
        if tracker is not None:
            return tracker, emitted

        resume = self.retired.pop(key, None)
        if resume is None or pkt.position_index == 0:
            ordinal, generation, seq = self.next_ordinal, 0, 0
            self.next_ordinal += 1
        else:
            ordinal, generation, seq, _ = resume
        tracker = ConnectionTracker(key, self.config, ordinal, self.log_classes, generation, seq)
        self.by_key[key] = tracker
        self.by_ordinal[ordinal] = tracker
        return tracker, emitted

    def retire(self, tracker, keep=True):
        del self.by_key[tracker.key]
        del self.by_ordinal[tracker.ordinal]
        if self.classifications is not None and self.log_classes:
            self.classifications.setdefault(str(tracker.key), []).extend(tracker.classifications)
        if keep:
            last_us = round(tracker.counters['last_packet_time'] * 1_000_000)
            self.retired[tracker.key] = (tracker.ordinal, tracker.generation + 1, tracker.seq, last_us)

    def forget(self, now_us):
        """Drop retired numbering whose flow the flow table has timed out"""
        timeout_us = round(self.config.flow_timeout * 1_000_000)
        while self.retired:
            key, (_, _, _, last_us) = next(iter(self.retired.items()))
            if now_us - last_us <= timeout_us:
                return
            del self.retired[key]

    def finish(self):
        emitted = []
        for ordinal in sorted(self.by_ordinal):
            tracker = self.by_ordinal[ordinal]
            emitted.extend(tracker.finish())
            self.retire(tracker, keep=False)
        return emitted


class AnalysisService:
    """
    Runs the analyzer over a whole capture.

    Both modes drive the same per-connection pipeline and order their output by
    (emission time, connection ordinal, generation, sequence), so they produce
    identical records.
    """

    def __init__(self, config=None, mode='online', workers=1, log_classes=False):
        if mode not in MODES:
            raise ConfigError(f"Unknown mode {mode!r}, expected one of {', '.join(MODES)}")
        if workers < 1:
            raise ConfigError("workers must be at least 1")
        self.config = config or AnalyzerConfig()
        self.mode = mode
        self.workers = workers
        self.log_classes = log_classes

    def run(self, source):
        """
        Analyze a capture file or an iterable of RawDatagram.

        Returns:
            AnalysisResult with emissions in output order
        """
        stats = IngestStats()
        started = time.perf_counter()
        classifications = {}
        if self.mode == 'online':
            emissions = list(self.iter_online(source, stats, classifications))
        else:
            emissions = self._run_offline(source, stats, classifications)
        result = AnalysisResult(emissions, stats, self.config, self.mode, classifications,
                                time.perf_counter() - started)
        logger.info(
            f"Analyzed {stats.datagrams} datagrams ({stats.records} QUIC packets) in {self.mode} mode: "
            f"{result.connection_count} connections, {len(result.objects)} objects, "
            f"{stats.malformed} malformed, {result.elapsed:.2f}s"
        )
        return result

    def _flow_table(self):
        return FlowTable(idle_timeout_us=round(self.config.flow_timeout * 1_000_000))

    def iter_online(self, source, stats=None, classifications=None):
        """
        Single pass over the merged stream.

        Idle connections are swept from a deadline heap as capture time moves
        on; emissions are yielded as soon as no live connection can precede them.
        """
        stats = stats if stats is not None else IngestStats()
        connections = _LiveConnections(self.config, self.log_classes, classifications)
        idle_heap = []
        buffer = _ReorderBuffer()

        for key, pkt in stream_records(source, stats, self._flow_table()):
            now = pkt.timestamp
            swept = False
            while idle_heap and idle_heap[0][0] < now:
                deadline, ordinal = heapq.heappop(idle_heap)
                tracker = connections.by_ordinal.get(ordinal)
                if tracker is None or tracker.idle_deadline() != deadline:
                    continue
                buffer.add(tracker.check_idle(now))
                connections.retire(tracker)
                swept = True
            if swept:
                connections.forget(pkt.timestamp_us)

            tracker, replaced = connections.tracker_for(key, pkt)
            buffer.add(replaced)
            buffer.add(tracker.process(pkt))
            heapq.heappush(idle_heap, (tracker.idle_deadline(), tracker.ordinal))

            if swept:
                bounds = [horizon(t) for t in connections.by_ordinal.values()]
                yield from buffer.release(min([now] + [b for b in bounds if b is not None]))

        buffer.add(connections.finish())
        yield from buffer.drain()

    def _run_offline(self, source, stats, classifications):
        groups = {}
        epochs = {}
        for key, pkt in stream_records(source, stats, self._flow_table()):
            # A restarted flow is a separate connection
            if key not in epochs:
                epochs[key] = 0
            elif pkt.position_index == 0:
                epochs[key] += 1
            groups.setdefault((key, epochs[key]), []).append(pkt)
        jobs = [(key, packets, ordinal) for ordinal, ((key, _), packets) in enumerate(groups.items())]
        logger.debug(f"Offline run over {len(jobs)} connections with {self.workers} worker(s)")

        def analyze(job):
            key, packets, ordinal = job
            return run_offline(key, packets, self.config, ordinal, self.log_classes)

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(analyze, jobs))
        else:
            results = [analyze(job) for job in jobs]

        emissions = []
        for connection_emissions, tracker in results:
            emissions.extend(connection_emissions)
            if self.log_classes:
                classifications.setdefault(str(tracker.key), []).extend(tracker.classifications)
        emissions.sort(key=lambda e: e.sort_key)
        return emissions
