"""
Scores analyzer output against synthetic ground truth.

Metrics per connection, then averaged over connections:
  - match accuracy: share of true pairs whose request and response packets
    all land in one estimated object
  - request / response size accuracy: 1 - min(1, sum|est - true| / sum true)
    over the groups of pairs aligned to each object
  - request start, response start and response end errors: mean |est - true|,
    in seconds and in RTT multiples
"""
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from analyzer.exceptions import LabelMismatch

logger = logging.getLogger(__name__)

DATA_ROLES = ('request_data', 'response_data')


@dataclass
class ConnectionScore:
    connection_key: str
    rtt: float
    pair_count: int
    object_count: int
    matched_pairs: int
    match_accuracy: float
    request_size_accuracy: float
    response_size_accuracy: float
    request_start_error: float
    response_start_error: float
    response_end_error: float
    spurious_object_count: int
    classification_accuracy: Optional[float] = None

    @property
    def request_start_error_rtt(self):
        return self.request_start_error / self.rtt

    @property
    def response_start_error_rtt(self):
        return self.response_start_error / self.rtt

    @property
    def response_end_error_rtt(self):
        return self.response_end_error / self.rtt


@dataclass
class EvalReport:
    match_accuracy: float
    request_start_error: float
    request_start_error_rtt: float
    request_size_accuracy: float
    response_start_error: float
    response_start_error_rtt: float
    response_end_error: float
    response_end_error_rtt: float
    response_size_accuracy: float
    spurious_object_count: int
    pair_count: int
    object_count: int
    classification_accuracy: Optional[float] = None
    connections: list = field(default_factory=list)

    def as_dict(self):
        data = asdict(self)
        data['connections'] = [
            dict(asdict(c), request_start_error_rtt=c.request_start_error_rtt,
                 response_start_error_rtt=c.response_start_error_rtt,
                 response_end_error_rtt=c.response_end_error_rtt)
            for c in self.connections
        ]
        return data

    def format_table(self):
        rows = [
            ('Match accuracy', f"{self.match_accuracy:.4f}"),
            ('Request start time error', f"{self.request_start_error * 1000:.3f} ms ({self.request_start_error_rtt:.3f} RTT)"),
            ('Request size accuracy', f"{self.request_size_accuracy:.4f}"),
            ('Response start time error', f"{self.response_start_error * 1000:.3f} ms ({self.response_start_error_rtt:.3f} RTT)"),
            ('Response end time error', f"{self.response_end_error * 1000:.3f} ms ({self.response_end_error_rtt:.3f} RTT)"),
            ('Response size accuracy', f"{self.response_size_accuracy:.4f}"),
            ('Pairs / objects', f"{self.pair_count} / {self.object_count}"),
            ('Spurious objects', str(self.spurious_object_count)),
        ]
        if self.classification_accuracy is not None:
            rows.append(('ACK/data classification', f"{self.classification_accuracy:.4f}"))
        rows.append(('Connections', str(len(self.connections))))
        width = max(len(name) for name, _ in rows)
        return '\n'.join(f"{name:<{width}}  {value}" for name, value in rows)


def size_accuracy(estimated, true):
    """1 - min(1, sum|est - true| / sum true) over aligned groups"""
    total = sum(true)
    error = sum(abs(e - t) for e, t in zip(estimated, true))
    if total == 0:
        return 1.0 if error == 0 else 0.0
    return 1.0 - min(1.0, error / total)


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def _true_positions(label):
    """pair_id -> (request positions, response positions)"""
    positions = defaultdict(lambda: ([], []))
    for ordinal, entry in enumerate(label.roles):
        pair_id, role = entry[0], entry[1]
        if pair_id is None:
            continue
        if role == 'request_data':
            positions[pair_id][0].append(ordinal)
        elif role == 'response_data':
            positions[pair_id][1].append(ordinal)
    return positions


def align(objects, label):
    """
    Map every true pair to one estimated object.

    A pair goes to the object holding its first request packet; pairs whose
    request was not attributed to any object are then matched greedily, in
    request order, to the unused object nearest in request start time.

    Returns:
        dict pair_id -> object index or None
    """
    owner = {}
    for index, obj in enumerate(objects):
        for position in obj['request_positions'] + obj['response_positions']:
            owner[position] = index

    positions = _true_positions(label)
    assigned = {}
    used = set()
    pending = []
    for truth in label.pairs:
        requests = positions[truth.pair_id][0]
        index = owner.get(requests[0]) if requests else None
        if index is None:
            pending.append(truth)
        else:
            assigned[truth.pair_id] = index
            used.add(index)

    for truth in sorted(pending, key=lambda p: (p.request_start_us or 0, p.pair_id)):
        free = [i for i in range(len(objects)) if i not in used]
        if not free or truth.request_start_us is None:
            assigned[truth.pair_id] = None
            continue
        index = min(free, key=lambda i: (abs(objects[i]['request_start_us'] - truth.request_start_us), i))
        assigned[truth.pair_id] = index
        used.add(index)
    return assigned


def classification_accuracy(label, classes, warmup=10):
    """
    Share of labeled ACK and data packets the analyzer put on the right side
    of its length threshold.

    A direction is scored only after the analyzer has filed ``warmup`` of its
    packets as non-data, i.e. once its ACK-length window there is full.
    """
    by_position = {position: getattr(role, 'value', role) for position, role in classes}
    nondata_seen = {'up': 0, 'down': 0}
    correct = total = 0
    for ordinal, entry in enumerate(label.roles):
        role = entry[1]
        direction = entry[2] if len(entry) > 2 else None
        estimated = by_position.get(ordinal)
        if direction not in nondata_seen or estimated is None:
            continue
        if role in DATA_ROLES + ('ack',) and nondata_seen[direction] >= warmup:
            total += 1
            if (role == 'ack') == (estimated == 'non_data'):
                correct += 1
        if estimated == 'non_data':
            nondata_seen[direction] += 1
    return correct / total if total else None


def score_connection(label, objects, summaries, classes=None):
    """
    Args:
        label: ConnectionLabels
        objects: payload dicts of this connection's objects, in output order
        summaries: payload dicts of this connection's summaries (one per generation)
        classes: optional [(position_index, role value)] classification log

    Returns:
        ConnectionScore
    """
    observed = sum(s['total_packets'] for s in summaries)
    if observed != label.packet_count:
        raise LabelMismatch(
            f"{label.connection_key}: labels have {label.packet_count} packets, analyzer saw {observed}"
        )

    positions = _true_positions(label)
    assigned = align(objects, label)
    truth_by_id = {p.pair_id: p for p in label.pairs}

    groups = defaultdict(list)
    matched = 0
    for pair_id, index in assigned.items():
        if index is None:
            groups[None].append(pair_id)
            continue
        groups[index].append(pair_id)
        obj = objects[index]
        members = set(obj['request_positions']) | set(obj['response_positions'])
        requests, responses = positions[pair_id]
        if set(requests) <= members and set(responses) <= members:
            matched += 1

    req_est, req_true, resp_est, resp_true = [], [], [], []
    req_start_err, resp_start_err, resp_end_err = [], [], []
    for index, pair_ids in groups.items():
        pairs = [truth_by_id[p] for p in pair_ids]
        obj = objects[index] if index is not None else None
        req_true.append(sum(p.request_size for p in pairs))
        resp_true.append(sum(p.response_size for p in pairs))
        req_est.append(obj['request_size'] if obj else 0)
        resp_est.append(obj['response_size'] if obj else 0)
        if obj is None:
            continue
        starts = [p.request_start_us for p in pairs if p.request_start_us is not None]
        if starts:
            req_start_err.append(abs(obj['request_start_us'] - min(starts)) / 1e6)
        resp_starts = [p.response_start_us for p in pairs if p.response_start_us is not None]
        if resp_starts and obj['response_start_us'] is not None:
            resp_start_err.append(abs(obj['response_start_us'] - min(resp_starts)) / 1e6)
            resp_end_err.append(abs(obj['response_end_us'] - max(p.response_end_us for p in pairs
                                                                 if p.response_end_us is not None)) / 1e6)

    used = {i for i in assigned.values() if i is not None}
    return ConnectionScore(
        connection_key=label.connection_key,
        rtt=label.rtt,
        pair_count=len(label.pairs),
        object_count=len(objects),
        matched_pairs=matched,
        match_accuracy=matched / len(label.pairs) if label.pairs else 1.0,
        request_size_accuracy=size_accuracy(req_est, req_true),
        response_size_accuracy=size_accuracy(resp_est, resp_true),
        request_start_error=_mean(req_start_err),
        response_start_error=_mean(resp_start_err),
        response_end_error=_mean(resp_end_err),
        spurious_object_count=len(objects) - len(used),
        classification_accuracy=classification_accuracy(label, classes) if classes else None,
    )


def score(objects, summaries, labels, classifications=None):
    """
    Score analyzer output against ground truth.

    Args:
        objects: envelope dicts with record_type ``object``
        summaries: envelope dicts with record_type ``summary``
        labels: list of ConnectionLabels
        classifications: optional {connection key: [(position_index, role value)]}

    Returns:
        EvalReport; connections are scored in key order so the result does not
        depend on the order of the inputs

    Raises:
        LabelMismatch: a labeled connection is missing or its packet count differs
    """
    objects_by_key = defaultdict(list)
    for row in objects:
        objects_by_key[row['connection_key']].append(row['payload'])
    summaries_by_key = defaultdict(list)
    for row in summaries:
        summaries_by_key[row['connection_key']].append(row['payload'])

    scores = []
    for label in sorted(labels, key=lambda l: l.connection_key):
        if label.connection_key not in summaries_by_key:
            raise LabelMismatch(f"Labeled connection {label.connection_key} missing from analyzer output")
        objs = sorted(objects_by_key.get(label.connection_key, []),
                      key=lambda o: (o['request_start_us'], o['request_positions']))
        classes = (classifications or {}).get(label.connection_key)
        scores.append(score_connection(label, objs, summaries_by_key[label.connection_key], classes))

    unlabeled = set(summaries_by_key) - {l.connection_key for l in labels}
    if unlabeled:
        logger.warning(f"{len(unlabeled)} analyzed connection(s) have no labels and were not scored")

    classified = [s.classification_accuracy for s in scores if s.classification_accuracy is not None]
    report = EvalReport(
        match_accuracy=_mean([s.match_accuracy for s in scores]),
        request_start_error=_mean([s.request_start_error for s in scores]),
        request_start_error_rtt=_mean([s.request_start_error_rtt for s in scores]),
        request_size_accuracy=_mean([s.request_size_accuracy for s in scores]),
        response_start_error=_mean([s.response_start_error for s in scores]),
        response_start_error_rtt=_mean([s.response_start_error_rtt for s in scores]),
        response_end_error=_mean([s.response_end_error for s in scores]),
        response_end_error_rtt=_mean([s.response_end_error_rtt for s in scores]),
        response_size_accuracy=_mean([s.response_size_accuracy for s in scores]),
        spurious_object_count=sum(s.spurious_object_count for s in scores),
        pair_count=sum(s.pair_count for s in scores),
        object_count=sum(s.object_count for s in scores),
        classification_accuracy=_mean(classified) if classified else None,
        connections=scores,
    )
    logger.info(f"Scored {len(scores)} connections: match accuracy {report.match_accuracy:.4f}")
    return report


def split_rows(rows):
    """(object rows, summary rows) from envelope dicts"""
    return ([r for r in rows if r['record_type'] == 'object'],
            [r for r in rows if r['record_type'] == 'summary'])
