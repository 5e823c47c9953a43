"""
Result writers and readers: JSON-Lines (one envelope per line) and CSV (the
envelope flattened, lists space-joined).
"""
import csv
import json
import logging

from analyzer.exceptions import IngestIoError, MalformedInput

logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')


def envelopes(emissions, schema_version=None):
    """Render Emissions into envelope dicts in the given order"""
    from analyzer.serializers import OutputEnvelopeSerializer

    context = {} if schema_version is None else {'schema_version': schema_version}
    return [dict(OutputEnvelopeSerializer(e, context=context).data) for e in emissions]


def _csv_value(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ' '.join(str(v) for v in value)
    return str(value)


def flatten(envelope):
    row = {k: v for k, v in envelope.items() if k != 'payload'}
    row.update(envelope['payload'])
    return row


def write_jsonl(handle, rows):
    for row in rows:
        handle.write(json.dumps(row, separators=(',', ':')))
        handle.write('\n')


def write_csv(handle, rows):
    from analyzer.serializers import CSV_FIELDS

    writer = csv.DictWriter(handle, fieldnames=CSV_FIELDS, lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_value(v) for k, v in flatten(row).items()})


def write_results(handle, rows, fmt='json'):
    if fmt == 'json':
        write_jsonl(handle, rows)
    elif fmt == 'csv':
        write_csv(handle, rows)
    else:
        raise ValueError(f"Unknown output format {fmt!r}")
    logger.debug(f"Wrote {len(rows)} {fmt} records")


def read_jsonl(path):
    """Load envelope dicts written by ``write_jsonl``"""
    try:
        with open(path) as f:
            lines = [line for line in f if line.strip()]
    except OSError as e:
        raise IngestIoError(f"Cannot read results {path}: {e}") from e
    rows = []
    for number, line in enumerate(lines, 1):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedInput(f"{path}:{number}: not a JSON record ({e})") from e
        if 'record_type' not in row or 'payload' not in row:
            raise MalformedInput(f"{path}:{number}: missing record_type or payload")
        rows.append(row)
    return rows
