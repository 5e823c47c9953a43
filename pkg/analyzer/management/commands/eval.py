import json
from pathlib import Path

from django.core.management.base import BaseCommand

from analyzer.exceptions import IngestIoError
from analyzer.services.evalharness import score, split_rows
from analyzer.services.output import read_jsonl
from analyzer.services.synth import read_labels
from ._options import command_errors


def write_report(report, path):
    try:
        with open(path, 'w') as f:
            json.dump(report.as_dict(), f, indent=2)
    except OSError as e:
        raise IngestIoError(f"Cannot write report to {path}: {e}") from e


class Command(BaseCommand):
    help = 'Score analyzer JSON-Lines output against synthetic ground-truth labels'

    def add_arguments(self, parser):
        parser.add_argument('--results', type=Path, required=True, help='JSON-Lines written by analyze')
        parser.add_argument('--labels', type=Path, required=True, help='labels.json written by synth')
        parser.add_argument('--out', type=Path, default=Path('report.json'))

    def handle(self, *args, **options):
        with command_errors():
            objects, summaries = split_rows(read_jsonl(options['results']))
            report = score(objects, summaries, read_labels(options['labels']))
            write_report(report, options['out'])
        self.stdout.write(report.format_table())
