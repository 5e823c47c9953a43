from pathlib import Path

from django.core.management.base import BaseCommand

from analyzer.services.analysis_service import MODES, AnalysisService
from analyzer.services.evalharness import score, split_rows
from analyzer.services.output import envelopes
from analyzer.services.synth import Pattern, write_corpus
from .analyze import write_output
from .eval import write_report
from .synth import PATTERN_CHOICES, build_trace
from ._options import add_analyzer_arguments, analyzer_config, command_errors


class Command(BaseCommand):
    help = 'Generate a labeled corpus, analyze it and score the result'

    def add_arguments(self, parser):
        parser.add_argument('--out', type=Path, required=True, help='Directory for trace, results and report')
        parser.add_argument('--pattern', choices=PATTERN_CHOICES, default='all')
        parser.add_argument('--connections', type=int, default=len(Pattern))
        parser.add_argument('--n-pairs', type=int, default=3)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--loss-rate', type=float, default=0.0)
        parser.add_argument('--mux-degree', type=int, default=3)
        parser.add_argument('--ack-every', type=int, default=2)
        parser.add_argument('--rtt', type=float, default=None)
        parser.add_argument('--mtu-up', type=int, default=None)
        parser.add_argument('--mtu-down', type=int, default=None)
        parser.add_argument('--pcap', action='store_true')
        parser.add_argument('--mode', choices=MODES, default='online')
        add_analyzer_arguments(parser)

    def handle(self, *args, **options):
        out = options['out']
        with command_errors():
            config = analyzer_config(options)
            datagrams, labels = build_trace(options)
            paths = write_corpus(out, datagrams, labels, pcap=options['pcap'])

            result = AnalysisService(config, mode=options['mode'], log_classes=True).run(paths['qevents'])
            rows = envelopes(result.emissions)
            write_output(rows, 'json', out / 'results.jsonl', self.stdout)

            objects, summaries = split_rows(rows)
            report = score(objects, summaries, labels, result.classifications)
            write_report(report, out / 'report.json')
        self.stdout.write(report.format_table())
