import io
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from analyzer.exceptions import IngestIoError
from analyzer.services.analysis_service import MODES, AnalysisService
from analyzer.services.output import FORMATS, envelopes, write_results
from ._options import add_analyzer_arguments, analyzer_config, command_errors


def write_output(rows, fmt, out, stdout):
    """Write envelope rows to ``out`` or, when it is None, to the command's stdout"""
    if out is None:
        buffer = io.StringIO()
        write_results(buffer, rows, fmt)
        stdout.write(buffer.getvalue(), ending='')
        return
    try:
        with open(out, 'w', newline='') as f:
            write_results(f, rows, fmt)
    except OSError as e:
        raise IngestIoError(f"Cannot write results to {out}: {e}") from e


class Command(BaseCommand):
    help = 'Estimate HTTP objects from a QUIC capture (.pcap, .pcapng or .qevents)'

    def add_arguments(self, parser):
        parser.add_argument('input', type=Path, help='Capture file')
        parser.add_argument('--mode', choices=MODES, default='online')
        parser.add_argument('--format', choices=FORMATS, default='json', dest='fmt')
        parser.add_argument('--out', type=Path, default=None, help='Output file, stdout when omitted')
        parser.add_argument('--workers', type=int, default=1, help='Worker threads in offline mode')
        parser.add_argument('--store', action='store_true', help='Save the run to the database')
        add_analyzer_arguments(parser)

    def handle(self, *args, **options):
        source = options['input']
        with command_errors():
            if not source.exists():
                raise IngestIoError(f"No such capture: {source}")
            config = analyzer_config(options)
            service = AnalysisService(config, mode=options['mode'], workers=options['workers'])
            result = service.run(source)
            write_output(envelopes(result.emissions), options['fmt'], options['out'], self.stdout)

            if options['store']:
                from analyzer.services.store import store_result
                run = store_result(result, source)
                self.stderr.write(f"Stored as run {run.pk}")

        if result.stats.records == 0 and result.stats.datagrams:
            raise CommandError(f"No QUIC packets found in {source}", returncode=2)
