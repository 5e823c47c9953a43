from pathlib import Path

from django.core.management.base import BaseCommand

from analyzer.exceptions import ConfigError
from analyzer.services.synth import Pattern, ScenarioConfig, generate, generate_corpus, write_corpus
from ._options import command_errors

PATTERN_CHOICES = ['all'] + [p.value for p in Pattern]


class Command(BaseCommand):
    help = 'Generate a labeled synthetic QUIC trace: trace.qevents, labels.json and optionally trace.pcap'

    def add_arguments(self, parser):
        parser.add_argument('--out', type=Path, required=True, help='Output directory')
        parser.add_argument('--pattern', choices=PATTERN_CHOICES, default='all')
        parser.add_argument('--connections', type=int, default=1)
        parser.add_argument('--n-pairs', type=int, default=3)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--loss-rate', type=float, default=0.0)
        parser.add_argument('--mux-degree', type=int, default=3)
        parser.add_argument('--ack-every', type=int, default=2)
        parser.add_argument('--rtt', type=float, default=None, help='Fixed RTT in seconds; varied when omitted')
        parser.add_argument('--mtu-up', type=int, default=None)
        parser.add_argument('--mtu-down', type=int, default=None)
        parser.add_argument('--pcap', action='store_true', help='Also write trace.pcap')

    def handle(self, *args, **options):
        with command_errors():
            datagrams, labels = build_trace(options)
            paths = write_corpus(options['out'], datagrams, labels, pcap=options['pcap'])
        self.stdout.write(
            f"{len(labels)} connection(s), {len(datagrams)} datagrams -> "
            + ', '.join(str(p) for p in paths.values())
        )


def build_trace(options):
    """Datagrams and labels for the synth options (shared with ``pipeline``)"""
    if options['connections'] < 1:
        raise ConfigError('connections must be at least 1')
    patterns = list(Pattern) if options['pattern'] == 'all' else [Pattern(options['pattern'])]
    if options['connections'] == 1 and len(patterns) == 1:
        defaults = ScenarioConfig()
        config = ScenarioConfig(
            pattern=patterns[0],
            rtt=options['rtt'] or defaults.rtt,
            mtu_up=options['mtu_up'] or defaults.mtu_up,
            mtu_down=options['mtu_down'] or defaults.mtu_down,
            n_pairs=options['n_pairs'],
            loss_rate=options['loss_rate'],
            ack_every=options['ack_every'],
            seed=options['seed'],
            mux_degree=options['mux_degree'],
        )
        datagrams, connection_labels = generate(config)
        return datagrams, [connection_labels]

    extra = {}
    if options['rtt'] is not None:
        extra['rtts'] = (options['rtt'],)
    if options['mtu_up'] is not None:
        extra['mtus_up'] = (options['mtu_up'],)
    if options['mtu_down'] is not None:
        extra['mtus_down'] = (options['mtu_down'],)
    return generate_corpus(
        options['connections'],
        seed=options['seed'],
        patterns=patterns,
        n_pairs=options['n_pairs'],
        loss_rate=options['loss_rate'],
        mux_degree=options['mux_degree'],
        ack_every=options['ack_every'],
        **extra,
    )
