"""
Flags and error handling shared by the quiclens management commands.
"""
from contextlib import contextmanager

from django.core.management.base import CommandError

from analyzer.exceptions import QuicLensError
from analyzer.services.core_model import AnalyzerConfig

# flag -> (AnalyzerConfig attribute, type, help)
ANALYZER_FLAGS = {
    '--l-req': ('l_req', int, 'Request data threshold floor in bytes'),
    '--l-req-initial': ('l_req_initial', int, 'Request threshold before the first request'),
    '--l-resp': ('l_resp', int, 'Response data threshold floor in bytes'),
    '--mtu-init': ('mtu_init', int, 'Initial per-direction MTU estimate'),
    '--mtu-slack': ('mtu_slack', int, 'Bytes under the MTU still counted as MTU-sized'),
    '--rtt-default': ('rtt_default', float, 'RTT in seconds when the handshake gives no sample'),
    '--idle-rtts': ('idle_rtts', float, 'Idle time, in RTTs, after which a connection closes'),
    '--assoc-min-rtts': ('association_min_rtts', float, 'Lower bound of a valid request-response gap'),
    '--assoc-max-rtts': ('association_max_rtts', float, 'Upper bound of a valid request-response gap'),
    '--delta-t-req': ('delta_t_req', float, 'Request packet gap timeout in RTTs'),
    '--delta-t-resp': ('delta_t_resp', float, 'Response packet gap timeout in RTTs'),
    '--output-wait-rtts': ('output_wait_rtts', float, 'Wait after a complete group before output'),
    '--n-req-cap': ('n_req_cap', int, 'Maximum pairs grouped into one object'),
    '--ack-window': ('ack_window', int, 'Non-data packets kept per direction'),
    '--ack-margin': ('ack_margin', int, 'Bytes added to the largest recent ACK'),
    '--flow-timeout': ('flow_timeout', float, 'Seconds of silence after which a UDP flow is forgotten'),
}


def add_analyzer_arguments(parser):
    group = parser.add_argument_group('analyzer parameters')
    for flag, (dest, kind, help_text) in ANALYZER_FLAGS.items():
        group.add_argument(flag, dest=dest, type=kind, default=None, help=help_text)


def analyzer_config(options):
    """AnalyzerConfig from settings with the flags that were given on top"""
    return AnalyzerConfig.from_settings(**{dest: options.get(dest) for dest, _, _ in ANALYZER_FLAGS.values()})


@contextmanager
def command_errors():
    """Turn analyzer errors into CommandError carrying the documented exit code"""
    try:
        yield
    except QuicLensError as e:
        raise CommandError(str(e), returncode=e.exit_code) from e
