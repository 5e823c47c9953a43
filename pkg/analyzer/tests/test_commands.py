import csv
import io
import json
import shutil
import tempfile
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from analyzer.serializers import CSV_FIELDS
from analyzer.services.ingest import RawDatagram, write_qevents
from .helpers import CLIENT, SERVER, sequential_trace

SEQUENTIAL = ['--pattern', 'video_sequential', '--n-pairs', '2', '--rtt', '0.6', '--seed', '2']


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.dir = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.dir, ignore_errors=True)

    def call(self, *args, **kwargs):
        out = io.StringIO()
        call_command(*args, stdout=out, stderr=io.StringIO(), **kwargs)
        return out.getvalue()

    def synth(self, *extra):
        self.call('synth', '--out', str(self.dir), *extra)
        return self.dir / 'trace.qevents', self.dir / 'labels.json'

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args)
        self.assertEqual(ctx.exception.returncode, code)


class SynthAnalyzeTests(CommandTestCase):
    def test_sequential_trace_gives_two_objects(self):
        trace, labels = self.synth(*SEQUENTIAL)
        self.assertTrue(labels.exists())

        rows = [json.loads(line) for line in self.call('analyze', str(trace)).splitlines()]
        self.assertEqual([r['record_type'] for r in rows], ['object', 'object', 'summary'])
        self.assertTrue(all(r['schema_version'] == '1.0' for r in rows))
        summary = rows[-1]['payload']
        self.assertEqual(summary['estimated_object_count'], 2)
        self.assertEqual(summary['rtt_source'], 'handshake_measured')

    def test_trace_is_the_seeded_generator_output(self):
        trace, labels = self.synth(*SEQUENTIAL)
        _, expected = sequential_trace()
        self.assertEqual(json.loads(labels.read_text())['connections'][0]['connection_key'],
                         expected.connection_key)

    def test_csv_matches_json(self):
        trace, _ = self.synth(*SEQUENTIAL)
        json_rows = [json.loads(line) for line in self.call('analyze', str(trace)).splitlines()]
        out = self.dir / 'results.csv'
        self.call('analyze', str(trace), '--format', 'csv', '--out', str(out))

        with open(out, newline='') as f:
            reader = csv.DictReader(f)
            self.assertEqual(reader.fieldnames, CSV_FIELDS)
            csv_rows = list(reader)
        self.assertEqual(len(csv_rows), len(json_rows))
        for csv_row, json_row in zip(csv_rows, json_rows):
            self.assertEqual(csv_row['record_type'], json_row['record_type'])
            self.assertEqual(csv_row['connection_key'], json_row['connection_key'])
            self.assertEqual(csv_row['emitted_at_us'], str(json_row['emitted_at_us']))
            if json_row['record_type'] == 'object':
                self.assertEqual(csv_row['request_size'], str(json_row['payload']['request_size']))
                self.assertEqual(csv_row['response_positions'],
                                 ' '.join(str(p) for p in json_row['payload']['response_positions']))
                self.assertEqual(csv_row['total_packets'], '')

    def test_offline_mode_matches_online(self):
        trace, _ = self.synth('--connections', '4', '--seed', '5', '--n-pairs', '2')
        online = self.call('analyze', str(trace))
        offline = self.call('analyze', str(trace), '--mode', 'offline', '--workers', '2')
        self.assertEqual(online, offline)

    def test_rtt_default_flag_on_a_capture_without_handshake(self):
        raws, _ = sequential_trace()
        short_only = [d for d in raws if not d.payload[0] & 0x80]
        path = self.dir / 'midstream.qevents'
        with open(path, 'w') as f:
            write_qevents(f, short_only)

        rows = [json.loads(line) for line in self.call('analyze', str(path), '--rtt-default', '0.6').splitlines()]
        summary = rows[-1]['payload']
        self.assertEqual(summary['rtt_source'], 'config_default')
        self.assertEqual(summary['rtt_used'], 0.6)
        self.assertFalse(summary['client_inferred'])

    def test_corpus_keeps_mtu_per_direction(self):
        _, labels = self.synth('--connections', '3', '--n-pairs', '1', '--mtu-up', '1350', '--mtu-down', '1200')
        connections = json.loads(labels.read_text())['connections']
        self.assertEqual({(c['mtu_up'], c['mtu_down']) for c in connections}, {(1350, 1200)})

    def test_synth_with_pcap(self):
        self.synth(*SEQUENTIAL, '--pcap')
        pcap = self.dir / 'trace.pcap'
        self.assertTrue(pcap.exists())
        from_pcap = self.call('analyze', str(pcap))
        from_qevents = self.call('analyze', str(self.dir / 'trace.qevents'))
        self.assertEqual(from_pcap, from_qevents)


class EvalPipelineTests(CommandTestCase):
    def test_eval_writes_a_report(self):
        trace, labels = self.synth(*SEQUENTIAL)
        results = self.dir / 'results.jsonl'
        report = self.dir / 'report.json'
        self.call('analyze', str(trace), '--out', str(results))
        table = self.call('eval', '--results', str(results), '--labels', str(labels), '--out', str(report))

        self.assertIn('Match accuracy', table)
        data = json.loads(report.read_text())
        self.assertEqual(data['pair_count'], 2)
        self.assertEqual(data['match_accuracy'], 1.0)

    def test_pipeline(self):
        table = self.call('pipeline', '--out', str(self.dir), '--connections', '6', '--n-pairs', '2', '--seed', '3')
        for name in ('trace.qevents', 'labels.json', 'results.jsonl', 'report.json'):
            self.assertTrue((self.dir / name).exists(), name)
        report = json.loads((self.dir / 'report.json').read_text())
        self.assertEqual(len(report['connections']), 6)
        self.assertIn('classification_accuracy', report)
        self.assertIn('Response size accuracy', table)


class ExitCodeTests(CommandTestCase):
    def test_missing_capture(self):
        self.assertExitCode(1, 'analyze', str(self.dir / 'absent.qevents'))

    def test_malformed_capture(self):
        path = self.dir / 'bad.qevents'
        path.write_text('1000 C2S 10.0.0.2 50000\n')
        self.assertExitCode(2, 'analyze', str(path))

    def test_capture_without_quic(self):
        path = self.dir / 'dns.qevents'
        with open(path, 'w') as f:
            write_qevents(f, [RawDatagram(1000, CLIENT[0], 53000, SERVER[0], 53, b'\x12\x34\x01\x00')])
        self.assertExitCode(2, 'analyze', str(path))

    def test_bad_parameters(self):
        trace, _ = self.synth(*SEQUENTIAL)
        self.assertExitCode(3, 'analyze', str(trace), '--idle-rtts', '0')
        self.assertExitCode(3, 'analyze', str(trace), '--assoc-min-rtts', '30')
        self.assertExitCode(3, 'synth', '--out', str(self.dir / 'x'), '--connections', '0')
        self.assertExitCode(3, 'synth', '--out', str(self.dir / 'y'), '--pattern', 'login', '--mtu-up', '9000')

    def test_labels_of_another_trace(self):
        trace, _ = self.synth(*SEQUENTIAL)
        results = self.dir / 'results.jsonl'
        self.call('analyze', str(trace), '--out', str(results))
        other = self.dir / 'other'
        self.call('synth', '--out', str(other), '--pattern', 'login', '--seed', '8')
        self.assertExitCode(4, 'eval', '--results', str(results), '--labels', str(other / 'labels.json'))
