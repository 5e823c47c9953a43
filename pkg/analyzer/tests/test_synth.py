import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from analyzer.exceptions import ConfigError, MalformedInput
from analyzer.services.core_model import LongPacketType
from analyzer.services.ingest import IngestStats, read_datagrams, stream_records
from analyzer.services.synth import (
    LabelRole, Pattern, ScenarioConfig, generate, generate_corpus, read_labels, single, write_corpus,
)
from .helpers import multiplexed_trace, records_by_key, sequential_trace, zero_rtt_trace


def labeled_records(raws, labels):
    """[(PacketRecord, [pair_id, role, direction])] for a single-connection trace"""
    [records] = records_by_key(raws).values()
    return list(zip(records, labels.roles))


class GenerateTests(SimpleTestCase):
    def test_same_seed_same_trace(self):
        first_raws, first_labels = sequential_trace()
        second_raws, second_labels = sequential_trace()
        self.assertEqual(first_raws, second_raws)
        self.assertEqual(first_labels, second_labels)

    def test_different_seed_different_trace(self):
        self.assertNotEqual(sequential_trace()[0], sequential_trace(seed=9)[0])

    def test_every_packet_is_labeled_once(self):
        for pattern in Pattern:
            with self.subTest(pattern=pattern):
                raws, labels = single(pattern, n_pairs=3, seed=11)
                stats = IngestStats()
                records = [r for _, r in stream_records(raws, stats)]
                self.assertEqual(stats.malformed, 0)
                self.assertEqual(len(records), labels.packet_count)
                self.assertEqual([r.position_index for r in records], list(range(len(records))))
                for record, (_, _, direction) in zip(records, labels.roles):
                    self.assertEqual(record.direction.label, direction)

    def test_pair_totals_match_labeled_packets(self):
        raws, labels = multiplexed_trace()
        request_sizes, response_sizes = {}, {}
        for record, (pid, role, _) in labeled_records(raws, labels):
            if role == LabelRole.REQUEST_DATA.value:
                request_sizes[pid] = request_sizes.get(pid, 0) + record.quic_packet_len
            elif role == LabelRole.RESPONSE_DATA.value:
                response_sizes[pid] = response_sizes.get(pid, 0) + record.quic_packet_len
        for truth in labels.pairs:
            self.assertEqual(request_sizes[truth.pair_id], truth.request_size)
            self.assertEqual(response_sizes[truth.pair_id], truth.response_size)
            self.assertLess(truth.request_start_us, truth.response_start_us)
            self.assertLessEqual(truth.response_start_us, truth.response_end_us)

    def test_data_packets_stay_above_the_ack_lengths(self):
        raws, labels = single(Pattern.BULK_DOWNLOAD, n_pairs=2, loss_rate=0.2, seed=1)
        acks, data = [], []
        for record, (_, role, _) in labeled_records(raws, labels):
            if role == LabelRole.ACK.value:
                acks.append(record.quic_packet_len)
            elif role in (LabelRole.REQUEST_DATA.value, LabelRole.RESPONSE_DATA.value):
                data.append(record.quic_packet_len)
        self.assertGreater(max(acks), 50)
        self.assertLessEqual(max(acks), 120)
        self.assertGreaterEqual(min(data), 150)

    def test_lossless_acks_are_minimal(self):
        raws, labels = sequential_trace()
        acks = {r.quic_packet_len for r, (_, role, _) in labeled_records(raws, labels)
                if role == LabelRole.ACK.value}
        self.assertEqual(acks, {28})

    def test_multiplexed_responses_interleave(self):
        raws, labels = multiplexed_trace()
        owners = [pid for pid, role, _ in labels.roles if role == LabelRole.RESPONSE_DATA.value]
        switches = sum(1 for a, b in zip(owners, owners[1:]) if a != b)
        self.assertGreater(switches, len(labels.pairs))

    def test_zero_rtt_request(self):
        raws, labels = zero_rtt_trace()
        self.assertTrue(labels.pairs[0].zero_rtt)
        self.assertFalse(labels.pairs[1].zero_rtt)
        zero_rtt = [r for r, (pid, role, _) in labeled_records(raws, labels)
                    if r.long_packet_type is LongPacketType.ZERO_RTT and role == LabelRole.REQUEST_DATA.value]
        self.assertEqual(len(zero_rtt), 1)
        self.assertEqual(zero_rtt[0].quic_packets_in_datagram, 1)

    def test_handshake_carries_the_configured_mtus(self):
        raws, labels = single(Pattern.LOGIN, mtu_up=1350, mtu_down=1200, seed=3)
        self.assertEqual(len(raws[0].payload), 1350)
        self.assertEqual(max(len(d.payload) for d in raws if d.direction_hint == 'S2C'), 1200)

    def test_config_validation(self):
        for bad in (dict(rtt=0), dict(mtu_up=1400), dict(loss_rate=1.0), dict(n_pairs=0),
                    dict(ack_every=0), dict(mux_degree=0), dict(pattern='video')):
            with self.subTest(**{k: str(v) for k, v in bad.items()}):
                with self.assertRaises(ConfigError):
                    generate(ScenarioConfig(**bad))


class CorpusTests(SimpleTestCase):
    def test_connections_overlap_in_capture_order(self):
        merged, labels = generate_corpus(6, seed=1, n_pairs=2)
        self.assertEqual(len(labels), 6)
        self.assertEqual(len({l.connection_key for l in labels}), 6)
        self.assertEqual([l.pattern for l in labels], [p.value for p in Pattern])
        stamps = [d.timestamp_us for d in merged]
        self.assertEqual(stamps, sorted(stamps))
        grouped = records_by_key(merged)
        self.assertEqual(sorted(str(k) for k in grouped), sorted(l.connection_key for l in labels))

    def test_direction_mtu_pools(self):
        _, labels = generate_corpus(6, seed=4, n_pairs=1, mtus_up=(1350,), mtus_down=(1200,))
        self.assertEqual({(l.mtu_up, l.mtu_down) for l in labels}, {(1350, 1200)})

    def test_write_corpus_round_trip(self):
        merged, labels = generate_corpus(3, seed=2, n_pairs=2)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_corpus(Path(tmp) / 'corpus', merged, labels, pcap=True)
            self.assertEqual(read_labels(paths['labels']), labels)
            self.assertEqual([d.payload for d in read_datagrams(paths['qevents'])], [d.payload for d in merged])
            from_pcap = list(read_datagrams(paths['pcap']))
            self.assertEqual([(d.timestamp_us, d.payload) for d in from_pcap],
                             [(d.timestamp_us, d.payload) for d in merged])

    def test_bad_labels_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'labels.json'
            path.write_text('{"schema_version": "1.0"}')
            with self.assertRaises(MalformedInput):
                read_labels(path)
