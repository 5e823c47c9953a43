from django.test import SimpleTestCase

from analyzer.services.core_model import AnalyzerConfig, ConnectionKey, LongPacketType
from analyzer.services.matcher import Association
from analyzer.services.params import RttSource
from analyzer.services.connection import ConnectionTracker, PacketRole, run_offline, split_emissions
from .helpers import CLIENT, DCID, SERVER, handshake_records, packet, packets

KEY = ConnectionKey(CLIENT[0], CLIENT[1], SERVER[0], SERVER[1], DCID)


class HandshakeConnectionTests(SimpleTestCase):
    def setUp(self):
        self.emissions, self.tracker = run_offline(KEY, handshake_records(), log_classes=True)
        self.objects, self.summaries = split_emissions(self.emissions)

    def test_one_object(self):
        [obj] = self.objects
        self.assertEqual(obj.request_size, 400)
        self.assertEqual((obj.response_size, obj.response_packets), (4004, 4))
        self.assertEqual(obj.request_positions, (4,))
        self.assertEqual(obj.response_positions, (6, 7, 8, 9))
        self.assertEqual(obj.association, Association.VALID)
        self.assertAlmostEqual(obj.emitted_at, 0.523, places=6)

    def test_summary(self):
        [summary] = self.summaries
        self.assertEqual(summary.total_packets, 11)
        self.assertAlmostEqual(summary.rtt_used, 0.1, places=6)
        self.assertEqual(summary.rtt_source, RttSource.HANDSHAKE_MEASURED)
        self.assertEqual((summary.mtu_up, summary.mtu_down), (1252, 1252))
        self.assertEqual(summary.estimated_object_count, 1)
        self.assertEqual(summary.multiplexing_level, 1.0)
        self.assertAlmostEqual(summary.duration, 0.3232)
        self.assertEqual(summary.connection_start, 0.0)
        self.assertEqual((summary.total_request_size, summary.total_response_size), (400, 4004))
        self.assertFalse(summary.no_objects)
        self.assertEqual(summary.generation, 0)

    def test_summary_comes_last_at_the_idle_deadline(self):
        self.assertTrue(self.emissions[-1].is_summary)
        self.assertAlmostEqual(self.emissions[-1].at, 0.3232 + 20 * 0.1, places=6)
        keys = [e.sort_key for e in self.emissions]
        self.assertEqual(keys, sorted(keys))

    def test_classification_log(self):
        roles = [role for _, role in self.tracker.classifications]
        self.assertEqual(roles, [PacketRole.HANDSHAKE] * 3 + [
            PacketRole.NON_DATA,
            PacketRole.REQUEST_DATA,
            PacketRole.NON_DATA,
        ] + [PacketRole.RESPONSE_DATA] * 4 + [PacketRole.NON_DATA])
        self.assertEqual([position for position, _ in self.tracker.classifications], list(range(11)))


class ConnectionLifecycleTests(SimpleTestCase):
    def test_idle_gap_reopens_a_new_generation(self):
        records = handshake_records() + [packet(10.0, 400, position=11)]
        tracker = ConnectionTracker(KEY)
        emissions = []
        for pkt in records[:-1]:
            emissions.extend(tracker.process(pkt))

        reopened = tracker.process(records[-1])
        self.assertTrue(reopened[-1].is_summary)
        self.assertEqual(reopened[-1].record.generation, 0)
        self.assertAlmostEqual(reopened[-1].at, 2.3232, places=6)
        self.assertEqual(tracker.generation, 1)

        [summary] = [e.record for e in tracker.finish() if e.is_summary]
        self.assertEqual(summary.generation, 1)
        self.assertEqual(summary.total_packets, 1)
        self.assertEqual(summary.rtt_source, RttSource.CONFIG_DEFAULT)

    def test_response_before_any_request_is_dropped(self):
        records = packets([
            (0.0, 1252, True, LongPacketType.INITIAL),
            (0.1, 1252, False, LongPacketType.HANDSHAKE),
            (0.15, 1000, False),
        ])
        emissions, tracker = run_offline(KEY, records, log_classes=True)
        objects, [summary] = split_emissions(emissions)

        self.assertEqual(objects, [])
        self.assertEqual(tracker.classifications[-1], (2, PacketRole.DROPPED))
        self.assertEqual((summary.discarded_response_size, summary.discarded_response_packets), (1000, 1))

    def test_handshake_only_connection(self):
        records = packets([
            (0.0, 1252, True, LongPacketType.INITIAL),
            (0.1, 1252, False, LongPacketType.HANDSHAKE),
        ])
        objects, [summary] = split_emissions(run_offline(KEY, records)[0])
        self.assertEqual(objects, [])
        self.assertTrue(summary.no_objects)
        self.assertEqual(summary.multiplexing_level, 1.0)
        self.assertEqual(summary.individual_pair_count, 0)

    def test_one_zero_rtt_request_per_client_flight(self):
        records = packets([
            (0.0, 1252, True, LongPacketType.INITIAL),
            (0.0001, 500, True, LongPacketType.ZERO_RTT),
            (0.0002, 500, True, LongPacketType.ZERO_RTT),
        ])
        emissions, tracker = run_offline(KEY, records, log_classes=True)
        roles = [role for _, role in tracker.classifications]
        self.assertEqual(roles, [PacketRole.HANDSHAKE, PacketRole.REQUEST_DATA, PacketRole.HANDSHAKE])

        objects, [summary] = split_emissions(emissions)
        self.assertEqual(summary.zero_rtt_requests, 1)
        [obj] = objects
        self.assertTrue(obj.zero_rtt)
        self.assertEqual(obj.request_size, 500)
        self.assertEqual(obj.association, Association.NO_RESPONSE)

    def test_coalesced_data_sized_packet_is_control(self):
        records = handshake_records()[:4] + [packet(0.15, 300, coalesced=2, udp_len=1252, position=4)]
        _, tracker = run_offline(KEY, records, log_classes=True)
        self.assertEqual(tracker.classifications[-1], (4, PacketRole.CONTROL))

    def test_config_default_rtt_without_a_handshake(self):
        config = AnalyzerConfig(rtt_default=0.6)
        emissions, _ = run_offline(KEY, [packet(1.0, 400)], config)
        summary = emissions[-1].record
        self.assertEqual(summary.rtt_used, 0.6)
        self.assertEqual(summary.rtt_source, RttSource.CONFIG_DEFAULT)
        self.assertAlmostEqual(emissions[-1].at, 1.0 + 20 * 0.6)


def long_response_records(n_mtu=300):
    """10 ms RTT handshake, a 400 B request and a response far longer than 20 RTTs"""
    rows = [
        (0.0, 1252, True, LongPacketType.INITIAL),
        (0.01, 1252, False, LongPacketType.HANDSHAKE),
        (0.01005, 90, True, LongPacketType.HANDSHAKE),
        (0.0101, 70, True),
        (0.02, 400, True),
    ]
    rows += [(0.032 + i * 0.001, 1252, False) for i in range(n_mtu)]
    rows.append((0.032 + n_mtu * 0.001, 500, False))
    return packets(rows)


def continue_records(records, rows):
    start = len(records)
    return records + [packet(t, length, upstream, position=start + i) for i, (t, length, upstream) in enumerate(rows)]


class ResponseTimingTests(SimpleTestCase):
    def test_response_longer_than_the_association_window(self):
        emissions, _ = run_offline(KEY, long_response_records())
        [obj], [summary] = split_emissions(emissions)

        self.assertEqual(obj.request_size, 400)
        self.assertEqual((obj.response_size, obj.response_packets), (300 * 1252 + 500, 301))
        self.assertEqual(obj.association, Association.VALID)
        self.assertAlmostEqual(obj.emitted_at, 0.332 + 0.02, places=6)
        self.assertEqual(summary.discarded_response_size, 0)

    def test_request_right_after_a_response_starts_a_new_object(self):
        records = continue_records(handshake_records(), [
            (0.373, 420, True),      # 50 ms after the last response packet
            (0.473, 30, False),
            (0.49, 1200, False),
            (0.491, 1252, False),
            (0.492, 1252, False),
            (0.493, 300, False),
            (0.4932, 28, True),
        ])
        objects, _ = split_emissions(run_offline(KEY, records)[0])

        self.assertEqual([o.pair_count for o in objects], [1, 1])
        self.assertEqual([(o.request_size, o.response_size) for o in objects], [(400, 4004), (420, 4004)])
        self.assertAlmostEqual(objects[0].emitted_at, 0.49, places=6)
        self.assertEqual(objects[1].response_positions, (13, 14, 15, 16))


class IdleCheckTests(SimpleTestCase):
    def setUp(self):
        self.tracker = ConnectionTracker(KEY)
        for pkt in handshake_records():
            self.tracker.process(pkt)

    def test_not_idle_before_the_deadline(self):
        self.assertEqual(self.tracker.check_idle(0.3232 + 19 * 0.1), [])
        self.assertEqual(self.tracker.check_idle(0.3232 + 19.9 * 0.1), [])
        self.assertFalse(self.tracker.closed)

    def test_idle_after_the_deadline(self):
        emissions = self.tracker.check_idle(0.3232 + 21 * 0.1)
        self.assertTrue(emissions[-1].is_summary)
        self.assertAlmostEqual(emissions[-1].at, 2.3232, places=6)
        self.assertEqual(len(emissions), 2)
        self.assertTrue(self.tracker.closed)

    def test_second_check_is_empty(self):
        self.tracker.check_idle(3.0)
        self.assertEqual(self.tracker.check_idle(3.1), [])
        self.assertEqual(self.tracker.finish(), [])
