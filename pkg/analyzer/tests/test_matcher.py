from django.test import SimpleTestCase

from analyzer.services.core_model import ResponseStarted, TimerExpired, TimingConfig
from analyzer.services.matcher import Association, Matcher, MatchState, step_match, validate_association
from analyzer.services.request_sm import RequestEstimate
from analyzer.services.response_sm import ResponseEstimate

RTT = 0.25


def request(t, size=400, emitted_at=None):
    return RequestEstimate(t, size, 1, positions=(round(t * 1000),), emitted_at=emitted_at or t)


def response(start, end, size, emitted_at):
    return ResponseEstimate(start, end, size, 3, positions=(round(start * 1000),), emitted_at=emitted_at)


class AssociationTests(SimpleTestCase):
    def test_window(self):
        self.assertEqual(validate_association(1.0, 1.5, RTT), Association.VALID)
        self.assertEqual(validate_association(1.0, 1.1, RTT), Association.SUSPECT_TIMING)
        self.assertEqual(validate_association(1.0, 7.0, RTT), Association.SUSPECT_TIMING)
        self.assertEqual(validate_association(1.0, None, RTT), Association.NO_RESPONSE)


class MatcherTests(SimpleTestCase):
    def setUp(self):
        self.matcher = Matcher(TimingConfig(), n_req_cap=64,
                               ack_snapshot=lambda: {'up': [28, 32], 'down': [30]})

    def test_one_pair(self):
        m = self.matcher
        self.assertEqual(m.on_request(request(1.0), RTT), [])
        self.assertEqual(m.state, MatchState.WAITING_FOR_RESPONSE)
        self.assertEqual(m.on_response(response(1.3, 1.4, 5000, 1.65), RTT), [])
        self.assertEqual(m.state, MatchState.WAITING_TO_OUTPUT)

        [obj] = m.expire(m.deadline(RTT), RTT)
        self.assertAlmostEqual(obj.emitted_at, 1.9)
        self.assertEqual((obj.request_size, obj.response_size), (400, 5000))
        self.assertEqual(obj.pair_count, 1)
        self.assertFalse(obj.is_super)
        self.assertEqual(obj.association, Association.VALID)
        self.assertEqual((obj.max_ack_len_up, obj.max_ack_len_down), (32, 30))
        self.assertAlmostEqual(obj.time_to_first_byte, 0.3)
        self.assertAlmostEqual(obj.time_to_last_byte, 0.4)
        self.assertAlmostEqual(obj.download_rate, 50000)
        self.assertEqual(m.state, MatchState.IDLE)

    def test_interleaved_pairs_form_a_super_object(self):
        m = self.matcher
        m.on_request(request(1.0, 300), RTT)
        m.on_request(request(1.01, 350), RTT)
        m.on_request(request(1.02, 250), RTT)
        m.on_response(response(1.3, 1.31, 4000, 1.31), RTT)
        self.assertEqual(m.state, MatchState.WAITING_FOR_RESPONSE)
        m.on_response(response(1.31, 1.5, 9000, 1.75), RTT)
        m.on_response(response(1.76, 1.8, 1000, 2.05), RTT)
        self.assertEqual(m.state, MatchState.WAITING_TO_OUTPUT)

        [obj] = m.flush(3.0, RTT)
        self.assertEqual(obj.pair_count, 3)
        self.assertTrue(obj.is_super)
        self.assertEqual(obj.request_size, 900)
        self.assertEqual(obj.response_size, 14000)
        self.assertEqual(obj.response_end, 1.8)

    def test_response_without_request_is_discarded(self):
        m = self.matcher
        self.assertEqual(m.on_response(response(1.0, 1.1, 700, 1.35), RTT), [])
        self.assertEqual((m.discarded_bytes, m.discarded_packets), (700, 3))
        self.assertEqual(m.state, MatchState.INITIAL)

    def test_request_without_response_times_out(self):
        m = self.matcher
        m.on_request(request(1.0), RTT)
        [obj] = m.expire(m.deadline(RTT), RTT)
        self.assertEqual(obj.emitted_at, 6.0)
        self.assertEqual(obj.association, Association.NO_RESPONSE)
        self.assertIsNone(obj.response_start)
        self.assertIsNone(obj.download_rate)

    def test_request_while_waiting_to_output_is_held(self):
        m = self.matcher
        m.on_request(request(1.0), RTT)
        m.on_response(response(1.3, 1.4, 5000, 1.65), RTT)
        self.assertEqual(m.on_request(request(1.8, 500), RTT), [])
        self.assertEqual(len(m.held_requests), 1)

        [first] = m.expire(m.deadline(RTT), RTT)
        self.assertEqual(first.request_size, 400)
        self.assertEqual(m.state, MatchState.WAITING_FOR_RESPONSE)
        self.assertEqual([r.size for r in m.open_requests], [500])

    def test_late_request_expires_the_group_first(self):
        m = self.matcher
        m.on_request(request(1.0), RTT)
        m.on_response(response(1.3, 1.4, 5000, 1.65), RTT)
        [first] = m.on_request(request(3.0, 500), RTT)

        self.assertAlmostEqual(first.emitted_at, 1.9)
        self.assertEqual(first.pair_count, 1)
        self.assertEqual(m.state, MatchState.WAITING_FOR_RESPONSE)

    def test_group_size_is_capped(self):
        m = Matcher(TimingConfig(), n_req_cap=2)
        m.on_request(request(1.0), RTT)
        m.on_request(request(1.01), RTT)
        [capped] = m.on_request(request(1.02), RTT)

        self.assertEqual(capped.pair_count, 2)
        self.assertEqual(len(m.open_requests), 1)

    def test_flush_emits_held_requests_too(self):
        m = Matcher(TimingConfig(), n_req_cap=2)
        m.on_request(request(1.0), RTT)
        m.on_response(response(1.3, 1.4, 5000, 1.65), RTT)
        m.on_request(request(1.7), RTT)
        m.on_request(request(1.71), RTT)

        objects = m.flush(1.72, RTT)
        self.assertEqual([o.pair_count for o in objects], [1, 2])
        self.assertEqual(m.state, MatchState.IDLE)

    def test_started_response_suspends_the_timers(self):
        m = self.matcher
        m.on_request(request(1.0), RTT)
        m, out = step_match(m, ResponseStarted(1.3), RTT)
        self.assertEqual(out, [])
        self.assertEqual(m.state, MatchState.WAITING_TO_OUTPUT)
        self.assertIsNone(m.deadline(RTT))

        # Completes long after the association window of the request
        self.assertEqual(m.on_response(response(1.3, 7.0, 900_000, 7.25), RTT), [])
        [obj] = m.expire(m.deadline(RTT), RTT)
        self.assertAlmostEqual(obj.emitted_at, 7.5)
        self.assertEqual(obj.response_size, 900_000)
        self.assertEqual(obj.association, Association.VALID)

    def test_next_response_outputs_the_group_of_held_requests(self):
        m = self.matcher
        m.on_request(request(1.0), RTT)
        m.on_response_start(1.3, RTT)
        self.assertEqual(m.on_request(request(1.45, 500), RTT), [])
        self.assertEqual(len(m.held_requests), 1)
        m.on_response(response(1.3, 1.4, 5000, 1.65), RTT)

        [first] = m.on_response_start(1.8, RTT)
        self.assertEqual((first.request_size, first.response_size), (400, 5000))
        self.assertAlmostEqual(first.emitted_at, 1.8)
        self.assertEqual(m.state, MatchState.WAITING_TO_OUTPUT)
        self.assertEqual([r.size for r in m.open_requests], [500])
        self.assertTrue(m.response_open)

    def test_response_start_without_open_request(self):
        m = self.matcher
        self.assertEqual(m.on_response_start(1.0, RTT), [])
        self.assertFalse(m.response_open)

    def test_step_match_dispatch(self):
        m, out = step_match(self.matcher, request(1.0), RTT)
        m, out = step_match(m, response(1.3, 1.4, 5000, 1.65), RTT)
        m, out = step_match(m, TimerExpired(2.0), RTT)
        self.assertEqual(out[0].pair_count, 1)
        with self.assertRaises(TypeError):
            step_match(m, 1.0, RTT)
