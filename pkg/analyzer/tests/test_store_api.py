import io
import shutil
import tempfile
from pathlib import Path

from django.core.management import call_command
from django.test import TestCase
from rest_framework.test import APITestCase

from analyzer.models import AnalysisRun, ConnectionRecord, HttpObject
from analyzer.services.analysis_service import AnalysisService
from analyzer.services.store import store_result
from .helpers import multiplexed_trace, sequential_trace


def analyze_both():
    raws = sorted(sequential_trace()[0] + multiplexed_trace(client_port=50001)[0], key=lambda d: d.timestamp_us)
    return AnalysisService().run(raws)


class StoreResultTests(TestCase):
    def test_rows_mirror_the_result(self):
        result = analyze_both()
        run = store_result(result, 'both.qevents')

        self.assertEqual(run.connection_count, 2)
        self.assertEqual(run.object_count, len(result.objects))
        self.assertEqual(ConnectionRecord.objects.filter(run=run).count(), 2)
        self.assertEqual(HttpObject.objects.filter(connection__run=run).count(), len(result.objects))
        self.assertEqual(run.config['idle_rtts'], 20.0)
        self.assertEqual(run.ingest_stats['records'], result.stats.records)

    def test_objects_keep_emission_order(self):
        result = analyze_both()
        run = store_result(result, 'both.qevents')
        stored = HttpObject.objects.filter(connection__run=run)
        self.assertEqual([o.request_start for o in stored], [o.request_start for o in result.objects])

    def test_analyze_store_flag(self):
        directory = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, directory, ignore_errors=True)
        call_command('synth', '--out', str(directory), '--pattern', 'login', stdout=io.StringIO())
        call_command('analyze', str(directory / 'trace.qevents'), '--store',
                     stdout=io.StringIO(), stderr=io.StringIO())
        run = AnalysisRun.objects.get()
        self.assertEqual(run.mode, 'online')
        self.assertEqual(run.connections.count(), 1)


class ApiTests(APITestCase):
    @classmethod
    def setUpTestData(cls):
        cls.stored_run = store_result(analyze_both(), 'both.qevents')
        cls.other_run = store_result(AnalysisService().run(sequential_trace()[0]), 'one.qevents')

    def test_runs(self):
        response = self.client.get('/api/runs/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['count'], 2)

    def test_connections_of_a_run(self):
        response = self.client.get('/api/connections/', {'run': self.stored_run.pk})
        self.assertEqual(response.data['count'], 2)
        self.assertEqual({c['server_port'] for c in response.data['results']}, {443})

        response = self.client.get('/api/connections/', {'run': self.other_run.pk})
        [connection] = response.data['results']
        self.assertEqual(connection['object_count'], 2)

    def test_super_objects(self):
        response = self.client.get('/api/objects/', {'super': 'true'})
        self.assertEqual(response.status_code, 200)
        results = response.data['results']
        self.assertEqual(len(results), 1)
        self.assertEqual(results[0]['pair_count'], 3)

    def test_objects_of_a_connection(self):
        connection = ConnectionRecord.objects.filter(run=self.other_run).get()
        response = self.client.get('/api/objects/', {'connection': connection.pk})
        self.assertEqual(response.data['count'], 2)
        self.assertTrue(all(not o['is_super'] for o in response.data['results']))

    def test_read_only(self):
        response = self.client.post('/api/runs/', {'source_path': 'x'})
        self.assertEqual(response.status_code, 405)
