import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='AnalysisRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('source_path', models.CharField(max_length=500)),
                ('mode', models.CharField(max_length=10)),
                ('schema_version', models.CharField(max_length=10)),
                ('config', models.JSONField(default=dict)),
                ('ingest_stats', models.JSONField(default=dict)),
                ('connection_count', models.IntegerField(default=0)),
                ('object_count', models.IntegerField(default=0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ConnectionRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('connection_key', models.CharField(max_length=255)),
                ('generation', models.IntegerField(default=0)),
                ('client_ip', models.GenericIPAddressField()),
                ('client_port', models.IntegerField()),
                ('server_ip', models.GenericIPAddressField()),
                ('server_port', models.IntegerField()),
                ('quic_cid', models.CharField(blank=True, max_length=40)),
                ('client_inferred', models.BooleanField(default=True)),
                ('connection_start', models.FloatField()),
                ('duration', models.FloatField()),
                ('total_request_size', models.BigIntegerField(default=0)),
                ('total_response_size', models.BigIntegerField(default=0)),
                ('total_request_packets', models.IntegerField(default=0)),
                ('total_response_packets', models.IntegerField(default=0)),
                ('individual_pair_count', models.IntegerField(default=0)),
                ('estimated_object_count', models.IntegerField(default=0)),
                ('multiplexing_level', models.FloatField(default=1.0)),
                ('no_objects', models.BooleanField(default=False)),
                ('rtt_used', models.FloatField()),
                ('rtt_source', models.CharField(max_length=30)),
                ('mtu_up', models.IntegerField()),
                ('mtu_down', models.IntegerField()),
                ('max_ack_len_up', models.IntegerField(default=0)),
                ('max_ack_len_down', models.IntegerField(default=0)),
                ('total_packets', models.IntegerField(default=0)),
                ('zero_rtt_requests', models.IntegerField(default=0)),
                ('discarded_response_size', models.BigIntegerField(default=0)),
                ('discarded_response_packets', models.IntegerField(default=0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='connections', to='analyzer.analysisrun')),
            ],
            options={
                'ordering': ['run', 'connection_start'],
                'unique_together': {('run', 'connection_key', 'generation')},
            },
        ),
        migrations.CreateModel(
            name='HttpObject',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('sequence', models.IntegerField()),
                ('request_start', models.FloatField()),
                ('request_size', models.IntegerField()),
                ('request_packets', models.IntegerField()),
                ('response_start', models.FloatField(blank=True, null=True)),
                ('response_end', models.FloatField(blank=True, null=True)),
                ('response_size', models.BigIntegerField(default=0)),
                ('response_packets', models.IntegerField(default=0)),
                ('pair_count', models.IntegerField(default=1)),
                ('is_super', models.BooleanField(default=False)),
                ('association', models.CharField(max_length=20)),
                ('zero_rtt', models.BooleanField(default=False)),
                ('max_ack_len_up', models.IntegerField(default=0)),
                ('max_ack_len_down', models.IntegerField(default=0)),
                ('ack_len_window', models.JSONField(default=dict)),
                ('time_to_first_byte', models.FloatField(blank=True, null=True)),
                ('time_to_last_byte', models.FloatField(blank=True, null=True)),
                ('download_rate', models.FloatField(blank=True, null=True)),
                ('connection', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='http_objects', to='analyzer.connectionrecord')),
            ],
            options={
                'ordering': ['sequence'],
                'indexes': [models.Index(fields=['connection', 'request_start'], name='analyzer_obj_conn_start_idx')],
            },
        ),
    ]
