from django.contrib import admin

from .models import AnalysisRun, ConnectionRecord, HttpObject


class ConnectionRecordInline(admin.TabularInline):
    model = ConnectionRecord
    extra = 0
    fields = ('connection_key', 'generation', 'estimated_object_count', 'multiplexing_level', 'rtt_used')
    readonly_fields = fields
    show_change_link = True


@admin.register(AnalysisRun)
class AnalysisRunAdmin(admin.ModelAdmin):
    list_display = ('source_path', 'mode', 'connection_count', 'object_count', 'created_at')
    list_filter = ('mode',)
    inlines = [ConnectionRecordInline]


@admin.register(ConnectionRecord)
class ConnectionRecordAdmin(admin.ModelAdmin):
    list_display = ('connection_key', 'generation', 'estimated_object_count', 'individual_pair_count',
                    'multiplexing_level', 'rtt_used', 'rtt_source')
    list_filter = ('rtt_source', 'client_inferred', 'no_objects')
    search_fields = ('connection_key', 'client_ip', 'server_ip')


@admin.register(HttpObject)
class HttpObjectAdmin(admin.ModelAdmin):
    list_display = ('connection', 'sequence', 'request_size', 'response_size', 'pair_count', 'association')
    list_filter = ('association', 'is_super', 'zero_rtt')
