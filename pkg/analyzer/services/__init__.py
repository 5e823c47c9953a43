# Import main service classes for easier access
from .core_model import AnalyzerConfig, ConnectionKey, Direction, PacketRecord, TimingConfig
from .ingest import IngestStats, parse_header_facts, read_datagrams, stream_records
from .connection import ConnectionTracker, run_offline
from .analysis_service import AnalysisService, AnalysisResult
from .synth import Pattern, ScenarioConfig, generate, generate_corpus
from .evalharness import EvalReport, score

# Version
__version__ = '0.1.0'
