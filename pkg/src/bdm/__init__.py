"""Botnet detection from passive DNS: Jaccard similarity of host groups per domain."""

from .detector import Alert, AlertKind, DetectorConfig, DetectorState, DomainRecord, MacBlacklistEntry, Source
from .ingest import CaptureSource, DnsQueryEvent, decode_dns_query, normalize_domain, parse_event_log, parse_pcap
from .metrics import EvaluationCounts, average_rate, count_outcomes, detection_rate, false_positive_rate
from .sim import GroundTruthLabel, SimConfig, Truth, generate_trace
from .similarity import Classification, SimilarityScore, classify_score, detection_allowed, jaccard
from .store import load, persist
from .windowing import DomainIntervalBlock, WindowConfig, WindowSummary, assign_interval, build_blocks

__all__ = [
    "Alert", "AlertKind", "CaptureSource", "Classification", "DetectorConfig", "DetectorState",
    "DnsQueryEvent", "DomainIntervalBlock", "DomainRecord", "EvaluationCounts", "GroundTruthLabel",
    "MacBlacklistEntry", "SimConfig", "SimilarityScore", "Source", "Truth", "WindowConfig",
    "WindowSummary", "assign_interval", "average_rate", "build_blocks", "classify_score",
    "count_outcomes", "decode_dns_query", "detection_allowed", "detection_rate",
    "false_positive_rate", "generate_trace", "jaccard", "load", "normalize_domain",
    "parse_event_log", "parse_pcap", "persist",
]

__version__ = "0.1.0"
