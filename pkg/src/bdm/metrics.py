"""False-positive rate, detection rate and their averages over repeated runs.

Both rates share one denominator, the number of domains the detector
flagged (true positives plus false positives). The false-positive rate is
therefore ``1 - precision``, not the conventional FP / (FP + TN).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping

from .detector import DomainRecord
from .sim import GroundTruthLabel, Truth, labels_to_map

RATE_NOTE = (
    "rates use T_N = T_p + F_p (detected domains) as denominator; "
    "FPR here equals 1 - precision, not FP/(FP+TN)"
)


class MetricsError(ValueError):
    pass


class MissingLabel(MetricsError):
    def __init__(self, qnames):
        self.qnames = sorted(qnames)
        super().__init__("abnormal domain(s) without ground truth: " + ", ".join(self.qnames))


class NoDetections(MetricsError):
    pass


class EmptyList(MetricsError):
    pass


@dataclass(frozen=True)
class EvaluationCounts:
    true_positives: int
    false_positives: int

    @property
    def total_detected(self) -> int:
        return self.true_positives + self.false_positives

    def to_dict(self) -> dict:
        return {"true_positives": self.true_positives, "false_positives": self.false_positives,
                "total_detected": self.total_detected}


def count_qnames(detected: Iterable[str], labels) -> EvaluationCounts:
    truth = labels_to_map(labels)
    detected = set(detected)
    missing = [q for q in detected if q not in truth]
    if missing:
        raise MissingLabel(missing)
    tp = sum(1 for q in detected if truth[q] is Truth.BOTNET)
    return EvaluationCounts(true_positives=tp, false_positives=len(detected) - tp)


def count_outcomes(domain_db: Iterable[DomainRecord] | Mapping[str, DomainRecord],
                   labels: Iterable[GroundTruthLabel] | Mapping[str, Truth]) -> EvaluationCounts:
    """Tally abnormal domains against ground truth."""
    records = domain_db.values() if isinstance(domain_db, Mapping) else domain_db
    return count_qnames((r.qname for r in records if r.is_abnormal), labels)


def false_positive_rate(counts: EvaluationCounts) -> float:
    if counts.total_detected == 0:
        raise NoDetections("no domains detected; false-positive rate undefined")
    return counts.false_positives / counts.total_detected


def detection_rate(counts: EvaluationCounts) -> float:
    if counts.total_detected == 0:
        raise NoDetections("no domains detected; detection rate undefined")
    return counts.true_positives / counts.total_detected


def average_rate(rates: Iterable[float]) -> float:
    rates = list(rates)
    if not rates:
        raise EmptyList("cannot average an empty list of rates")
    return statistics.fmean(rates)


def as_percent(rate: float) -> int:
    """Whole percent, half rounding up (0.665 -> 67, not banker's rounding)."""
    return int(rate * 100 + 0.5)


def format_rates(counts: EvaluationCounts) -> str:
    return f"FPR {as_percent(false_positive_rate(counts))}% / DR {as_percent(detection_rate(counts))}%"
