"""Group-behavior and single-host classification over one monitoring period.

:class:`DetectorState` owns the domain database, the MAC blacklist and the
record of analysis runs. It is single-writer: one pass mutates it at a time.
"""

from __future__ import annotations

import enum
import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .similarity import (
    DEFAULT_THRESHOLD,
    Classification,
    classify_score,
    detection_allowed,
    jaccard,
    validate_threshold,
)
from .windowing import DomainIntervalBlock, WindowSummary

logger = logging.getLogger(__name__)


class Source(enum.Enum):
    GROUP_BEHAVIOR = "group_behavior"
    SINGLE_HOST_PREDICTION = "single_host_prediction"
    SINGLE_HOST_BLACKLISTED_MAC = "single_host_blacklisted_mac"


class AlertKind(enum.Enum):
    ABNORMAL_DOMAIN_GROUP = "abnormal_domain_group"
    PREDICTED_ABNORMAL_DOMAIN = "predicted_abnormal_domain"
    BLACKLISTED_MAC_ACTIVITY = "blacklisted_mac_activity"


@dataclass(frozen=True)
class DetectorConfig:
    threshold: Fraction = DEFAULT_THRESHOLD
    group_min: int = 2
    repeat_min: int = 3
    periodicity_tolerance: float = 0.5
    # require blacklist match AND periodic repeats for new single-host domains
    strict_single_host: bool = False

    def __post_init__(self):
        object.__setattr__(self, "threshold", validate_threshold(self.threshold))
        if self.group_min < 2:
            raise ValueError("group_min must be >= 2 (a 1-MAC block is the single-host case)")
        if self.repeat_min < 2:
            raise ValueError("repeat_min must be >= 2 (periodicity needs at least one gap)")
        if self.periodicity_tolerance < 0:
            raise ValueError("periodicity tolerance must be >= 0")

    def to_dict(self) -> dict:
        return {
            "threshold": float(self.threshold),
            "group_min": self.group_min,
            "repeat_min": self.repeat_min,
            "periodicity_tolerance": self.periodicity_tolerance,
            "strict_single_host": self.strict_single_host,
        }


@dataclass
class DomainRecord:
    qname: str
    cls: Classification
    best_score: Optional[float]
    source: Source
    first_seen_ts: float
    last_seen_ts: float

    @property
    def is_abnormal(self) -> bool:
        return self.cls is Classification.ABNORMAL

    def seen(self, first: float, last: float) -> None:
        self.first_seen_ts = min(self.first_seen_ts, first)
        self.last_seen_ts = max(self.last_seen_ts, last)


@dataclass(frozen=True)
class MacBlacklistEntry:
    mac: str
    implicating_qname: str
    added_ts: float


@dataclass
class Alert:
    kind: AlertKind
    qname: str
    macs: frozenset
    score: Optional[float]
    emitted_ts: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "qname": self.qname,
            "macs": sorted(self.macs),
            "score": self.score,
            "emitted_ts": self.emitted_ts,
        }


@dataclass
class RunRecord:
    """One analysis invocation: what it read and which domains it flagged."""

    run: int
    input: str
    periods: int
    events: int
    detected: list[str]
    config: dict

    def to_dict(self) -> dict:
        return {
            "run": self.run,
            "input": self.input,
            "periods": self.periods,
            "events": self.events,
            "detected": sorted(self.detected),
            "config": self.config,
        }


def inter_arrival_cv(timestamps) -> float:
    """Coefficient of variation (population stdev / mean) of the gaps.

    Infinite when there is no gap or the mean gap is zero.
    """
    ts = sorted(timestamps)
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    if not gaps:
        return float("inf")
    mean = statistics.fmean(gaps)
    if mean <= 0:
        return float("inf")
    return statistics.pstdev(gaps) / mean


@dataclass
class DetectorState:
    config: DetectorConfig = field(default_factory=DetectorConfig)
    domains: dict[str, DomainRecord] = field(default_factory=dict)
    blacklist: dict[str, MacBlacklistEntry] = field(default_factory=dict)
    alerts: list[Alert] = field(default_factory=list)
    runs: list[RunRecord] = field(default_factory=list)

    # -- helpers ----------------------------------------------------------

    def add_to_blacklist(self, mac: str, qname: str, ts: float) -> None:
        if mac not in self.blacklist:
            self.blacklist[mac] = MacBlacklistEntry(mac=mac, implicating_qname=qname, added_ts=ts)

    def is_periodic(self, timestamps) -> bool:
        return (len(timestamps) >= self.config.repeat_min
                and inter_arrival_cv(timestamps) <= self.config.periodicity_tolerance)

    def abnormal_domains(self) -> list[str]:
        return sorted(q for q, r in self.domains.items() if r.is_abnormal)

    def reset_domain(self, qname: str) -> None:
        """Operator reset: the only way an abnormal domain leaves the database."""
        self.domains.pop(qname, None)

    # -- group path -------------------------------------------------------

    def _best_group_pair(self, group_blocks: list[DomainIntervalBlock], dns_ratio: int):
        best = None
        for x, y in zip(group_blocks, group_blocks[1:]):
            if not detection_allowed(len(x.macs), len(y.macs), dns_ratio):
                continue
            score = jaccard(x.macs, y.macs)
            if best is None or score.fraction > best[0].fraction:
                best = (score, x, y)
        return best

    def _apply_group(self, qname: str, blocks: list[DomainIntervalBlock], pair) -> Optional[Alert]:
        score, x, y = pair
        value = score.value
        first = min(b.first_ts for b in blocks)
        last = max(b.last_ts for b in blocks)
        verdict = classify_score(score, self.config.threshold)
        rec = self.domains.get(qname)

        if verdict is Classification.NORMAL:
            if rec is None:
                self.domains[qname] = DomainRecord(qname, Classification.NORMAL, value,
                                                   Source.GROUP_BEHAVIOR, first, last)
            else:
                rec.seen(first, last)
                if not rec.is_abnormal:
                    rec.source = Source.GROUP_BEHAVIOR
                    rec.best_score = value if rec.best_score is None else max(rec.best_score, value)
            return None

        if rec is None:
            rec = self.domains[qname] = DomainRecord(qname, Classification.ABNORMAL, value,
                                                     Source.GROUP_BEHAVIOR, first, last)
        else:
            rec.seen(first, last)
            if not rec.is_abnormal:
                rec.cls = Classification.ABNORMAL
                rec.source = Source.GROUP_BEHAVIOR
                rec.best_score = value
            else:
                # keeps a prior single-host prediction's provenance
                rec.best_score = value if rec.best_score is None else max(rec.best_score, value)

        emitted = max(x.last_ts, y.last_ts)
        macs = x.macs | y.macs
        for mac in sorted(macs):
            self.add_to_blacklist(mac, qname, emitted)
        logger.info("abnormal domain %s (jaccard %.3f, %d hosts)", qname, value, len(macs))
        return Alert(AlertKind.ABNORMAL_DOMAIN_GROUP, qname, frozenset(macs), value, emitted)

    # -- single-host path -------------------------------------------------

    def process_single_host(self, qname: str, mac: str, query_timestamps, *,
                            _unknown: bool = False, _blacklist=None) -> Optional[Alert]:
        """Match one host's queries for ``qname`` against the database and blacklist.

        Known abnormal or normal domains only raise a host alert when the MAC
        is blacklisted. An unknown domain becomes abnormal (a predicted C&C
        name) when the MAC is blacklisted or it repeats its query
        periodically; otherwise it is stored as normal.
        """
        ts = sorted(query_timestamps)
        if not ts:
            return None
        first, last = ts[0], ts[-1]
        rec = self.domains.get(qname)
        blacklisted = mac in (self.blacklist if _blacklist is None else _blacklist)

        if rec is not None and not (_unknown and not rec.is_abnormal):
            rec.seen(first, last)
            if blacklisted:
                return Alert(AlertKind.BLACKLISTED_MAC_ACTIVITY, qname, frozenset([mac]), None, last)
            return None

        periodic = self.is_periodic(ts)
        if self.config.strict_single_host:
            abnormal = blacklisted and periodic
        else:
            abnormal = blacklisted or periodic

        if not abnormal:
            if rec is None:
                self.domains[qname] = DomainRecord(qname, Classification.NORMAL, None,
                                                   Source.SINGLE_HOST_PREDICTION, first, last)
            else:
                rec.seen(first, last)
            return None

        source = Source.SINGLE_HOST_BLACKLISTED_MAC if blacklisted else Source.SINGLE_HOST_PREDICTION
        if rec is None:
            self.domains[qname] = DomainRecord(qname, Classification.ABNORMAL, None, source, first, last)
        else:
            rec.cls = Classification.ABNORMAL
            rec.source = source
            rec.best_score = None
            rec.seen(first, last)
        self.add_to_blacklist(mac, qname, last)
        logger.info("predicted abnormal domain %s from host %s", qname, mac)
        return Alert(AlertKind.PREDICTED_ABNORMAL_DOMAIN, qname, frozenset([mac]), None, last)

    # -- one monitoring period -------------------------------------------

    def process_window(self, summary: WindowSummary) -> list[Alert]:
        """Classify every domain of one monitoring period; returns the new alerts."""
        alerts: dict = {}

        def emit(alert: Optional[Alert]) -> None:
            if alert is None:
                return
            key = (alert.kind, alert.qname)
            prev = alerts.get(key)
            if prev is None:
                alerts[key] = alert
            else:
                prev.macs = prev.macs | alert.macs
                prev.emitted_ts = max(prev.emitted_ts, alert.emitted_ts)

        single_host = []
        for qname in summary.domains():
            blocks = summary.blocks[qname]
            group = [b for b in blocks if len(b.macs) >= self.config.group_min]
            pair = self._best_group_pair(group, summary.dns_ratio)
            if pair is not None:
                emit(self._apply_group(qname, blocks, pair))
            else:
                single_host.append(qname)

        # Blacklist as of the end of the group phase; MACs blacklisted by a
        # prediction in this window only count from the next window on, so the
        # outcome does not depend on the order domains are visited.
        blacklist_view = frozenset(self.blacklist)
        for qname in single_host:
            per_mac: dict[str, list] = {}
            for b in summary.blocks[qname]:
                if len(b.macs) == 1:
                    for mac, ts in b.mac_times.items():
                        per_mac.setdefault(mac, []).extend(ts)
            unknown = qname not in self.domains
            for mac in sorted(per_mac):
                emit(self.process_single_host(qname, mac, per_mac[mac],
                                              _unknown=unknown, _blacklist=blacklist_view))

        new = list(alerts.values())
        self.alerts.extend(new)
        return new

    def record_run(self, input_name: str, periods: int, events: int, alerts: Iterable[Alert],
                   extra_config: Optional[dict] = None) -> RunRecord:
        detected = sorted({a.qname for a in alerts
                           if a.kind in (AlertKind.ABNORMAL_DOMAIN_GROUP, AlertKind.PREDICTED_ABNORMAL_DOMAIN)})
        cfg = self.config.to_dict()
        cfg.update(extra_config or {})
        run = RunRecord(run=len(self.runs) + 1, input=input_name, periods=periods,
                        events=events, detected=detected, config=cfg)
        self.runs.append(run)
        return run
