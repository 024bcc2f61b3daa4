"""Split a monitoring period into fixed intervals and build per-domain host blocks."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .ingest import DnsQueryEvent

DEFAULT_INTERVAL_S = 60.0
DEFAULT_MONITOR_S = 600.0


class OutOfWindow(ValueError):
    pass


class InvalidWindow(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    monitor_duration_s: float = DEFAULT_MONITOR_S
    interval_len_s: float = DEFAULT_INTERVAL_S
    origin_ts: float = 0.0

    def __post_init__(self):
        if not self.interval_len_s > 0:
            raise InvalidWindow(f"interval length must be > 0, got {self.interval_len_s}")
        if self.monitor_duration_s < self.interval_len_s:
            raise InvalidWindow("monitoring duration is shorter than one interval")
        ratio = self.monitor_duration_s / self.interval_len_s
        if not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9):
            raise InvalidWindow(
                f"monitoring duration {self.monitor_duration_s} is not a multiple "
                f"of interval length {self.interval_len_s}"
            )
        if self.origin_ts < 0:
            raise InvalidWindow("origin must be >= 0")

    @property
    def n_intervals(self) -> int:
        return round(self.monitor_duration_s / self.interval_len_s)

    @property
    def end_ts(self) -> float:
        return self.origin_ts + self.monitor_duration_s

    def aligned_origin(self, ts: float) -> float:
        """Start of the interval grid cell containing ``ts``."""
        return math.floor(ts / self.interval_len_s) * self.interval_len_s

    def with_origin(self, origin_ts: float) -> "WindowConfig":
        return WindowConfig(self.monitor_duration_s, self.interval_len_s, origin_ts)

    @classmethod
    def for_events(cls, events: Iterable[DnsQueryEvent], monitor_duration_s=DEFAULT_MONITOR_S,
                   interval_len_s=DEFAULT_INTERVAL_S) -> "WindowConfig":
        """Config whose origin is the earliest timestamp floored to the interval grid."""
        cfg = cls(monitor_duration_s, interval_len_s, 0.0)
        first = min((e.ts for e in events), default=0.0)
        return cfg.with_origin(cfg.aligned_origin(first))


def assign_interval(ts: float, config: WindowConfig) -> int:
    if not config.origin_ts <= ts < config.end_ts:
        raise OutOfWindow(f"ts {ts} outside [{config.origin_ts}, {config.end_ts})")
    idx = math.floor((ts - config.origin_ts) / config.interval_len_s)
    # float division can round up onto the end boundary
    return min(idx, config.n_intervals - 1)


@dataclass(frozen=True)
class DomainIntervalBlock:
    """Distinct MACs that queried ``qname`` during one interval.

    ``mac_times`` keeps each MAC's sorted query timestamps; the single-host
    path needs them for the periodicity check.
    """

    qname: str
    interval_index: int
    macs: frozenset
    query_count: int
    mac_times: Mapping[str, tuple] = field(default_factory=dict, compare=True, repr=False)

    @property
    def first_ts(self) -> float:
        return min(t[0] for t in self.mac_times.values())

    @property
    def last_ts(self) -> float:
        return max(t[-1] for t in self.mac_times.values())


@dataclass(frozen=True)
class WindowSummary:
    blocks: Mapping[str, list]
    dns_ratio: int
    config: WindowConfig
    dropped: int = 0

    def domains(self) -> list[str]:
        return sorted(self.blocks)

    def all_blocks(self) -> Iterator[DomainIntervalBlock]:
        for qname in self.domains():
            yield from self.blocks[qname]


def build_blocks(events: Iterable[DnsQueryEvent], config: WindowConfig) -> WindowSummary:
    times: dict = defaultdict(lambda: defaultdict(list))
    kept = dropped = 0
    for ev in events:
        try:
            idx = assign_interval(ev.ts, config)
        except OutOfWindow:
            dropped += 1
            continue
        times[(ev.qname, idx)][ev.mac].append(ev.ts)
        kept += 1

    blocks: dict = defaultdict(list)
    for (qname, idx) in sorted(times):
        per_mac = {mac: tuple(sorted(ts)) for mac, ts in sorted(times[(qname, idx)].items())}
        blocks[qname].append(DomainIntervalBlock(
            qname=qname,
            interval_index=idx,
            macs=frozenset(per_mac),
            query_count=sum(len(t) for t in per_mac.values()),
            mac_times=per_mac,
        ))
    return WindowSummary(blocks=dict(blocks), dns_ratio=kept, config=config, dropped=dropped)


def split_periods(events: list[DnsQueryEvent], monitor_duration_s=DEFAULT_MONITOR_S,
                  interval_len_s=DEFAULT_INTERVAL_S) -> list[tuple[WindowConfig, list[DnsQueryEvent]]]:
    """Partition events into consecutive, independent monitoring periods.

    Periods start at the earliest timestamp floored to the interval grid and
    tile forward; periods without events are omitted.
    """
    if not events:
        return []
    base = WindowConfig.for_events(events, monitor_duration_s, interval_len_s)
    buckets: dict[int, list] = defaultdict(list)
    for ev in events:
        buckets[math.floor((ev.ts - base.origin_ts) / base.monitor_duration_s)].append(ev)
    out = []
    for k in sorted(buckets):
        cfg = base.with_origin(base.origin_ts + k * base.monitor_duration_s)
        out.append((cfg, buckets[k]))
    return out
