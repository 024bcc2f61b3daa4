"""Labeled synthetic DNS traces: a periodic bot group among random legitimate hosts.

Bots all query one domain once per period, so every burst is the same
fixed host group. Legitimate hosts query uniformly random pool domains at
uniformly random times. An optional pre-check host queries the bot domain
alone for a few periods before the group shows up.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .ingest import DnsQueryEvent, normalize_domain, write_event_log

QTYPE_A = 1
BOT_JITTER_S = 1.0
MAX_HOSTS = 0xFFFF


class InvalidConfig(ValueError):
    pass


class Truth(enum.Enum):
    BOTNET = "botnet"
    LEGITIMATE = "legitimate"


@dataclass(frozen=True)
class GroundTruthLabel:
    qname: str
    truth: Truth

    def to_dict(self) -> dict:
        return {"qname": self.qname, "truth": self.truth.value}


def default_pool(size: int = 50) -> tuple[str, ...]:
    return tuple(f"site{i:03d}.example.net" for i in range(size))


@dataclass(frozen=True)
class SimConfig:
    bot_count: int = 10
    bot_domain: str = "www.xxx.com"
    bot_period_s: float = 60.0
    legit_count: int = 20
    legit_domain_pool: tuple = field(default_factory=default_pool)
    # mean queries per host per bot period
    legit_rate_per_host: float = 0.5
    duration_s: float = 600.0
    seed: int = 0
    precheck_host: bool = False
    precheck_repeats: int = 3
    start_ts: float = 0.0

    def __post_init__(self):
        if not self.bot_period_s > 0:
            raise InvalidConfig("bot period must be > 0")
        if not self.duration_s > 0:
            raise InvalidConfig("duration must be > 0")
        if self.bot_count < 0 or self.legit_count < 0:
            raise InvalidConfig("host counts must be >= 0")
        if max(self.bot_count, self.legit_count) > MAX_HOSTS:
            raise InvalidConfig(f"at most {MAX_HOSTS} hosts per population")
        if self.bot_count == 0 and self.legit_count == 0 and not self.precheck_host:
            raise InvalidConfig("empty population: no bots, legitimate hosts or pre-check host")
        if self.legit_rate_per_host < 0:
            raise InvalidConfig("legitimate query rate must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        if self.start_ts < 0:
            raise InvalidConfig("start_ts must be >= 0")
        if self.precheck_repeats < 1:
            raise InvalidConfig("precheck_repeats must be >= 1")
        try:
            bot_domain = normalize_domain(self.bot_domain)
            pool = tuple(normalize_domain(d) for d in self.legit_domain_pool)
        except ValueError as e:
            raise InvalidConfig(str(e)) from None
        if self.legit_count > 0 and not pool:
            raise InvalidConfig("legitimate domain pool is empty")
        if bot_domain in pool:
            raise InvalidConfig(f"bot domain {bot_domain} also appears in the legitimate pool")
        object.__setattr__(self, "bot_domain", bot_domain)
        object.__setattr__(self, "legit_domain_pool", pool)

    @property
    def n_periods(self) -> int:
        return int(self.duration_s // self.bot_period_s)


def _mac(group: int, i: int) -> str:
    return f"aa:bb:cc:{group:02x}:{i >> 8:02x}:{i & 0xFF:02x}"


def _ip(group: int, i: int) -> str:
    return f"10.{group}.{i >> 8}.{i & 0xFF}"


def bot_macs(n: int) -> list[str]:
    return [_mac(0, i) for i in range(1, n + 1)]


def legit_macs(n: int) -> list[str]:
    return [_mac(1, i) for i in range(1, n + 1)]


PRECHECK_MAC = _mac(2, 1)


def _t(x: float) -> float:
    # pcap resolution; also keeps JSON output short and stable
    return round(float(x), 6)


def generate_trace(config: SimConfig) -> tuple[list[DnsQueryEvent], set[GroundTruthLabel]]:
    rng = np.random.default_rng(config.seed)
    start, period = config.start_ts, config.bot_period_s
    end = start + config.duration_s
    # bursts sit mid-period so the +-1 s jitter never crosses an interval edge
    phase = period / 2
    jitter = min(BOT_JITTER_S, phase / 2)
    events: list[DnsQueryEvent] = []

    first_burst = 0
    if config.precheck_host:
        first_burst = min(config.precheck_repeats, config.n_periods)
        for j in range(first_burst):
            t = _t(start + j * period + phase + rng.uniform(-jitter, jitter))
            events.append(DnsQueryEvent(t, PRECHECK_MAC, _ip(2, 1), config.bot_domain, QTYPE_A))

    for i, mac in enumerate(bot_macs(config.bot_count), 1):
        for k in range(first_burst, config.n_periods):
            t = _t(start + k * period + phase + rng.uniform(-jitter, jitter))
            events.append(DnsQueryEvent(t, mac, _ip(0, i), config.bot_domain, QTYPE_A))

    pool = config.legit_domain_pool
    mean_queries = config.legit_rate_per_host * config.duration_s / period
    for i, mac in enumerate(legit_macs(config.legit_count), 1):
        n = int(rng.poisson(mean_queries))
        times = rng.uniform(start, end, size=n)
        picks = rng.integers(0, len(pool), size=n)
        for t, d in zip(times, picks):
            t = _t(t)
            if t >= end:
                t = _t(end - 1e-6)
            events.append(DnsQueryEvent(t, mac, _ip(1, i), pool[int(d)], QTYPE_A))

    events.sort(key=lambda e: (e.ts, e.mac, e.qname))
    labels = {
        GroundTruthLabel(q, Truth.BOTNET if q == config.bot_domain else Truth.LEGITIMATE)
        for q in {e.qname for e in events}
    }
    return events, labels


def write_labels(labels: Iterable[GroundTruthLabel], path) -> int:
    ordered = sorted(labels, key=lambda lab: lab.qname)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab in ordered:
            fh.write(json.dumps(lab.to_dict(), separators=(",", ":")) + "\n")
    return len(ordered)


def read_labels(path) -> dict[str, Truth]:
    """Map qname -> truth. Raises ValueError naming the bad line."""
    out: dict[str, Truth] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            qname = normalize_domain(obj["qname"])
            truth = Truth(obj["truth"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ValueError(f"{path} line {lineno}: bad label ({e})") from None
        if out.get(qname, truth) is not truth:
            raise ValueError(f"{path} line {lineno}: conflicting label for {qname}")
        out[qname] = truth
    return out


def labels_to_map(labels: Iterable[GroundTruthLabel] | Mapping[str, Truth]) -> dict[str, Truth]:
    if isinstance(labels, Mapping):
        return dict(labels)
    return {lab.qname: lab.truth for lab in labels}


def simulate_to_files(config: SimConfig, trace_path, labels_path) -> tuple[int, int]:
    events, labels = generate_trace(config)
    return write_event_log(events, trace_path), write_labels(labels, labels_path)
