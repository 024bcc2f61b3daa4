"""JSON-lines database for detector state.

Layout of a database directory::

    domains.jsonl    one DomainRecord per line
    blacklist.jsonl  one MacBlacklistEntry per line
    runs.jsonl       one analysis run per line
    alerts.jsonl     append-only alert log (never read back into state)

Snapshot files are rewritten atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

from .detector import (
    Alert,
    DetectorConfig,
    DetectorState,
    DomainRecord,
    MacBlacklistEntry,
    RunRecord,
    Source,
)
from .ingest import MAC_RE
from .similarity import Classification

DOMAINS_FILE = "domains.jsonl"
BLACKLIST_FILE = "blacklist.jsonl"
RUNS_FILE = "runs.jsonl"
ALERTS_FILE = "alerts.jsonl"
DB_FILES = (DOMAINS_FILE, BLACKLIST_FILE, RUNS_FILE, ALERTS_FILE)


class StoreError(Exception):
    pass


class IoFailure(StoreError):
    pass


class CorruptDatabase(StoreError):
    def __init__(self, path, lineno: int, reason: str):
        self.path = Path(path)
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"{self.path.name} line {lineno}: {reason}")


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _write_atomic(path: Path, lines: Iterable[str]) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def domain_to_dict(rec: DomainRecord) -> dict:
    return {
        "qname": rec.qname,
        "class": rec.cls.value,
        "best_score": rec.best_score,
        "source": rec.source.value,
        "first_seen_ts": rec.first_seen_ts,
        "last_seen_ts": rec.last_seen_ts,
    }


def blacklist_to_dict(entry: MacBlacklistEntry) -> dict:
    return {"mac": entry.mac, "implicating_qname": entry.implicating_qname, "added_ts": entry.added_ts}


def _number(obj, key, nullable=False):
    v = obj[key]
    if v is None and nullable:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"field '{key}' must be a number")
    return v


def _string(obj, key):
    v = obj[key]
    if not isinstance(v, str) or not v:
        raise ValueError(f"field '{key}' must be a non-empty string")
    return v


def _domain_from_dict(obj: dict) -> DomainRecord:
    rec = DomainRecord(
        qname=_string(obj, "qname"),
        cls=Classification(obj["class"]),
        best_score=_number(obj, "best_score", nullable=True),
        source=Source(obj["source"]),
        first_seen_ts=_number(obj, "first_seen_ts"),
        last_seen_ts=_number(obj, "last_seen_ts"),
    )
    if rec.last_seen_ts < rec.first_seen_ts:
        raise ValueError("last_seen_ts precedes first_seen_ts")
    return rec


def _blacklist_from_dict(obj: dict) -> MacBlacklistEntry:
    mac = _string(obj, "mac")
    if not MAC_RE.match(mac):
        raise ValueError(f"mac not canonical: {mac!r}")
    return MacBlacklistEntry(mac=mac, implicating_qname=_string(obj, "implicating_qname"),
                             added_ts=_number(obj, "added_ts"))


def _run_from_dict(obj: dict) -> RunRecord:
    detected = obj["detected"]
    if not isinstance(detected, list):
        raise ValueError("field 'detected' must be a list")
    return RunRecord(run=obj["run"], input=obj["input"], periods=obj["periods"],
                     events=obj["events"], detected=list(detected), config=dict(obj["config"]))


def _read_jsonl(path: Path, parse) -> list:
    if not path.exists():
        return []
    out = []
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not a JSON object")
            out.append((lineno, parse(obj)))
        except json.JSONDecodeError as e:
            raise CorruptDatabase(path, lineno, f"invalid JSON ({e.msg})") from None
        except KeyError as e:
            raise CorruptDatabase(path, lineno, f"missing field {e.args[0]!r}") from None
        except (ValueError, TypeError) as e:
            raise CorruptDatabase(path, lineno, str(e)) from None
    return out


def persist(state: DetectorState, db_dir) -> None:
    """Snapshot domains, blacklist and runs. Alerts go through :func:`append_alerts`."""
    db = Path(db_dir)
    try:
        db.mkdir(parents=True, exist_ok=True)
        _write_atomic(db / DOMAINS_FILE,
                      (_dumps(domain_to_dict(state.domains[q])) for q in sorted(state.domains)))
        _write_atomic(db / BLACKLIST_FILE,
                      (_dumps(blacklist_to_dict(state.blacklist[m])) for m in sorted(state.blacklist)))
        _write_atomic(db / RUNS_FILE, (_dumps(r.to_dict()) for r in state.runs))
    except OSError as e:
        raise IoFailure(f"cannot write database {db}: {e}") from e


def load(db_dir, config: Optional[DetectorConfig] = None) -> DetectorState:
    db = Path(db_dir)
    state = DetectorState(config=config or DetectorConfig())
    if not db.exists():
        return state
    if not db.is_dir():
        raise IoFailure(f"{db} is not a directory")
    for lineno, rec in _read_jsonl(db / DOMAINS_FILE, _domain_from_dict):
        if rec.qname in state.domains:
            raise CorruptDatabase(db / DOMAINS_FILE, lineno, f"duplicate qname {rec.qname!r}")
        state.domains[rec.qname] = rec
    for lineno, entry in _read_jsonl(db / BLACKLIST_FILE, _blacklist_from_dict):
        if entry.mac in state.blacklist:
            raise CorruptDatabase(db / BLACKLIST_FILE, lineno, f"duplicate mac {entry.mac!r}")
        state.blacklist[entry.mac] = entry
    state.runs = [r for _, r in _read_jsonl(db / RUNS_FILE, _run_from_dict)]
    return state


def append_alerts(db_dir, alerts: Iterable[Alert]) -> int:
    db = Path(db_dir)
    n = 0
    try:
        db.mkdir(parents=True, exist_ok=True)
        with open(db / ALERTS_FILE, "a", encoding="utf-8", newline="\n") as fh:
            for alert in alerts:
                fh.write(_dumps(alert.to_dict()) + "\n")
                n += 1
    except OSError as e:
        raise IoFailure(f"cannot append alerts in {db}: {e}") from e
    return n


def read_alerts(db_dir) -> list[dict]:
    path = Path(db_dir) / ALERTS_FILE
    return [obj for _, obj in _read_jsonl(path, lambda obj: obj)]


def clear(db_dir) -> list[Path]:
    db = Path(db_dir)
    removed = []
    for name in DB_FILES + ("report.json",):
        p = db / name
        if p.exists():
            p.unlink()
            removed.append(p)
    return removed
