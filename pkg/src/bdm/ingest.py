"""Capture-file ingestion: classic pcap and JSON-lines event logs.

Both readers produce :class:`DnsQueryEvent` records in capture order.
Malformed packets are counted and skipped; only an unusable file header is
fatal.
"""

from __future__ import annotations

import enum
import ipaddress
import json
import logging
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_MAC_INPUT_RE = re.compile(r"^[0-9a-fA-F]{2}([:-][0-9a-fA-F]{2}){5}$")
MAX_QNAME_LEN = 253
MAX_LABEL_LEN = 63

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800
IPPROTO_UDP = 17
DNS_PORT = 53
DNS_HEADER_LEN = 12

EVENT_FIELDS = ("ts", "mac", "src_ip", "qname", "qtype")


class IngestError(Exception):
    pass


class MalformedPcapHeader(IngestError):
    pass


class UnreadableFile(IngestError):
    pass


class EmptyDomain(IngestError, ValueError):
    pass


class SchemaViolation(IngestError, ValueError):
    pass


class EventLogError(IngestError):
    """Raised when no line of a non-empty event log is usable."""

    def __init__(self, path, violations):
        self.violations = violations
        first = violations[0] if violations else None
        detail = f" (line {first[0]}: {first[1]})" if first else ""
        super().__init__(f"{path}: every line failed validation{detail}")


class DnsDecodeError(IngestError, ValueError):
    pass


class NotAQuery(DnsDecodeError):
    pass


class NoQuestion(DnsDecodeError):
    pass


class TruncatedMessage(DnsDecodeError):
    pass


class LabelTooLong(DnsDecodeError):
    pass


class CompressedQname(DnsDecodeError):
    pass


def normalize_domain(raw: str) -> str:
    """Lowercase ``raw`` and strip one trailing dot.

    >>> normalize_domain("WWW.XXX.COM.")
    'www.xxx.com'
    """
    if not raw:
        raise EmptyDomain("domain name is empty")
    name = raw.lower()
    if name.endswith("."):
        name = name[:-1]
    if not name:
        raise EmptyDomain(f"domain name {raw!r} is the root")
    return name


def canonical_mac(raw: str) -> str:
    if not isinstance(raw, str) or not _MAC_INPUT_RE.match(raw):
        raise ValueError(f"not a MAC address: {raw!r}")
    return raw.lower().replace("-", ":")


@dataclass(frozen=True)
class DnsQueryEvent:
    ts: float
    mac: str
    src_ip: str
    qname: str
    qtype: int

    def __post_init__(self):
        if not isinstance(self.ts, (int, float)) or isinstance(self.ts, bool):
            raise SchemaViolation(f"ts must be a number, got {self.ts!r}")
        if not math.isfinite(self.ts) or self.ts < 0:
            raise SchemaViolation(f"ts must be finite and >= 0, got {self.ts!r}")
        if not isinstance(self.mac, str) or not MAC_RE.match(self.mac):
            raise SchemaViolation(f"mac not canonical: {self.mac!r}")
        try:
            ipaddress.IPv4Address(self.src_ip)
        except (ipaddress.AddressValueError, ValueError, TypeError):
            raise SchemaViolation(f"src_ip is not IPv4: {self.src_ip!r}") from None
        q = self.qname
        if not isinstance(q, str) or not q or q != q.lower() or q.endswith("."):
            raise SchemaViolation(f"qname not normalized: {q!r}")
        if len(q) > MAX_QNAME_LEN:
            raise SchemaViolation(f"qname longer than {MAX_QNAME_LEN}: {q[:40]}...")
        if not isinstance(self.qtype, int) or isinstance(self.qtype, bool) or not 0 <= self.qtype <= 0xFFFF:
            raise SchemaViolation(f"qtype must be a 16-bit integer, got {self.qtype!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "DnsQueryEvent":
        """Validate one Event Log object; MACs are canonicalized, qnames normalized."""
        if not isinstance(obj, dict):
            raise SchemaViolation("record is not a JSON object")
        keys = set(obj)
        missing = [f for f in EVENT_FIELDS if f not in keys]
        if missing:
            raise SchemaViolation(f"missing field(s): {', '.join(missing)}")
        extra = sorted(keys - set(EVENT_FIELDS))
        if extra:
            raise SchemaViolation(f"unexpected field(s): {', '.join(extra)}")
        try:
            mac = canonical_mac(obj["mac"])
        except ValueError as e:
            raise SchemaViolation(str(e)) from None
        qname = obj["qname"]
        if not isinstance(qname, str):
            raise SchemaViolation(f"qname must be a string, got {qname!r}")
        try:
            qname = normalize_domain(qname)
        except EmptyDomain as e:
            raise SchemaViolation(str(e)) from None
        return cls(ts=obj["ts"], mac=mac, src_ip=obj["src_ip"], qname=qname, qtype=obj["qtype"])

    def to_dict(self) -> dict:
        return {"ts": self.ts, "mac": self.mac, "src_ip": self.src_ip, "qname": self.qname, "qtype": self.qtype}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class SourceKind(enum.Enum):
    PCAP_FILE = "pcap"
    EVENT_LOG = "events"


@dataclass(frozen=True)
class CaptureSource:
    kind: SourceKind
    path: Path

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))

    @classmethod
    def pcap(cls, path) -> "CaptureSource":
        return cls(SourceKind.PCAP_FILE, path)

    @classmethod
    def event_log(cls, path) -> "CaptureSource":
        return cls(SourceKind.EVENT_LOG, path)


@dataclass
class IngestResult:
    """Events in capture order plus skip/violation bookkeeping."""

    events: list[DnsQueryEvent] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)
    violations: list[tuple[int, str]] = field(default_factory=list)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


# -- DNS wire decoding -------------------------------------------------------

def decode_dns_query(payload: bytes) -> tuple[str, int]:
    """Decode the first question of a DNS query message.

    Returns the QNAME as dot-joined text (not yet normalized) and the QTYPE.
    Compression pointers in the question are rejected, not followed.
    """
    if len(payload) < DNS_HEADER_LEN:
        raise TruncatedMessage(f"DNS header needs {DNS_HEADER_LEN} bytes, got {len(payload)}")
    flags, qdcount = struct.unpack_from("!HH", payload, 2)
    if flags & 0x8000:
        raise NotAQuery("QR bit set (response)")
    if qdcount == 0:
        raise NoQuestion("QDCOUNT is 0")

    labels = []
    pos = DNS_HEADER_LEN
    while True:
        if pos >= len(payload):
            raise TruncatedMessage("question name runs past end of message")
        length = payload[pos]
        if length & 0xC0 == 0xC0:
            raise CompressedQname(f"compression pointer at offset {pos}")
        if length > MAX_LABEL_LEN:
            raise LabelTooLong(f"label length {length} at offset {pos}")
        pos += 1
        if length == 0:
            break
        if pos + length > len(payload):
            raise TruncatedMessage("label runs past end of message")
        labels.append(payload[pos:pos + length].decode("ascii", errors="backslashreplace"))
        pos += length

    if pos + 4 > len(payload):
        raise TruncatedMessage("question type/class missing")
    (qtype,) = struct.unpack_from("!H", payload, pos)
    return ".".join(labels), qtype


# -- pcap --------------------------------------------------------------------

def _read_global_header(data: bytes) -> tuple[str, int]:
    if len(data) < 24:
        raise MalformedPcapHeader(f"global header needs 24 bytes, got {len(data)}")
    (magic_le,) = struct.unpack_from("<I", data, 0)
    if magic_le == PCAP_MAGIC:
        endian = "<"
    elif magic_le == 0xD4C3B2A1:
        endian = ">"
    else:
        raise MalformedPcapHeader(f"bad magic 0x{magic_le:08x}")
    (linktype,) = struct.unpack_from(endian + "I", data, 20)
    if linktype != LINKTYPE_ETHERNET:
        raise MalformedPcapHeader(f"unsupported link type {linktype} (need Ethernet)")
    return endian, linktype


def _packet_to_event(ts: float, frame: bytes) -> tuple[DnsQueryEvent | None, str | None]:
    """Return (event, None) for a DNS query frame or (None, skip_reason)."""
    if len(frame) < 14:
        return None, "truncated"
    src_mac = frame[6:12]
    (ethertype,) = struct.unpack_from("!H", frame, 12)
    if ethertype != ETHERTYPE_IPV4:
        return None, "not_ipv4"
    ip = frame[14:]
    if len(ip) < 20:
        return None, "truncated"
    version, ihl = ip[0] >> 4, (ip[0] & 0x0F) * 4
    if version != 4 or ihl < 20:
        return None, "malformed_ip"
    if len(ip) < ihl:
        return None, "truncated"
    total_len, frag = struct.unpack_from("!H2xH", ip, 2)
    if frag & 0x3FFF:
        return None, "fragment"
    if ip[9] != IPPROTO_UDP:
        return None, "not_udp"
    src_ip = str(ipaddress.IPv4Address(ip[12:16]))
    # Ethernet padding may follow the datagram; trust total_len when it fits.
    if ihl <= total_len <= len(ip):
        ip = ip[:total_len]
    udp = ip[ihl:]
    if len(udp) < 8:
        return None, "truncated"
    dport, udp_len = struct.unpack_from("!2xHH", udp, 0)
    if dport != DNS_PORT:
        return None, "not_dns_port"
    dns = udp[8:udp_len] if 8 <= udp_len <= len(udp) else udp[8:]
    try:
        raw_qname, qtype = decode_dns_query(dns)
        qname = normalize_domain(raw_qname)
        event = DnsQueryEvent(ts=ts, mac=src_mac.hex(":"), src_ip=src_ip, qname=qname, qtype=qtype)
    except NotAQuery:
        return None, "dns_response"
    except NoQuestion:
        return None, "no_question"
    except TruncatedMessage:
        return None, "truncated"
    except (DnsDecodeError, EmptyDomain, SchemaViolation):
        return None, "malformed_dns"
    return event, None


def parse_pcap_bytes(data: bytes) -> IngestResult:
    endian, _ = _read_global_header(data)
    rec = struct.Struct(endian + "IIII")
    result = IngestResult()
    pos = 24
    while pos < len(data):
        if pos + rec.size > len(data):
            result.skipped["truncated_record"] += 1
            break
        sec, usec, incl_len, _orig_len = rec.unpack_from(data, pos)
        pos += rec.size
        if pos + incl_len > len(data):
            result.skipped["truncated_record"] += 1
            break
        frame = data[pos:pos + incl_len]
        pos += incl_len
        event, reason = _packet_to_event(sec + usec / 1e6, frame)
        if event is None:
            result.skipped[reason] += 1
        else:
            result.events.append(event)
    if result.skipped:
        logger.debug("pcap skip counters: %s", dict(result.skipped))
    return result


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise UnreadableFile(f"{path}: {e.strerror or e}") from e


def parse_pcap(source: CaptureSource | str | Path) -> IngestResult:
    """Read DNS queries (Ethernet/IPv4/UDP to port 53) from a classic pcap file."""
    path = source.path if isinstance(source, CaptureSource) else Path(source)
    return parse_pcap_bytes(_read_bytes(path))


# -- event log ---------------------------------------------------------------

def parse_event_lines(lines: Iterable[str], name: str = "<events>") -> IngestResult:
    result = IngestResult()
    seen = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        seen += 1
        try:
            obj = json.loads(line)
            result.events.append(DnsQueryEvent.from_dict(obj))
        except json.JSONDecodeError as e:
            result.violations.append((lineno, f"invalid JSON: {e.msg}"))
        except SchemaViolation as e:
            result.violations.append((lineno, str(e)))
    for lineno, msg in result.violations:
        logger.warning("%s line %d: %s", name, lineno, msg)
    if seen and not result.events:
        raise EventLogError(name, result.violations)
    return result


def parse_event_log(source: CaptureSource | str | Path) -> IngestResult:
    """Read a JSON-lines event log. Bad lines are reported, not fatal."""
    path = source.path if isinstance(source, CaptureSource) else Path(source)
    try:
        text = _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as e:
        raise UnreadableFile(f"{path}: not UTF-8 ({e.reason})") from e
    return parse_event_lines(text.splitlines(), name=str(path))


def read_capture(source: CaptureSource) -> IngestResult:
    if source.kind is SourceKind.PCAP_FILE:
        return parse_pcap(source)
    return parse_event_log(source)


def write_event_log(events: Iterable[DnsQueryEvent], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")
            n += 1
    return n
