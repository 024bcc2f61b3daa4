import io
import json
import struct

import dpkt
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bdm.ingest import (
    CaptureSource,
    CompressedQname,
    DnsQueryEvent,
    EmptyDomain,
    EventLogError,
    LabelTooLong,
    MalformedPcapHeader,
    NoQuestion,
    NotAQuery,
    SchemaViolation,
    TruncatedMessage,
    UnreadableFile,
    decode_dns_query,
    normalize_domain,
    parse_event_log,
    parse_pcap,
    parse_pcap_bytes,
    write_event_log,
)

import pcapcraft


# -- fixture cross-checks against independent parsers -------------------------

def test_fixture_agrees_with_dpkt():
    reader = dpkt.pcap.Reader(io.BytesIO(pcapcraft.acceptance_pcap()))
    seen = []
    for ts, buf in reader:
        eth = dpkt.ethernet.Ethernet(buf)
        udp = eth.data.data
        try:
            msg = dpkt.dns.DNS(udp.data)
        except (dpkt.NeedData, dpkt.UnpackError):
            seen.append("undecodable")
            continue
        kind = "response" if msg.qr else "query"
        seen.append((kind, eth.src.hex(":"), msg.qd[0].name, round(ts, 6)))
    assert seen == [
        ("query", "aa:bb:cc:00:00:01", "www.xxx.com", 1000.0),
        ("query", "aa:bb:cc:00:00:02", "www.xxx.com", 1000.25),
        ("response", "aa:bb:cc:00:00:09", "www.xxx.com", 1001.0),
        ("query", "aa:bb:cc:00:00:03", "WWW.XXX.COM", 1001.5),
        "undecodable",
    ]


def test_fixture_agrees_with_scapy(tmp_path):
    from scapy.all import DNS, Ether, rdpcap

    p = tmp_path / "a.pcap"
    p.write_bytes(pcapcraft.acceptance_pcap())
    pkts = rdpcap(str(p))
    assert len(pkts) == 5
    queries = [pk for pk in pkts[:4] if DNS in pk and pk[DNS].qr == 0]
    assert [pk[Ether].src for pk in queries] == ["aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", "aa:bb:cc:00:00:03"]
    assert [pk[DNS].qd[0].qname for pk in queries] == [b"www.xxx.com.", b"www.xxx.com.", b"WWW.XXX.COM."]


# -- decode_dns_query --------------------------------------------------------

HEADER_Q1 = struct.pack("!HHHHHH", 0xBEEF, 0x0100, 1, 0, 0, 0)


def test_decode_hand_encoded_question():
    payload = HEADER_Q1 + b"\x03www\x03xxx\x03com\x00" + b"\x00\x01\x00\x01"
    assert decode_dns_query(payload) == ("www.xxx.com", 1)


def test_decode_returns_name_before_normalization():
    payload = HEADER_Q1 + b"\x03WWW\x03Xxx\x03com\x00" + b"\x00\x1c\x00\x01"
    assert decode_dns_query(payload) == ("WWW.Xxx.com", 28)


def test_decode_rejects_response():
    payload = struct.pack("!HHHHHH", 1, 0x8180, 1, 1, 0, 0) + b"\x03www\x03xxx\x03com\x00\x00\x01\x00\x01"
    with pytest.raises(NotAQuery):
        decode_dns_query(payload)


def test_decode_rejects_no_question():
    with pytest.raises(NoQuestion):
        decode_dns_query(struct.pack("!HHHHHH", 1, 0x0100, 0, 0, 0, 0))


@pytest.mark.parametrize("tail", [
    b"\x03ww",                      # cut mid-label
    b"\x03www\x03xxx",              # missing terminator
    b"\x03www\x00\x00",             # qtype/qclass cut
])
def test_decode_truncated(tail):
    with pytest.raises(TruncatedMessage):
        decode_dns_query(HEADER_Q1 + tail)


def test_decode_truncated_header():
    with pytest.raises(TruncatedMessage):
        decode_dns_query(b"\x00\x01\x01")


def test_decode_label_too_long():
    with pytest.raises(LabelTooLong):
        decode_dns_query(HEADER_Q1 + bytes([64]) + b"a" * 64 + b"\x00\x00\x01\x00\x01")


def test_decode_rejects_compression_pointer():
    with pytest.raises(CompressedQname):
        decode_dns_query(HEADER_Q1 + b"\x03www\xc0\x0c\x00\x01\x00\x01")


@given(st.binary(max_size=80))
def test_decode_never_crashes_on_garbage(data):
    try:
        name, qtype = decode_dns_query(data)
    except (NotAQuery, NoQuestion, TruncatedMessage, LabelTooLong, CompressedQname):
        return
    assert 0 <= qtype <= 0xFFFF


# -- normalize_domain ----------------------------------------------------------

@pytest.mark.parametrize("raw, expected", [
    ("WWW.XXX.COM.", "www.xxx.com"),
    ("www.xxx.com", "www.xxx.com"),
    ("MiXeD.Example.ORG", "mixed.example.org"),
])
def test_normalize(raw, expected):
    assert normalize_domain(raw) == expected


@pytest.mark.parametrize("raw", ["", "."])
def test_normalize_empty(raw):
    with pytest.raises(EmptyDomain):
        normalize_domain(raw)


@given(st.text(min_size=1).filter(lambda s: s not in (".",)))
def test_normalize_idempotent(raw):
    try:
        once = normalize_domain(raw)
    except EmptyDomain:
        return
    assert normalize_domain(once) == once


# -- parse_pcap --------------------------------------------------------------

def _query_records(names):
    return [(10 + i, 0, pcapcraft.frame(f"aa:bb:cc:00:00:{i + 1:02x}", f"10.0.0.{i + 1}",
                                        pcapcraft.dns_message(n)))
            for i, n in enumerate(names)]


def test_pcap_three_queries():
    res = parse_pcap_bytes(pcapcraft.pcap(_query_records(["www.xxx.com"] * 3)))
    assert [e.qname for e in res.events] == ["www.xxx.com"] * 3
    assert [e.mac for e in res.events] == ["aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", "aa:bb:cc:00:00:03"]
    assert [e.ts for e in res.events] == [10.0, 11.0, 12.0]
    assert res.skipped_total == 0


def test_pcap_big_endian_header():
    res = parse_pcap_bytes(pcapcraft.pcap(_query_records(["a.example"]), big_endian=True))
    assert [e.qname for e in res.events] == ["a.example"]


def test_pcap_header_only():
    res = parse_pcap_bytes(pcapcraft.pcap([]))
    assert res.events == [] and res.skipped_total == 0


def test_pcap_two_queries_one_response():
    recs = _query_records(["a.example", "b.example"])
    resp = pcapcraft.frame("aa:bb:cc:00:00:09", "10.0.0.9", pcapcraft.dns_message("a.example", qr=1))
    res = parse_pcap_bytes(pcapcraft.pcap(recs + [(20, 0, resp)]))
    assert len(res.events) == 2
    assert res.skipped == {"dns_response": 1}


def test_pcap_usec_timestamp():
    frame = pcapcraft.frame("aa:bb:cc:00:00:01", "10.0.0.1", pcapcraft.dns_message("x.example"))
    res = parse_pcap_bytes(pcapcraft.pcap([(1700000000, 123456, frame)]))
    assert res.events[0].ts == 1700000000 + 123456 / 1e6


def test_pcap_skips_non_dns_traffic():
    dns = pcapcraft.dns_message("x.example")
    recs = [
        (1, 0, pcapcraft.frame("aa:bb:cc:00:00:01", "10.0.0.1", dns, proto=6)),       # TCP
        (2, 0, pcapcraft.frame("aa:bb:cc:00:00:01", "10.0.0.1", dns, dport=5353)),    # mDNS port
        (3, 0, b"\x00" * 12 + b"\x86\xdd" + b"\x00" * 40),                            # IPv6
        (4, 0, b"\x00" * 5),                                                           # runt
    ]
    res = parse_pcap_bytes(pcapcraft.pcap(recs))
    assert res.events == []
    assert res.skipped == {"not_udp": 1, "not_dns_port": 1, "not_ipv4": 1, "truncated": 1}


def test_pcap_truncated_record_stops_reading():
    data = pcapcraft.pcap(_query_records(["a.example", "b.example"]))
    res = parse_pcap_bytes(data[:-10])
    assert [e.qname for e in res.events] == ["a.example"]
    assert res.skipped == {"truncated_record": 1}


@pytest.mark.parametrize("data", [
    b"",
    b"\xa1\xb2\xc3",
    b"\x00" * 24,
])
def test_pcap_bad_header(data):
    with pytest.raises(MalformedPcapHeader):
        parse_pcap_bytes(data)


def test_pcap_rejects_non_ethernet():
    with pytest.raises(MalformedPcapHeader):
        parse_pcap_bytes(pcapcraft.pcap([], linktype=101))


def test_pcap_missing_file(tmp_path):
    with pytest.raises(UnreadableFile):
        parse_pcap(CaptureSource.pcap(tmp_path / "nope.pcap"))


@settings(max_examples=200, suppress_health_check=[HealthCheck.too_slow])
@given(st.binary(max_size=300))
def test_pcap_fuzz_records(blob):
    # random frame bytes behind a valid header: skip or emit, never raise
    data = pcapcraft.pcap([(1, 0, blob)])
    res = parse_pcap_bytes(data)
    assert len(res.events) + res.skipped_total == 1
    for ev in res.events:
        DnsQueryEvent(**ev.to_dict())


label = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-", min_size=1, max_size=12)
domain = st.lists(label, min_size=1, max_size=4).map(".".join)
octet = st.integers(0, 255)
mac = st.lists(octet, min_size=6, max_size=6).map(lambda bs: ":".join(f"{b:02x}" for b in bs))
ipv4 = st.lists(octet, min_size=4, max_size=4).map(lambda bs: ".".join(map(str, bs)))
event = st.builds(
    lambda sec, usec, m, ip, q, t: DnsQueryEvent(sec + usec / 1e6, m, ip, q, t),
    st.integers(0, 2**31), st.integers(0, 999999), mac, ipv4, domain, st.integers(0, 0xFFFF),
)


@settings(max_examples=40, deadline=None)
@given(st.lists(event, max_size=6))
def test_pcap_roundtrip_through_scapy(tmp_path_factory, events):
    from scapy.all import DNS, DNSQR, IP, UDP, Ether, wrpcap

    pkts = []
    for ev in events:
        pk = (Ether(src=ev.mac, dst="00:11:22:33:44:55") / IP(src=ev.src_ip, dst="10.0.0.53")
              / UDP(sport=33333, dport=53) / DNS(rd=1, qd=DNSQR(qname=ev.qname, qtype=ev.qtype)))
        sec, usec = divmod(round(ev.ts * 1e6), 10**6)
        pk.time = sec + usec / 1e6
        pkts.append(pk)
    path = tmp_path_factory.mktemp("rt") / "rt.pcap"
    if pkts:
        wrpcap(str(path), pkts)
    else:
        path.write_bytes(pcapcraft.pcap([]))
    res = parse_pcap(path)
    assert res.events == events


# -- event log ---------------------------------------------------------------

def test_event_log_line(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"ts":10.0,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"www.xxx.com","qtype":1}\n')
    res = parse_event_log(CaptureSource.event_log(p))
    assert res.events == [DnsQueryEvent(10.0, "aa:bb:cc:00:00:01", "10.0.0.1", "www.xxx.com", 1)]


def test_event_log_empty(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert parse_event_log(p).events == []


def test_event_log_hyphen_mac_canonicalized(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"ts":1,"mac":"AA-BB-CC-00-00-01","src_ip":"10.0.0.1","qname":"WWW.xxx.com.","qtype":1}\n')
    (ev,) = parse_event_log(p).events
    assert ev.mac == "aa:bb:cc:00:00:01"
    assert ev.qname == "www.xxx.com"


def test_event_log_reports_bad_lines(tmp_path):
    good = '{"ts":1,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"a.example","qtype":1}'
    lines = [
        good,
        "not json",
        '{"ts":1,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"a.example"}',
        '{"ts":-1,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"a.example","qtype":1}',
        '{"ts":1,"mac":"aa:bb:cc:00:00:01","src_ip":"::1","qname":"a.example","qtype":1}',
        '{"ts":1,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"a.example","qtype":1,"x":2}',
        '{"ts":1,"mac":"aa:bb:cc:00:00:01","src_ip":"10.0.0.1","qname":"a.example","qtype":70000}',
        "",
        good,
    ]
    p = tmp_path / "e.jsonl"
    p.write_text("\n".join(lines) + "\n")
    res = parse_event_log(p)
    assert len(res.events) == 2
    assert [ln for ln, _ in res.violations] == [2, 3, 4, 5, 6, 7]


def test_event_log_all_lines_bad(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("nope\n{}\n")
    with pytest.raises(EventLogError) as ei:
        parse_event_log(p)
    assert [ln for ln, _ in ei.value.violations] == [1, 2]


def test_event_log_not_utf8(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_bytes(b"\xff\xfe\x00")
    with pytest.raises(UnreadableFile):
        parse_event_log(p)


@given(st.lists(event, max_size=8))
@settings(max_examples=30)
def test_event_log_roundtrip(tmp_path_factory, events):
    p = tmp_path_factory.mktemp("ev") / "e.jsonl"
    write_event_log(events, p)
    assert parse_event_log(p).events == events
    for line in p.read_text().splitlines():
        assert list(json.loads(line)) == ["ts", "mac", "src_ip", "qname", "qtype"]


def test_event_invariants_enforced():
    with pytest.raises(SchemaViolation):
        DnsQueryEvent(1.0, "AA:BB:CC:00:00:01", "10.0.0.1", "a.example", 1)
    with pytest.raises(SchemaViolation):
        DnsQueryEvent(1.0, "aa:bb:cc:00:00:01", "10.0.0.1", "a.example.", 1)
    with pytest.raises(SchemaViolation):
        DnsQueryEvent(1.0, "aa:bb:cc:00:00:01", "10.0.0.1", "a" * 254, 1)
