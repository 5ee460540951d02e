import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzyflow.core import SchemaError, TrafficClass
from fuzzyflow.ingest import (
    FlowLog,
    parse_flow_log,
    partition_by_source,
    record_from_dict,
    record_to_dict,
    write_flow_log,
)
from tests.conftest import make_record


def _line(**kw):
    base = {"src_ip": "10.0.0.1", "dst_ip": "10.0.0.2", "timestamp": 1.0, "src_port": 1234,
            "dst_port": 80, "l4": "tcp"}
    base.update(kw)
    return json.dumps(base)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    log = parse_flow_log(p)
    assert len(log) == 0 and log.errors == []


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_flow_log(tmp_path / "nope.jsonl")


def test_single_record_roundtrips_exactly(tmp_path):
    r = make_record(ts=1600000000.123456, l5="http", ip_options=frozenset({"padding"}), duration=0.25,
                    bytes_src_to_dst=10, bytes_dst_to_src=20, packet_sizes=(60, 1500), syn_count=1,
                    login_attempt=True, login_failed=True, payload_signature_hit=True,
                    label=TrafficClass.WORM)
    p = tmp_path / "one.jsonl"
    write_flow_log([r], p)
    log = parse_flow_log(p)
    assert log.records == [r]


def test_defaults_for_optional_keys():
    r = record_from_dict(json.loads(_line()))
    assert r.syn_count == 0 and r.login_attempt is False and r.label is None and r.l3 == "ip"


def test_lenient_mode_collects_errors(tmp_path):
    lines = [_line(timestamp=float(i)) for i in range(8)]
    lines.insert(3, "{not json")
    lines.insert(7, _line(dst_port=99999))
    p = tmp_path / "ten.jsonl"
    p.write_text("\n".join(lines) + "\n")
    log = parse_flow_log(p)
    assert len(log.records) == 8
    assert [e.line for e in log.errors] == [4, 8]


def test_strict_mode_aborts(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(_line() + "\n" + _line(l4="sctp") + "\n")
    with pytest.raises(SchemaError):
        parse_flow_log(p, strict=True)


@pytest.mark.parametrize("obj", [{"src_ip": "a"}, {**json.loads(_line()), "colour": "red"},
                                 {**json.loads(_line()), "timestamp": "noon"}])
def test_record_schema_errors(obj):
    with pytest.raises(SchemaError):
        record_from_dict(obj)


def test_sorted_by_source_then_time_with_stable_ties(tmp_path):
    recs = [make_record(src="b", ts=2.0, dst_port=1), make_record(src="a", ts=5.0),
            make_record(src="b", ts=1.0, dst_port=2), make_record(src="b", ts=1.0, dst_port=3)]
    p = tmp_path / "s.jsonl"
    write_flow_log(recs, p)
    got = parse_flow_log(p).records
    assert [(r.src_ip, r.timestamp, r.dst_port) for r in got] == [
        ("a", 5.0, 80), ("b", 1.0, 2), ("b", 1.0, 3), ("b", 2.0, 1)]


def test_parse_is_idempotent(tmp_path):
    recs = [make_record(src=f"10.0.0.{i % 3}", ts=float(i)) for i in range(20)]
    p = tmp_path / "x.jsonl"
    write_flow_log(recs, p)
    assert parse_flow_log(p).records == parse_flow_log(p).records


def test_clock_offsets(tmp_path):
    p = tmp_path / "x.jsonl"
    write_flow_log([make_record(src="a", ts=10.0), make_record(src="b", ts=10.0)], p)
    log = parse_flow_log(p, offsets={"a": -2.5})
    assert {r.src_ip: r.timestamp for r in log.records} == {"a": 7.5, "b": 10.0}


def test_partition_examples():
    one = [make_record(src="a", ts=float(i)) for i in range(5)]
    parts = partition_by_source(FlowLog(one))
    assert list(parts) == ["a"] and len(parts["a"]) == 5
    three = one + [make_record(src="b", ts=1.0), make_record(src="c", ts=0.5), make_record(src="c", ts=0.1)]
    parts = partition_by_source(three)
    assert len(parts) == 3 and sum(map(len, parts.values())) == len(three)


@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c", "d"]), st.floats(0, 1e6)), max_size=60),
       st.randoms())
def test_partition_conserves_and_orders(items, rnd):
    recs = [make_record(src=s, ts=t, dst_port=i) for i, (s, t) in enumerate(items)]
    rnd.shuffle(recs)
    parts = partition_by_source(recs)
    assert sum(len(v) for v in parts.values()) == len(recs)
    for src, group in parts.items():
        assert all(r.src_ip == src for r in group)
        ts = [r.timestamp for r in group]
        assert ts == sorted(ts)


def test_record_dict_roundtrip_random():
    rnd = random.Random(3)
    for _ in range(50):
        r = make_record(ts=rnd.uniform(0, 1e9), dst_port=rnd.randrange(65536), duration=rnd.random(),
                        packet_sizes=tuple(rnd.randrange(1500) for _ in range(3)))
        assert record_from_dict(json.loads(json.dumps(record_to_dict(r)))) == r
