import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzyflow.core import (
    ATTACK_CLASSES,
    BinaryLabel,
    ConnectionRecord,
    FeatureVector,
    FlowKey,
    SchemaError,
    DataError,
    TrafficClass,
    class_code,
    class_name,
    parse_class,
    to_binary,
)


def test_seven_classes_with_normal_zero():
    assert len(TrafficClass) == 7
    assert sorted(int(c) for c in TrafficClass) == list(range(7))
    assert TrafficClass.NORMAL == 0
    assert len(ATTACK_CLASSES) == 6


@pytest.mark.parametrize("name,code", [("Normal", 0), ("AuthAttack", 1), ("Botnet", 2), ("PortSweep", 3),
                                       ("PortScan", 4), ("Spying", 5), ("Worm", 6)])
def test_fixed_codes(name, code):
    assert class_code(name) == code
    assert class_name(code) == name


def test_unknown_name_is_schema_error():
    with pytest.raises(SchemaError):
        class_code("Foo")
    with pytest.raises(SchemaError):
        class_name(7)


@pytest.mark.parametrize("cls,expected", [(TrafficClass.NORMAL, BinaryLabel.BENIGN),
                                          (TrafficClass.PORT_SCAN, BinaryLabel.MALICIOUS),
                                          (TrafficClass.WORM, BinaryLabel.MALICIOUS)])
def test_to_binary_examples(cls, expected):
    assert to_binary(cls) is expected


@given(st.integers(0, 6))
def test_code_name_roundtrip_and_binary_rule(code):
    assert class_code(class_name(code)) == code
    assert (to_binary(TrafficClass(code)) is BinaryLabel.MALICIOUS) == (code != 0)


def test_parse_class_accepts_several_spellings():
    assert parse_class("portscan") is TrafficClass.PORT_SCAN
    assert parse_class(3) is TrafficClass.PORT_SWEEP
    assert parse_class("5") is TrafficClass.SPYING
    assert parse_class(TrafficClass.WORM) is TrafficClass.WORM
    with pytest.raises(SchemaError):
        parse_class(9)


def test_flow_key_validation():
    with pytest.raises(SchemaError):
        FlowKey("", "b", 1.0)
    with pytest.raises(SchemaError):
        FlowKey("a", "b", math.nan)
    with pytest.raises(SchemaError):
        FlowKey("a", "b", -1.0)


def test_record_tcp_only_counters(rec):
    with pytest.raises(SchemaError):
        rec(l4="udp", syn_count=1)
    assert rec(l4="tcp", syn_count=2, urg_count=1).syn_count == 2


@pytest.mark.parametrize("field,value", [("bytes_src_to_dst", -1), ("duration", -0.5), ("src_port", 70000),
                                         ("l5", "gopher"), ("ip_options", {"bogus"}), ("login_failed", 1)])
def test_record_rejects_bad_fields(rec, field, value):
    with pytest.raises(SchemaError):
        rec(**{field: value})


def test_record_is_immutable(rec):
    r = rec()
    with pytest.raises(Exception):
        r.duration = 3.0
    assert isinstance(r, ConnectionRecord)
    assert r.src_ip == "10.0.0.1" and r.timestamp == 0.0


def test_feature_vector_rejects_non_finite():
    with pytest.raises(DataError):
        FeatureVector(FlowKey("a", "b", 0.0), (1.0, math.inf))
