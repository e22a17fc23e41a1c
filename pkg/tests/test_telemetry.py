import json

import pytest
from hypothesis import given, strategies as st

from geoha.exceptions import ConfigError, ContractViolation, MonotonicityError
from geoha.telemetry import (
    SiteBaseline,
    TelemetrySample,
    TelemetryStore,
    Tier,
    load_baselines,
    normalize,
    read_log,
    replay,
)

LATENCY = {"latency": SiteBaseline("latency", 100.0, 1.5)}


def sample(service="m7", metric="latency", value=100.0, t=0.0, tier="application"):
    return TelemetrySample(service, metric, value, t, tier)


def test_ingest_then_query_returns_sample():
    store = TelemetryStore()
    s = sample(value=120, t=700)
    assert store.ingest(s)
    assert store.query_window("m7", 0, 1e9) == [s]


def test_out_of_order_sample_rejected():
    store = TelemetryStore()
    store.ingest(sample(t=700))
    with pytest.raises(MonotonicityError):
        store.ingest(sample(t=699))


def test_other_stream_may_be_older():
    store = TelemetryStore()
    store.ingest(sample(t=700))
    store.ingest(sample(metric="cpu", t=10))
    assert len(store) == 2


def test_cardinality_across_services():
    store = TelemetryStore()
    for i, svc in enumerate(["m7", "m5", "m11"]):
        store.ingest(sample(service=svc, t=float(i)))
    assert len(store.query_window(None, 0, float("inf"))) == 3


def test_window_is_inclusive_and_ordered():
    store = TelemetryStore()
    for t in (1.0, 2.0, 3.0):
        store.ingest(sample(t=t))
    assert [s.t for s in store.query_window("m7", 2, 3)] == [2.0, 3.0]
    store.ingest(sample(t=5.0))
    assert [s.t for s in store.query_window("m7", 5, 5)] == [5.0]


def test_empty_store_and_unknown_service():
    store = TelemetryStore()
    assert store.query_window("m7", 0, 10) == []
    store.ingest(sample())
    assert store.query_window("nope", 0, 10) == []


def test_query_rejects_inverted_window():
    with pytest.raises(ContractViolation):
        TelemetryStore().query_window("m7", 5, 4)


def test_invalid_sample_fields():
    with pytest.raises(ContractViolation):
        sample(t=-1)
    with pytest.raises(ContractViolation):
        sample(tier="disk")
    assert sample(tier="csg").tier is Tier.CSG
    assert {t.value for t in Tier} == {"node", "network", "application", "csg"}


@pytest.mark.parametrize("value,expected", [(200, 2.0), (100, 1.0), (0, 0.0)])
def test_normalize_ratio(value, expected):
    assert normalize(sample(value=value), LATENCY["latency"]) == expected


def test_normalize_metric_mismatch():
    with pytest.raises(ConfigError):
        normalize(sample(metric="cpu"), LATENCY["latency"])


def test_baseline_validation():
    with pytest.raises(ConfigError):
        SiteBaseline("latency", 0.0, 1.5)
    with pytest.raises(ConfigError):
        SiteBaseline("latency", 1.0, 0.0)


def test_degraded_above_threshold():
    store = TelemetryStore()
    store.ingest(sample(value=200, t=10))
    report = store.assess_degradation(10, LATENCY, 5)
    assert report.degraded_services == ["m7"]
    assert report.evidence["m7"] == [("latency", 2.0)]


def test_healthy_and_boundary_not_degraded():
    store = TelemetryStore()
    store.ingest(sample(value=100, t=10))
    store.ingest(sample(service="m5", value=150, t=10))
    report = store.assess_degradation(10, LATENCY, 5)
    assert report.degraded_services == []


def test_assess_only_looks_inside_window():
    store = TelemetryStore()
    store.ingest(sample(value=300, t=1))
    store.ingest(sample(value=100, t=20))
    assert store.assess_degradation(20, LATENCY, 5).degraded_services == []
    assert store.assess_degradation(20, LATENCY, 19).degraded_services == ["m7"]
    with pytest.raises(ContractViolation):
        store.assess_degradation(20, LATENCY, 0)


def test_empty_store_empty_report():
    assert TelemetryStore().assess_degradation(0, LATENCY, 1).degraded_services == []


def test_horizon_bounds_memory():
    store = TelemetryStore(horizon=10)
    for t in range(30):
        store.ingest(sample(t=float(t)))
    assert [s.t for s in store.query_window("m7", 0, 100)][0] == 19.0


def test_log_roundtrip(tmp_path):
    log = tmp_path / "telemetry.jsonl"
    store = TelemetryStore(log_path=log)
    store.ingest(sample(value=120, t=700))
    line = log.read_text().strip()
    assert json.loads(line) == {
        "service": "m7", "metric": "latency", "value": 120.0, "t": 700.0, "tier": "application"
    }
    assert read_log(log) == [sample(value=120, t=700)]
    assert replay(log).query_window("m7", 0, 1e9) == [sample(value=120, t=700)]


def test_load_baselines(tmp_path):
    path = tmp_path / "b.json"
    path.write_text(json.dumps({"latency": {"baseline_value": 100, "degrade_threshold": 1.5}}))
    assert load_baselines(path) == LATENCY
    with pytest.raises(ConfigError):
        load_baselines(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_baselines({"latency": {"baseline_value": 1}})


values = st.floats(0, 1000, allow_nan=False)
times = st.lists(st.floats(0, 1000, allow_nan=False), min_size=1, max_size=30).map(sorted)


@given(times, values)
def test_roundtrip_property(ts, v):
    store = TelemetryStore(horizon=1e6)
    samples = [sample(value=v, t=t) for t in ts]
    store.extend(samples)
    assert store.query_window("m7", ts[0], ts[-1]) == samples


@given(st.lists(st.tuples(st.sampled_from(["m7", "m5", "m11"]), values), max_size=20), values)
def test_assess_idempotent_and_monotone(readings, extra):
    store = TelemetryStore()
    for i, (svc, v) in enumerate(readings):
        store.ingest(sample(service=svc, value=v, t=float(i)))
    now = float(len(readings))
    first = store.assess_degradation(now, LATENCY, 1e6)
    again = store.assess_degradation(now, LATENCY, 1e6)
    assert first == again
    store.ingest(sample(service="m11", value=200 + extra, t=now))
    after = store.assess_degradation(now, LATENCY, 1e6)
    assert set(first.degraded_services) <= set(after.degraded_services)
    assert "m11" in after.degraded_services
    for svc in after.degraded_services:
        assert any(r > 1.5 for _, r in after.evidence[svc])
