import math

import pytest

from geoha.exceptions import ConfigError, ContractViolation
from geoha.inference import (
    EvidenceVector,
    InferenceConfig,
    aggregate,
    bayesian_update,
    evidence_from_telemetry,
    likelihood_ratio,
    noisy_or,
    predict,
)
from geoha.learner import SWITCHOVER, CptStore
from geoha.telemetry import DegradationReport, SiteBaseline, TelemetrySample, TelemetryStore


@pytest.mark.parametrize(
    "conds,expected", [([], 0.05), ([0.5], 0.525), ([0.3, 0.4], 1 - 0.95 * 0.7 * 0.6)]
)
def test_noisy_or_examples(conds, expected):
    assert noisy_or(0.05, conds) == pytest.approx(expected)


def test_noisy_or_rejects_bad_probability():
    with pytest.raises(ContractViolation):
        noisy_or(0.05, [1.2])


def test_bayes_examples():
    assert bayesian_update(0.3, EvidenceVector.neutral(["a", "b"])) == pytest.approx(0.3)
    assert bayesian_update(0.5, EvidenceVector((("lat", 3.0),))) == pytest.approx(0.75)
    assert bayesian_update(0.0, EvidenceVector((("lat", 5.0),))) == 0.0


def test_evidence_validation():
    with pytest.raises(ContractViolation):
        EvidenceVector((("lat", 0.0),))
    with pytest.raises(ConfigError):
        InferenceConfig(base_prior=0.0)


def test_likelihood_ratio_shape():
    assert likelihood_ratio(1.5, 1.5) == 1.0
    assert likelihood_ratio(2.0, 1.5) == pytest.approx(math.e)
    assert likelihood_ratio(100.0, 1.5) == 5.0
    assert likelihood_ratio(-1e9, 1.5) == 0.2


def _store(**so):
    store = CptStore()
    store.seed_priors({SWITCHOVER: so})
    return store


def test_predict_examples():
    assert predict(DegradationReport([], {}), CptStore()).posterior == pytest.approx(0.05)
    risk = predict(DegradationReport(["m7", "m5"], {}), _store(m7=0.3, m5=0.4), EvidenceVector())
    assert risk.posterior == pytest.approx(0.601)
    assert risk.contributing == [("m7", 0.3), ("m5", 0.4)]
    assert predict(DegradationReport(["mX"], {}), _store(m7=0.3)).posterior == pytest.approx(0.05)


def test_target_parameterizes_node():
    store = CptStore()
    store.seed_priors({"m11": {"m7": 0.5}})
    risk = predict(DegradationReport(["m7"], {}), store, target="m11")
    assert risk.target == "m11" and risk.p_eff == pytest.approx(0.525)


@pytest.mark.parametrize("n", [1, 10, 100])
def test_one_fold_per_degraded_service(n):
    services = [f"s{i}" for i in range(n)]
    store = _store(**{s: 0.01 for s in services[::2]})
    p_eff, _, folds = aggregate(services, store, SWITCHOVER, 0.05)
    assert folds == n
    assert p_eff == pytest.approx(noisy_or(0.05, [0.01] * len(services[::2])))


def test_evidence_from_telemetry_newest_sample():
    store = TelemetryStore()
    base = {"latency": SiteBaseline("latency", 100.0, 1.5)}
    store.ingest(TelemetrySample("m7", "latency", 400.0, 9.0, "application"))
    store.ingest(TelemetrySample("m7", "latency", 150.0, 10.0, "application"))
    ev = evidence_from_telemetry(store, 10.0, base, 5.0)
    assert ev.items == (("m7.latency", 1.0),)
