import json

import pytest
from hypothesis import given, strategies as st

from geoha.cascade import CascadeDetector, FailureEvent
from geoha.exceptions import ConfigError, ContractViolation
from geoha.inference import EvidenceVector, predict
from geoha.learner import (
    SWITCHOVER,
    CptEntry,
    CptStore,
    LearnerConfig,
    OnlineCptLearner,
    adaptive_rate,
    apply_cascades,
    load_priors,
    update_cpt,
)
from geoha.telemetry import DegradationReport


@pytest.mark.parametrize("n_obs,expected", [(0, 0.7), (5, 0.8), (100, 0.89)])
def test_adaptive_rate_examples(n_obs, expected):
    assert adaptive_rate(n_obs, LearnerConfig(0.7, 10)) == pytest.approx(expected)


def test_config_validation():
    with pytest.raises(ConfigError):
        LearnerConfig(0.9, 10)
    with pytest.raises(ConfigError):
        LearnerConfig(0.5, 0)
    with pytest.raises(ContractViolation):
        CptEntry("a", "b", 1.5, 0)


def test_update_cpt_examples():
    # n_obs=5 gives alpha 0.8
    new = update_cpt(CptEntry("a", "b", 0.5, 5), 1.0)
    assert new.probability == pytest.approx(0.6)
    assert new.n_obs == 6
    assert update_cpt(CptEntry("a", "b", 0.42, 3), 0.42).probability == pytest.approx(0.42)
    assert update_cpt(CptEntry("a", "b", 0.0, 0), 0.0).probability == 0.0


def _db_with(*events):
    db = CascadeDetector()
    obs = []
    for svc, t in events:
        obs.extend(db.record_failure(FailureEvent(svc, t)))
    return db, obs


def test_first_cascade_with_prior():
    store = CptStore()
    store.seed_priors({("m7", "m11"): 0.3})
    db, obs = _db_with(("m7", 710), ("m11", 730))
    updates = apply_cascades(obs, db, store)
    assert updates == [("m7", "m11", pytest.approx(0.51))]
    assert store.get("m11", "m7").n_obs == 1


def test_empty_observations_change_nothing():
    store = CptStore()
    store.seed_priors({("m7", "m11"): 0.3})
    before = store.snapshot()
    assert apply_cascades([], CascadeDetector(), store) == []
    assert store == before


def test_second_update_uses_n_obs_one():
    store = CptStore()
    store.seed_priors({("m7", "m11"): 0.3})
    db, obs = _db_with(("m7", 710), ("m11", 730))
    apply_cascades(obs, db, store)
    db.record_failure(FailureEvent("m7", 1000))
    obs2 = db.record_failure(FailureEvent("m11", 1020))
    apply_cascades(obs2, db, store)
    # replay oracle
    alpha1 = 0.7 * 0.9 + 0.9 * 0.1
    assert store.probability("m11", "m7") == pytest.approx(alpha1 * 0.51 + (1 - alpha1) * 1.0)
    assert store.get("m11", "m7").n_obs == 2


def test_seed_priors_visible_to_inference():
    store = CptStore()
    store.seed_priors({("m11", SWITCHOVER): 0.6})
    report = DegradationReport(["m11"], {})
    assert predict(report, store, EvidenceVector()).p_eff == pytest.approx(1 - 0.95 * 0.4)
    assert store.probability(SWITCHOVER, "m11") == 0.6


def test_empty_priors_skip_everything():
    store = CptStore()
    store.seed_priors({})
    assert len(store) == 0
    assert predict(DegradationReport(["m7"], {}), store).posterior == 0.05


def test_seed_then_update_keeps_prior():
    store = CptStore()
    store.seed_priors({"m11": {"m7": 0.3}})
    db, obs = _db_with(("m7", 10), ("m11", 20))
    apply_cascades(obs, db, store)
    p = store.probability("m11", "m7")
    assert 0.3 < p < 1.0


def test_csg_cascade_trains_switchover_entry():
    store = CptStore()
    learner = OnlineCptLearner(store, csg=("m11",))
    db, obs = _db_with(("m7", 10), ("m11", 20))
    db.confirm_switchover(20, exclude=("m11",))
    updates = learner.apply_cascades(obs, db)
    assert ("m7", SWITCHOVER, pytest.approx(0.3)) in updates


def test_false_alarm_decays_switchover_entry():
    store = CptStore()
    store.seed_priors({SWITCHOVER: {"m7": 0.8}})
    learner = OnlineCptLearner(store, csg=("m11",))
    db, _ = _db_with(("m7", 10), ("m11", 20))
    db.confirm_switchover(20, exclude=("m11",))
    db.record_failure(FailureEvent("m7", 500))  # nothing follows
    learner.apply_confirmation(["m7"], db)
    # ratio 1/2 pulls the entry down: 0.7*0.8 + 0.3*0.5
    assert store.probability(SWITCHOVER, "m7") == pytest.approx(0.71)


def test_store_roundtrip(tmp_path):
    store = CptStore()
    store.seed_priors({SWITCHOVER: {"m7": 0.17}, "m11": {"m5": 0.2}})
    path = tmp_path / "cpt.json"
    store.save(path)
    data = json.loads(path.read_text())
    assert data == {"SO": {"m7": {"p": 0.17, "n_obs": 0}}, "m11": {"m5": {"p": 0.2, "n_obs": 0}}}
    assert CptStore.load(path) == store
    with pytest.raises(ConfigError):
        CptStore.load(tmp_path / "missing.json")


def test_load_priors_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_priors(tmp_path / "nope.json")


trace = st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(0, 30)), max_size=40)


@given(trace)
def test_replay_determinism(raw):
    def run():
        store = CptStore()
        store.seed_priors({("a", "b"): 0.3})
        db = CascadeDetector()
        learner = OnlineCptLearner(store, csg=("c",))
        t = 0
        for svc, gap in raw:
            t += gap
            learner.apply_cascades(db.record_failure(FailureEvent(svc, t)), db)
        return store

    first, second = run(), run()
    assert first == second
    for entry in first:
        assert 0.0 <= entry.probability <= 1.0
