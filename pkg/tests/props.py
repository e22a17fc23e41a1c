"""Randomized math properties, driven by the acceptance suite.

Each function is a hypothesis test; calling it runs the full search.
"""

from collections import Counter

from hypothesis import given, settings, strategies as st

from geoha.inference import EvidenceVector, bayesian_update, noisy_or
from geoha.learner import CptEntry, LearnerConfig, adaptive_rate, update_cpt
from geoha.policy import Decision, DecisionState, Thresholds, decide

N = 1000
prob = st.floats(0.0, 1.0, allow_nan=False)
open_prob = st.floats(1e-6, 1 - 1e-6, allow_nan=False)
ratio = st.floats(0.2, 5.0, allow_nan=False)
alpha = st.floats(0.0, 0.899, allow_nan=False)
counters = Counter()


@settings(max_examples=N, deadline=None, database=None)
@given(prob, st.lists(prob, max_size=12), st.randoms(use_true_random=False))
def noisy_or_bounds_and_permutation(base, conds, rnd):
    counters["noisy_or_bounds_and_permutation"] += 1
    p = noisy_or(base, conds)
    assert 0.0 <= p <= 1.0
    assert p >= base - 1e-12
    shuffled = list(conds)
    rnd.shuffle(shuffled)
    assert abs(noisy_or(base, shuffled) - p) < 1e-12


@settings(max_examples=N, deadline=None, database=None)
@given(st.floats(0.0, 0.99), st.lists(st.floats(0, 0.99), max_size=10), st.floats(1e-3, 1.0))
def noisy_or_monotone(base, conds, extra):
    counters["noisy_or_monotone"] += 1
    before = noisy_or(base, conds)
    after = noisy_or(base, conds + [extra])
    if before < 1.0:
        assert after > before


@settings(max_examples=N, deadline=None, database=None)
@given(st.integers(0, 10_000), st.integers(0, 50), alpha, st.integers(1, 100))
def adaptive_rate_monotone_and_capped(n, k, a, n_req):
    counters["adaptive_rate_monotone_and_capped"] += 1
    cfg = LearnerConfig(a, n_req)
    lo, hi = adaptive_rate(n, cfg), adaptive_rate(n + k, cfg)
    assert lo <= hi + 1e-15
    assert hi < 0.9
    assert hi <= 0.9 * 0.95 + a * 0.05 + 1e-12


@settings(max_examples=N, deadline=None, database=None)
@given(prob, prob, st.integers(0, 1000), alpha)
def update_cpt_convex(old, obs, n_obs, a):
    counters["update_cpt_convex"] += 1
    cfg = LearnerConfig(a, 10)
    new = update_cpt(CptEntry("a", "b", old, n_obs), obs, cfg)
    assert min(old, obs) - 1e-12 <= new.probability <= max(old, obs) + 1e-12
    assert new.n_obs == n_obs + 1
    assert abs(new.probability - old) <= (1 - adaptive_rate(n_obs, cfg)) + 1e-12


@settings(max_examples=N, deadline=None, database=None)
@given(prob, st.integers(0, 6))
def bayes_neutral_identity(p, n_metrics):
    counters["bayes_neutral_identity"] += 1
    ev = EvidenceVector.neutral([f"m{i}" for i in range(n_metrics)])
    assert bayesian_update(p, ev) == p


@settings(max_examples=N, deadline=None, database=None)
@given(open_prob, st.lists(ratio, min_size=1, max_size=5), st.floats(1.01, 5.0), st.integers(0, 4))
def bayes_monotone_in_ratio(p, ratios, factor, idx):
    counters["bayes_monotone_in_ratio"] += 1
    idx %= len(ratios)
    raised = list(ratios)
    raised[idx] *= factor
    lo = bayesian_update(p, EvidenceVector(tuple((f"m{i}", r) for i, r in enumerate(ratios))))
    hi = bayesian_update(p, EvidenceVector(tuple((f"m{i}", r) for i, r in enumerate(raised))))
    assert 0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0
    assert hi >= lo
    if 1e-9 < lo < 1 - 1e-9:
        assert hi > lo


@settings(max_examples=N, deadline=None, database=None)
@given(
    st.floats(0.06, 0.94),
    st.floats(0.001, 0.05),
    st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50),
    st.sampled_from(list(Decision)),
)
def decide_no_flap(tau, delta, unit, start):
    counters["decide_no_flap"] += 1
    th = Thresholds(tau, delta)
    state = DecisionState(start, start)
    for u in unit:
        p = th.lower + u * (th.upper - th.lower)
        state = decide(p, state, th)
        assert state.decision is start
    # the band edges themselves hold the previous state
    for p in (th.upper, th.lower):
        assert decide(p, DecisionState(start, start), th).decision is start


ALL = [
    noisy_or_bounds_and_permutation,
    noisy_or_monotone,
    adaptive_rate_monotone_and_capped,
    update_cpt_convex,
    bayes_neutral_identity,
    bayes_monotone_in_ratio,
    decide_no_flap,
]
