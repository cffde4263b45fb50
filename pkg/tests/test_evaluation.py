import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recmatch.evaluation import (EMPTY_LOG_EPS, PerturbSpec, ScenarioSet, corollary1_upper,
                                 enumerate_outcomes_value, exact_expected_utility, lse_smooth_max,
                                 monte_carlo_value, perturb_probabilities, sample_scenarios,
                                 scenario_value, surrogate_per_demand, surrogate_value)
from recmatch.instance import Instance, InstanceError, Recommendation
from conftest import random_instance, random_rec


def one_demand(u, p, theta=None):
    k = len(u)
    return Instance(1, k, theta or k, np.array([u], float), np.array([p], float))


def outcome_oracle(u, p, supplies):
    """Plain-Python sum over every accept/reject pattern."""
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=len(supplies)):
        pr, best = 1.0, 0.0
        for acc, j in zip(pattern, supplies):
            pr *= p[j] if acc else 1.0 - p[j]
            if acc:
                best = max(best, u[j])
        total += pr * best
    return total


def test_exact_examples():
    assert exact_expected_utility(one_demand([1.0], [0.8]), Recommendation(((0,),))).total == pytest.approx(0.8, abs=1e-15)
    inst = one_demand([10, 5], [0.5, 0.5])
    assert exact_expected_utility(inst, Recommendation(((0, 1),))).total == pytest.approx(6.25, abs=1e-12)
    inst = one_demand([10, 5], [0.3, 0.9])
    assert exact_expected_utility(inst, Recommendation(((1, 0),))).total == pytest.approx(6.15, abs=1e-12)
    assert exact_expected_utility(inst, Recommendation.empty(1)).total == 0.0


def test_enumeration_examples():
    inst = one_demand([3, 7, 2], [1, 1, 1])
    ev = enumerate_outcomes_value(inst, Recommendation(((0, 1, 2),)))
    assert ev.total == 7.0 and ev.method == "enumeration"
    inst = one_demand([3, 7, 2], [0, 0, 0])
    assert enumerate_outcomes_value(inst, Recommendation(((0, 1, 2),))).total == 0.0
    big = one_demand(list(range(21)), [0.5] * 21)
    with pytest.raises(InstanceError):
        enumerate_outcomes_value(big, Recommendation((tuple(range(21)),)))


def test_exact_and_enumeration_match_oracle(rng):
    for _ in range(300):
        nd, theta = int(rng.integers(1, 4)), int(rng.integers(1, 7))
        inst = random_instance(rng, nd, int(rng.integers(1, 13)), theta)
        rec = random_rec(rng, inst, fill=1.0)
        ex = exact_expected_utility(inst, rec)
        en = enumerate_outcomes_value(inst, rec)
        for i, row in enumerate(rec.lists):
            ref = outcome_oracle(inst.utilities[i], inst.accept_prob[i], row)
            assert ex.per_demand[i] == pytest.approx(ref, rel=1e-12, abs=1e-14)
            assert en.per_demand[i] == pytest.approx(ref, rel=1e-12, abs=1e-14)
        assert ex.total == pytest.approx(ex.per_demand.sum(), rel=1e-12)


def test_invalid_rec_rejected():
    inst = one_demand([1, 2], [0.5, 0.5], theta=1)
    with pytest.raises(InstanceError):
        exact_expected_utility(inst, Recommendation(((0, 1),)))


@st.composite
def instance_and_rec(draw, max_d=3, max_s=8, p_lo=0.0):
    nd = draw(st.integers(1, max_d))
    ns = draw(st.integers(1, max_s))
    theta = draw(st.integers(1, 5))
    unit = st.floats(0, 1, allow_nan=False)
    u = np.array(draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=nd * ns, max_size=nd * ns))).reshape(nd, ns)
    p = np.array(draw(st.lists(st.floats(p_lo, 1, allow_nan=False), min_size=nd * ns, max_size=nd * ns))).reshape(nd, ns)
    owner = draw(st.lists(st.integers(-1, nd - 1), min_size=ns, max_size=ns))
    lists = [[] for _ in range(nd)]
    for j, i in enumerate(owner):
        if i >= 0 and len(lists[i]) < theta:
            lists[i].append(j)
    inst = Instance(nd, ns, theta, u, p)
    return inst, Recommendation(tuple(tuple(r) for r in lists)), draw(st.randoms(use_true_random=False))


@settings(max_examples=200, deadline=None)
@given(instance_and_rec())
def test_order_invariance(case):
    inst, rec, rnd = case
    shuffled = Recommendation(tuple(tuple(rnd.sample(r, len(r))) for r in rec.lists))
    a = exact_expected_utility(inst, rec).per_demand
    b = exact_expected_utility(inst, shuffled).per_demand
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(instance_and_rec(), st.floats(0.01, 100))
def test_scaling_equivariance(case, c):
    inst, rec, _ = case
    scaled = inst.replace(utilities=inst.utilities * c)
    assert exact_expected_utility(scaled, rec).total == pytest.approx(
        c * exact_expected_utility(inst, rec).total, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(instance_and_rec())
def test_adding_supply_never_hurts(case):
    inst, rec, _ = case
    used = {j for r in rec.lists for j in r}
    free = [j for j in range(inst.num_supplies) if j not in used]
    base = exact_expected_utility(inst, rec).per_demand
    for i, row in enumerate(rec.lists):
        if free and len(row) < inst.theta:
            lists = list(rec.lists)
            lists[i] = row + (free[0],)
            bigger = exact_expected_utility(inst, Recommendation(tuple(lists))).per_demand[i]
            assert bigger >= base[i] - 1e-12 * max(1.0, base[i])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=30), st.floats(1e-3, 10))
def test_smooth_max_sandwich(z, tau):
    v = lse_smooth_max(z, tau)
    m = max(z)
    slack = 1e-12 * max(1.0, abs(m))
    assert m - slack <= v <= m + tau * math.log(len(z)) + slack


def lemma2_check(inst, rec, tau):
    ex = exact_expected_utility(inst, rec).per_demand
    sur = surrogate_per_demand(inst, rec, tau)
    u, p, theta = inst.utilities, inst.accept_prob, inst.theta
    for i, row in enumerate(rec.lists):
        if not row:
            continue
        cols = list(row)
        big_u = u[i, cols].max()
        p_lo, p_hi = p[i, cols].min(), p[i, cols].max()
        q_bar = 1 - (1 - p_hi) ** theta
        tol = 1e-12 * max(1.0, big_u)
        assert ex[i] >= p_lo * big_u - tol
        assert ex[i] <= q_bar * big_u + tol
        assert sur[i] >= tau * math.log(p_lo) + big_u - tol
        assert sur[i] <= tau * math.log(p_hi) + big_u + tau * math.log(theta) + tol


@settings(max_examples=300, deadline=None)
@given(instance_and_rec(p_lo=0.01), st.floats(1e-3, 2))
def test_lemma2_inequalities(case, tau):
    inst, rec, _ = case
    lemma2_check(inst, rec, tau)


@settings(max_examples=300, deadline=None)
@given(instance_and_rec(), st.floats(1e-3, 2))
def test_corollary1_dominates_expected_value(case, tau):
    inst, rec, _ = case
    ub = corollary1_upper(inst, rec, tau)
    ev = enumerate_outcomes_value(inst, rec).total
    assert ub >= ev - 1e-12 * max(1.0, ev)


def test_corollary1_examples():
    inst = one_demand([0.7], [0.4])
    ub = corollary1_upper(inst, Recommendation(((0,),)), 0.1)
    assert ub == pytest.approx(0.1 * math.log((math.exp(7) - 1) * 0.4 + 1), rel=1e-14)
    assert ub >= 0.4 * 0.7
    inst = one_demand([0.5, 0.9, 0.2], [1, 1, 1])
    ub = corollary1_upper(inst, Recommendation(((0, 1, 2),)), 0.05)
    assert ub == pytest.approx(lse_smooth_max([0.5, 0.9, 0.2], 0.05), rel=1e-14)
    assert ub >= 0.9
    assert corollary1_upper(inst, Recommendation.empty(1), 0.05) == 0.0
    with pytest.raises(InstanceError):
        corollary1_upper(inst, Recommendation.empty(1), 0.0)


def test_surrogate_examples():
    assert surrogate_value(one_demand([1.0], [1.0]), Recommendation(((0,),)), 1.0) == pytest.approx(1.0, abs=1e-15)
    v = surrogate_value(one_demand([2.0], [0.5]), Recommendation(((0,),)), 1.0)
    assert v == pytest.approx(1.3068528194400546, abs=1e-14)
    assert surrogate_value(one_demand([2.0], [0.5]), Recommendation.empty(1), 0.5) == 0.5 * EMPTY_LOG_EPS
    assert surrogate_value(one_demand([2.0], [0.5]), Recommendation.empty(1), 0.5, log_eps=math.log(1e-12)) \
        == pytest.approx(0.5 * math.log(1e-12))
    with pytest.raises(InstanceError):
        surrogate_value(one_demand([2.0], [0.5]), Recommendation.empty(1), -1.0)


def test_surrogate_matches_high_precision():
    rng = np.random.default_rng(77)
    mpmath.mp.dps = 60
    for _ in range(20):
        inst = random_instance(rng, 4, 12, 4, p_range=(0.05, 1.0), u_range=(0.4, 1.0))
        rec = random_rec(rng, inst)
        for tau in (0.01, 1e-4):
            val = surrogate_value(inst, rec, tau)
            assert math.isfinite(val)
            ref = mpmath.mpf(0)
            for i, row in enumerate(rec.lists):
                s = mpmath.exp(EMPTY_LOG_EPS)
                for j in row:
                    s += mpmath.exp(mpmath.mpf(inst.utilities[i, j]) / tau) * inst.accept_prob[i, j]
                ref += tau * mpmath.log(s)
            assert val == pytest.approx(float(ref), rel=1e-12)


def test_scenario_value_examples():
    inst = one_demand([10.0, 5.0], [0.5, 0.5])
    rec = Recommendation(((0, 1),))
    zeros = ScenarioSet(np.zeros((3, 1, 2), bool), seed=0)
    ones = ScenarioSet(np.ones((3, 1, 2), bool), seed=0)
    assert scenario_value(inst, rec, zeros).total == 0.0
    assert scenario_value(inst, rec, ones).total == 10.0
    only_second = ScenarioSet(np.array([[[False, True]]]), seed=0)
    assert scenario_value(inst, rec, only_second).total == 5.0
    with pytest.raises(InstanceError):
        scenario_value(inst, rec, ScenarioSet(np.ones((1, 2, 2), bool), seed=0))


def test_scenario_blocks_reduce_to_total(rng):
    inst = random_instance(rng, 3, 7, 3)
    rec = random_rec(rng, inst)
    sc = sample_scenarios(inst, 1000, seed=4)
    full = scenario_value(inst, rec, sc).total
    parts = [scenario_value(inst, rec, ScenarioSet(sc.realizations[k:k + 250], 4)).total for k in range(0, 1000, 250)]
    assert np.mean(parts) == pytest.approx(full, rel=1e-12)


def test_sampling_marginals_and_copula():
    p = np.array([[0.1, 0.5, 0.9], [0.3, 0.5, 0.7]])
    inst = Instance(2, 3, 2, np.ones((2, 3)), p)
    for rho in (0.0, 0.6, 1.0):
        sc = sample_scenarios(inst, 100_000, seed=11, correlation=rho)
        assert np.all(np.abs(sc.realizations.mean(axis=0) - p) <= 0.01)
    a = sample_scenarios(inst, 500, seed=3)
    b = sample_scenarios(inst, 500, seed=3, correlation=0.0)
    assert np.array_equal(a.realizations, b.realizations)
    same = Instance(3, 2, 1, np.ones((3, 2)), np.tile([0.3, 0.8], (3, 1)))
    sc = sample_scenarios(same, 2000, seed=5, correlation=1.0).realizations
    assert np.all(sc[:, 0, :] == sc[:, 1, :]) and np.all(sc[:, 1, :] == sc[:, 2, :])
    sc = sample_scenarios(same, 50_000, seed=5, correlation=0.5).realizations.astype(float)
    within = np.corrcoef(sc[:, 0, 0], sc[:, 1, 0])[0, 1]
    across = np.corrcoef(sc[:, 0, 0], sc[:, 1, 1])[0, 1]
    assert within > 0.15 and abs(across) < 0.02
    with pytest.raises(InstanceError):
        sample_scenarios(inst, 10, seed=0, correlation=1.5)
    with pytest.raises(InstanceError):
        sample_scenarios(inst, 0, seed=0)


def test_monte_carlo_examples(rng):
    inst = random_instance(rng, 3, 6, 2).replace(accept_prob=np.ones((3, 6)))
    rec = random_rec(rng, inst)
    mc = monte_carlo_value(inst, rec, 1000, seed=1)
    assert mc.total == pytest.approx(exact_expected_utility(inst, rec).total, rel=1e-12)
    assert mc.stderr == 0.0
    inst = random_instance(rng, 3, 6, 2)
    one = monte_carlo_value(inst, rec, 1, seed=9)
    assert one.stderr == 0.0
    assert one.samples == 1 and one.method == "monte_carlo"


def test_monte_carlo_unbiased(rng):
    inst = random_instance(rng, 2, 5, 3, p_range=(0.2, 0.9))
    rec = random_rec(rng, inst, fill=1.0)
    exact = exact_expected_utility(inst, rec).total
    ests = [monte_carlo_value(inst, rec, 2000, seed=s) for s in range(200)]
    mean = np.mean([e.total for e in ests])
    se = np.std([e.total for e in ests], ddof=1) / math.sqrt(len(ests))
    assert abs(mean - exact) <= 3 * se
    # reported stderr agrees with the spread across seeds
    assert np.mean([e.stderr for e in ests]) == pytest.approx(se * math.sqrt(len(ests)), rel=0.1)


def test_monte_carlo_chunking_is_stable(rng, monkeypatch):
    import recmatch.evaluation as ev
    inst = random_instance(rng, 2, 5, 3)
    rec = random_rec(rng, inst)
    a = monte_carlo_value(inst, rec, 5000, seed=2)
    monkeypatch.setattr(ev, "MC_CHUNK_CELLS", 1000)
    b = monte_carlo_value(inst, rec, 5000, seed=2)
    exact = exact_expected_utility(inst, rec).total
    assert abs(b.total - exact) <= 4 * b.stderr + 1e-12
    assert a.samples == b.samples == 5000


def test_perturbations():
    p = np.array([[0.02, 0.98, 0.5, 0.0, 1.0]])
    inst = Instance(1, 5, 2, np.arange(5.0)[None, :], p)
    lo = perturb_probabilities(inst, PerturbSpec("OutL", seed=1)).accept_prob
    assert 0 <= lo[0, 0] <= 0.02 and 0.93 <= lo[0, 1] <= 0.98 and np.all(lo <= p)
    hi = perturb_probabilities(inst, PerturbSpec("OutH", seed=1)).accept_prob
    assert 0.98 <= hi[0, 1] <= 1.0 and np.all(hi >= p) and hi[0, 4] == 1.0
    ns = perturb_probabilities(inst, PerturbSpec("OutNS", seed=4))
    assert ns == perturb_probabilities(inst, PerturbSpec("OutNS", seed=4))
    assert np.all(np.abs(ns.accept_prob - p) <= 0.025 + 1e-15)
    assert np.array_equal(ns.utilities, inst.utilities)
    nl = perturb_probabilities(inst, PerturbSpec("OutNL", seed=4)).accept_prob
    assert np.all(np.abs(nl - p) <= 0.1 + 1e-15) and nl.min() >= 0 and nl.max() <= 1
    zero = perturb_probabilities(inst, PerturbSpec("OutNS", widths=(0, 0)))
    assert np.array_equal(zero.accept_prob, p)
    with pytest.raises(InstanceError):
        PerturbSpec("OutX")
