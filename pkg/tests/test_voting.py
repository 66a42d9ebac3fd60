import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontlab.voting import (ParticleCapExceeded, StepVote, Tree, VotingRules, estimate_u,
                             identity_check, majority_rules, mckean_nonlinearity, path_rng,
                             pde_reference, root_vote_probability, simulate_tree, tilted_rules,
                             vote_propagate, voting_nonlinearity)


def test_rules_validation():
    with pytest.raises(ValueError):
        VotingRules(2, (0.0, 0.5))
    with pytest.raises(ValueError):
        VotingRules(2, (0.0, 1.5, 1.0))
    with pytest.raises(ValueError):
        tilted_rules(3, 0.6)
    with pytest.raises(ValueError):
        tilted_rules(2, 0.0)
    r = tilted_rules(3, 0.5)
    assert r.mu == pytest.approx((0.0, 0.5, 1.0, 1.0))
    assert r.mu[0] == 0 and r.mu[-1] == 1
    assert majority_rules(3).mu == (0.0, 0.0, 1.0, 1.0)


def test_tree_t0_single_leaf(rng):
    tr = simulate_tree(tilted_rules(2, 1.0), 0.0, 1.5, rng)
    assert tr.size == 1 and list(tr.leaves) == [0] and tr.position[0] == 1.5


def test_tree_no_branching_is_brownian(rng):
    rules = VotingRules(2, (0.0, 0.5, 1.0), beta=0.0)
    pos = np.array([simulate_tree(rules, 2.0, 1.0, rng).position[0] for _ in range(20000)])
    assert abs(pos.mean() - 1.0) < 3 * math.sqrt(4.0 / pos.size)
    assert pos.var() == pytest.approx(4.0, rel=0.05)


def test_yule_mean_leaf_count():
    rules = tilted_rules(2, 1.0)
    counts = np.array([simulate_tree(rules, 1.0, 0.0, path_rng(7, i)).leaves.size
                       for i in range(10000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - math.e) < 3 * se


def test_particle_cap():
    with pytest.raises(ParticleCapExceeded, match="by time"):
        simulate_tree(tilted_rules(2, 1.0), 20.0, 0.0, path_rng(0, 0), cap=200)


def test_vote_constant_g(rng):
    rules = tilted_rules(3, 0.5)
    for _ in range(20):
        tr = simulate_tree(rules, 1.5, 0.0, rng)
        assert vote_propagate(tr, lambda x: 1.0, rules, rng) == 1
        assert vote_propagate(tr, lambda x: 0.0, rules, rng) == 0


def test_depth_one_enumeration():
    tree = Tree(np.array([-1, 0, 0]), [[1, 2], [], []], np.array([0.0, 0.3, -0.2]), 1.0)
    mu = (0.0, 0.7, 1.0)
    rules = VotingRules(2, mu)
    p = root_vote_probability(tree, lambda x: 0.5, rules)
    assert p == pytest.approx(mu[1] * 2 * 0.25 + mu[2] * 0.25, abs=1e-15)
    # the sampled vote has the same law
    votes = [vote_propagate(tree, lambda x: 0.5, rules, path_rng(3, i)) for i in range(20000)]
    assert abs(np.mean(votes) - p) < 3 * math.sqrt(p * (1 - p) / len(votes))


def test_estimate_t0_and_validation():
    est = estimate_u(tilted_rules(2, 1.0), StepVote(0.0), 0.0, [-1.0, 0.0, 1.0], 100)
    assert list(est.mean) == [1.0, 1.0, 0.0] and np.all(est.se == 0)
    with pytest.raises(ValueError):
        estimate_u(tilted_rules(2, 1.0), StepVote(0.0), 1.0, [0.0], 99)


def test_estimate_deterministic_and_worker_independent():
    rules = tilted_rules(2, 1.0)
    a = estimate_u(rules, StepVote(), 0.5, [-0.5, 0.5], 400, seed=11)
    b = estimate_u(rules, StepVote(), 0.5, [-0.5, 0.5], 400, seed=11, workers=2)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.se, b.se)
    c = estimate_u(rules, StepVote(), 0.5, [-0.5, 0.5], 400, seed=12)
    assert not np.array_equal(a.mean, c.mean)
    assert np.all((a.mean >= 0) & (a.mean <= 1))


def test_monotone_in_g_under_shared_seed():
    rules = tilted_rules(3, 0.5)
    lo = estimate_u(rules, StepVote(-0.3), 1.0, np.linspace(-2, 2, 5), 2000, seed=5)
    hi = estimate_u(rules, StepVote(0.4), 1.0, np.linspace(-2, 2, 5), 2000, seed=5)
    # the coupling makes the ordering hold path by path
    assert np.all(lo.mean <= hi.mean)


def test_small_mc_against_pde():
    rules = tilted_rules(2, 1.0)
    xs = np.array([-1.0, 0.0, 1.0])
    est = estimate_u(rules, StepVote(), 1.0, xs, 20000, seed=1)
    ref = pde_reference(rules, 1.0, xs)
    assert np.all(np.abs(est.mean - ref) <= 3 * est.se)


def test_nonlinearity_examples():
    maj = voting_nonlinearity(3, (0, 0, 1, 1))
    assert maj.coeffs == pytest.approx([0, -1, 3, -2], abs=1e-14)
    u = np.linspace(0, 1, 11)
    assert maj.poly(u) == pytest.approx(u * (1 - u) * (2 * u - 1), abs=1e-14)
    assert not maj.monostable
    tilt = voting_nonlinearity(2, tilted_rules(2, 1.0).mu)
    assert tilt.coeffs == pytest.approx([0, 1, -1], abs=1e-14) and tilt.monostable
    for n in (1, 2, 5):
        flat = voting_nonlinearity(n, [k / n for k in range(n + 1)])
        assert np.max(np.abs(flat.poly(u))) < 1e-14


@given(n=st.integers(2, 7), frac=st.floats(0.01, 1.0), beta=st.floats(0.1, 3.0))
@settings(max_examples=40, deadline=None)
def test_tilted_table_matches_power_form(n, frac, beta):
    gamma = frac / (n - 1)
    f = voting_nonlinearity(n, tilted_rules(n, gamma, beta).mu, beta)
    target = np.zeros(n + 1)
    target[1], target[n] = beta * gamma, -beta * gamma
    c = np.zeros(n + 1)
    c[: f.coeffs.size] = f.coeffs
    assert np.max(np.abs(c - target)) < 1e-12


def test_identity_examples():
    lhs, rhs, d = identity_check(2, 1.0, 0.5)
    assert lhs == pytest.approx(0.25) and rhs == pytest.approx(0.25) and d < 1e-15
    for u in (0.0, 1.0):
        lhs, rhs, d = identity_check(4, 0.2, u)
        assert lhs == 0 and abs(rhs) < 1e-15


def test_identity_random_cases(rng):
    for _ in range(100):
        n = int(rng.integers(2, 9))
        gamma = float(rng.uniform(1e-3, 1.0 / (n - 1)))
        assert identity_check(n, gamma, float(rng.uniform()))[2] < 1e-12


def test_mckean_examples():
    f2 = mckean_nonlinearity(1.0, {2: 1.0})
    assert f2.coeffs == pytest.approx([0, 1, -1], abs=1e-14)
    f3 = mckean_nonlinearity(1.0, {3: 1.0})
    assert f3.poly(0.5) == pytest.approx(0.375)
    with pytest.raises(ValueError):
        mckean_nonlinearity(1.0, {2: 0.5})
    with pytest.raises(ValueError):
        mckean_nonlinearity(1.0, {2: 1.5, 3: -0.5})


@given(p=st.lists(st.floats(0, 1), min_size=2, max_size=6).filter(lambda v: sum(v) > 0.1),
       gamma=st.floats(0.1, 3.0))
@settings(max_examples=40, deadline=None)
def test_mckean_properties(p, gamma):
    probs = np.array(p) / sum(p)
    probs[-1] = 1.0 - probs[:-1].sum()
    if probs[-1] < 0:
        return
    f = mckean_nonlinearity(gamma, list(probs))
    assert abs(f.poly(0.0)) < 1e-12 and abs(f.poly(1.0) - gamma * (-probs[0])) < 1e-12
    mean_k = float(np.dot(np.arange(probs.size), probs))
    assert f.poly.deriv()(0.0) == pytest.approx(gamma * (mean_k - 1), abs=1e-10)
