"""Branching Brownian motion with voting, and the nonlinearities it induces.

Particles branch at rate beta into n children and diffuse with variance 2s
over a time span s, so the root-vote probability solves u_t = u_xx + f(u).
Each Monte Carlo path owns a Philox stream keyed by (seed, path index); a
path's tree and its uniforms are shared by every probe point, which couples
estimates monotonically in g.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from math import comb

import numpy as np

PARTICLE_CAP = 1_000_000


class ParticleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class VotingRules:
    n: int
    mu: tuple
    beta: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.mu) != self.n + 1:
            raise ValueError(f"mu needs n+1 = {self.n + 1} entries")
        if any(not (0.0 <= m <= 1.0) for m in self.mu):
            raise ValueError("all mu_k must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def tilted_rules(n: int, gamma: float, beta: float = 1.0) -> VotingRules:
    """mu_k = (1 + gamma) k / n for k < n and mu_n = 1."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < gamma <= 1.0 / (n - 1) + 1e-15:
        raise ValueError(f"gamma must lie in (0, 1/(n-1)] = (0, {1.0 / (n - 1)}]")
    mu = tuple(min((1.0 + gamma) * k / n, 1.0) for k in range(n)) + (1.0,)
    return VotingRules(n, mu, beta, gamma)


def majority_rules(n: int, beta: float = 1.0) -> VotingRules:
    return VotingRules(n, tuple(1.0 if 2 * k > n else 0.0 for k in range(n + 1)), beta)


# trees -------------------------------------------------------------------------

@dataclass
class Tree:
    """Genealogy stored parent-before-child.

    ``parent[i]`` is -1 for the root; ``children[i]`` lists child indices
    (empty for leaves); ``position[i]`` is the leaf position for leaves and
    the branching position otherwise.
    """

    parent: np.ndarray
    children: list
    position: np.ndarray
    t: float

    @property
    def leaves(self) -> np.ndarray:
        return np.array([i for i, ch in enumerate(self.children) if not ch], dtype=int)

    @property
    def size(self) -> int:
        return len(self.children)


def simulate_tree(rules: VotingRules, t: float, x: float, rng: np.random.Generator,
                  cap: int = PARTICLE_CAP) -> Tree:
    if t < 0:
        raise ValueError("t must be >= 0")
    parent = [-1]
    birth = [0.0]
    start = [float(x)]
    pos = [0.0]
    children: list = [[]]
    i = 0
    while i < len(birth):
        b = birth[i]
        tau = rng.exponential(1.0 / rules.beta) if rules.beta > 0 else math.inf
        end = b + tau
        if end >= t:
            pos[i] = start[i] + math.sqrt(2.0 * (t - b)) * rng.standard_normal()
        else:
            p = start[i] + math.sqrt(2.0 * tau) * rng.standard_normal()
            pos[i] = p
            if len(birth) + rules.n > cap:
                raise ParticleCapExceeded(f"more than {cap} particles by time {end:.6g}")
            for _ in range(rules.n):
                children[i].append(len(birth))
                parent.append(i)
                birth.append(end)
                start.append(p)
                pos.append(0.0)
                children.append([])
        i += 1
    return Tree(np.array(parent), children, np.array(pos), float(t))


def _propagate(tree: Tree, leaf_votes: dict, uniforms: np.ndarray, rules: VotingRules):
    """Bottom-up vote with node i voting 1 iff uniforms[i] <= mu_k.

    ``leaf_votes`` maps leaf index to a boolean array over probes.
    """
    votes = [None] * tree.size
    for i in range(tree.size - 1, -1, -1):
        ch = tree.children[i]
        if not ch:
            votes[i] = leaf_votes[i]
        else:
            k = sum(votes[j].astype(int) for j in ch)
            votes[i] = uniforms[i] <= np.asarray(rules.mu)[k]
    return votes[0]


def vote_propagate(tree: Tree, g, rules: VotingRules, rng: np.random.Generator) -> int:
    """Root vote: leaves vote 1 with probability g(X), parents with mu_k."""
    uni = rng.random(tree.size)
    leaves = {int(i): np.array([uni[i] <= float(g(tree.position[i]))]) for i in tree.leaves}
    return int(_propagate(tree, leaves, uni, rules)[0])


def root_vote_probability(tree: Tree, g, rules: VotingRules) -> float:
    """Exact P(root = 1) by enumerating all leaf-vote outcomes."""
    leaves = list(tree.leaves)
    probs = [float(g(tree.position[i])) for i in leaves]
    total = 0.0
    for outcome in product((0, 1), repeat=len(leaves)):
        w = 1.0
        for o, p in zip(outcome, probs):
            w *= p if o else 1.0 - p
        if w == 0.0:
            continue
        # parent votes are random given children: propagate probabilities
        pv = {}
        for leaf, o in zip(leaves, outcome):
            pv[leaf] = float(o)
        for i in range(tree.size - 1, -1, -1):
            ch = tree.children[i]
            if not ch:
                continue
            dist = np.array([1.0])
            for j in ch:
                dist = np.convolve(dist, [1.0 - pv[j], pv[j]])
            pv[i] = float(np.dot(dist, rules.mu))
        total += w * pv[0]
    return total


# estimation -------------------------------------------------------------------

@dataclass
class VoteEstimate:
    t: float
    xs: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_paths: int
    seed: int


def path_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(i)]))


def _path_votes(rules, g, t, xs, seed, i):
    rng = path_rng(seed, i)
    tree = simulate_tree(rules, t, 0.0, rng)
    uni = rng.random(tree.size)
    leaves = {int(j): uni[j] <= g(xs + tree.position[j]) for j in tree.leaves}
    return _propagate(tree, leaves, uni, rules)


def _chunk(args):
    rules, g, t, xs, seed, lo, hi = args
    s = np.zeros(xs.size)
    for i in range(lo, hi):
        s += _path_votes(rules, g, t, xs, seed, i)
    return s


def estimate_u(rules: VotingRules, g, t: float, xs, n_paths: int, seed: int = 0,
               workers: int = 1) -> VoteEstimate:
    """Monte Carlo estimate of u(t, x) = P(root votes 1) at each probe.

    ``g`` must accept an array of positions. Results depend only on the seed,
    never on the worker count.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if t == 0:
        val = np.asarray(g(xs), dtype=float)
        return VoteEstimate(0.0, xs, val, np.zeros_like(val), n_paths, seed)
    bounds = np.linspace(0, n_paths, max(1, workers) * 4 + 1).astype(int)
    jobs = [(rules, g, t, xs, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    # votes are 0/1, so the sample variance follows from the mean
    total = np.sum(parts, axis=0)
    mean = total / n_paths
    var = mean * (1 - mean) * n_paths / (n_paths - 1)
    return VoteEstimate(float(t), xs, mean, np.sqrt(var / n_paths), n_paths, seed)


class StepVote:
    """g(x) = 1 for x <= x0, else 0 (picklable for worker pools)."""

    def __init__(self, x0: float = 0.0):
        self.x0 = x0

    def __call__(self, x):
        return (np.asarray(x) <= self.x0).astype(float)


# induced nonlinearities ------------------------------------------------------------

P = np.polynomial.Polynomial


@dataclass
class InducedNonlinearity:
    poly: np.polynomial.Polynomial
    monostable: bool

    @property
    def coeffs(self) -> np.ndarray:
        return self.poly.coef


def _is_monostable(p) -> bool:
    u = np.linspace(0, 1, 2001)
    v = p(u)
    return abs(v[0]) < 1e-12 and abs(v[-1]) < 1e-12 and bool(np.all(v[1:-1] > 0)) and p.deriv()(0) > 0


def voting_nonlinearity(n: int, mu, beta: float = 1.0) -> InducedNonlinearity:
    """f(u) = beta (sum_k C(n,k) mu_k u^k (1-u)^(n-k) - u) for any child count n."""
    mu = list(mu)
    if len(mu) != n + 1:
        raise ValueError("mu needs n+1 entries")
    u = P([0.0, 1.0])
    s = P([0.0])
    for k, m in enumerate(mu):
        s = s + comb(n, k) * m * u**k * (1 - u) ** (n - k)
    f = beta * (s - u)
    f = P(np.trim_zeros(np.where(np.abs(f.coef) < 1e-14, 0.0, f.coef), "b") if np.any(f.coef) else [0.0])
    return InducedNonlinearity(f, _is_monostable(f))


def identity_check(n: int, gamma: float, u: float):
    """(gamma (u - u^n), sum_{k<n} C(n,k)((1+gamma)k/n) u^k (1-u)^(n-k) + u^n - u, |difference|)."""
    lhs = gamma * (u - u**n)
    s = math.fsum(comb(n, k) * ((1 + gamma) * k / n) * u**k * (1 - u) ** (n - k) for k in range(n))
    rhs = s + u**n - u
    return lhs, rhs, abs(lhs - rhs)


def mckean_nonlinearity(gamma: float, p_k) -> InducedNonlinearity:
    """f(u) = gamma (1 - u - sum_k p_k (1-u)^k) for an offspring law p_k."""
    items = sorted((p_k.items() if isinstance(p_k, dict) else enumerate(p_k)))
    probs = [(int(k), float(p)) for k, p in items]
    if any(p < 0 for _, p in probs) or abs(math.fsum(p for _, p in probs) - 1.0) > 1e-12:
        raise ValueError("p_k must be a probability distribution")
    u = P([0.0, 1.0])
    s = P([0.0])
    for k, p in probs:
        s = s + p * (1 - u) ** k
    f = gamma * (1 - u - s)
    return InducedNonlinearity(f, _is_monostable(f))


def pde_model(rules: VotingRules):
    """Reaction-diffusion model matching tilted rules: f = beta gamma (u - u^n)."""
    from .nonlinearity import build_power_family
    if rules.gamma is None:
        raise ValueError("only tilted rules map onto the power family")
    return build_power_family(rules.n, 0.0, math.sqrt(rules.beta * rules.gamma))


def pde_reference(rules: VotingRules, t: float, xs, x0: float = 0.0, dx: float = 0.02,
                  half_width: float = 12.0) -> np.ndarray:
    """Solve u_t = u_xx + f(u) from the step 1(x <= x0) and sample at xs.

    The step sits on a cell interface, which keeps the O(dx^2) accuracy of
    the scheme at the discontinuity.
    """
    from .solver import Equation, FieldState, RunConfig, run
    model = pde_model(rules)
    n = int(round(2 * half_width / dx))
    origin = x0 - half_width + 0.5 * dx
    x = origin + dx * np.arange(n)
    u0 = (x <= x0).astype(float)
    state = FieldState(Equation.RDE, 0.0, origin, dx, u0)
    cfg = RunConfig(model, Equation.RDE, dx=dx, left=half_width, right=half_width, t_end=t,
                    trace_every=0, recenter=False)
    traj = run(cfg, state=state)
    fin = traj.snapshots[-1]
    return np.interp(np.asarray(xs, dtype=float), fin.x, fin.u)
