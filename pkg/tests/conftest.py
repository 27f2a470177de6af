"""Shared fixtures and brute-force oracles for the test suite."""

import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from abthmm import compile_abt, parse
from abthmm.tree import ABTDefinition, Leaf, LeafStats, Selector, Sequence

REPO = Path(__file__).resolve().parents[1]
MODELS = REPO / "models"


def uniform_row(j):
    return tuple(1.0 / j for _ in range(j))


def make_leaf(i, ps=0.5, j=8):
    return Leaf(f"n{i}", LeafStats(ps, uniform_row(j)))


def random_canonical_tree(rng, l, j=8):
    """A random canonical tree over l leaves: composite nodes have at least
    two children and alternate kinds, leaf ps are drawn from (0.05, 0.95)."""
    names = itertools.count()

    def build(n, allow):
        if n == 1:
            i = next(names)
            ps = float(np.round(rng.uniform(0.05, 0.95), 3))
            return Leaf(f"n{i}", LeafStats(ps, uniform_row(j)))
        k = int(rng.integers(2, min(n, 4) + 1))
        cuts = sorted(rng.choice(np.arange(1, n), size=k - 1, replace=False))
        parts = np.diff([0, *cuts, n])
        if allow == "both":
            kind = Sequence if rng.random() < 0.5 else Selector
        else:
            kind = Sequence if allow == "seq" else Selector
        child_allow = "sel" if kind is Sequence else "seq"
        return kind(tuple(build(int(q), child_allow) for q in parts))

    return ABTDefinition(build(l, "both"), j, uniform_row(j), uniform_row(j))


def all_canonical_trees(l, j=8):
    """Every canonical tree over l leaves (large Schroeder many)."""

    def compositions(n):
        for k in range(2, n + 1):
            for cuts in itertools.combinations(range(1, n), k - 1):
                prev, parts = 0, []
                for c in cuts:
                    parts.append(c - prev)
                    prev = c
                parts.append(n - prev)
                yield parts

    def build(n, start, allow):
        if n == 1:
            yield make_leaf(start, j=j)
            return
        kinds = []
        if allow in ("seq", "both"):
            kinds.append(Sequence)
        if allow in ("sel", "both"):
            kinds.append(Selector)
        for kind in kinds:
            child_allow = "sel" if kind is Sequence else "seq"
            for parts in compositions(n):
                pools, pos = [], start
                for p in parts:
                    pools.append(list(build(p, pos, child_allow)))
                    pos += p
                for combo in itertools.product(*pools):
                    yield kind(tuple(combo))

    for root in build(l, 0, "both"):
        yield ABTDefinition(root, j, uniform_row(j), uniform_row(j))


def schroder(n):
    """Number of canonical trees with n leaves: 1, 2, 6, 22, 90, 394, ..."""
    vals = [1, 2]
    while len(vals) < n:
        k = len(vals)
        vals.append((3 * (2 * k - 1) * vals[-1] - (k - 2) * vals[-2]) // (k + 1))
    return vals[n - 1]


# ----------------------------------------------------------------------
# brute-force HMM oracles (only viable for tiny instances)


def brute_path_logp(pi, a, b, obs, path):
    p = pi[path[0]] * b[path[0], obs[0]]
    for t in range(1, len(obs)):
        p *= a[path[t - 1], path[t]] * b[path[t], obs[t]]
    return math.log(p) if p > 0 else -math.inf


def brute_forward(pi, a, b, obs):
    """log of the exhaustive sum over all state paths."""
    n = len(pi)
    total = 0.0
    for path in itertools.product(range(n), repeat=len(obs)):
        p = pi[path[0]] * b[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= a[path[t - 1], path[t]] * b[path[t], obs[t]]
        total += p
    return math.log(total) if total > 0 else -math.inf


def brute_viterbi(pi, a, b, obs):
    """(logp, path) of the best state path; ties pick the path whose
    reversed tuple is smallest, matching first-maximum backtracking."""
    n = len(pi)
    best, best_path = -math.inf, None
    for path in itertools.product(range(n), repeat=len(obs)):
        lp = brute_path_logp(pi, a, b, obs, path)
        if best_path is None or lp > best or (
            lp == best and tuple(reversed(path)) < tuple(reversed(best_path))
        ):
            best, best_path = lp, path
    return best, best_path


def random_hmm_instance(rng, max_states=5, max_symbols=6):
    """A small random dense-ish model plus one observable sequence."""
    n = int(rng.integers(2, max_states + 1))
    j = int(rng.integers(2, max_symbols + 1))
    pi = rng.dirichlet(np.ones(n))
    a = rng.dirichlet(np.ones(n), size=n)
    b = rng.dirichlet(np.ones(j), size=n)
    if rng.random() < 0.4:  # sprinkle structural zeros, keep rows valid
        a = np.where(rng.random(a.shape) < 0.3, 0.0, a)
        a[np.arange(n), (np.arange(n) + 1) % n] += 1e-3
        a /= a.sum(axis=1, keepdims=True)
    t = int(rng.integers(1, 7))
    state = rng.choice(n, p=pi)
    obs = []
    for _ in range(t):
        obs.append(int(rng.choice(j, p=b[state])))
        state = rng.choice(n, p=a[state])
    return pi, a, b, np.asarray(obs, dtype=np.int64)


# ----------------------------------------------------------------------
# exemplar fixtures


@pytest.fixture(scope="session")
def pick_place():
    return parse((MODELS / "pick_place.abt").read_text())


@pytest.fixture(scope="session")
def patrol():
    return parse((MODELS / "patrol.abt").read_text())


@pytest.fixture(scope="session")
def pick_place_model(pick_place):
    return compile_abt(pick_place)


@pytest.fixture(scope="session")
def patrol_model(patrol):
    return compile_abt(patrol)
