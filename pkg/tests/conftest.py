"""Shared builders and independent oracles used across the test modules."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from nestt.problem import CompositeProblem, NonsmoothSpec, SmoothComponent


def quad(A, b=None, lipschitz=None) -> SmoothComponent:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if b is None:
        b = np.zeros(A.shape[0])
    return SmoothComponent.quadratic(A, np.asarray(b, dtype=float), lipschitz)


def random_symmetric(rng, d, scale=1.0):
    M = rng.standard_normal((d, d))
    return scale * 0.5 * (M + M.T)


def nonsmooth_cycle(idx: int, d: int) -> NonsmoothSpec:
    return [
        NonsmoothSpec.zero(),
        NonsmoothSpec.l1_penalty(0.4),
        NonsmoothSpec.l1_ball(1.5),
        NonsmoothSpec.box(-np.ones(d), np.ones(d)),
    ][idx % 4]


def random_problem(
    rng, n, d, h=None, convex=False, with_g0=False
) -> CompositeProblem:
    """Random quadratic finite sum; indefinite components unless convex."""
    comps = []
    for _ in range(n):
        A = random_symmetric(rng, d)
        if convex:
            A = A @ A.T / d + 0.1 * np.eye(d)
            A = 0.5 * (A + A.T)
        comps.append(quad(A, rng.standard_normal(d)))
    g0 = None
    if with_g0:
        G = random_symmetric(rng, d, scale=0.3)
        if convex:
            G = G @ G.T / d
            G = 0.5 * (G + G.T)
        g0 = quad(G, rng.standard_normal(d) * 0.2)
    if h is None:
        h = NonsmoothSpec.l1_ball(1.5)
    return CompositeProblem.create(comps, h, g0=g0)


def fd_gradient(fn, z, eps=1e-5):
    """Central finite differences, one coordinate at a time."""
    z = np.asarray(z, dtype=float)
    grad = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = eps
        grad[i] = (fn(z + e) - fn(z - e)) / (2 * eps)
    return grad


def l1_projection_bruteforce(v, radius):
    """Projection onto the l1 ball by exhaustive active-set/sign enumeration.

    For each support/sign pattern, the candidate minimizer shrinks the kept
    coordinates by a common shift onto the sphere; the feasible candidate
    with the smallest distance wins.  Exponential in d: test-only.
    """
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    d = v.size
    best, best_dist = None, np.inf
    for mask in itertools.product([0, 1], repeat=d):
        keep = np.array(mask, dtype=bool)
        k = int(keep.sum())
        if k == 0:
            cand = np.zeros(d)
        else:
            a = np.abs(v[keep])
            shift = (a.sum() - radius) / k
            shrunk = a - shift
            if np.any(shrunk < -1e-12):
                continue
            cand = np.zeros(d)
            cand[keep] = np.sign(v[keep]) * np.maximum(shrunk, 0.0)
        if np.abs(cand).sum() > radius + 1e-9:
            continue
        dist = float(np.sum((cand - v) ** 2))
        if dist < best_dist:
            best, best_dist = cand, dist
    return best


def sag_step_oracle(z, table, i, grad_i_fresh, beta):
    """One aggregated-gradient step: refresh row i, move by the new mean."""
    table = table.copy()
    table[i] = grad_i_fresh
    return z - beta * table.mean(axis=0), table


class CountingProblem:
    """Delegating wrapper that tallies component-gradient evaluations."""

    def __init__(self, problem: CompositeProblem):
        self._problem = problem
        self.count = 0

    def grad_component(self, i, z):
        self.count += 1
        return self._problem.grad_component(i, z)

    def grad_all(self, z):
        self.count += self._problem.n_components
        return self._problem.grad_all(z)

    def __getattr__(self, name):
        return getattr(self._problem, name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
