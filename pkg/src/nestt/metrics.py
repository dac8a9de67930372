"""Optimality measures, potentials, and the tail-ratio fit for linear rates.

Everything here is read-only over problem/state objects: no counters are
touched, and gradients evaluated for diagnostics are never charged to a
run's gradient budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .problem import CompositeProblem
from .prox import ProxRequest, prox_h

__all__ = [
    "MetricSample",
    "prox_gradient_gap",
    "potential_Q",
    "augmented_lagrangian",
    "gap_H",
    "qlinear_tail_ratio",
]


@dataclass(frozen=True)
class MetricSample:
    """One instrumentation row.

    ``passes`` is always ``grad_evals / N``.  ``consensus_violation`` is
    None for algorithms that keep no local copies.
    """

    iter: int
    passes: float
    grad_evals: int
    gap: float
    potential: float
    consensus_violation: float | None
    wallclock_ns: int


def prox_gradient_gap(problem: CompositeProblem, z: np.ndarray, beta: float) -> float:
    """Squared prox-gradient norm at z with scale 1/beta:

        (1/beta^2) || z - prox_h^{1/beta}[ z - beta * grad_smooth(z) ] ||^2.

    Zero exactly at stationary points; reduces to the squared smooth
    gradient norm when h and g0 vanish.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    z = np.asarray(z, dtype=float)
    step = z - beta * problem.full_gradient(z)
    moved = prox_h(ProxRequest(problem.h, step, gamma=1.0 / beta))
    diff = z - moved
    return float(diff @ diff) / beta**2


def potential_Q(problem: CompositeProblem, gstate) -> float:
    """Lyapunov value for gradient-step runs: objective at z plus weighted
    gradient-memory mismatch,

        Q = (1/N) sum_i g_i(z) + sum_i 3 p_i eta_i / (alpha_i eta_i)^2
            * || (grad g_i(z) - memory_i) / N ||^2 + g0(z) + h(z).

    The stored gradient table stands in for the stale gradients, which is
    exactly the dual-memory identity.  Costs N uncounted gradient evaluations.
    """
    params = gstate.params
    n = problem.n_components
    z = gstate.z
    fresh = problem.grad_all(z)
    mism = (fresh - gstate.grad_table) / n
    coeff = 3.0 * params.p * params.eta / (params.alpha * params.eta) ** 2
    quad = float(coeff @ np.einsum("ij,ij->i", mism, mism))
    return problem.smooth_value(z) + problem.h.value(z) + quad


def augmented_lagrangian(
    problem: CompositeProblem,
    x: np.ndarray,
    z: np.ndarray,
    lam: np.ndarray,
    eta: np.ndarray,
) -> float:
    """Penalty-augmented Lagrangian of the consensus reformulation:

        sum_i [ g_i(x_i)/N + <lam_i, x_i - z> + (eta_i/2) ||x_i - z||^2 ]
        + g0(z) + h(z).
    """
    n = problem.n_components
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != (n, problem.dim) or lam.shape != x.shape:
        raise ValueError("x and lam must be (N, d) arrays")
    diff = x - z
    total = sum(problem.eval_component(i, x[i]) for i in range(n)) / n
    total += float(np.einsum("ij,ij->", lam, diff))
    total += 0.5 * float(np.asarray(eta) @ np.einsum("ij,ij->i", diff, diff))
    if problem.g0 is not None:
        total += problem.g0.value(z)
    return total + problem.h.value(z)


def gap_H(problem: CompositeProblem, estate) -> float:
    """Stationarity measure for exact-minimization runs:

        H(w) = || z - prox_h[ z - grad_z (L - h) ] ||^2
             + sum_i || grad_{x_i} L ||^2
             + sum_i (L_i/N)^2 ||x_i - z||^2.

    Vanishes exactly at stationary points of the consensus problem.
    """
    n = problem.n_components
    z, x, lam = estate.z, estate.x, estate.lam
    eta = estate.params.eta
    diff = x - z
    grad_z = -lam.sum(axis=0) + eta @ (z - x)
    if problem.g0 is not None:
        grad_z = grad_z + problem.g0.grad(z)
    z_part = z - prox_h(ProxRequest(problem.h, z - grad_z, gamma=1.0))
    total = float(z_part @ z_part)
    grads = np.stack([problem.grad_component(i, x[i]) for i in range(n)])
    x_parts = grads / n + lam + eta[:, None] * diff
    total += float(np.einsum("ij,ij->", x_parts, x_parts))
    lip = problem.lipschitz / n
    total += float(lip**2 @ np.einsum("ij,ij->i", diff, diff))
    return total


def qlinear_tail_ratio(
    series: Sequence[float], limit: float, tail_fraction: float
) -> tuple[float, float]:
    """Estimate the tail geometric decay of ``series`` toward ``limit``.

    Over the last ``tail_fraction`` of the points, returns the geometric
    mean of successive ratios ``(s[r+1]-limit)/(s[r]-limit)`` and the R^2
    of a least-squares line through ``log(s[r]-limit)``.  Pairs whose gap
    has dropped below 1e-14 (converged to roundoff, or marginally past the
    limit) are skipped.

    Raises ValueError when fewer than 5 usable ratios remain.
    """
    s = np.asarray(series, dtype=float)
    if s.size < 20:
        raise ValueError("need at least 20 points")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if limit > s.min() + 1e-9 * max(1.0, abs(limit)):
        raise ValueError("limit must not exceed the series minimum")
    start = s.size - max(2, int(round(tail_fraction * s.size)))
    gaps = s[start:] - limit
    idx = np.arange(start, s.size)
    usable = gaps > 1e-14
    pair_ok = usable[:-1] & usable[1:]
    if int(pair_ok.sum()) < 5:
        raise ValueError("fewer than 5 usable tail ratios")
    logs = np.log(gaps[usable])
    ratios = np.log(gaps[1:][pair_ok]) - np.log(gaps[:-1][pair_ok])
    rho_hat = float(np.exp(ratios.mean()))

    t = idx[usable].astype(float)
    coeffs = np.polyfit(t, logs, 1)
    fit = np.polyval(coeffs, t)
    ss_res = float(((logs - fit) ** 2).sum())
    ss_tot = float(((logs - logs.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return rho_hat, r2
