"""Reference first-order baselines: proximal SGD, SAGA, and proximal GD.

These are written from their own standard forms, independent of the
splitting algorithms, so the reduction identities can be tested across two
genuinely separate implementations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .metrics import MetricSample, prox_gradient_gap
from .problem import CompositeProblem
from .prox import ProxRequest, prox_h, solve_z_subproblem
from .records import RunRecord
from .sampling import Schedule, nestt_g_parameters

__all__ = ["StepsizeRule", "saga_stepsize", "prox_sgd_run", "saga_run", "prox_gd_run"]


@dataclass(frozen=True)
class StepsizeRule:
    """Either a constant stepsize or ``c / sqrt(r)`` with 1-based r."""

    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in ("constant", "inv_sqrt"):
            raise ParameterError(f"unknown stepsize rule {self.kind!r}")
        if self.c <= 0:
            raise ParameterError("stepsize constant must be positive")

    def at(self, step: int) -> float:
        """Stepsize for 0-based step index."""
        if self.kind == "constant":
            return self.c
        return self.c / np.sqrt(step + 1.0)


def saga_stepsize(problem: CompositeProblem) -> float:
    """The quoted nonconvex-SAGA rule, 1 / (3 L_max N^(2/3))."""
    n = problem.n_components
    return 1.0 / (3.0 * float(problem.lipschitz.max()) * n ** (2.0 / 3.0))


def _probabilities(schedule: Schedule) -> np.ndarray:
    if schedule.kind == "iid":
        return schedule.p
    return np.full(schedule.n, 1.0 / schedule.n)


class _Recorder:
    """Shared metric bookkeeping for the baseline run loops."""

    def __init__(self, problem, gap_beta, n):
        self.problem = problem
        self.n = n
        if gap_beta is None:
            gap_beta = nestt_g_parameters(problem.lipschitz, n).beta
        self.gap_beta = gap_beta
        self.start = time.perf_counter_ns()
        self.samples: list[MetricSample] = []

    def record(self, it, grad_evals, z):
        self.samples.append(
            MetricSample(
                iter=it,
                passes=grad_evals / self.n,
                grad_evals=grad_evals,
                gap=prox_gradient_gap(self.problem, z, self.gap_beta),
                potential=self.problem.objective(z),
                consensus_violation=None,
                wallclock_ns=time.perf_counter_ns() - self.start,
            )
        )


def _finish(rec, z, iters, seed, algorithm, sampling, fingerprint, run_id) -> RunRecord:
    m_rng = np.random.default_rng([seed, 0xA11CE])
    return RunRecord(
        algorithm=algorithm,
        sampling=sampling,
        seed=seed,
        fingerprint=fingerprint,
        samples=rec.samples,
        final_z=z.copy(),
        output_index=int(m_rng.integers(0, iters)),
        run_id=run_id,
    )


def prox_sgd_run(
    problem: CompositeProblem,
    rule: StepsizeRule,
    z0: np.ndarray,
    schedule: Schedule,
    iters: int,
    record_stride: int | None = None,
    gap_beta: float | None = None,
    algorithm: str = "sgd",
    sampling: str = "custom",
    fingerprint: str = "",
    run_id: str = "",
) -> RunRecord:
    """Proximal stochastic gradient with an unbiased one-component estimator.

    The smooth-gradient estimate for a drawn index i is
    ``grad g_i(z) / (N p_i) + grad g0(z)`` (one counted evaluation), then a
    prox step with the current stepsize.
    """
    if iters < 1:
        raise ParameterError("iters must be at least 1")
    n = problem.n_components
    probs = _probabilities(schedule)
    z = np.asarray(z0, dtype=float).copy()
    stride = record_stride if record_stride else n
    rec = _Recorder(problem, gap_beta, n)
    grad_evals = 0
    rec.record(0, grad_evals, z)
    for t in range(iters):
        i = schedule.next()
        est = problem.grad_component(i, z) / (n * probs[i])
        grad_evals += 1
        if problem.g0 is not None:
            est = est + problem.g0.grad(z)
        gamma = rule.at(t)
        z = prox_h(ProxRequest(problem.h, z - gamma * est, gamma=1.0 / gamma))
        if (t + 1) % stride == 0 or t == iters - 1 and (t + 1) % stride:
            rec.record(t + 1, grad_evals, z)
    return _finish(rec, z, iters, schedule.seed, algorithm, sampling, fingerprint, run_id)


def saga_run(
    problem: CompositeProblem,
    z0: np.ndarray,
    schedule: Schedule,
    iters: int,
    stepsize: float | None = None,
    record_stride: int | None = None,
    gap_beta: float | None = None,
    algorithm: str = "saga",
    sampling: str = "custom",
    fingerprint: str = "",
    run_id: str = "",
) -> RunRecord:
    """Proximal SAGA with a gradient table and the quoted nonconvex stepsize.

    Each step refreshes one table row: with i drawn and ``old`` the stored
    row, the step direction is ``(grad g_i(z) - old) / (N p_i) + mean(table)``
    using the pre-overwrite table, followed by a prox step.  Uniform
    sampling recovers the textbook estimator exactly.
    """
    if iters < 1:
        raise ParameterError("iters must be at least 1")
    n = problem.n_components
    probs = _probabilities(schedule)
    beta = stepsize if stepsize is not None else saga_stepsize(problem)
    z = np.asarray(z0, dtype=float).copy()
    table = problem.grad_all(z)
    table_sum = table.sum(axis=0)
    grad_evals = n
    stride = record_stride if record_stride else n
    rec = _Recorder(problem, gap_beta, n)
    rec.record(0, grad_evals, z)
    for t in range(iters):
        i = schedule.next()
        fresh = problem.grad_component(i, z)
        grad_evals += 1
        direction = (fresh - table[i]) / (n * probs[i]) + table_sum / n
        z = solve_z_subproblem(problem, z - beta * direction, beta)
        table_sum += fresh - table[i]
        table[i] = fresh
        if (t + 1) % stride == 0 or t == iters - 1 and (t + 1) % stride:
            rec.record(t + 1, grad_evals, z)
    return _finish(rec, z, iters, schedule.seed, algorithm, sampling, fingerprint, run_id)


def prox_gd_run(
    problem: CompositeProblem,
    z0: np.ndarray,
    iters: int,
    gamma: float | None = None,
    record_stride: int | None = None,
    gap_beta: float | None = None,
    algorithm: str = "prox_gd",
    sampling: str = "full",
    fingerprint: str = "",
    run_id: str = "",
    seed: int = 0,
) -> RunRecord:
    """Deterministic proximal gradient descent with the conservative
    stepsize ``1 / (sum(L_i)/N + L0)``; each step costs N evaluations."""
    if iters < 1:
        raise ParameterError("iters must be at least 1")
    n = problem.n_components
    if gamma is None:
        gamma = 1.0 / (float(problem.lipschitz.sum()) / n + problem.lipschitz_g0)
    z = np.asarray(z0, dtype=float).copy()
    grad_evals = 0
    stride = record_stride if record_stride else 1
    rec = _Recorder(problem, gap_beta, n)
    rec.record(0, grad_evals, z)
    for t in range(iters):
        step = z - gamma * problem.full_gradient(z)
        grad_evals += n
        z = prox_h(ProxRequest(problem.h, step, gamma=1.0 / gamma))
        if (t + 1) % stride == 0 or t == iters - 1 and (t + 1) % stride:
            rec.record(t + 1, grad_evals, z)
    return _finish(rec, z, iters, seed, algorithm, sampling, fingerprint, run_id)
