"""Component-selection schedules and the stepsize/penalty parameter rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .problem import CompositeProblem

__all__ = [
    "Schedule",
    "NesttParams",
    "nestt_g_parameters",
    "nestt_g_parameters_for_sampling",
    "nestt_e_parameters",
    "nestt_e_fixed_penalty_parameters",
    "nestt_e_eta_threshold",
    "next_index",
    "validate_params",
]


@dataclass
class Schedule:
    """Stateful index stream: iid categorical draws or a deterministic cycle.

    Owned by exactly one run.  The iid kind draws by inverse CDF from a
    counter-based 64-bit generator (Philox), so equal seeds give equal
    streams on every platform.
    """

    kind: str
    n: int
    p: np.ndarray | None = None
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)
    _cum: np.ndarray | None = field(init=False, repr=False, default=None)
    _count: int = field(init=False, default=0)

    def __post_init__(self):
        if self.kind not in ("iid", "cyclic"):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "iid":
            p = np.asarray(self.p, dtype=float)
            if p.shape != (self.n,):
                raise ParameterError("probability vector length must equal n")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ParameterError("probabilities must be a simplex vector")
            self.p = p
            self._cum = np.cumsum(p)
        self._rng = np.random.Generator(np.random.Philox(key=int(self.seed)))

    @classmethod
    def iid(cls, p: np.ndarray, seed: int) -> "Schedule":
        p = np.asarray(p, dtype=float)
        return cls(kind="iid", n=p.size, p=p, seed=seed)

    @classmethod
    def cyclic(cls, n: int, seed: int = 0) -> "Schedule":
        return cls(kind="cyclic", n=n, seed=seed)

    def next(self) -> int:
        if self.kind == "cyclic":
            i = self._count % self.n
        else:
            u = self._rng.random()
            i = min(int(np.searchsorted(self._cum, u, side="right")), self.n - 1)
        self._count += 1
        return i


def next_index(schedule: Schedule) -> int:
    """Draw the next component index from the schedule."""
    return schedule.next()


@dataclass(frozen=True)
class NesttParams:
    """Per-component step scalars alpha, probabilities p, penalties eta,
    and the aggregate stepsize ``beta = 1 / sum(eta)``."""

    alpha: np.ndarray
    p: np.ndarray
    eta: np.ndarray
    beta: float

    def __post_init__(self):
        for name in ("alpha", "p", "eta"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )
        n = self.eta.size
        if self.alpha.shape != (n,) or self.p.shape != (n,):
            raise ParameterError("alpha, p, eta must share a length")
        if np.any(self.alpha <= 0) or np.any(self.eta <= 0):
            raise ParameterError("alpha and eta must be positive")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ParameterError("p must be a simplex vector")
        if abs(self.beta * self.eta.sum() - 1.0) > 1e-12:
            raise ParameterError("beta must equal 1 / sum(eta)")

    @property
    def n(self) -> int:
        return self.eta.size


def validate_params(params: NesttParams, problem: CompositeProblem) -> None:
    """Check the penalty assumptions against a problem's Lipschitz data.

    Requires ``eta_i > L_i / N`` for every component and, when a nonconvex
    g0 is present, ``sum(eta) > 3 L0``.
    """
    n = problem.n_components
    if params.n != n:
        raise ParameterError("parameter length differs from component count")
    lip = problem.lipschitz
    bad = np.nonzero(params.eta <= lip / n)[0]
    if bad.size:
        i = int(bad[0])
        raise ParameterError(
            f"eta[{i}]={params.eta[i]} must exceed L_i/N={lip[i] / n}"
        )
    if problem.g0 is not None and not problem.g0.is_convex():
        if params.eta.sum() <= 3.0 * problem.lipschitz_g0:
            raise ParameterError("nonconvex g0 requires sum(eta) > 3*L0")


def nestt_g_parameters(L: np.ndarray, n: int) -> NesttParams:
    """Square-root-Lipschitz rule: p_i = alpha_i proportional to sqrt(L_i/N),
    eta_i = 3 (sum_j sqrt(L_j/N)) sqrt(L_i/N), beta = 1/(3 (sum sqrt(L_i/N))^2).

    Satisfies alpha = p = beta*eta and eta_i * p_i * N = 3 L_i exactly.
    """
    L = np.asarray(L, dtype=float)
    if L.shape != (n,):
        raise ParameterError(f"L must have length {n}")
    if np.any(L <= 0):
        raise ParameterError("all component Lipschitz constants must be positive")
    s = np.sqrt(L / n)
    total = s.sum()
    p = s / total
    eta = 3.0 * total * s
    beta = 1.0 / (3.0 * total**2)
    return NesttParams(alpha=p.copy(), p=p, eta=eta, beta=beta)


def nestt_g_parameters_for_sampling(L: np.ndarray, n: int, p: np.ndarray) -> NesttParams:
    """Tightest parameters consistent with a prescribed sampling vector p.

    Keeps the structural identities alpha = p = beta*eta, which force
    ``eta`` proportional to ``p``; the proportionality constant is then the
    smallest one satisfying ``eta_i >= 3 L_i / (N p_i)`` for every i.  With
    p proportional to sqrt(L_i/N) this reproduces :func:`nestt_g_parameters`.
    """
    L = np.asarray(L, dtype=float)
    p = np.asarray(p, dtype=float)
    if L.shape != (n,) or p.shape != (n,):
        raise ParameterError(f"L and p must have length {n}")
    if np.any(L <= 0):
        raise ParameterError("all component Lipschitz constants must be positive")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ParameterError("p must be a strictly positive simplex vector")
    scale = float(np.max(3.0 * L / (n * p**2)))
    eta = scale * p
    return NesttParams(alpha=p.copy(), p=p, eta=eta, beta=1.0 / scale)


def nestt_e_eta_threshold(alpha: np.ndarray, L: np.ndarray, n: int) -> np.ndarray:
    """Smallest penalties for which the exact-minimization variant's
    per-component constants c_i turn negative:

        eta_i > L_i ((2 - a_i) + sqrt((a_i - 2)^2 + 8 a_i)) / (2 N a_i).
    """
    alpha = np.asarray(alpha, dtype=float)
    L = np.asarray(L, dtype=float)
    return L * ((2.0 - alpha) + np.sqrt((alpha - 2.0) ** 2 + 8.0 * alpha)) / (
        2.0 * n * alpha
    )


def nestt_e_parameters(
    L: np.ndarray, n: int, alpha: np.ndarray, safety: float = 1.5
) -> NesttParams:
    """Penalties a ``safety`` factor above the c_i < 0 threshold.

    ``safety`` must be >= 1; at exactly 1 the thresholds get a relative
    1e-9 bump so boundary configurations cannot silently produce c_i = 0.
    Sampling defaults to p_i = L_i / sum(L).
    """
    L = np.asarray(L, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,)).copy()
    if L.shape != (n,):
        raise ParameterError(f"L must have length {n}")
    if np.any(L <= 0) or np.any(alpha <= 0):
        raise ParameterError("L and alpha must be positive")
    if safety < 1.0:
        raise ParameterError("safety must be at least 1")
    eta = safety * nestt_e_eta_threshold(alpha, L, n)
    if safety == 1.0:
        eta = eta * (1.0 + 1e-9)
    p = L / L.sum()
    params = NesttParams(alpha=alpha, p=p, eta=eta, beta=1.0 / eta.sum())
    from .nestt_e import c_constants  # local import: avoids a module cycle

    consts = c_constants(params, L, 0.0, n)
    if not consts.valid:
        raise ParameterError("derived penalties failed the c_i < 0 check")
    return params


def nestt_e_fixed_penalty_parameters(
    L: np.ndarray, n: int, alpha_scale: float = 1.0, p: np.ndarray | None = None
) -> NesttParams:
    """Fixed-penalty parameterization ``eta_i = 3 L_i / N`` with a common
    alpha multiplier; sampling defaults to ``p_i = L_i / sum(L)``.

    This is the practical configuration for exact-minimization runs: the
    penalties stay safely above L_i/N however large alpha gets, and c_i < 0
    holds iff ``alpha_scale > 2/3``.
    """
    L = np.asarray(L, dtype=float)
    if np.any(L <= 0):
        raise ParameterError("all component Lipschitz constants must be positive")
    if alpha_scale <= 2.0 / 3.0:
        raise ParameterError("alpha_scale must exceed 2/3 for c_i < 0")
    eta = 3.0 * L / n
    p = L / L.sum() if p is None else np.asarray(p, dtype=float)
    return NesttParams(
        alpha=np.full(n, float(alpha_scale)), p=p, eta=eta, beta=1.0 / eta.sum()
    )
