"""Composite finite-sum problems and the sparse-regression instance generator.

A problem is ``f(z) = (1/N) sum_i g_i(z) + g0(z) + h(z)`` with smooth
(possibly nonconvex) components ``g_i``, an optional smooth ``g0`` and a
convex nonsmooth ``h`` (penalty and/or constraint indicator).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "SmoothComponent",
    "NonsmoothSpec",
    "CompositeProblem",
    "RegressionConfig",
    "spectral_norm",
    "generate_regression_instance",
    "save_instance",
    "load_instance",
]

# Feasibility slack when evaluating indicator parts of h at algorithm
# iterates; projections land on the boundary only up to roundoff.
FEAS_TOL = 1e-8


def spectral_norm(mat: np.ndarray, tol: float = 1e-6, max_iters: int = 500) -> float:
    """Largest singular value of a symmetric matrix by power iteration.

    Stops when the estimate's relative change drops below ``tol``.  If the
    cap is hit first, returns the Frobenius norm, which upper-bounds the
    spectral norm.
    """
    d = mat.shape[0]
    if d == 1:
        return abs(float(mat[0, 0]))
    # Deterministic start vector; a fixed seed keeps repeated calls (and
    # save/load round trips) bit-identical.
    x = np.random.Generator(np.random.Philox(key=0x5EED)).standard_normal(d)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iters):
        y = mat @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        sigma_new = ny
        x = y / ny
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return float(sigma_new)
        sigma = sigma_new
    return float(np.linalg.norm(mat, "fro"))


@dataclass(frozen=True)
class SmoothComponent:
    """One smooth summand, either an explicit quadratic or a black box.

    Quadratic components are ``g(z) = 0.5 z'Az + b'z`` with symmetric (not
    necessarily PSD) ``A``; they are the only kind with exact local solves.
    Black boxes supply value/gradient callbacks plus a declared gradient
    Lipschitz constant.
    """

    lipschitz: float
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    value_fn: Callable[[np.ndarray], float] | None = None
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    dim: int = 0

    @property
    def kind(self) -> str:
        return "quadratic" if self.A is not None else "black-box"

    @classmethod
    def quadratic(
        cls, A: np.ndarray, b: np.ndarray, lipschitz: float | None = None
    ) -> "SmoothComponent":
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatchError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise DimensionMismatchError(
                f"b has shape {b.shape}, expected ({A.shape[0]},)"
            )
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
            raise ValueError("A must be symmetric (1e-12 elementwise)")
        smax = float(np.abs(np.linalg.eigvalsh(A)).max()) if A.size else 0.0
        if lipschitz is None:
            lipschitz = smax
        elif lipschitz < smax * (1.0 - 1e-8):
            raise ValueError(
                f"lipschitz={lipschitz} is below the spectral norm {smax} of A"
            )
        return cls(lipschitz=float(lipschitz), A=A, b=b, dim=A.shape[0])

    @classmethod
    def black_box(
        cls,
        value_fn: Callable[[np.ndarray], float],
        grad_fn: Callable[[np.ndarray], np.ndarray],
        lipschitz: float,
        dim: int,
    ) -> "SmoothComponent":
        if lipschitz < 0:
            raise ValueError("lipschitz must be nonnegative")
        return cls(
            lipschitz=float(lipschitz),
            value_fn=value_fn,
            grad_fn=grad_fn,
            dim=int(dim),
        )

    def value(self, z: np.ndarray) -> float:
        if self.A is not None:
            return float(0.5 * z @ (self.A @ z) + self.b @ z)
        return float(self.value_fn(z))

    def grad(self, z: np.ndarray) -> np.ndarray:
        if self.A is not None:
            return self.A @ z + self.b
        return np.asarray(self.grad_fn(z), dtype=float)

    def is_convex(self) -> bool:
        """Convexity check; black boxes are conservatively treated as nonconvex."""
        if self.A is None:
            return False
        return float(np.linalg.eigvalsh(self.A).min()) >= -1e-10 * max(
            1.0, self.lipschitz
        )


@dataclass(frozen=True)
class NonsmoothSpec:
    """The convex nonsmooth part ``h``: none, l1 penalty, l1 ball, or a box."""

    kind: str
    mu: float = 0.0
    radius: float = 0.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    @classmethod
    def zero(cls) -> "NonsmoothSpec":
        return cls(kind="zero")

    @classmethod
    def l1_penalty(cls, mu: float) -> "NonsmoothSpec":
        if mu < 0:
            raise ValueError("l1 penalty weight must be nonnegative")
        return cls(kind="l1_penalty", mu=float(mu))

    @classmethod
    def l1_ball(cls, radius: float) -> "NonsmoothSpec":
        if radius <= 0:
            raise ValueError("l1 ball radius must be positive")
        return cls(kind="l1_ball", radius=float(radius))

    @classmethod
    def box(cls, lo: np.ndarray, hi: np.ndarray) -> "NonsmoothSpec":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatchError("box bounds must share a shape")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        return cls(kind="box", lo=lo, hi=hi)

    def value(self, z: np.ndarray) -> float:
        """h(z); indicator kinds return +inf outside a small feasibility slack."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1_penalty":
            return self.mu * float(np.abs(z).sum())
        if self.kind == "l1_ball":
            excess = float(np.abs(z).sum()) - self.radius
            return 0.0 if excess <= FEAS_TOL * max(1.0, self.radius) else np.inf
        if self.kind == "box":
            ok = np.all(z >= self.lo - FEAS_TOL) and np.all(z <= self.hi + FEAS_TOL)
            return 0.0 if ok else np.inf
        raise ValueError(f"unknown nonsmooth kind {self.kind!r}")


@dataclass(frozen=True)
class CompositeProblem:
    """Immutable container for ``(1/N) sum g_i + g0 + h`` in dimension d.

    Safe to share across concurrent runs; all evaluation methods are pure.
    Gradient-evaluation *counting* is the caller's job: none of the methods
    here touch any counter.
    """

    components: tuple[SmoothComponent, ...]
    h: NonsmoothSpec
    dim: int
    g0: SmoothComponent | None = None
    # Stacked (N,d,d) / (N,d) views, present only when every component is
    # quadratic; they make N-way gradient evaluations a single einsum.
    _A_stack: np.ndarray | None = field(default=None, repr=False, compare=False)
    _b_stack: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def create(
        cls,
        components: Sequence[SmoothComponent],
        h: NonsmoothSpec,
        g0: SmoothComponent | None = None,
    ) -> "CompositeProblem":
        components = tuple(components)
        if not components:
            raise ValueError("need at least one smooth component")
        dim = components[0].dim
        if dim < 1:
            raise ValueError("dimension must be positive")
        for c in components:
            if c.dim != dim:
                raise DimensionMismatchError("components disagree on dimension")
        if g0 is not None and g0.dim != dim:
            raise DimensionMismatchError("g0 dimension differs from components")
        A_stack = b_stack = None
        if all(c.kind == "quadratic" for c in components):
            A_stack = np.stack([c.A for c in components])
            b_stack = np.stack([c.b for c in components])
        return cls(
            components=components,
            h=h,
            dim=dim,
            g0=g0,
            _A_stack=A_stack,
            _b_stack=b_stack,
        )

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def lipschitz(self) -> np.ndarray:
        return np.array([c.lipschitz for c in self.components])

    @property
    def lipschitz_g0(self) -> float:
        return self.g0.lipschitz if self.g0 is not None else 0.0

    def _check_z(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatchError(
                f"point has shape {z.shape}, expected ({self.dim},)"
            )
        return z

    def eval_component(self, i: int, z: np.ndarray) -> float:
        """g_i(z), not divided by N."""
        z = self._check_z(z)
        if not 0 <= i < self.n_components:
            raise IndexError(f"component index {i} out of range")
        return self.components[i].value(z)

    def grad_component(self, i: int, z: np.ndarray) -> np.ndarray:
        """One component gradient; counts as one gradient evaluation to callers."""
        z = self._check_z(z)
        if not 0 <= i < self.n_components:
            raise IndexError(f"component index {i} out of range")
        return self.components[i].grad(z)

    def grad_all(self, z: np.ndarray) -> np.ndarray:
        """All N component gradients stacked as an (N, d) matrix.

        Counts as N gradient evaluations to callers.
        """
        z = self._check_z(z)
        if self._A_stack is not None:
            return self._A_stack @ z + self._b_stack
        return np.stack([c.grad(z) for c in self.components])

    def full_gradient(self, z: np.ndarray) -> np.ndarray:
        """Gradient of the smooth part, ``(1/N) sum_i grad g_i(z) + grad g0(z)``."""
        g = self.grad_all(z).mean(axis=0)
        if self.g0 is not None:
            g = g + self.g0.grad(z)
        return g

    def smooth_value(self, z: np.ndarray) -> float:
        """(1/N) sum_i g_i(z) + g0(z)."""
        z = self._check_z(z)
        val = sum(c.value(z) for c in self.components) / self.n_components
        if self.g0 is not None:
            val += self.g0.value(z)
        return float(val)

    def objective(self, z: np.ndarray) -> float:
        """f(z) including h; +inf outside h's feasible set."""
        return self.smooth_value(z) + self.h.value(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class RegressionConfig:
    """Setup for the noisy-covariate sparse regression instance family.

    Defaults are desk-scale: small enough for CI, structured like the real
    thing (minibatched rows, noisy covariates, an l1-ball sparsity budget).
    ``batch_layout="half_double"`` gives half the minibatches twice as many
    rows, producing heterogeneous component Lipschitz constants.
    """

    m_total: int = 2000
    p_dim: int = 100
    n_components: int = 20
    k_sparse: int = 10
    noise_std: float = 0.1
    covariate_noise_std: float = 0.2
    seed: int = 0
    batch_layout: str = "uniform"

    def validate(self) -> None:
        if min(self.m_total, self.p_dim, self.n_components, self.k_sparse) < 1:
            raise ValueError("all size fields must be positive")
        if self.k_sparse > self.p_dim:
            raise ValueError("k_sparse exceeds p_dim")
        if self.m_total < self.n_components:
            raise ValueError("need at least one sample per component")
        if self.noise_std < 0 or self.covariate_noise_std < 0:
            raise ValueError("noise levels must be nonnegative")
        layouts = ("uniform", "half_double", "half_scaled", "outlier_scaled")
        if self.batch_layout not in layouts:
            raise ValueError(f"unknown batch_layout {self.batch_layout!r}")


def _batch_sizes(cfg: RegressionConfig) -> list[int]:
    n, m = cfg.n_components, cfg.m_total
    if cfg.batch_layout != "half_double":
        base, rem = divmod(m, n)
        return [base + (1 if i < rem else 0) for i in range(n)]
    # half_double: the first floor(n/2) batches get twice the rows of the rest
    heavy = n // 2
    unit, rem = divmod(m, n + heavy)
    sizes = [2 * unit] * heavy + [unit] * (n - heavy)
    for i in range(rem):
        sizes[i % n] += 1
    if min(sizes) < 1:
        raise ValueError("m_total too small for the requested batch layout")
    return sizes


def _batch_scales(cfg: RegressionConfig) -> list[float]:
    # Scaled layouts model datasets whose row norms differ sharply across
    # minibatches: "half_scaled" gives half the batches covariates 3x
    # larger (curvatures ~9x); "outlier_scaled" concentrates the mass in
    # ceil(N/10) batches scaled 6x (~36x curvature), the regime where
    # sqrt-Lipschitz sampling pays off most.
    n = cfg.n_components
    if cfg.batch_layout == "half_scaled":
        return [3.0 if i < n // 2 else 1.0 for i in range(n)]
    if cfg.batch_layout == "outlier_scaled":
        heavy = -(-n // 10)
        return [6.0 if i < heavy else 1.0 for i in range(n)]
    return [1.0] * n


def generate_regression_instance(
    cfg: RegressionConfig,
) -> tuple[CompositeProblem, np.ndarray]:
    """Build a nonconvex quadratic instance from noisy-covariate regression.

    Rows are drawn per minibatch i as ``X_i`` (standard Gaussian), labels
    ``y_i = X_i v* + eps_i`` for a K-sparse ground truth ``v*`` with nonzeros
    ``+-1/sqrt(K)``, and observed covariates ``A_i = X_i + W_i``.  Component
    i is the quadratic

        g_i(z) = (N/M) [ z'(X_i'X_i - W_i'W_i) z - (A_i'y_i)' z ],

    so the average (1/N) sum_i g_i matches the aggregate bias-corrected
    least-squares surrogate, and h constrains ``||z||_1 <= ||v*||_1``.

    Returns the problem and the ground truth vector.  Deterministic in
    ``cfg.seed``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, p, m = cfg.n_components, cfg.p_dim, cfg.m_total

    support = rng.choice(p, size=cfg.k_sparse, replace=False)
    signs = rng.choice([-1.0, 1.0], size=cfg.k_sparse)
    truth = np.zeros(p)
    truth[support] = signs / np.sqrt(cfg.k_sparse)

    components = []
    for rows, scale in zip(_batch_sizes(cfg), _batch_scales(cfg)):
        X = scale * rng.standard_normal((rows, p))
        eps = rng.normal(0.0, cfg.noise_std, size=rows)
        y = X @ truth + eps
        W = scale * rng.normal(0.0, cfg.covariate_noise_std, size=(rows, p))
        A_obs = X + W
        hess = (2.0 * n / m) * (X.T @ X - W.T @ W)
        hess = 0.5 * (hess + hess.T)  # exact symmetry despite BLAS blocking
        lin = -(n / m) * (A_obs.T @ y)
        # Headroom over the power-iteration estimate keeps the Lipschitz
        # metadata an upper bound even when the iteration stops on a slow
        # tail (observed undershoot on this family is below 1e-4).
        lip = spectral_norm(hess) * (1.0 + 1e-3)
        components.append(SmoothComponent.quadratic(hess, lin, lipschitz=lip))

    radius = float(np.abs(truth).sum())
    problem = CompositeProblem.create(components, NonsmoothSpec.l1_ball(radius))
    return problem, truth


def _write_vector(out: io.TextIOBase, v: np.ndarray) -> None:
    out.write(" ".join(repr(float(x)) for x in v) + "\n")


def save_instance(problem: CompositeProblem, path: str) -> None:
    """Dump an all-quadratic instance to a plain text file for debugging.

    Format: a ``d N`` header, then for each component its d rows of A and
    one row of b, then one line describing h.  Not a stability-guaranteed
    format; Lipschitz metadata is recomputed on load.
    """
    if problem.g0 is not None:
        raise ValueError("instances with g0 are not serializable")
    if any(c.kind != "quadratic" for c in problem.components):
        raise ValueError("black-box components are not serializable")
    with open(path, "w") as out:
        out.write(f"{problem.dim} {problem.n_components}\n")
        for c in problem.components:
            for row in c.A:
                _write_vector(out, row)
            _write_vector(out, c.b)
        h = problem.h
        if h.kind == "zero":
            out.write("zero\n")
        elif h.kind == "l1_penalty":
            out.write(f"l1_penalty {h.mu!r}\n")
        elif h.kind == "l1_ball":
            out.write(f"l1_ball {h.radius!r}\n")
        else:
            out.write("box\n")
            _write_vector(out, h.lo)
            _write_vector(out, h.hi)


def load_instance(path: str) -> CompositeProblem:
    """Inverse of :func:`save_instance`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    pos = 0

    def next_line() -> str:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ValueError("truncated instance file")
        pos += 1
        return lines[pos - 1]

    def parse_vector(line: str) -> np.ndarray:
        return np.array(line.split(), dtype=float)

    d, n = (int(t) for t in next_line().split())
    components = []
    for _ in range(n):
        A = np.vstack([parse_vector(next_line()) for _ in range(d)])
        b = parse_vector(next_line())
        if A.shape != (d, d) or b.shape != (d,):
            raise ValueError("malformed component block")
        lip = spectral_norm(0.5 * (A + A.T)) * (1.0 + 1e-3)
        components.append(SmoothComponent.quadratic(A, b, lipschitz=lip))
    toks = next_line().split()
    if toks[0] == "zero":
        h = NonsmoothSpec.zero()
    elif toks[0] == "l1_penalty":
        h = NonsmoothSpec.l1_penalty(float(toks[1]))
    elif toks[0] == "l1_ball":
        h = NonsmoothSpec.l1_ball(float(toks[1]))
    elif toks[0] == "box":
        lo = parse_vector(next_line())
        hi = parse_vector(next_line())
        h = NonsmoothSpec.box(lo, hi)
    else:
        raise ValueError(f"unknown nonsmooth spec {toks[0]!r}")
    return CompositeProblem.create(components, h)
