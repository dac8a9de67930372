"""Config-driven experiment runner: parse, run, summarize, emit CSV.

Configs are flat ``key = value`` text with dotted sections::

    problem.m_total = 2000
    problem.p_dim = 100
    ...                      # or: problem.instance = path/to/instance.txt
    algo[0].name = nestt_g
    algo[0].sampling = sqrt_lipschitz
    algo[0].passes = 100
    algo[0].seeds = 0,1,2
    output.dir = out
    output.record_stride_passes = 1

Unknown keys are rejected with the offending key named.  All runs in an
experiment share one gap yardstick: the square-root-sampling ``beta`` of
the instance.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .errors import ConfigError
from .nestt_e import run_e
from .nestt_g import run_g
from .problem import (
    CompositeProblem,
    RegressionConfig,
    generate_regression_instance,
    load_instance,
)
from .records import RunRecord, emit_run_csv, write_combined_csv
from .sampling import (
    Schedule,
    nestt_e_fixed_penalty_parameters,
    nestt_g_parameters,
    nestt_g_parameters_for_sampling,
)

__all__ = [
    "AlgoSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_file",
    "config_fingerprint",
    "sampling_probabilities",
    "run_experiment",
    "summarize",
    "write_summary_csv",
]

ALGORITHMS = ("nestt_g", "nestt_e", "sgd", "saga", "prox_gd")
SAMPLINGS = ("uniform", "sqrt_lipschitz", "lipschitz", "cyclic")
GAP_THRESHOLDS = (1e-2, 1e-4, 1e-6)

_PROBLEM_KEYS = {
    "m_total": int,
    "p_dim": int,
    "n_components": int,
    "k_sparse": int,
    "noise_std": float,
    "covariate_noise_std": float,
    "seed": int,
    "batch_layout": str,
}
_ALGO_KEYS = {
    "name": str,
    "sampling": str,
    "alpha_scale": float,
    "passes": int,
    "seeds": str,
    "sgd_stepsize_scale": float,
}
_OUTPUT_KEYS = {"dir": str, "record_stride_passes": float}


# Sampling used when the config omits algo[k].sampling: the gradient-step
# variant takes its sqrt-Lipschitz rule, the exact-minimization variant its
# module default (Lipschitz-proportional), baselines sample uniformly.
_DEFAULT_SAMPLING = {
    "nestt_g": "sqrt_lipschitz",
    "nestt_e": "lipschitz",
    "sgd": "uniform",
    "saga": "uniform",
    "prox_gd": "uniform",
}


@dataclass(frozen=True)
class AlgoSpec:
    name: str
    passes: int
    seeds: tuple[int, ...]
    sampling: str = ""
    alpha_scale: float = 1.0
    sgd_stepsize_scale: float = 0.1

    @property
    def effective_sampling(self) -> str:
        return self.sampling or _DEFAULT_SAMPLING[self.name]

    @property
    def label(self) -> str:
        """Display/CSV label; distinguishes exact-minimization alpha variants."""
        if self.name == "nestt_e" and self.alpha_scale != 1.0:
            return f"nestt_e@a{self.alpha_scale:g}"
        return self.name


@dataclass(frozen=True)
class ExperimentConfig:
    problem: RegressionConfig | str
    algorithms: tuple[AlgoSpec, ...]
    output_dir: str
    record_stride_passes: float = 1.0
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.raw)


def config_fingerprint(kv: dict[str, str]) -> str:
    """Stable hash of a flat config map; insensitive to key order."""
    canon = "\n".join(f"{k}={kv[k].strip()}" for k in sorted(kv))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parse_kv_lines(text: str) -> dict[str, str]:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in kv:
            raise ConfigError(f"duplicate key {key!r}")
        kv[key] = value.strip()
    return kv


def _convert(key: str, value: str, typ):
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {value!r}") from exc


def parse_problem_section(kv: dict[str, str]) -> RegressionConfig | str:
    """Build the problem part from ``problem.*`` keys (shared by gen-instance)."""
    fields = {}
    instance = None
    for key, value in kv.items():
        if not key.startswith("problem."):
            raise ConfigError(f"unknown key {key!r}")
        sub = key[len("problem."):]
        if sub == "instance":
            instance = value
        elif sub in _PROBLEM_KEYS:
            fields[sub] = _convert(key, value, _PROBLEM_KEYS[sub])
        else:
            raise ConfigError(f"unknown key {key!r}")
    if instance is not None:
        if fields:
            raise ConfigError(
                "problem.instance excludes the generator keys problem.*"
            )
        return instance
    cfg = RegressionConfig(**fields)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"problem section: {exc}") from exc
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    kv = _parse_kv_lines(text)
    problem_kv, algo_kv, output_kv = {}, {}, {}
    for key in kv:
        if key.startswith("problem."):
            problem_kv[key] = kv[key]
        elif key.startswith("algo["):
            algo_kv[key] = kv[key]
        elif key.startswith("output."):
            output_kv[key] = kv[key]
        else:
            raise ConfigError(f"unknown key {key!r}")

    problem = parse_problem_section(problem_kv)

    per_algo: dict[int, dict[str, str]] = {}
    for key, value in algo_kv.items():
        head, _, sub = key.partition("].")
        if not sub or not head.startswith("algo["):
            raise ConfigError(f"unknown key {key!r}")
        try:
            idx = int(head[len("algo["):])
        except ValueError:
            raise ConfigError(f"unknown key {key!r}") from None
        if sub not in _ALGO_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        per_algo.setdefault(idx, {})[sub] = value
    if not per_algo:
        raise ConfigError("need at least one algo[k] section")
    if sorted(per_algo) != list(range(len(per_algo))):
        raise ConfigError("algo indices must be contiguous from 0")

    algorithms = []
    for idx in sorted(per_algo):
        entry = per_algo[idx]
        if "name" not in entry:
            raise ConfigError(f"algo[{idx}].name is required")
        if "passes" not in entry:
            raise ConfigError(f"algo[{idx}].passes is required")
        if "seeds" not in entry:
            raise ConfigError(f"algo[{idx}].seeds is required")
        name = entry["name"]
        if name not in ALGORITHMS:
            raise ConfigError(f"algo[{idx}].name: unknown algorithm {name!r}")
        sampling = entry.get("sampling", "")
        if sampling and sampling not in SAMPLINGS:
            raise ConfigError(f"algo[{idx}].sampling: unknown kind {sampling!r}")
        passes = _convert(f"algo[{idx}].passes", entry["passes"], int)
        if passes < 1:
            raise ConfigError(f"algo[{idx}].passes must be positive")
        try:
            seeds = tuple(int(s) for s in entry["seeds"].split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"algo[{idx}].seeds: expected comma-separated ints") from None
        if not seeds:
            raise ConfigError(f"algo[{idx}].seeds must be nonempty")
        alpha_scale = _convert(
            f"algo[{idx}].alpha_scale", entry.get("alpha_scale", "1.0"), float
        )
        if alpha_scale <= 0:
            raise ConfigError(f"algo[{idx}].alpha_scale must be positive")
        sgd_scale = _convert(
            f"algo[{idx}].sgd_stepsize_scale",
            entry.get("sgd_stepsize_scale", "0.1"),
            float,
        )
        algorithms.append(
            AlgoSpec(
                name=name,
                passes=passes,
                seeds=seeds,
                sampling=sampling,
                alpha_scale=alpha_scale,
                sgd_stepsize_scale=sgd_scale,
            )
        )

    if "output.dir" not in output_kv:
        raise ConfigError("output.dir is required")
    stride = _convert(
        "output.record_stride_passes",
        output_kv.get("output.record_stride_passes", "1.0"),
        float,
    )
    if stride <= 0:
        raise ConfigError("output.record_stride_passes must be positive")
    return ExperimentConfig(
        problem=problem,
        algorithms=tuple(algorithms),
        output_dir=output_kv["output.dir"],
        record_stride_passes=stride,
        raw=kv,
    )


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


def sampling_probabilities(kind: str, L: np.ndarray, n: int) -> np.ndarray:
    """Selection probabilities for a named sampling scheme (cyclic: uniform)."""
    if kind in ("uniform", "cyclic"):
        return np.full(n, 1.0 / n)
    if kind == "sqrt_lipschitz":
        w = np.sqrt(L / n)
        return w / w.sum()
    if kind == "lipschitz":
        return L / L.sum()
    raise ConfigError(f"unknown sampling kind {kind!r}")


def _load_problem(cfg: ExperimentConfig) -> CompositeProblem:
    if isinstance(cfg.problem, str):
        return load_instance(cfg.problem)
    return generate_regression_instance(cfg.problem)[0]


def _make_schedule(kind: str, p: np.ndarray, n: int, seed: int) -> Schedule:
    if kind == "cyclic":
        return Schedule.cyclic(n, seed=seed)
    return Schedule.iid(p, seed)


def _run_one(
    problem: CompositeProblem,
    algo: AlgoSpec,
    index: int,
    seed: int,
    beta_ref: float,
    stride: int,
    fingerprint: str,
) -> RunRecord:
    n = problem.n_components
    L = problem.lipschitz
    z0 = np.zeros(problem.dim)
    iters = algo.passes * n
    sampling = algo.effective_sampling
    run_id = f"a{index}_{algo.label}_{sampling}_s{seed}"
    p = sampling_probabilities(sampling, L, n)
    common = dict(
        record_stride=stride,
        gap_beta=beta_ref,
        sampling=sampling,
        fingerprint=fingerprint,
        run_id=run_id,
    )
    if algo.name == "nestt_g":
        params = nestt_g_parameters_for_sampling(L, n, p)
        schedule = _make_schedule(sampling, p, n, seed)
        return run_g(problem, params, z0, schedule=schedule, iters=iters,
                     algorithm=algo.label, **common)
    if algo.name == "nestt_e":
        params = nestt_e_fixed_penalty_parameters(
            L, n, alpha_scale=algo.alpha_scale, p=p
        )
        schedule = _make_schedule(sampling, p, n, seed)
        return run_e(problem, params, z0, schedule=schedule, iters=iters,
                     algorithm=algo.label, **common)
    if algo.name == "sgd":
        rule = baselines.StepsizeRule(
            "inv_sqrt", algo.sgd_stepsize_scale * beta_ref
        )
        schedule = _make_schedule(sampling, p, n, seed)
        return baselines.prox_sgd_run(problem, rule, z0, schedule, iters,
                                      algorithm=algo.label, **common)
    if algo.name == "saga":
        schedule = _make_schedule(sampling, p, n, seed)
        return baselines.saga_run(problem, z0, schedule, iters,
                                  algorithm=algo.label, **common)
    if algo.name == "prox_gd":
        return baselines.prox_gd_run(problem, z0, algo.passes, seed=seed,
                                     algorithm=algo.label, **common)
    raise ConfigError(f"unknown algorithm {algo.name!r}")


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Execute every (algorithm, seed) pair, write one CSV per run plus a
    combined CSV, and return the records in config order.

    Deterministic given the config (wallclock columns aside).  Independent
    runs execute in parallel workers; NESTT_THREADS caps the worker count.
    """
    problem = _load_problem(cfg)
    n = problem.n_components
    beta_ref = nestt_g_parameters(problem.lipschitz, n).beta
    stride = max(1, int(round(cfg.record_stride_passes * n)))
    fingerprint = cfg.fingerprint
    jobs = [
        (algo, k, seed)
        for k, algo in enumerate(cfg.algorithms)
        for seed in algo.seeds
    ]
    env = os.environ.get("NESTT_THREADS", "")
    workers = int(env) if env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))

    def work(job):
        algo, k, seed = job
        return _run_one(problem, algo, k, seed, beta_ref, stride, fingerprint)

    if workers == 1:
        records = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(work, jobs))

    os.makedirs(cfg.output_dir, exist_ok=True)
    for record in records:
        emit_run_csv(record, os.path.join(cfg.output_dir, record.run_id + ".csv"))
    write_combined_csv(records, os.path.join(cfg.output_dir, "combined.csv"))
    return records


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def summarize(records: list[RunRecord]) -> tuple[str, list[dict]]:
    """Aggregate final gaps and threshold-hitting costs per algorithm row.

    Rows are (algorithm, sampling) groups; columns are the mean and median
    final gap across seeds and the median gradient evaluations needed to
    first reach each gap threshold (blank when no seed reached it).
    Returns the rendered text table and the rows as dicts.
    """
    if not records:
        raise ValueError("no records to summarize")
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    order = []
    for record in records:
        key = (record.algorithm, record.sampling)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(record)

    rows = []
    for key in order:
        runs = groups[key]
        finals = np.array([r.final_gap() for r in runs])
        row = {
            "algorithm": key[0],
            "sampling": key[1],
            "mean_final_gap": float(finals.mean()),
            "median_final_gap": float(np.median(finals)),
        }
        for thr in GAP_THRESHOLDS:
            hits = [r.first_hit(thr) for r in runs]
            hits = [h for h in hits if h is not None]
            row[f"evals_to_{thr:g}"] = float(np.median(hits)) if hits else None
        rows.append(row)

    headers = list(rows[0].keys())
    table = [headers] + [[_fmt_cell(r[h]) for h in headers] for r in rows]
    widths = [max(len(line[j]) for line in table) for j in range(len(headers))]
    text = "\n".join(
        "  ".join(cell.ljust(widths[j]) for j, cell in enumerate(line))
        for line in table
    )
    return text, rows


def write_summary_csv(rows: list[dict], path: str) -> None:
    headers = list(rows[0].keys())
    with open(path, "w") as out:
        out.write(",".join(headers) + "\n")
        for row in rows:
            out.write(",".join(_fmt_cell(row[h]) for h in headers) + "\n")
