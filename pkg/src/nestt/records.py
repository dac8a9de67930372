"""Run records and their CSV serialization.

One record = one (algorithm, seed) run: ordered metric samples plus the
identifying metadata and final iterate.  Per-run CSV files carry the exact
column schema below; run-level fields that have no column ride in ``#``
comment lines, so ``parse_run_csv(emit_run_csv(r)) == r`` field for field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricSample

__all__ = ["RunRecord", "CSV_HEADER", "emit_run_csv", "parse_run_csv", "write_combined_csv"]

CSV_HEADER = (
    "run_id,algorithm,sampling,seed,iter,passes,grad_evals,"
    "gap,potential,consensus_violation,wallclock_ns"
)


@dataclass(eq=False)
class RunRecord:
    """Ordered metric samples plus configuration fingerprint and seed."""

    algorithm: str
    sampling: str
    seed: int
    fingerprint: str
    samples: list[MetricSample]
    final_z: np.ndarray
    output_index: int
    run_id: str = ""

    def __post_init__(self):
        if not self.run_id:
            self.run_id = f"{self.algorithm}_{self.sampling}_seed{self.seed}"

    def final_gap(self) -> float:
        return self.samples[-1].gap

    def first_hit(self, threshold: float) -> int | None:
        """Gradient evaluations at the first recorded sample with gap <= threshold."""
        for s in self.samples:
            if s.gap <= threshold:
                return s.grad_evals
        return None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sample_row(record: RunRecord, s: MetricSample) -> str:
    cells = [
        record.run_id,
        record.algorithm,
        record.sampling,
        str(record.seed),
        str(s.iter),
        _fmt(s.passes),
        str(s.grad_evals),
        _fmt(s.gap),
        _fmt(s.potential),
        _fmt(s.consensus_violation),
        str(s.wallclock_ns),
    ]
    return ",".join(cells)


def emit_run_csv(record: RunRecord, path: str) -> None:
    with open(path, "w") as out:
        out.write(f"# fingerprint={record.fingerprint}\n")
        out.write(f"# output_index={record.output_index}\n")
        out.write("# final_z=" + " ".join(repr(float(x)) for x in record.final_z) + "\n")
        out.write(CSV_HEADER + "\n")
        for s in record.samples:
            out.write(_sample_row(record, s) + "\n")


def parse_run_csv(path: str) -> RunRecord:
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
                continue
            if line == CSV_HEADER:
                continue
            rows.append(line.split(","))
    if not rows:
        raise ValueError(f"no sample rows in {path}")
    samples = []
    for cells in rows:
        samples.append(
            MetricSample(
                iter=int(cells[4]),
                passes=float(cells[5]),
                grad_evals=int(cells[6]),
                gap=float(cells[7]),
                potential=float(cells[8]),
                consensus_violation=float(cells[9]) if cells[9] else None,
                wallclock_ns=int(cells[10]),
            )
        )
    first = rows[0]
    final_z = np.array(meta.get("final_z", "").split(), dtype=float)
    return RunRecord(
        algorithm=first[1],
        sampling=first[2],
        seed=int(first[3]),
        fingerprint=meta.get("fingerprint", ""),
        samples=samples,
        final_z=final_z,
        output_index=int(meta.get("output_index", "0")),
        run_id=first[0],
    )


def write_combined_csv(records: list[RunRecord], path: str) -> None:
    with open(path, "w") as out:
        out.write(CSV_HEADER + "\n")
        for record in records:
            for s in record.samples:
                out.write(_sample_row(record, s) + "\n")
