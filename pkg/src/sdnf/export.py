"""CSV and gnuplot-style data writers.

Every float goes through ``fmt`` (9 significant digits), so repeated runs
with the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ekf import MeasurementSet, Reconstruction
from .experiment import MonteCarloResult, RunRecord, SweepResult
from .pattern import format_tables
from .sde import Trajectory


def fmt(x) -> str:
    return f"{float(x):.9g}"


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) if isinstance(c, (float, np.floating)) else c
                        for c in r])


def write_trajectory(path, traj: Trajectory, include_fields: bool = False):
    """Columns t, u_0..u_K and, optionally, f_0..f_N at the instants where fields were kept."""
    K1 = traj.states.shape[1]
    header = ["t"] + [f"u_{k}" for k in range(K1)]
    if not include_fields or traj.fields_on_mesh is None:
        _write(Path(path), header, ([t, *u] for t, u in zip(traj.times, traj.states)))
        return
    header += [f"f_{i}" for i in range(traj.fields_on_mesh.shape[1])]
    rows = []
    for t, f in zip(traj.field_times, traj.fields_on_mesh):
        n = int(np.argmin(np.abs(traj.times - t)))
        rows.append([traj.times[n], *traj.states[n], *f])
    _write(Path(path), header, rows)


def write_measurements(path, meas: MeasurementSet):
    header = ["t"] + [f"z_{i}" for i in meas.layout.sensor_indices]
    _write(Path(path), header, ([t, *z] for t, z in zip(meas.times, meas.readings)))


def write_reconstruction(path, rec: Reconstruction):
    """Columns t_k, trace(P), innovation norm, NIS, then the field on every mesh node."""
    header = ["t", "trace_P", "innovation_norm", "nis"] + [f"f_{i}" for i in range(rec.fields.shape[1])]
    rows = ([t, tr, inn, nis, *f] for t, tr, inn, nis, f in
            zip(rec.times, rec.cov_traces, rec.innovation_norms, rec.nis, rec.fields))
    _write(Path(path), header, rows)


def write_runs(path, records: Sequence[RunRecord], schemes: Sequence[str]):
    header = ["run_index", "seed", "status", "truth_bumps"]
    for sc in schemes:
        header += [f"{sc}_bumps", f"{sc}_rmse_final", f"{sc}_rmse_mean"]
    rows = []
    for r in records:
        row = [r.run_index, r.seed, "ok" if r.ok else "failed", r.truth_bumps]
        for sc in schemes:
            if r.ok:
                row += [r.bumps[sc], float(r.rmse[sc][-1]), float(np.mean(r.rmse[sc]))]
            else:
                row += ["", "", ""]
        rows.append(row)
    _write(Path(path), header, rows)


def write_rmse(path, records: Sequence[RunRecord], times: Sequence[float]):
    rows = []
    for r in records:
        for sc, e in r.rmse.items():
            rows += [[r.run_index, sc, float(t), float(v)] for t, v in zip(times, e)]
    _write(Path(path), ["run_index", "scheme", "t", "rmse"], rows)


def write_dat(path, columns: dict[str, Sequence[float]]):
    """Whitespace-separated columns with a ``#`` header line (gnuplot friendly)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def write_monte_carlo(outdir, result: MonteCarloResult, schemes: Sequence[str], times, title: str = ""):
    out = Path(outdir)
    write_runs(out / "runs.csv", result.records, schemes)
    write_rmse(out / "rmse.csv", [r for r in result.records if r.ok], times)
    for sc, table in result.tables.items():
        (out / f"mismatch_{sc}.csv").write_text(table.to_csv())
    ok = [r for r in result.records if r.ok]
    text = format_tables([r.truth_bumps for r in ok], {sc: [r.bumps[sc] for r in ok] for sc in schemes},
                         title)
    (out / "tables.txt").write_text(text)
    return text


def write_sweep(outdir, sweep: SweepResult, schemes: Sequence[str]):
    out = Path(outdir)
    totals = sweep.totals()
    _write(out / "sweep.csv", ["dx"] + [f"{sc}_total_mismatch" for sc in schemes],
           ([float(dx), *(t[sc] for sc in schemes)] for dx, t in totals))
    write_dat(out / "sweep.dat", {"dx": [dx for dx, _ in totals],
                                   **{sc: [t[sc] for _, t in totals] for sc in schemes}})


def write_summary(path, data: dict):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def read_fields(path) -> tuple[list[float | None], np.ndarray]:
    """Read mesh fields from a CSV: either a ``u`` column or ``f_*`` columns (one field per row)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = list(rows[0])
    if "u" in cols:
        return [None], np.array([[float(r["u"]) for r in rows]])
    fcols = sorted((c for c in cols if c.startswith("f_")), key=lambda c: int(c[2:]))
    if not fcols:
        raise ValueError(f"{path}: expected a 'u' column or 'f_<i>' columns, got {cols}")
    times = [float(r["t"]) if "t" in r else None for r in rows]
    return times, np.array([[float(r[c]) for c in fcols] for r in rows])
