"""Command line entry point: ``sdnf {simulate,reconstruct,montecarlo,sweep,bumps}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import export
from .config import ConfigError, ExperimentConfig, load_config, full_scale
from .experiment import (measurement_times, model_for, run_monte_carlo, run_spacing_sweep,
                         run_twin_experiment)
from .pattern import count_bumps
from .sde import simulate_truth
from .spectral import project_initial, synthesize_field

log = logging.getLogger("sdnf")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.full_scale:
        cfg = full_scale(cfg)
    over: dict = {}
    if args.seed is not None:
        over["monte_carlo"] = {"master_seed": args.seed}
    if args.scheme is not None:
        over["filter"] = {"schemes": ["em05", "it15"] if args.scheme == "both" else [args.scheme]}
    if getattr(args, "runs", None) is not None:
        over.setdefault("monte_carlo", {})["runs"] = args.runs
    if getattr(args, "workers", None) is not None:
        over.setdefault("monte_carlo", {})["workers"] = args.workers
    if getattr(args, "dx", None):
        over["sweep"] = {"dx": args.dx}
    return cfg.with_overrides(**over) if over else cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = _config(args)
    out = _outdir(args)
    d = cfg.discretization
    model = model_for(cfg)
    u0 = project_initial(np.zeros(model.basis.mesh.n_nodes), model.basis)
    n = int(round(d.T / d.h_t))
    store = np.arange(n + 1) * d.h_t if args.fields else None
    traj = simulate_truth(model, d.truth_scheme, d.h_t, d.T, u0, cfg.monte_carlo.master_seed,
                          args.run_index, store_times=store)
    (out / "config.yaml").write_text(cfg.dump())
    export.write_trajectory(out / "truth.csv", traj, include_fields=args.fields)
    final = synthesize_field(traj.final_state, model.basis)
    export.write_dat(out / "truth_final.dat", {"x": model.basis.mesh.nodes, "u": final})
    p = cfg.pattern
    bumps = count_bumps(final, cfg.model.threshold, p.min_width, p.periodic)
    print(f"simulated {n} steps ({d.truth_scheme}); final field has {bumps.count} bump(s)")


def cmd_reconstruct(args):
    cfg = _config(args)
    out = _outdir(args)
    res = run_twin_experiment(cfg, run_index=args.run_index)
    (out / "config.yaml").write_text(cfg.dump())
    export.write_trajectory(out / "truth.csv", res.truth, include_fields=True)
    export.write_measurements(out / "measurements.csv", res.measurements)
    cols = {"x": model_for(cfg).basis.mesh.nodes, "truth": res.truth.fields_on_mesh[-1]}
    for sc, rec in res.reconstructions.items():
        export.write_reconstruction(out / f"reconstruction_{sc}.csv", rec)
        cols[sc] = rec.final_field
    export.write_dat(out / "final_fields.dat", cols)
    export.write_dat(out / "rmse.dat", {"t": res.measurements.times, **res.record.rmse})
    r = res.record
    print(f"truth bumps: {r.truth_bumps}; " +
          "; ".join(f"{sc}: {r.bumps[sc]} bump(s), final RMSE {r.rmse[sc][-1]:.4g}" for sc in r.bumps))


def cmd_montecarlo(args):
    cfg = _config(args)
    out = _outdir(args)
    t0 = time.perf_counter()
    result = run_monte_carlo(cfg)
    wall = time.perf_counter() - t0
    (out / "config.yaml").write_text(cfg.dump())
    title = (f"sigma={cfg.model.stimulus.width:g} eps={cfg.model.noise_level:g} "
             f"dt={cfg.observation.dt:g} dx={cfg.observation.dx:g} M={cfg.monte_carlo.runs}")
    text = export.write_monte_carlo(out, result, cfg.filter.schemes, measurement_times(cfg), title)
    h = result.health()
    export.write_summary(out / "summary.json", {
        "runs": len(result.records), "failures": result.failures, "wall_time_s": wall,
        "total_mismatch": {sc: t.total_mismatch for sc, t in result.tables.items()},
        "per_run_disagreement": {sc: t.per_run_disagreement for sc, t in result.tables.items()},
        "covariance": {"clamp_events": h.clamp_events, "min_eig_ratio": h.min_eig_ratio,
                       "max_asymmetry": h.max_asymmetry},
    })
    print(text, end="")
    if result.failures:
        print(f"{result.failures} run(s) failed; see runs.csv")


def cmd_sweep(args):
    cfg = _config(args)
    out = _outdir(args)
    t0 = time.perf_counter()
    sweep = run_spacing_sweep(cfg)
    wall = time.perf_counter() - t0
    (out / "config.yaml").write_text(cfg.dump())
    export.write_sweep(out, sweep, cfg.filter.schemes)
    for dx, res in zip(sweep.dx_values, sweep.results):
        export.write_monte_carlo(out / f"dx_{dx:g}", res, cfg.filter.schemes, measurement_times(cfg),
                                 f"dx={dx:g}")
    export.write_summary(out / "summary.json", {
        "wall_time_s": wall, "totals": [{"dx": dx, **t} for dx, t in sweep.totals()]})
    for dx, t in sweep.totals():
        print(f"dx={dx:g}: " + ", ".join(f"{sc} total mismatch {v}" for sc, v in t.items()))


def cmd_bumps(args):
    times, fields = export.read_fields(args.input)
    w = sys.stdout
    w.write("row,t,count,intervals\n")
    for i, (t, f) in enumerate(zip(times, fields)):
        b = count_bumps(f, args.theta, args.min_width, not args.no_periodic)
        iv = " ".join(f"{s}-{e}" for s, e in b.intervals)
        w.write(f"{i},{'' if t is None else export.fmt(t)},{b.count},{iv}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdnf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="YAML experiment config (defaults are used when omitted)")
        p.add_argument("--seed", type=int, help="override monte_carlo.master_seed")
        p.add_argument("--scheme", choices=["em05", "it15", "both"], help="filter scheme(s)")
        p.add_argument("--full-scale", action="store_true", help="K=100, N=1000, M=500")
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("simulate", help="simulate the reference solution only")
    common(p, "out/simulate")
    p.add_argument("--run-index", type=int, default=0)
    p.add_argument("--fields", action="store_true", help="also write mesh fields at every step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run a single twin experiment")
    common(p, "out/reconstruct")
    p.add_argument("--run-index", type=int, default=0)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("montecarlo", help="Monte Carlo pattern recognition study")
    common(p, "out/montecarlo")
    p.add_argument("--runs", type=int, help="override monte_carlo.runs")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep", help="Monte Carlo over several sensor spacings")
    common(p, "out/sweep")
    p.add_argument("--runs", type=int, help="override monte_carlo.runs")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--dx", type=float, nargs="+", help="sensor spacings (overrides sweep.dx)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bumps", help="count bumps in fields stored in a CSV file")
    p.add_argument("input")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--min-width", type=int, default=3)
    p.add_argument("--no-periodic", action="store_true")
    p.set_defaults(func=cmd_bumps)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
