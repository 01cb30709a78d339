"""Command-line front end: one subcommand per experiment plus `solve` and `all`.

Each run reads an optional JSON config (defaults are built in), writes one
JSON report and the experiment's CSV sweep tables under --out, and exits 0
iff every declared pass criterion held.  Exit codes: 0 pass, 1 experiment ran
but failed (report still written), 2 usage or config errors.

CSV bodies are deterministic for a fixed (config, seed); floats carry 17
significant digits.  Reports additionally carry wall-clock runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, snapshots, solver
from .harness import ConfigError, ExperimentConfig

SUBCOMMANDS = [
    "solve",
    "verify-algebra",
    "bmo",
    "maximal",
    "apriori",
    "comparison",
    "good-lambda",
    "cz-sweep",
    "morrey-sweep",
    "all",
]

CSV_COLUMNS_HELP = """\
CSV tables written per experiment (columns):
  verify_algebra:        p, mu, c_lower, c_upper, sector_slope,
                         monotonicity_ok, sector_ok, accretivity_ok, ok
  existence_uniqueness:  p, mu, kind, iterations, probe_distance, slack, ok
  apriori:               p, mu, resolution, family, C, iterations
  comparison_trend:      level, bmo, center, C_interior_bound,
                         comparison_error, du_scale
  comparison_delta_fit:  delta, C_delta
  good_lambda:           sigma, kappa, lambdas_used, worst_ratio, ok
  good_lambda_vitali:    lambda, hypotheses_hold, conclusion_holds, measured_C
  cz_sweep:              resolution, family, q, beta, form, C
  cz_apriori_xref:       resolution, family, C_qp
  morrey_sweep:          family, q, s, C
  morrey_reduction:      family, C_morrey_qq, C_cz_q, abs_diff
  morrey_annulus:        j, w_max, bound, ok
  bmo:                   r0, seminorm, ball_count
  maximal:               field, beta, weak11_C
  solve_history:         iter, residual
"""


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cplap",
        description="Inequality lab for the complex-coefficient degenerate system",
        epilog=CSV_COLUMNS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument(
        "--resolution", type=int, default=None, help="override grid resolution"
    )
    p.add_argument("--p", type=float, default=None, help="override exponent p")
    p.add_argument("--mu", type=float, default=None, help="override degeneracy mu")
    return p


def load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.resolution is not None:
        overrides["resolution"] = args.resolution
    if args.p is not None:
        overrides["p"] = args.p
        overrides["p_list"] = (args.p,)
    if args.mu is not None:
        overrides["mu"] = args.mu
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    return cfg


def write_outputs(outdir: Path, name: str, report, tables: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{name}.json").write_text(report.to_json() + "\n")
    for tab, (header, rows) in tables.items():
        harness.write_csv(outdir / f"{tab}.csv", header, rows)


def run_solve(cfg: ExperimentConfig, outdir: Path) -> bool:
    """Single solve: snapshots of the state and per-iteration telemetry."""
    t0 = time.perf_counter()
    grid = harness.build_grid(cfg)
    consts, slope = harness.sector_for(cfg, cfg.p, cfg.mu)
    a = harness.build_coefficient(cfg, grid, slope)
    sources = harness.all_sources(cfg, grid)
    label, F = sources[0]
    outdir.mkdir(parents=True, exist_ok=True)
    telemetry = outdir / "solve_telemetry.jsonl"
    if telemetry.exists():
        telemetry.unlink()
    prob = solver.Problem(grid=grid, a=a, F=F, p=cfg.p, mu=cfg.mu)
    opts = solver.SolveOptions(
        seed=cfg.seed, tol_residual=cfg.tol_residual, telemetry_path=str(telemetry)
    )
    res = solver.solve(prob, opts)
    snapshots.write_field(
        outdir / "coefficient.cplf", a.values, grid.h, role="coefficient",
        kind=a.kind, params={"gamma0": a.gamma0, "gamma1": a.gamma1,
                             "gamma2": a.gamma2, "c0": a.c0},
    )
    snapshots.write_field(outdir / "source.cplf", F, grid.h, role="source", kind=label)
    snapshots.write_field(
        outdir / "solution.cplf", res.state.u, grid.h, role="solution"
    )
    snapshots.write_field(
        outdir / "gradient.cplf", res.state.Du, grid.h, role="gradient"
    )
    rep = harness.ExperimentReport(
        experiment="solve",
        config=cfg.to_dict(),
        measurements=[{
            "iterations": res.iterations,
            "final_residual": res.residual_history[-1],
            "energy_testing_bound": res.energy_testing_bound,
            "mu_stages": res.mu_stages,
        }],
        fitted_constants={"energy_testing_bound": res.energy_testing_bound},
        passed=True,
        runtime_s=time.perf_counter() - t0,
    )
    hist_rows = [[i, r] for i, r in enumerate(res.residual_history)]
    write_outputs(outdir, "solve", rep, {"solve_history": (["iter", "residual"], hist_rows)})
    return True


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        cfg = load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    outdir = Path(cfg.out)
    try:
        if args.command == "solve":
            ok = run_solve(cfg, outdir)
            print("solve: pass")
            return 0 if ok else 1
        if args.command == "all":
            passed_all = True
            summary = {}
            for name in [
                "verify-algebra", "maximal", "bmo", "existence-uniqueness",
                "apriori", "comparison", "good-lambda", "cz-sweep", "morrey-sweep",
            ]:
                rep, tables = harness.run_experiment(name, cfg)
                write_outputs(outdir, name.replace("-", "_"), rep, tables)
                summary[name] = rep.passed
                passed_all &= rep.passed
                print(f"{name}: {'pass' if rep.passed else 'FAIL'}")
            (outdir / "summary.json").write_text(
                json.dumps({"schema_version": harness.SCHEMA_VERSION,
                            "passed": passed_all, "experiments": summary},
                           sort_keys=True) + "\n"
            )
            return 0 if passed_all else 1
        rep, tables = harness.run_experiment(args.command, cfg)
        write_outputs(outdir, args.command.replace("-", "_"), rep, tables)
        print(f"{args.command}: {'pass' if rep.passed else 'FAIL'}")
        if args.command == "verify-algebra":
            for m in rep.measurements:
                print(
                    f"  p={m['p']} mu={m['mu']}: c_lower={m['c_lower']:.12g} "
                    f"c_upper={m['c_upper']:.12g}"
                )
        return 0 if rep.passed else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (solver.ConvergenceError, FloatingPointError, ValueError) as e:
        # experiment-level failure: record what we can and signal failure
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "failure.json").write_text(
            json.dumps({"experiment": args.command, "error": str(e)}) + "\n"
        )
        print(f"experiment failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
