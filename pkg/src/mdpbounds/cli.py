"""Command-line entry point ``mdpbounds``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, ExperimentConfig
from .dual import noise_basis_mean_error, zero_mean_audit
from .experiment import (LADDER_COLUMNS, StageError, build_setup, doubling, duality_gap_experiment, fit_dual,
                         fit_primal, ladder, rows_to_csv)
from .interpolation import product_grid
from .mdp import solve_exact
from .probe import linear_family, loglog_slope, uniform_error_probe


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    seeds = cfg.seeds
    for name in ("primal", "dual", "test"):
        v = getattr(args, f"seed_{name}")
        if v is not None:
            seeds = replace(seeds, **{name: v})
    cfg = replace(cfg, seeds=seeds)
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    cfg.validate()
    return cfg


def _out(cfg: ExperimentConfig, name: str) -> Path:
    return Path(cfg.output.dir) / name


def cmd_oracle(cfg: ExperimentConfig, args) -> dict:
    setup = build_setup(cfg)
    tb = setup.testbed
    out = {"schema_version": SCHEMA_VERSION, "testbed": tb.id, "x0": tb.x0[0].tolist(), "value": tb.oracle_value()}
    if tb.finite:
        ex = solve_exact(tb.model)
        out["values"] = ex.values.tolist()
        out["policy"] = ex.policy.tolist()
    write_atomic(_out(cfg, "oracle.json"), dump_json(out))
    print(f"V*_0({tb.x0[0, 0]:g}) = {out['value']!r}")
    return out


def cmd_primal(cfg: ExperimentConfig, args) -> dict:
    setup = build_setup(cfg)
    est = fit_primal(cfg, setup)
    v0 = float(est[0](setup.testbed.x0)[0])
    out = {
        "schema_version": SCHEMA_VERSION,
        "testbed": setup.testbed.id,
        "value_at_x0": v0,
        "coefficients": [None if e.coeffs is None else e.coeffs.tolist() for e in est],
        "diagnostics": [e.diagnostics for e in est if e.diagnostics is not None],
        "seeds": {"primal": cfg.seeds.primal},
    }
    write_atomic(_out(cfg, "primal.json"), dump_json(out))
    print(f"V_0,N(x0) = {v0!r}")
    for d in out["diagnostics"]:
        print(f"  stage {d['stage']}: clip rate {d['clip_rate']:.4f}")
    return out


def cmd_dual(cfg: ExperimentConfig, args) -> dict:
    setup = build_setup(cfg)
    model = setup.testbed.model
    est = fit_primal(cfg, setup)
    dual = fit_dual(cfg, est, setup)
    xs, acts = product_grid(*setup.grids)
    audit = {
        "noise_basis_mean": noise_basis_mean_error(setup.noise_basis, model.noise),
        "penalty_mean": zero_mean_audit(model, dual, xs, acts),
    }
    out = {"schema_version": SCHEMA_VERSION, "martingale": dual.to_dict(), "audit": audit}
    write_atomic(_out(cfg, "dual.json"), dump_json(out))
    print(f"zero-mean audit: noise basis {audit['noise_basis_mean']:.3e}, penalty {audit['penalty_mean']:.3e}")
    return out


def cmd_bound(cfg: ExperimentConfig, args) -> dict:
    report = duality_gap_experiment(cfg, args.threads)
    out = report.to_dict()
    write_atomic(_out(cfg, "bound.json"), dump_json(out))
    print(f"lower {report.lower:.6f} +- {report.lower_se:.6f}  upper {report.upper:.6f} +- {report.upper_se:.6f}  "
          f"gap {report.gap:.6f}  oracle {report.oracle!r}")
    return out


def cmd_ladder(cfg: ExperimentConfig, args) -> dict:
    sizes = doubling(args.start, args.steps)
    rows = ladder(cfg, sizes, args.threads)
    write_atomic(_out(cfg, "ladder.csv"), rows_to_csv(rows, LADDER_COLUMNS))
    slope = loglog_slope([r["N"] for r in rows], [max(r["gap"], 1e-300) for r in rows]) if len(rows) > 1 else None
    out = {"schema_version": SCHEMA_VERSION, "rows": rows, "gap_slope": slope}
    write_atomic(_out(cfg, "ladder.json"), dump_json(out))
    for r in rows:
        print(f"N=M={r['N']}: gap {r['gap']:.6f}")
    return out


def cmd_uniform_error(cfg: ExperimentConfig, args) -> dict:
    params = np.linspace(0.0, 1.0, args.params)
    sizes = doubling(args.start, args.steps)
    rows = uniform_error_probe(linear_family, params, sizes, cfg.seeds.test, np.zeros(params.size), args.reps)
    lines = ["N,sup_error"] + [f"{r.N},{r.sup_error!r}" for r in rows]
    write_atomic(_out(cfg, "uniform_error.csv"), "\n".join(lines) + "\n")
    slope = loglog_slope([r.N for r in rows], [r.sup_error for r in rows])
    print(f"log-log slope {slope:.4f}")
    return {"rows": rows, "slope": slope}


COMMANDS = {
    "oracle": cmd_oracle,
    "primal": cmd_primal,
    "dual": cmd_dual,
    "bound": cmd_bound,
    "ladder": cmd_ladder,
    "uniform-error": cmd_uniform_error,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed-primal", type=int)
    common.add_argument("--seed-dual", type=int)
    common.add_argument("--seed-test", type=int)
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")

    p = argparse.ArgumentParser(prog="mdpbounds", description="Primal-dual bounds for finite-horizon MDPs")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("oracle", parents=[common], help="exact (or dense-grid) optimal value")
    sub.add_parser("primal", parents=[common], help="backward regression pass and diagnostics")
    sub.add_parser("dual", parents=[common], help="fit the penalty martingale and audit its mean")
    sub.add_parser("bound", parents=[common], help="lower and upper bounds with the duality gap")
    lad = sub.add_parser("ladder", parents=[common], help="doubling N=M sweep written as CSV")
    lad.add_argument("--start", type=int, default=64)
    lad.add_argument("--steps", type=int, default=5)
    ue = sub.add_parser("uniform-error", parents=[common], help="uniform mean-estimation error probe")
    ue.add_argument("--start", type=int, default=128)
    ue.add_argument("--steps", type=int, default=8)
    ue.add_argument("--params", type=int, default=21, help="size of the parameter grid on [0, 1]")
    ue.add_argument("--reps", type=int, default=20)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    problems = []
    if args.threads < 1:
        problems.append(f"--threads: must be >= 1, got {args.threads}")
    for name in ("start", "steps", "params", "reps"):
        if getattr(args, name, 1) < 1:
            problems.append(f"--{name}: must be >= 1, got {getattr(args, name)}")
    try:
        if problems:
            raise ConfigError(problems)
        cfg = load_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
