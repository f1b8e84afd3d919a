"""End-to-end runs: primal fit, dual fit, then both bounds on independent seeds."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .bounds import BoundReport, lower_bound, upper_bound
from .config import ExperimentConfig
from .dual import DualMartingale, build_dual_martingale, theory_lipschitz
from .primal import backward_pass, mc_root_value
from .testbeds import Testbed, make_testbed

LADDER_COLUMNS = ("N", "M", "lower", "lower_se", "upper", "upper_se", "gap", "oracle", "seed")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` is one of setup, primal, dual, lower, upper, oracle."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


@dataclass(frozen=True, eq=False)
class Setup:
    testbed: Testbed
    mu: object
    state_basis: object
    noise_basis: object
    grids: tuple


def build_testbed(cfg: ExperimentConfig) -> Testbed:
    t = cfg.testbed
    tb = make_testbed(t.id, t.horizon, t.n_states, t.n_actions, t.drift, t.sigma, t.degenerate_noise)
    return replace(tb, x0=np.array([[float(t.x0)]]))


def build_setup(cfg: ExperimentConfig) -> Setup:
    tb = build_testbed(cfg)
    mu = tb.reference_measure(cfg.primal.alpha)
    sb = tb.state_basis(cfg.primal.basis, cfg.primal.K, mu, cfg.primal.domain_bound)
    nb = tb.noise_basis(cfg.dual.basis, cfg.dual.K, cfg.primal.domain_bound)
    grids = tb.dual_grid(cfg.dual.grid_size, cfg.dual.grid_half_width)
    return Setup(tb, mu, sb, nb, grids)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(name, exc) from exc


def fit_primal(cfg: ExperimentConfig, setup: Optional[Setup] = None):
    setup = setup or _stage("setup", build_setup, cfg)
    return _stage("primal", backward_pass, setup.testbed.model, setup.state_basis, setup.mu, cfg.primal.N,
                  cfg.seeds.primal)


def fit_dual(cfg: ExperimentConfig, estimates, setup: Optional[Setup] = None) -> DualMartingale:
    setup = setup or _stage("setup", build_setup, cfg)
    lip = cfg.dual.lipschitz
    if lip == "theory":
        lip = theory_lipschitz(setup.testbed.model, setup.state_basis, setup.noise_basis)
    return _stage("dual", build_dual_martingale, setup.testbed.model, estimates, setup.noise_basis, setup.grids,
                  cfg.dual.M, lip, cfg.seeds.dual, cfg.dual.exact_inner)


def duality_gap_experiment(cfg: ExperimentConfig, threads: int = 1) -> BoundReport:
    """Primal and dual fits on their own seeds, then the lower and upper estimates on a third."""
    timing = {}
    clock = time.perf_counter()
    setup = _stage("setup", build_setup, cfg)
    tb = setup.testbed
    model = tb.model

    estimates = fit_primal(cfg, setup)
    timing["primal"] = time.perf_counter() - clock
    clock = time.perf_counter()
    dual = fit_dual(cfg, estimates, setup)
    timing["dual"] = time.perf_counter() - clock

    clock = time.perf_counter()
    lower, lower_se = _stage("lower", lower_bound, model, estimates, tb.x0, cfg.bounds.lower_paths,
                             cfg.seeds.test, threads)
    timing["lower"] = time.perf_counter() - clock
    clock = time.perf_counter()
    upper, upper_se = _stage("upper", upper_bound, model, dual, tb.x0, cfg.bounds.N_test, cfg.seeds.test,
                             threads, cfg.bounds.node_cap)
    timing["upper"] = time.perf_counter() - clock

    oracle = _stage("oracle", tb.oracle_value)
    params = {
        "horizon": model.horizon,
        "n_actions": int(model.action_grid.shape[0]),
        "primal": cfg.to_dict()["primal"],
        "dual": {**cfg.to_dict()["dual"], "lipschitz_used": [s.lipschitz.tolist() for s in dual.stages]},
        "bounds": cfg.to_dict()["bounds"],
        "clip_rates": [e.diagnostics["clip_rate"] for e in estimates if e.diagnostics],
    }
    if cfg.primal.mc_root:
        params["mc_root_value"] = mc_root_value(model, estimates[1], tb.x0, cfg.primal.N, cfg.seeds.primal)
    return BoundReport(tb.id, tb.x0[0].tolist(), lower, lower_se, upper, upper_se, oracle, params,
                       {"primal": cfg.seeds.primal, "dual": cfg.seeds.dual, "test": cfg.seeds.test}, timing)


def ladder(cfg: ExperimentConfig, sizes, threads: int = 1) -> list[dict]:
    """One report per ``N = M`` in ``sizes``, same seeds throughout."""
    rows = []
    for n in sizes:
        c = replace(cfg, primal=replace(cfg.primal, N=int(n)), dual=replace(cfg.dual, M=int(n)))
        r = duality_gap_experiment(c, threads)
        rows.append({"N": int(n), "M": int(n), "lower": r.lower, "lower_se": r.lower_se, "upper": r.upper,
                     "upper_se": r.upper_se, "gap": r.gap, "oracle": r.oracle, "seed": cfg.seeds.primal})
    return rows


def doubling(start: int, steps: int) -> list[int]:
    return [start * 2**k for k in range(steps)]


def rows_to_csv(rows: list[dict], columns=LADDER_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()
