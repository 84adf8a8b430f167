"""Run configured scenarios and write their artifacts.

A run directory holds exactly ``config.yaml``, ``runlog.csv``,
``metrics.json``, ``solver_diagnostics.json`` and the SVG plots. Comparison
experiments put one run directory per controller mode under the output
directory, next to the comparison plots and ``comparison.json``.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import ScenarioConfig
from .controller import TrackingController, make_controller
from .metrics import MetricsReport, build_report
from .simulator import RunLog, run_scenario
from .sysid import LearnedModel, relative_coefficient_error

log = logging.getLogger(__name__)

RUN_FILES = ("config.yaml", "runlog.csv", "metrics.json", "solver_diagnostics.json",
             "path.svg", "error.svg", "thrust.svg")


@dataclass
class RunResult:
    mode: str
    log: RunLog
    controller: TrackingController
    metrics: MetricsReport
    directory: Path | None = None

    @property
    def failed(self) -> bool:
        return self.log.failure is not None


def build_controller(cfg: ScenarioConfig, mode: str) -> TrackingController:
    c = cfg.controller
    return make_controller(mode, cfg.nominal_params(), cfg.curve, cfg.weights, cfg.identification,
                           rate=c.rate, horizon=c.horizon, grid=c.grid, solve_period=c.solve_period,
                           guess=c.guess, warm_start=c.warm_start, max_failures=c.max_failures)


def coefficient_errors(model: LearnedModel, log: RunLog) -> dict:
    """Relative error of ``model`` against the plant's final parameters."""
    truth = LearnedModel.from_params(log.true_params[-1][1])
    err = relative_coefficient_error(model, truth)
    return {"max": float(err.max()), "mean": float(err.mean()),
            "per_coefficient": err.tolist(), "model_time": model.timestamp}


def simulate(cfg: ScenarioConfig, mode: str) -> RunResult:
    ctrl = build_controller(cfg, mode)
    runlog = run_scenario(cfg.vehicle, cfg.curve, cfg.events, ctrl, cfg.duration, dt_sim=cfg.dt_sim,
                          rate=cfg.controller.rate, noise_sigma=cfg.noise_sigma, seed=cfg.seed)
    if len(runlog) == 0:
        raise RuntimeError(f"{mode} run produced no samples: {runlog.failure}")
    coeff = coefficient_errors(ctrl.store.get(), runlog)
    report = build_report(runlog, cfg.metrics_window, cfg.event_times(), cfg.disturbance_time(), coeff)
    return RunResult(mode, runlog, ctrl, report)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)


def write_run(directory, cfg: ScenarioConfig, result: RunResult, plots: bool = True) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    snap = replace(cfg, modes=(result.mode,))
    snap.dump(d / "config.yaml")
    result.log.to_csv(d / "runlog.csv")
    metrics = result.metrics.to_dict()
    metrics["mode"] = result.mode
    write_json(d / "metrics.json", metrics)
    diag = {"mode": result.mode, "summary": result.controller.summary(),
            "solves": result.controller.diagnostics}
    if result.controller.identifier is not None:
        diag["identification"] = result.controller.identifier.history
        diag["final_model"] = result.controller.store.get().to_dict()
    write_json(d / "solver_diagnostics.json", diag)
    if plots:
        labels = {result.mode: result.log}
        plotting.plot_paths(result.log, labels, d / "path.svg")
        plotting.plot_errors(labels, cfg.event_times(), d / "error.svg")
        plotting.plot_thrusts(result.log, d / "thrust.svg", cfg.event_times())
    result.directory = d
    return d


def _reduction(a: float, b: float) -> float | None:
    return None if a == 0 else float(1.0 - b / a)


def comparison_summary(results: dict[str, RunResult]) -> dict:
    out = {m: {"mean_err_m": r.metrics.mean_err_m, "max_err_m": r.metrics.max_err_m,
               "overshoot_m": r.metrics.overshoot_m, "convergence_s": r.metrics.convergence_s,
               "failure": r.log.failure} for m, r in results.items()}
    if "nominal" in results and "data_driven" in results:
        n, d = results["nominal"].metrics, results["data_driven"].metrics
        red = {"mean_err": _reduction(n.mean_err_m, d.mean_err_m),
               "max_err": _reduction(n.max_err_m, d.max_err_m)}
        if n.overshoot_m is not None and d.overshoot_m is not None:
            red["overshoot"] = _reduction(n.overshoot_m, d.overshoot_m)
            red["convergence"] = _reduction(n.convergence_s, d.convergence_s)
        out["reduction"] = red
    return out


def run_experiment(cfg: ScenarioConfig, out_dir=None, plots: bool = True) -> dict[str, RunResult]:
    """Run every configured mode; write artifacts when ``out_dir`` is given."""
    results = {mode: simulate(cfg, mode) for mode in cfg.modes}
    if out_dir is not None:
        out = Path(out_dir)
        for mode, res in results.items():
            write_run(out / mode, cfg, res, plots)
        write_json(out / "comparison.json", comparison_summary(results))
        if plots and len(results) > 1:
            logs = {m: r.log for m, r in results.items()}
            first = next(iter(logs.values()))
            plotting.plot_paths(first, logs, out / "comparison_path.svg")
            plotting.plot_errors(logs, cfg.event_times(), out / "comparison_error.svg")
    return results


def payload_dir_name(payload: float) -> str:
    return f"payload_{payload:.1f}kg"


def run_sweep(cfg: ScenarioConfig, out_dir=None, plots: bool = False,
              workers: int | None = None) -> list[dict]:
    """Repeat the scenario for each payload in ``cfg.sweep_payloads``.

    Each payload is carried from t = 0. Runs are independent and fan out
    over a thread pool.
    """
    payloads = cfg.sweep_payloads or [0.0]
    workers = workers or cfg.workers or os.cpu_count() or 1

    def one(pl):
        sub = replace(cfg, vehicle=cfg.vehicle.with_payload(pl), sweep_payloads=None)
        target = None if out_dir is None else Path(out_dir) / payload_dir_name(pl)
        res = run_experiment(sub, target, plots)
        return pl, res

    with ThreadPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(one, payloads))
    rows = []
    for pl, res in done:
        row = {"payload_kg": pl}
        for mode, r in res.items():
            row[mode] = {"mean_err_m": r.metrics.mean_err_m, "max_err_m": r.metrics.max_err_m,
                         "failure": r.log.failure}
        rows.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "sweep.json", {"name": cfg.name, "rows": rows})
        if set(cfg.modes) == {"nominal", "data_driven"}:
            plotting.plot_sweep([r["payload_kg"] for r in rows],
                                [r["nominal"]["mean_err_m"] for r in rows],
                                [r["data_driven"]["mean_err_m"] for r in rows], out / "sweep.svg")
    return rows


def identify_from_csv(path, window: float = 30.0, t_end: float | None = None, n_tests: int = 60,
                      p: int = 7, q: int = 7, max_residual: float | None = None) -> LearnedModel:
    from .sysid import fit_model
    return fit_model(RunLog.from_csv(path), window, t_end, n_tests, p, q, max_residual=max_residual)
