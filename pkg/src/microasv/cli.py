"""Command-line entry point.

    microasv --config sine_payload_shift --out runs/sine experiment
    microasv --config payload_sweep --out runs/sweep sweep
    microasv --config identification --out runs/ident simulate
    microasv --out runs/ident identify runs/ident/nominal/runlog.csv --truth identification
    microasv --out runs/sine plot runs/sine/nominal runs/sine/data_driven

``--config`` takes a YAML path or a preset name. The exit code is 3 when a
run ended in a controller fault or integration blowup (artifacts are still
written), 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, plotting
from .config import ConfigError, load_config, preset_names
from .simulator import RunLog
from .sysid import IdentificationError, LearnedModel, relative_coefficient_error

EXIT_FAULT = 3
EXIT_USAGE = 2


def _global_options(parser: argparse.ArgumentParser, top: bool) -> None:
    # registered on the main parser and on every subcommand so the flags can
    # go before or after the subcommand name
    default = None if top else argparse.SUPPRESS
    parser.add_argument("--config", default=default,
                        help=f"scenario YAML file or preset ({', '.join(preset_names())})")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true", default=False if top else argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="microasv", description=__doc__.split("\n\n")[0])
    _global_options(ap, True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one controller mode and write its run directory")
    _global_options(p, False)
    p.add_argument("--mode", choices=["nominal", "data_driven"],
                   help="controller mode (default: first mode in the config)")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("identify", help="fit a model offline on an existing run CSV")
    _global_options(p, False)
    p.add_argument("csv", help="runlog.csv to fit")
    p.add_argument("--window", type=float, default=30.0)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--tests", type=int, default=60, help="number of test functions")
    p.add_argument("--truth", default=None,
                   help="config or preset whose vehicle is the ground truth to compare against")

    p = sub.add_parser("experiment", help="run every mode of a preset and compare them")
    _global_options(p, False)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("sweep", help="repeat the experiment over the configured payloads")
    _global_options(p, False)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--run-plots", action="store_true", help="also plot every individual run")

    p = sub.add_parser("plot", help="re-render plots from run directories")
    _global_options(p, False)
    p.add_argument("runs", nargs="+", help="run directories containing runlog.csv")
    return ap


def _config(args):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out(args, cfg=None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    name = cfg.name if cfg is not None else "output"
    return Path("runs") / name


def _print_run(res) -> None:
    m = res.metrics
    line = f"{res.mode:12s} mean_err={m.mean_err_m:.4e} m  max_err={m.max_err_m:.4e} m"
    if m.overshoot_m is not None:
        line += f"  overshoot={m.overshoot_m:.4e} m  convergence={m.convergence_s:.2f} s"
    if res.log.failure:
        line += f"  FAILURE: {res.log.failure}"
    print(line)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    mode = args.mode or cfg.modes[0]
    cfg = replace(cfg, modes=(mode,))
    res = experiment.simulate(cfg, mode)
    out = experiment.write_run(_out(args, cfg), cfg, res, plots=not args.no_plots)
    _print_run(res)
    print(f"wrote {out}")
    return EXIT_FAULT if res.failed else 0


def cmd_experiment(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    results = experiment.run_experiment(cfg, out, plots=not args.no_plots)
    for res in results.values():
        _print_run(res)
    summary = experiment.comparison_summary(results)
    if "reduction" in summary:
        print("reduction vs nominal: " + ", ".join(
            f"{k}={v:.1%}" for k, v in summary["reduction"].items() if v is not None))
    print(f"wrote {out}")
    return EXIT_FAULT if any(r.failed for r in results.values()) else 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    rows = experiment.run_sweep(cfg, out, plots=args.run_plots, workers=args.workers)
    faults = 0
    for row in rows:
        cells = []
        for mode in cfg.modes:
            r = row[mode]
            cells.append(f"{mode}={r['mean_err_m']:.4e}" + (" (fault)" if r["failure"] else ""))
            faults += r["failure"] is not None
        print(f"payload {row['payload_kg']:.1f} kg: " + "  ".join(cells))
    print(f"wrote {out}")
    return EXIT_FAULT if faults else 0


def cmd_identify(args) -> int:
    model = experiment.identify_from_csv(args.csv, args.window, args.t_end, args.tests)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    model.to_json(out / "model.json")
    report = {"model": model.to_dict()}
    if args.truth:
        truth_cfg = load_config(args.truth)
        truth = LearnedModel.from_params(truth_cfg.vehicle)
        err = relative_coefficient_error(model, truth)
        report["coeff_rel_err"] = {"max": float(err.max()), "per_coefficient": err.tolist()}
        print(f"max relative coefficient error vs {args.truth}: {err.max():.3%}")
    experiment.write_json(out / "identification.json", report)
    for name, w in (("w1", model.w1), ("w2", model.w2), ("w3", model.w3)):
        print(f"{name} = {np.array2string(w, precision=4, max_line_width=200)}")
    print(f"wrote {out / 'model.json'}")
    return 0


def cmd_plot(args) -> int:
    logs, events = {}, []
    for run in args.runs:
        d = Path(run)
        mode = d.name
        cfg_path = d / "config.yaml"
        if cfg_path.exists():
            cfg = load_config(cfg_path)
            mode = cfg.modes[0]
            events = cfg.event_times()
        lg = RunLog.from_csv(d / "runlog.csv")
        logs[mode] = lg
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    first = next(iter(logs.values()))
    plotting.plot_paths(first, logs, out / "path.svg")
    plotting.plot_errors(logs, events, out / "error.svg")
    for mode, lg in logs.items():
        plotting.plot_thrusts(lg, out / f"thrust_{mode}.svg", events)
    print(f"wrote plots to {out}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "identify": cmd_identify, "experiment": cmd_experiment,
            "sweep": cmd_sweep, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IdentificationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
