"""SVG figures rendered from run logs.

Every data series carries a ``gid`` so the SVG can be checked structurally:
``path-<label>`` polylines, ``event-<i>`` vertical rules, ``bar-<mode>-<i>``
sweep bars.
"""
from __future__ import annotations

import functools
import threading

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulator import RunLog  # noqa: E402

plt.rcParams.update({"svg.fonttype": "none", "font.size": 9, "axes.grid": False})

# pyplot keeps global state; sweep workers may render concurrently
_LOCK = threading.Lock()


def _locked(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with _LOCK:
            return fn(*args, **kwargs)
    return wrapper


_COLORS = {"reference": "0.35", "nominal": "tab:red", "data_driven": "tab:blue"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


@_locked
def plot_paths(ref_log: RunLog, logs: dict[str, RunLog], path) -> None:
    """Reference path plus one polyline per log."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ref_log.refs[:, 0], ref_log.refs[:, 1], "--", color=_COLORS["reference"], lw=1.2,
            label="reference", gid="path-reference")
    for label, lg in logs.items():
        ax.plot(lg.states[:, 0], lg.states[:, 1], color=_COLORS.get(label), lw=1.0,
                label=label.replace("_", "-"), gid=f"path-{label}")
    ax.set_xlabel("X (m)")
    ax.set_ylabel("Y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(frameon=False)
    _save(fig, path)


@_locked
def plot_errors(logs: dict[str, RunLog], event_times, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    for label, lg in logs.items():
        ax.plot(lg.t, lg.errors, color=_COLORS.get(label), lw=1.0, label=label.replace("_", "-"),
                gid=f"error-{label}")
    for i, te in enumerate(event_times):
        ax.axvline(te, color="0.5", lw=0.8, ls=":", gid=f"event-{i}")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("e (m)")
    errs = np.concatenate([lg.errors for lg in logs.values()])
    pos = errs[errs > 0]
    if pos.size and pos.max() / max(np.median(pos), 1e-300) > 100:
        ax.set_yscale("log")
    ax.legend(frameon=False)
    _save(fig, path)


@_locked
def plot_thrusts(lg: RunLog, path, event_times=()) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    for j in range(lg.controls.shape[1]):
        ax.plot(lg.t, lg.controls[:, j], lw=0.8, label=f"F{j + 1}", gid=f"thrust-{j + 1}")
    for i, te in enumerate(event_times):
        ax.axvline(te, color="0.5", lw=0.8, ls=":", gid=f"event-{i}")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("thrust (N)")
    ax.legend(frameon=False, ncol=4)
    _save(fig, path)


@_locked
def plot_sweep(payloads, nominal, data_driven, path) -> None:
    """Paired bars of mean tracking error per payload."""
    x = np.arange(len(payloads))
    fig, ax = plt.subplots(figsize=(6, 3))
    bn = ax.bar(x - 0.2, nominal, 0.4, color=_COLORS["nominal"], label="nominal")
    bd = ax.bar(x + 0.2, data_driven, 0.4, color=_COLORS["data_driven"], label="data-driven")
    for i, (a, b) in enumerate(zip(bn, bd)):
        a.set_gid(f"bar-nominal-{i}")
        b.set_gid(f"bar-data_driven-{i}")
    vals = np.concatenate([np.asarray(nominal, float), np.asarray(data_driven, float)])
    pos = vals[vals > 0]
    if pos.size and pos.max() / pos.min() > 100:
        ax.set_yscale("log")
    ax.set_xticks(x, [f"{p:g}" for p in payloads])
    ax.set_xlabel("payload (kg)")
    ax.set_ylabel("mean e (m)")
    ax.legend(frameon=False)
    _save(fig, path)
