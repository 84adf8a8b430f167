import xml.etree.ElementTree as ET

import numpy as np

from microasv import plotting
from microasv.simulator import RunLog


def fake_log(n=200, shift=0.0):
    t = np.arange(n) / 100.0
    states = np.zeros((n, 6))
    refs = np.zeros((n, 6))
    refs[:, 0] = t
    refs[:, 1] = np.sin(t)
    states[:, :2] = refs[:, :2] + shift
    controls = np.full((n, 4), 0.2)
    return RunLog(t=t, states=states, controls=controls, refs=refs,
                  errors=np.full(n, abs(shift) * np.sqrt(2)))


def gids(path):
    return [el.get("id") for el in ET.parse(path).iter() if el.get("id")]


def test_path_overlay_three_polylines(tmp_path):
    ref = fake_log()
    plotting.plot_paths(ref, {"nominal": fake_log(shift=0.1), "data_driven": fake_log(shift=0.01)},
                        tmp_path / "p.svg")
    paths = sorted(g for g in gids(tmp_path / "p.svg") if g.startswith("path-"))
    assert paths == ["path-data_driven", "path-nominal", "path-reference"]


def test_error_plot_event_rules(tmp_path):
    logs = {"nominal": fake_log(shift=0.1), "data_driven": fake_log(shift=0.01)}
    plotting.plot_errors(logs, [0.5, 1.2], tmp_path / "e.svg")
    ids = gids(tmp_path / "e.svg")
    assert sorted(g for g in ids if g.startswith("event-")) == ["event-0", "event-1"]
    assert {"error-nominal", "error-data_driven"} <= set(ids)


def test_thrust_plot(tmp_path):
    plotting.plot_thrusts(fake_log(), tmp_path / "t.svg", [1.0])
    ids = gids(tmp_path / "t.svg")
    assert {f"thrust-{j}" for j in range(1, 5)} <= set(ids) and "event-0" in ids


def test_sweep_paired_bars(tmp_path):
    payloads = [round(0.2 * i, 1) for i in range(11)]
    plotting.plot_sweep(payloads, np.linspace(0.01, 0.1, 11), np.linspace(0.01, 0.02, 11),
                        tmp_path / "s.svg")
    ids = gids(tmp_path / "s.svg")
    assert sum(g.startswith("bar-nominal-") for g in ids) == 11
    assert sum(g.startswith("bar-data_driven-") for g in ids) == 11
