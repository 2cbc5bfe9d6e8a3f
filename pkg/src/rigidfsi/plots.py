"""Standalone SVG plots of a run directory.

Output is byte-for-byte reproducible: the SVG id salt is fixed, no date is
written, and each file carries the plotted samples in a leading comment.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import LEDGER_COLUMNS  # noqa: E402
from .runner import RIGID_COLUMNS  # noqa: E402


class PlotError(ValueError):
    pass


def _read_columns(path: Path, needed) -> dict[str, np.ndarray]:
    if not path.is_file():
        raise PlotError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for name in needed:
            if name not in fields:
                raise PlotError(f"{path}: missing column {name!r}")
        rows = list(reader)
    return {name: np.array([float(r[name]) for r in rows]) for name in needed}


def _read_window(run_dir: Path):
    summary = run_dir / "summary.txt"
    if not summary.is_file():
        return None
    for line in summary.read_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "decay_window":
            lo, hi = (float(v) for v in value.split(","))
            return lo, hi
    return None


def fit_slope(t, y, window=None):
    """Log-log slope over ``window`` (all positive samples when ``None``); ``None`` if too few."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    sel = (t > 0) & (y > 0)
    if window is not None:
        sel &= (t >= window[0]) & (t <= window[1])
    if sel.sum() < 2:
        return None
    return float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])


def _save(fig, path: Path, data: dict[str, np.ndarray]) -> None:
    with plt.rc_context({"svg.hashsalt": "rigidfsi", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    names = list(data)
    body = [" ".join(names)]
    body += [" ".join(f"{data[n][i]:.17g}" for n in names) for i in range(len(data[names[0]]))]
    comment = "<!-- data\n" + "\n".join(body).replace("--", "- -") + "\n-->\n"
    text = path.read_text()
    head, sep, rest = text.partition("?>\n")
    path.write_text(head + sep + comment + rest if sep else comment + text)


def emit_plots(run_dir: str | Path) -> list[Path]:
    """Write ``energy.svg``, ``decay.svg`` and ``rigid.svg`` into ``run_dir``."""
    run_dir = Path(run_dir)
    led = _read_columns(run_dir / "ledger.csv", LEDGER_COLUMNS)
    rig = _read_columns(run_dir / "rigid.csv", RIGID_COLUMNS)
    out = []

    t, E, diss = led["t"], led["E_total"], led["dissipation"]
    fig, ax = plt.subplots(figsize=(6, 4))
    pos_e, pos_d = E > 0, diss > 0
    ax.plot(t[pos_e], E[pos_e], label="E total")
    ax.plot(t[pos_d], diss[pos_d], label="dissipation")
    if pos_e.any() or pos_d.any():
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("energy, dissipation rate")
    ax.set_title("Energy ledger")
    ax.legend(loc="best")
    path = run_dir / "energy.svg"
    _save(fig, path, {"t": t, "E_total": E, "dissipation": diss})
    out.append(path)

    # dissipation is 2 mu ||D(u)||^2, so its log-log slope is that of ||D(u)||^2
    window = _read_window(run_dir)
    slope = fit_slope(t, diss, window)
    fig, ax = plt.subplots(figsize=(6, 4))
    sel = (t > 0) & (diss > 0)
    ax.plot(t[sel], diss[sel], label="2 mu ||D(u)||^2")
    if sel.any():
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("||D(u)||^2 (scaled)")
    ax.set_title("Strain decay")
    text = "slope n/a" if slope is None else f"slope {slope:.2f}"
    if window is not None:
        text += f" on [{window[0]:g}, {window[1]:g}]"
    ax.annotate(text, xy=(0.05, 0.05), xycoords="axes fraction")
    ax.legend(loc="upper right")
    path = run_dir / "decay.svg"
    _save(fig, path, {"t": t, "dissipation": diss})
    out.append(path)

    tr = rig["t"]
    xi = np.sqrt(rig["xi_x"] ** 2 + rig["xi_y"] ** 2 + rig["xi_z"] ** 2)
    om = np.sqrt(rig["om_x"] ** 2 + rig["om_y"] ** 2 + rig["om_z"] ** 2)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(tr, xi, label="|xi|")
    ax.plot(tr, om, label="|omega|")
    ax.set_xlabel("t")
    ax.set_ylabel("speed")
    ax.set_title("Rigid motion")
    ax.legend(loc="best")
    path = run_dir / "rigid.svg"
    _save(fig, path, {"t": tr, "xi": xi, "omega": om})
    out.append(path)
    return out
