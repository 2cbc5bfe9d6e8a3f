"""Run orchestration: build a simulation from a config and write its artifacts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import SimConfig
from .coupling import SimState, initial_state, step
from .fluid import FluidParams, FluidState, read_snapshot, write_snapshot
from .geometry import GridSpec, make_body, rasterize, read_triangle_mesh

log = logging.getLogger(__name__)

RIGID_COLUMNS = ("t", "xi_x", "xi_y", "xi_z", "om_x", "om_y", "om_z",
                 *(f"Q_{i}{j}" for i in range(3) for j in range(3)))
NORM_COLUMNS = ("t", "D_norm", "u6_norm", "xi_norm", "om_norm")


class RunFailure(RuntimeError):
    """The solver could not complete the run."""


@dataclass
class RunResult:
    state: SimState
    gauge: float
    audit: diag.AuditSummary | None
    decay: diag.DecayReport | None
    norms: np.ndarray
    rigid: np.ndarray
    out_dir: Path | None = None
    divergence: list = field(default_factory=list)


def build_state(cfg: SimConfig) -> SimState:
    if cfg.shape == "sphere":
        body = make_body("sphere", cfg.body_density, radius=cfg.radius)
    elif cfg.shape == "ellipsoid":
        body = make_body("ellipsoid", cfg.body_density, semi_axes=cfg.semi_axes)
    else:
        body = make_body("mesh", cfg.body_density, triangles=read_triangle_mesh(cfg.mesh))
    grid = GridSpec(cfg.half_width, cfg.cells)
    mask = rasterize(body, grid)
    params = FluidParams(cfg.fluid_density, cfg.viscosity)
    u0 = None
    if cfg.preset == "file":
        snap, _ = read_snapshot(cfg.velocity_file)
        if snap.grid != grid:
            raise ValueError(f"{cfg.velocity_file}: grid does not match the config")
        u0 = snap.u
    state = initial_state(body, mask, params, cfg.xi0, cfg.omega0, cfg.preset, u0, cfg.tol)
    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        noisy = [c + cfg.noise * rng.standard_normal(c.shape) for c in state.fluid.u]
        state = initial_state(body, mask, params, cfg.xi0, cfg.omega0, "file", noisy, cfg.tol)
    return state


def _norm_row(state: SimState) -> list[float]:
    D = math.sqrt(max(diag.strain_norm_sq(state.fluid.u, state.mask, state.grid), 0.0))
    return [state.t, D, diag.l6_norm(state.fluid.u, state.mask, state.grid),
            float(np.linalg.norm(state.rigid.xi)), float(np.linalg.norm(state.rigid.omega))]


def _rigid_row(state: SimState) -> list[float]:
    r = state.rigid
    return [r.t, *r.xi, *r.omega, *r.Q.ravel()]


def _breakpoints(cfg: SimConfig) -> list[float]:
    pts = []
    for prof in (cfg.forcing.force, cfg.forcing.torque):
        if prof.kind == "boxcar":
            pts += [prof.start, prof.stop]
        elif prof.kind == "table":
            pts += list(prof.times)
    return sorted(p for p in set(pts) if 0 < p < cfg.t_end)


def default_window(cfg: SimConfig) -> tuple[float, float]:
    """From twice the end of the forcing support (or 10% of the run) to 90% of the run."""
    end = cfg.forcing.support_end()
    start = 2.0 * end if 0 < end < math.inf else 0.1 * cfg.t_end
    return start, 0.9 * cfg.t_end


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def run_simulation(cfg: SimConfig, out_dir: str | Path | None = None, *,
                   write: bool = True, record_divergence: bool = False,
                   progress_every: int = 0) -> RunResult:
    """Advance ``cfg`` to ``t_end``.  Raises :class:`RunFailure` on solver trouble."""
    state = build_state(cfg)
    gauge = diag.smallness_gauge(state.fluid.u, state.rigid.xi, state.rigid.omega,
                                 cfg.forcing, state.mask, state.grid)
    out = Path(out_dir if out_dir is not None else cfg.output_dir) if write else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.cfg").write_text(resolved_text(cfg))

    from .fluid import divergence
    divs: list[float] = []
    record = None
    if record_divergence:
        def record(u):
            divs.append(float(np.abs(divergence(u, state.grid)).max()))

    norms = [_norm_row(state)]
    rigid = [_rigid_row(state)]
    marks = _breakpoints(cfg) + [cfg.t_end]
    snap_index = 0
    while state.t < cfg.t_end * (1 - 1e-12):
        try:
            dt = state.max_dt(cfg.cfl_safety, cfg.dt_max)
        except Exception as exc:  # non-finite velocities end up here
            raise RunFailure(f"step {state.step_index}: {exc}") from exc
        nxt = next(m for m in marks if m > state.t * (1 + 1e-12))
        if state.t + dt >= nxt - 1e-9 * dt:
            dt = nxt - state.t
        elif state.t + 1.5 * dt > nxt:
            dt = 0.5 * (nxt - state.t)
        try:
            state = step(state, cfg.forcing, dt, cfg.tol, record)
        except Exception as exc:
            raise RunFailure(f"step {state.step_index}: {exc}") from exc
        row = state.ledger.final
        if not all(math.isfinite(v) for v in (*row, *state.rigid.xi, *state.rigid.omega)):
            raise RunFailure(f"step {state.step_index}: non-finite state")
        norms.append(_norm_row(state))
        rigid.append(_rigid_row(state))
        if out is not None and cfg.snapshot_every and state.step_index % cfg.snapshot_every == 0:
            snap_index += 1
            write_snapshot(out / f"snapshot_{state.step_index:06d}.bin", state.fluid, state.t)
        if progress_every and state.step_index % progress_every == 0:
            log.info("step %d t=%.4f E=%.6g", state.step_index, state.t, row[1])

    norms_arr = np.array(norms)
    audit = diag.energy_audit(state.ledger) if len(state.ledger) else None
    window = cfg.decay_window or default_window(cfg)
    decay = None
    series = {name: norms_arr[:, i] for i, name in enumerate(NORM_COLUMNS) if i}
    try:
        decay = diag.decay_fit(norms_arr[:, 0], norms_arr[:, 1] ** 2, window, series)
    except ValueError as exc:
        log.info("no decay fit: %s", exc)
    result = RunResult(state, gauge, audit, decay, norms_arr, np.array(rigid), out, divs)
    if out is not None:
        state.ledger.write_csv(out / "ledger.csv")
        _write_table(out / "rigid.csv", RIGID_COLUMNS, rigid)
        _write_table(out / "norms.csv", NORM_COLUMNS, norms)
        write_snapshot(out / "final.bin", state.fluid, state.t)
        (out / "summary.txt").write_text(summary_text(result, window))
    return result


def summary_text(result: RunResult, window) -> str:
    lines = [f"steps = {result.state.step_index}",
             f"t_final = {result.state.t:.17g}",
             f"smallness_gauge = {result.gauge:.17g}"]
    a = result.audit
    if a is not None:
        lines += [f"energy_initial = {a.energy_initial:.17g}",
                  f"energy_final = {a.energy_final:.17g}",
                  f"max_abs_residual = {a.max_abs_residual:.17g}",
                  f"relative_residual = {a.relative_residual:.17g}",
                  f"integrated_lhs = {a.lhs:.17g}",
                  f"integrated_rhs = {a.rhs:.17g}",
                  f"slack = {a.slack:.17g}"]
    d = result.decay
    lines.append(f"decay_window = {window[0]:.17g}, {window[1]:.17g}")
    if d is None:
        lines.append("decay_slope = n/a")
    else:
        lines.append(f"decay_slope = {d.slope:.17g}")
        for name in d.peaks:
            lines.append(f"peak.{name} = {d.peaks[name]:.17g}")
            lines.append(f"final_over_peak.{name} = {d.ratios[name]:.17g}")
    return "\n".join(lines) + "\n"


def resolved_text(cfg: SimConfig) -> str:
    """The config with every default spelled out, in the same flat syntax."""
    def vec(v):
        return ", ".join(repr(float(x)) for x in v)

    lines = [f"# resolved from {cfg.source}", f"body.shape = {cfg.shape}",
             f"body.density = {cfg.body_density!r}"]
    if cfg.shape == "sphere":
        lines.append(f"body.radius = {cfg.radius!r}")
    elif cfg.shape == "ellipsoid":
        lines.append(f"body.semi_axes = {vec(cfg.semi_axes)}")
    else:
        lines.append(f"body.mesh = {Path(cfg.mesh).resolve()}")
    lines += [f"fluid.density = {cfg.fluid_density!r}", f"fluid.viscosity = {cfg.viscosity!r}",
              f"grid.half_width = {cfg.half_width!r}", f"grid.cells = {cfg.cells}",
              f"initial.xi = {vec(cfg.xi0)}", f"initial.omega = {vec(cfg.omega0)}",
              f"initial.preset = {cfg.preset}"]
    if cfg.preset == "file":
        lines.append(f"initial.file = {Path(cfg.velocity_file).resolve()}")
    lines.append(f"initial.noise = {cfg.noise!r}")
    for name, prof in (("force", cfg.forcing.force), ("torque", cfg.forcing.torque)):
        lines.append(f"{name}.kind = {prof.kind}")
        if prof.kind in ("constant", "boxcar", "exp"):
            lines.append(f"{name}.amplitude = {vec(prof.amplitude)}")
        if prof.kind == "boxcar":
            lines += [f"{name}.start = {prof.start!r}", f"{name}.stop = {prof.stop!r}"]
        if prof.kind == "exp":
            lines.append(f"{name}.rate = {prof.rate!r}")
        if prof.kind == "table":
            lines.append(f"{name}.times = {vec(prof.times)}")
            lines.append(f"{name}.values = " + "; ".join(vec(v) for v in prof.values))
    lines += [f"run.t_end = {cfg.t_end!r}", f"run.cfl_safety = {cfg.cfl_safety!r}",
              f"run.dt_max = {cfg.dt_max!r}", f"run.snapshot_every = {cfg.snapshot_every}",
              f"run.output_dir = {cfg.output_dir}", f"run.seed = {cfg.seed}",
              f"run.tol = {cfg.tol!r}"]
    if cfg.decay_window:
        lines.append(f"run.decay_window = {vec(cfg.decay_window)}")
    return "\n".join(lines) + "\n"
