"""Energy bookkeeping, norms over the fluid region, and decay measurements."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DomainMask, GridSpec

LEDGER_COLUMNS = ("t", "E_total", "KE_fluid", "KE_body", "dissipation", "power", "residual")


# -- quadratic forms ------------------------------------------------------------

def _edge_terms(u, grid: GridSpec, mask: DomainMask | None, walls: bool):
    """Yield (d_b u_a, d_a u_b, weight) on cell edges for each axis pair.

    Interior edges get weight 1 (0 where all four faces are rigid) and edges
    on the outer boundary weight 1/2.  Tangential values beyond the boundary
    come from ghosts: antisymmetric (no-slip) when ``walls`` is true, which
    matches the energy of the seven-point Laplacian exactly, and linear
    extrapolation otherwise, so that affine fields are differentiated exactly.
    """
    h = grid.h
    for a, b in ((0, 1), (0, 2), (1, 2)):
        ua = _with_ghosts(u[a], b, walls)
        ub = _with_ghosts(u[b], a, walls)
        dua = np.diff(ua, axis=b) / h
        dub = np.diff(ub, axis=a) / h
        weight = np.ones(dua.shape)
        for d in (a, b):
            weight[_take(d, 0, 1)] *= 0.5
            weight[_take(d, -1, None)] *= 0.5
        if mask is not None:
            ra = np.pad(mask.rigid[a], [(1, 1) if d == b else (0, 0) for d in range(3)])
            rb = np.pad(mask.rigid[b], [(1, 1) if d == a else (0, 0) for d in range(3)])
            rigid = (ra[_take(b, 1, None)] & ra[_take(b, None, -1)]
                     & rb[_take(a, 1, None)] & rb[_take(a, None, -1)])
            weight[rigid] = 0.0
        yield dua, dub, weight


def _with_ghosts(arr, axis, walls):
    first, last = arr[_take(axis, 0, 1)], arr[_take(axis, -1, None)]
    if walls:
        lo, hi = -first, -last
    else:
        lo = 2 * first - arr[_take(axis, 1, 2)]
        hi = 2 * last - arr[_take(axis, -2, -1)]
    return np.concatenate([lo, arr, hi], axis=axis)


def _take(axis, start, stop):
    out = [slice(None)] * 3
    out[axis] = slice(start, stop)
    return tuple(out)


def _cell_diagonal(u, grid: GridSpec, mask: DomainMask | None):
    keep = None if mask is None else ~mask.rigid_cells
    return [np.diff(u[c], axis=c) / grid.h for c in range(3)], keep


def _masked_sum(arr, keep):
    return float(arr.sum() if keep is None else arr[keep].sum())


def strain_norm_sq(u, mask: DomainMask | None, grid: GridSpec, walls: bool = True) -> float:
    """``||D(u)||_2^2`` over the fluid region.

    Normal strains sit at cell centres and shear strains on cell edges, both
    taken from face differences.  Rigid cells and edges (where the discrete
    strain of a rigid field is exactly zero) are excluded.  ``walls=False``
    is for fields that do not vanish on the outer boundary: the layer next
    to it is then differentiated by linear extrapolation instead of no-slip
    ghosts.
    """
    diag, keep = _cell_diagonal(u, grid, mask)
    total = sum(_masked_sum(d * d, keep) for d in diag)
    for dua, dub, w in _edge_terms(u, grid, mask, walls):
        s = 0.5 * (dua + dub)
        total += 2.0 * float((w * s * s).sum())
    return total * grid.h**3


def grad_norm_sq(u, mask: DomainMask | None, grid: GridSpec, walls: bool = True) -> float:
    """``||grad u||_2^2`` over the fluid region, same stencils as :func:`strain_norm_sq`."""
    diag, keep = _cell_diagonal(u, grid, mask)
    total = sum(_masked_sum(d * d, keep) for d in diag)
    for dua, dub, w in _edge_terms(u, grid, mask, walls):
        total += float((w * (dua * dua + dub * dub)).sum())
    return total * grid.h**3


def l2_norm_sq(u, mask: DomainMask | None, grid: GridSpec) -> float:
    if mask is None:
        return sum(float((c * c).sum()) for c in u) * grid.h**3
    return sum(float((w * c * c).sum()) for c, w in zip(u, mask.fluid_weight)) * grid.h**3


def cell_speed(u) -> np.ndarray:
    comps = [0.5 * (np.take(u[c], range(1, u[c].shape[c]), axis=c)
                    + np.take(u[c], range(0, u[c].shape[c] - 1), axis=c)) for c in range(3)]
    return np.sqrt(sum(c * c for c in comps))


def l6_norm(u, mask: DomainMask | None, grid: GridSpec) -> float:
    """Discrete ``||u||_6`` from cell-centred velocities over non-rigid cells."""
    s = cell_speed(u) ** 6
    if mask is not None:
        s = s[~mask.rigid_cells]
    return float((s.sum() * grid.h**3) ** (1.0 / 6.0))


def korn_check(u, grid: GridSpec, mask: DomainMask | None = None, eps: float = 1e-300,
               walls: bool = True):
    """Return ``(||grad u||^2, 2 ||D(u)||^2, relative gap)``."""
    g = grad_norm_sq(u, mask, grid, walls)
    d2 = 2.0 * strain_norm_sq(u, mask, grid, walls)
    gap = 0.0 if g <= eps else abs(g - d2) / g
    return g, d2, gap


# -- energies -------------------------------------------------------------------

def fluid_kinetic_energy(u, mask: DomainMask | None, grid: GridSpec, density: float) -> float:
    return 0.5 * density * l2_norm_sq(u, mask, grid)


def body_kinetic_energy(body, xi, omega) -> float:
    xi = np.asarray(xi)
    omega = np.asarray(omega)
    return 0.5 * body.mass * float(xi @ xi) + 0.5 * float(omega @ body.inertia @ omega)


@dataclass(frozen=True)
class LedgerRow:
    t: float
    E_total: float
    KE_fluid: float
    KE_body: float
    dissipation: float
    power: float
    residual: float


@dataclass
class EnergyLedger:
    """Per-step energy record.  ``final`` holds (t, E) after the last step."""

    rows: list[LedgerRow] = field(default_factory=list)
    final: tuple[float, float] | None = None

    def append(self, row: LedgerRow, t_next: float, e_next: float) -> None:
        if self.rows and row.t <= self.rows[-1].t:
            raise ValueError("ledger times must increase")
        self.rows.append(row)
        self.final = (t_next, e_next)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)

    def copy(self) -> "EnergyLedger":
        return EnergyLedger(list(self.rows), self.final)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(LEDGER_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(f"{getattr(r, c):.17g}" for c in LEDGER_COLUMNS) + "\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> "EnergyLedger":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in LEDGER_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise ValueError(f"{path}: missing column {missing[0]!r}")
            rows = [LedgerRow(**{c: float(rec[c]) for c in LEDGER_COLUMNS}) for rec in reader]
        return cls(rows)


@dataclass(frozen=True)
class AuditSummary:
    residuals: np.ndarray
    max_abs_residual: float
    relative_residual: float
    dissipation_peak: float
    energy_initial: float
    energy_final: float
    lhs: float
    rhs: float
    slack: float

    @property
    def slack_fraction(self) -> float:
        if self.energy_initial > 0:
            return self.slack / self.energy_initial
        return math.inf if self.slack > 0 else 0.0


def energy_audit(ledger: EnergyLedger, eps: float = 1e-300) -> AuditSummary:
    """Recompute per-step residuals of the energy balance and the integrated inequality.

    ``residual_k = (E_{k+1} - E_k)/dt_k + dissipation_k - power_k``; the
    integrated check compares ``E(T) + sum(dissipation dt)`` against
    ``E(0) + sum(power dt)`` and reports the positive excess as slack.
    """
    t = ledger.column("t")
    E = ledger.column("E_total")
    if ledger.final is not None:
        t = np.append(t, ledger.final[0])
        E = np.append(E, ledger.final[1])
    if len(t) < 2:
        raise ValueError("energy audit needs at least two time levels")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("ledger times are not strictly increasing")
    n = len(dt)
    diss = ledger.column("dissipation")[:n]
    power = ledger.column("power")[:n]
    res = np.diff(E) / dt + diss - power
    peak = max(float(diss.max(initial=0.0)), float(np.abs(power).max(initial=0.0)), eps)
    lhs = E[-1] + float((diss * dt).sum())
    rhs = E[0] + float((power * dt).sum())
    max_abs = float(np.abs(res).max())
    return AuditSummary(res, max_abs, max_abs / peak, float(diss.max(initial=0.0)),
                        float(E[0]), float(E[-1]), lhs, rhs, max(0.0, lhs - rhs))


# -- data-size gauge and decay -----------------------------------------------------

def w12_norm(u, mask: DomainMask | None, grid: GridSpec) -> float:
    return math.sqrt(l2_norm_sq(u, mask, grid) + grad_norm_sq(u, mask, grid))


def smallness_gauge(u0, xi0, omega0, forcing, mask: DomainMask | None, grid: GridSpec) -> float:
    """``||u0||_{1,2} + |xi0| + |omega0| + ||F||_{L2} + ||M||_{L2}`` (may be inf)."""
    return (w12_norm(u0, mask, grid) + float(np.linalg.norm(xi0)) + float(np.linalg.norm(omega0))
            + forcing.force.l2_norm() + forcing.torque.l2_norm())


@dataclass(frozen=True)
class DecayReport:
    slope: float
    window: tuple[float, float]
    peaks: dict[str, float]
    ratios: dict[str, float]


def decay_fit(t, y, window, series: dict | None = None) -> DecayReport:
    """Least-squares slope of ``log y`` against ``log t`` on ``window``.

    ``series`` maps names to samples on the same ``t``; for each the peak and
    the final/peak ratio are reported.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    t1, t2 = window
    if not 0 < t1 < t2:
        raise ValueError("window must satisfy 0 < t1 < t2")
    sel = (t >= t1) & (t <= t2)
    if sel.sum() < 2:
        raise ValueError("fewer than two samples in the fit window")
    if np.any(y[sel] <= 0):
        raise ValueError("non-positive samples in the fit window")
    slope = float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])
    peaks, ratios = {}, {}
    for name, vals in (series or {}).items():
        vals = np.abs(np.asarray(vals, float))
        peak = float(vals.max())
        peaks[name] = peak
        ratios[name] = float(vals[-1] / peak) if peak > 0 else 0.0
    return DecayReport(slope, (t1, t2), peaks, ratios)
