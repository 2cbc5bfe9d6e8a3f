"""One coupled time step: fluid update, projection, and the rigid-body balance.

The body is realized as a fictitious-fluid region whose velocity is reset to
a rigid motion after each fluid update.  The rigid motion is chosen so that
linear and angular momentum of body plus enclosed fluid are carried over,
incremented by the applied load and the body-frame inertial terms.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .fluid import FluidParams, FluidState, cfl_dt, momentum_rhs, pressure_project
from .geometry import BodySpec, DomainMask, GridSpec
from .kinematics import RigidState, to_body_frame, update_rotation

logger = logging.getLogger(__name__)


class CouplingError(RuntimeError):
    pass


class CFLError(CouplingError):
    pass


# -- forcing --------------------------------------------------------------------

PROFILE_KINDS = ("zero", "constant", "boxcar", "exp", "table")


@dataclass(frozen=True)
class Profile:
    """A vector-valued load history in the inertial frame.

    ``kind`` selects the shape: ``zero``; ``constant`` (``amplitude``);
    ``boxcar`` (``amplitude`` on ``start <= t < stop``); ``exp``
    (``amplitude * exp(-rate t)``); ``table`` (piecewise-linear through
    ``times``/``values``, zero outside the table).
    """

    kind: str = "zero"
    amplitude: tuple = (0.0, 0.0, 0.0)
    start: float = 0.0
    stop: float = 0.0
    rate: float = 0.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown forcing profile {self.kind!r}")
        if self.kind == "boxcar" and self.stop < self.start:
            raise ValueError("boxcar stop must not precede start")
        if self.kind == "exp" and self.rate < 0:
            raise ValueError("exponential rate must be non-negative")
        if self.kind == "table":
            t = np.asarray(self.times, float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("table times must be increasing with at least two entries")
            if np.asarray(self.values, float).shape != (len(t), 3):
                raise ValueError("table values must be one 3-vector per time")

    def __call__(self, t: float) -> np.ndarray:
        amp = np.asarray(self.amplitude, float)
        if self.kind == "zero":
            return np.zeros(3)
        if self.kind == "constant":
            return amp.copy()
        if self.kind == "boxcar":
            return amp.copy() if self.start <= t < self.stop else np.zeros(3)
        if self.kind == "exp":
            return amp * math.exp(-self.rate * t)
        times = np.asarray(self.times, float)
        vals = np.asarray(self.values, float)
        if t < times[0] or t > times[-1]:
            return np.zeros(3)
        return np.array([np.interp(t, times, vals[:, i]) for i in range(3)])

    def l2_norm(self) -> float:
        """``||F||_{L^2(0, inf)}``; infinite for a non-zero constant."""
        amp = float(np.linalg.norm(self.amplitude))
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return math.inf if amp > 0 else 0.0
        if self.kind == "boxcar":
            lo, hi = max(self.start, 0.0), max(self.stop, 0.0)
            return amp * math.sqrt(hi - lo)
        if self.kind == "exp":
            if amp == 0:
                return 0.0
            return math.inf if self.rate == 0 else amp / math.sqrt(2.0 * self.rate)
        # exact integral of a squared piecewise-linear function
        times = np.asarray(self.times, float)
        vals = np.asarray(self.values, float)
        keep = times >= 0
        if not keep.any():
            return 0.0
        if not keep.all():
            first = np.argmax(keep)
            v0 = np.array([np.interp(0.0, times, vals[:, i]) for i in range(3)])
            times = np.concatenate([[0.0], times[first:]])
            vals = np.vstack([v0, vals[first:]])
        a, b = vals[:-1], vals[1:]
        seg = (np.einsum("ij,ij->i", a, a) + np.einsum("ij,ij->i", a, b)
               + np.einsum("ij,ij->i", b, b)) / 3.0
        return math.sqrt(float((seg * np.diff(times)).sum()))

    def support_end(self) -> float:
        if self.kind == "boxcar":
            return self.stop
        if self.kind == "table":
            return float(self.times[-1])
        return 0.0 if self.kind == "zero" else math.inf

    def scaled(self, factor: float) -> "Profile":
        return Profile(self.kind, tuple(factor * np.asarray(self.amplitude, float)), self.start,
                       self.stop, self.rate, self.times,
                       tuple(map(tuple, factor * np.asarray(self.values, float)))
                       if self.kind == "table" else self.values)


@dataclass(frozen=True)
class ForcingProgram:
    force: Profile = field(default_factory=Profile)
    torque: Profile = field(default_factory=Profile)

    def body_frame(self, t: float, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return to_body_frame(self.force(t), Q), to_body_frame(self.torque(t), Q)

    def support_end(self) -> float:
        return max(self.force.support_end(), self.torque.support_end())


# -- rigid region ---------------------------------------------------------------

class RigidRegion:
    """Rigid faces of the mask with their coordinates and rigid-mode Jacobians.

    For a face carrying velocity component ``c`` at position ``x`` the rigid
    velocity is ``J_c(x) . q`` with ``q = (xi, omega)`` and
    ``J_c(x) = (e_c, x cross e_c)``.
    """

    def __init__(self, mask: DomainMask, body: BodySpec, params: FluidParams):
        grid = mask.grid
        h3 = grid.h**3
        self.index = []
        self.jac = []
        self.pos = []
        fluid_mass = np.zeros((6, 6))
        for c in range(3):
            idx = np.nonzero(mask.rigid[c])
            coords = [grid.nodes if d == c else grid.centers for d in range(3)]
            x = np.stack([coords[d][idx[d]] for d in range(3)], axis=1)
            e = np.zeros(3)
            e[c] = 1.0
            J = np.hstack([np.broadcast_to(e, x.shape), np.cross(x, e)])
            self.index.append(idx)
            self.jac.append(J)
            self.pos.append(x)
            fluid_mass += params.density * h3 * J.T @ J
        if not any(len(i[0]) for i in self.index):
            raise CouplingError("degenerate mask: no rigid faces")
        body_mass = np.zeros((6, 6))
        body_mass[:3, :3] = body.mass * np.eye(3)
        body_mass[3:, 3:] = body.inertia
        if np.linalg.cond(body.inertia) > 1e12:
            raise CouplingError("singular effective inertia")
        self.fluid_mass = fluid_mass
        self.excess = body_mass - fluid_mass
        self.body_mass = body_mass
        self.density = params.density
        self.h3 = h3
        ratio = body.mass / (params.density * body.volume)
        if ratio < 0.5:
            warnings.warn(f"body/fluid density ratio {ratio:.2f} < 0.5: explicit coupling "
                          "may be unstable", stacklevel=2)

    def momentum(self, u, q) -> np.ndarray:
        """Generalized momentum of the enclosed fluid plus the body excess."""
        p = self.excess @ q
        for c in range(3):
            p += self.density * self.h3 * self.jac[c].T @ u[c][self.index[c]]
        return p

    def fictitious_coriolis(self, xi, omega) -> np.ndarray:
        """Generalized force of ``-omega x V`` acting on the enclosed fluid."""
        out = np.zeros(6)
        for c in range(3):
            V = xi + np.cross(omega, self.pos[c])
            out += self.density * self.h3 * self.jac[c].T @ (-np.cross(omega, V)[:, c])
        return out

    def impose(self, u, q) -> None:
        for c in range(3):
            u[c][self.index[c]] = self.jac[c] @ q


# -- state ------------------------------------------------------------------------

@dataclass
class SimState:
    fluid: FluidState
    rigid: RigidState
    mask: DomainMask
    body: BodySpec
    params: FluidParams
    step_index: int = 0
    ledger: diag.EnergyLedger = field(default_factory=diag.EnergyLedger)
    region: RigidRegion | None = field(default=None, repr=False)
    applied: tuple = (np.zeros(3), np.zeros(3))

    def __post_init__(self):
        if self.region is None:
            self.region = RigidRegion(self.mask, self.body, self.params)

    @property
    def grid(self) -> GridSpec:
        return self.fluid.grid

    @property
    def t(self) -> float:
        return self.rigid.t

    def copy(self) -> "SimState":
        return SimState(self.fluid.copy(), self.rigid.copy(), self.mask, self.body, self.params,
                        self.step_index, self.ledger.copy(), self.region,
                        tuple(a.copy() for a in self.applied))

    def energies(self) -> tuple[float, float, float]:
        kf = diag.fluid_kinetic_energy(self.fluid.u, self.mask, self.grid, self.params.density)
        kb = diag.body_kinetic_energy(self.body, self.rigid.xi, self.rigid.omega)
        return kf + kb, kf, kb

    def dissipation(self) -> float:
        return 2.0 * self.params.viscosity * diag.strain_norm_sq(self.fluid.u, self.mask, self.grid)

    def max_dt(self, safety: float = 1.0, dt_max: float = math.inf) -> float:
        return cfl_dt(self.fluid.u, self.rigid.xi, self.rigid.omega, self.grid,
                      self.params.nu, safety, dt_max)


def rigid_projection(u_projected, rigid: RigidState, mask: DomainMask, body: BodySpec,
                     params: FluidParams, force, torque, dt: float, *,
                     region: RigidRegion | None = None, fluid_coriolis_applied: bool = True):
    """Reset the rigid faces to the rigid motion carrying the updated momenta.

    Returns ``(u, xi, omega)``.  ``force``/``torque`` are body-frame loads.
    When ``fluid_coriolis_applied`` is true the ``-omega x u`` term has already
    acted on the enclosed fluid during the momentum update, so only the
    remainder of ``m omega x xi`` and ``omega x (I omega)`` is added here.
    """
    region = region or RigidRegion(mask, body, params)
    xi, om = rigid.xi, rigid.omega
    q = np.concatenate([xi, om])
    pi = region.momentum(u_projected, q)
    load = np.concatenate([np.asarray(force, float) - body.mass * np.cross(om, xi),
                           np.asarray(torque, float) - np.cross(om, body.inertia @ om)])
    if fluid_coriolis_applied:
        load -= region.fictitious_coriolis(xi, om)
    pi = pi + dt * load
    q_new = np.concatenate([pi[:3] / body.mass, np.linalg.solve(body.inertia, pi[3:])])
    u = [c.copy() for c in u_projected]
    region.impose(u, q_new)
    return u, q_new[:3], q_new[3:]


def step(state: SimState, forcing: ForcingProgram, dt: float, tol: float = 1e-8,
         record=None) -> SimState:
    """Advance the coupled system by ``dt``.

    Explicit momentum update, pressure projection, rigid projection with the
    body-frame loads ``Q^T F(t)``, ``Q^T M(t)``, orientation update, and one
    ledger row.  ``record`` (optional callable) receives the projected,
    pre-rigid velocity for diagnostics.
    """
    limit = state.max_dt()
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"step {state.step_index}: dt={dt:.3e} exceeds CFL limit {limit:.3e}")
    grid, params, rigid = state.grid, state.params, state.rigid
    t = rigid.t
    force, torque = forcing.body_frame(t, rigid.Q)

    e0, kf0, kb0 = state.energies()
    diss = state.dissipation()
    power = float(force @ rigid.xi + torque @ rigid.omega)

    rhs = momentum_rhs(state.fluid.u, rigid.xi, rigid.omega, grid, params.nu)
    u_star = [state.fluid.u[c] + dt * rhs[c] for c in range(3)]
    u_proj, p = pressure_project(u_star, grid, state.mask, tol, dt=dt, density=params.density)
    if record is not None:
        record(u_proj)
    u_new, xi_new, om_new = rigid_projection(u_proj, rigid, state.mask, state.body, params,
                                             force, torque, dt, region=state.region)
    Q_new = update_rotation(rigid.Q, rigid.omega, dt)

    new = SimState(FluidState(u_new, p, grid), RigidState(xi_new, om_new, Q_new, t + dt),
                   state.mask, state.body, params, state.step_index + 1, state.ledger,
                   state.region, (force, torque))
    e1 = new.energies()[0]
    residual = (e1 - e0) / dt + diss - power
    state.ledger.append(diag.LedgerRow(t, e0, kf0, kb0, diss, power, residual), t + dt, e1)
    return new


def hydrodynamic_load(before: SimState, after: SimState, dt: float):
    """Net stress force and torque on the body implied by one step.

    ``load = (F - m omega x xi) - m dxi/dt`` and the angular analogue, with
    the body-frame loads that were applied during the step.
    """
    force, torque = after.applied
    xi, om = before.rigid.xi, before.rigid.omega
    body = before.body
    f = force - body.mass * np.cross(om, xi) - body.mass * (after.rigid.xi - xi) / dt
    m = (torque - np.cross(om, body.inertia @ om)
         - body.inertia @ (after.rigid.omega - om) / dt)
    return f, m


# -- initial data ---------------------------------------------------------------

INITIAL_PRESETS = ("zero", "rigid-match", "stokes", "file")


def _smooth_extension(grid: GridSpec, body: BodySpec, xi, omega) -> list[np.ndarray]:
    """Rigid field inside the enclosing ball, Gaussian taper outside it."""
    r_in = 0.5 * body.r_star
    width = 0.5 * body.r_star
    out = []
    for c, V in enumerate(_rigid_faces(grid, xi, omega)):
        x = grid.face_coords(c)
        r = np.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
        taper = np.exp(-(np.maximum(r - r_in, 0.0) / width) ** 2)
        out.append(V * taper)
    return out


def _rigid_faces(grid, xi, omega):
    from .fluid import rigid_field
    return rigid_field(grid, np.asarray(xi, float), np.asarray(omega, float))


def stokes_sphere_field(grid: GridSpec, radius: float, xi, omega) -> list[np.ndarray]:
    """Unbounded Stokes flow of a sphere translating with ``xi`` and spinning with ``omega``."""
    xi = np.asarray(xi, float)
    omega = np.asarray(omega, float)
    a = radius
    out = []
    for c in range(3):
        x = [np.broadcast_to(v, grid.face_shape(c)) for v in grid.face_coords(c)]
        X = np.stack(x, axis=-1)
        r = np.maximum(np.linalg.norm(X, axis=-1), 1e-300)
        n = X / r[..., None]
        un = n @ xi
        trans = (0.75 * a / r * (xi[c] + un * n[..., c])
                 + 0.25 * a**3 / r**3 * (xi[c] - 3.0 * un * n[..., c]))
        rot = a**3 / r**3 * np.cross(omega, X)[..., c]
        rigid = xi[c] + np.cross(omega, X)[..., c]
        out.append(np.where(r <= a, rigid, trans + rot))
    return out


def initial_state(body: BodySpec, mask: DomainMask, params: FluidParams, xi0=(0, 0, 0),
                  omega0=(0, 0, 0), preset: str = "zero", u0=None,
                  tol: float = 1e-8) -> SimState:
    """Assemble a consistent starting state.

    The chosen velocity is made discretely divergence-free while matching
    ``xi0 + omega0 x x`` on the rigid faces, by a projection that only acts
    on the fluid faces.
    """
    grid = mask.grid
    xi0 = np.asarray(xi0, float)
    omega0 = np.asarray(omega0, float)
    if preset == "zero":
        u = grid.zeros_velocity()
    elif preset == "rigid-match":
        u = _smooth_extension(grid, body, xi0, omega0)
    elif preset == "stokes":
        if body.shape != "sphere":
            raise ValueError("the 'stokes' preset needs a sphere")
        u = stokes_sphere_field(grid, body.semi_axes[0], xi0, omega0)
    elif preset == "file":
        if u0 is None:
            raise ValueError("preset 'file' needs a velocity field")
        u = [np.array(c, float) for c in u0]
    else:
        raise ValueError(f"unknown initial preset {preset!r}")
    from .fluid import constrained_project, enforce_boundary

    enforce_boundary(u)
    state = SimState(FluidState(u, np.zeros((grid.cells,) * 3), grid),
                     RigidState(xi0.copy(), omega0.copy()), mask, body, params)
    q = np.concatenate([xi0, omega0])
    if any(np.any(c) for c in u) or np.any(q):
        state.region.impose(u, q)
        u = constrained_project(u, grid, mask.fluid_weight, tol)
        state.region.impose(u, q)
        state.fluid.u = u
    return state
