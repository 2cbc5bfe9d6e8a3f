"""Staggered-grid operators and the pressure projection for the body-frame flow.

Velocity components live on cell faces (see :class:`~rigidfsi.geometry.GridSpec`);
outer-boundary normal faces are held at zero and tangential values use
antisymmetric ghosts, so the outer wall is a homogeneous Dirichlet boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import fft

from .geometry import GridSpec


class SolverError(RuntimeError):
    """Raised when a linear solve fails to converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class FluidParams:
    density: float
    viscosity: float

    def __post_init__(self):
        if self.density <= 0 or self.viscosity <= 0:
            raise ValueError("fluid density and viscosity must be positive")

    @property
    def nu(self) -> float:
        return self.viscosity / self.density


@dataclass
class FluidState:
    u: list[np.ndarray]
    p: np.ndarray
    grid: GridSpec = field(repr=False)

    @classmethod
    def at_rest(cls, grid: GridSpec) -> "FluidState":
        n = grid.cells
        return cls(grid.zeros_velocity(), np.zeros((n, n, n)), grid)

    def copy(self) -> "FluidState":
        return FluidState([c.copy() for c in self.u], self.p.copy(), self.grid)


# -- small stencil helpers ---------------------------------------------------

def _sl(axis: int, s: slice) -> tuple:
    out = [slice(None)] * 3
    out[axis] = s
    return tuple(out)


def _avg(a: np.ndarray, axis: int) -> np.ndarray:
    return 0.5 * (a[_sl(axis, slice(1, None))] + a[_sl(axis, slice(None, -1))])


def _ghost_pad(a: np.ndarray, c: int) -> np.ndarray:
    """Pad the two tangential axes of component ``c`` with antisymmetric ghosts."""
    for d in range(3):
        if d == c:
            continue
        lo = -a[_sl(d, slice(0, 1))]
        hi = -a[_sl(d, slice(-1, None))]
        a = np.concatenate([lo, a, hi], axis=d)
    return a


def interior(c: int) -> tuple:
    """Index of the non-boundary faces of component ``c``."""
    return _sl(c, slice(1, -1))


def to_face(u_a: np.ndarray, a: int, b: int) -> np.ndarray:
    """Average component ``a`` onto the interior faces of component ``b``."""
    return _avg(_avg(u_a, a), b)


def enforce_boundary(u: list[np.ndarray]) -> None:
    for c in range(3):
        u[c][_sl(c, slice(0, 1))] = 0.0
        u[c][_sl(c, slice(-1, None))] = 0.0


def rigid_field(grid: GridSpec, xi, omega) -> list[np.ndarray]:
    """``xi + omega x x`` sampled on every face (full face arrays)."""
    out = []
    for c in range(3):
        x = grid.face_coords(c)
        a, b = (c + 1) % 3, (c + 2) % 3
        out.append(np.broadcast_to(xi[c] + omega[a] * x[b] - omega[b] * x[a],
                                   grid.face_shape(c)).copy())
    return out


# -- momentum-equation terms ---------------------------------------------------

def advective_term(u, xi, omega, grid: GridSpec) -> list[np.ndarray]:
    """``(u - V) . grad u + omega x u`` on interior faces (zero on the boundary).

    Gradients are second-order centred differences; the transverse velocity
    components are four-point averages onto the face; ``V = xi + omega x x``
    is evaluated exactly at the face centre.
    """
    h = grid.h
    xi = np.asarray(xi, float)
    omega = np.asarray(omega, float)
    out = grid.zeros_velocity()
    for c in range(3):
        inn = interior(c)
        x = list(grid.face_coords(c))
        x[c] = x[c][inn]
        vel = [u[c][inn] if d == c else to_face(u[d], d, c) for d in range(3)]
        # V at the face
        V = [xi[d] + omega[(d + 1) % 3] * x[(d + 2) % 3] - omega[(d + 2) % 3] * x[(d + 1) % 3]
             for d in range(3)]
        padded = _ghost_pad(u[c], c)
        acc = np.zeros_like(vel[c])
        for d in range(3):
            if d == c:
                grad = (u[c][_sl(c, slice(2, None))] - u[c][_sl(c, slice(None, -2))]) / (2 * h)
            else:
                core = [slice(1, -1)] * 3
                hi = list(core)
                lo = list(core)
                hi[d] = slice(2, None)
                lo[d] = slice(None, -2)
                grad = (padded[tuple(hi)] - padded[tuple(lo)]) / (2 * h)
            acc += (vel[d] - V[d]) * grad
        a, b = (c + 1) % 3, (c + 2) % 3
        acc += omega[a] * vel[b] - omega[b] * vel[a]
        out[c][inn] = acc
    return out


def laplacian(u, grid: GridSpec) -> list[np.ndarray]:
    """Seven-point Laplacian of each component on interior faces."""
    h2 = grid.h**2
    out = grid.zeros_velocity()
    for c in range(3):
        p = _ghost_pad(u[c], c)
        core = [slice(1, -1)] * 3
        centre = p[tuple(core)]
        acc = -6.0 * centre
        for d in range(3):
            hi = list(core)
            lo = list(core)
            hi[d] = slice(2, None)
            lo[d] = slice(None, -2)
            acc = acc + p[tuple(hi)] + p[tuple(lo)]
        out[c][interior(c)] = acc / h2
    return out


def diffusive_term(u, mu: float, grid: GridSpec) -> list[np.ndarray]:
    """``mu`` times the discrete vector Laplacian."""
    return [mu * L for L in laplacian(u, grid)]


# -- divergence, gradient and the Poisson solve -------------------------------

def divergence(u, grid: GridSpec) -> np.ndarray:
    h = grid.h
    return sum(np.diff(u[c], axis=c) for c in range(3)) / h


def gradient(p: np.ndarray, grid: GridSpec) -> list[np.ndarray]:
    """Cell-to-face gradient; boundary faces get zero (Neumann)."""
    out = grid.zeros_velocity()
    for c in range(3):
        out[c][interior(c)] = np.diff(p, axis=c) / grid.h
    return out


def neumann_laplacian(p: np.ndarray, grid: GridSpec) -> np.ndarray:
    return divergence(gradient(p, grid), grid)


class NeumannPoisson:
    """Exact inverse of the Neumann cell Laplacian by a type-II cosine transform."""

    def __init__(self, grid: GridSpec):
        n, h = grid.cells, grid.h
        lam = (2.0 * np.cos(np.pi * np.arange(n) / n) - 2.0) / h**2
        eig = lam[:, None, None] + lam[None, :, None] + lam[None, None, :]
        eig[0, 0, 0] = 1.0
        self._inv = 1.0 / eig
        self._inv[0, 0, 0] = 0.0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        r = fft.dctn(rhs, type=2, norm="ortho")
        r *= self._inv
        return fft.idctn(r, type=2, norm="ortho")


_POISSON_CACHE: dict[GridSpec, NeumannPoisson] = {}


def _poisson(grid: GridSpec) -> NeumannPoisson:
    if grid not in _POISSON_CACHE:
        _POISSON_CACHE.clear()
        _POISSON_CACHE[grid] = NeumannPoisson(grid)
    return _POISSON_CACHE[grid]


def solve_pressure_poisson(rhs: np.ndarray, grid: GridSpec, tol: float = 1e-8,
                           max_iter: int = 50, weights=None) -> tuple[np.ndarray, float, int]:
    """Preconditioned conjugate gradients for ``lap(p) = rhs`` with zero-mean ``p``.

    The preconditioner is the cosine-transform inverse of the Neumann
    Laplacian, so for the plain operator convergence is normally reached in
    one or two iterations.  With ``weights`` (one array per face component)
    the operator becomes ``div(weights * grad p)``.  Returns
    ``(p, relative_residual, iterations)``.
    """
    if weights is None:
        def apply(q):
            return neumann_laplacian(q, grid)
    else:
        def apply(q):
            return divergence([w * g for w, g in zip(weights, gradient(q, grid))], grid)
    b = rhs - rhs.mean()
    bnorm = np.linalg.norm(b)
    p = np.zeros_like(b)
    if bnorm == 0.0:
        return p, 0.0, 0
    pre = _poisson(grid)
    # solve with A' = -lap, which is positive semidefinite
    r = -b.copy()
    z = -pre.solve(r)
    d = z.copy()
    rz = np.vdot(r, z)
    rel = 1.0
    for it in range(1, max_iter + 1):
        Ad = -apply(d)
        alpha = rz / np.vdot(d, Ad)
        p += alpha * d
        r -= alpha * Ad
        r -= r.mean()
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            p -= p.mean()
            return p, rel, it
        z = -pre.solve(r)
        rz_new = np.vdot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise SolverError(f"pressure CG did not converge in {max_iter} iterations "
                      f"(relative residual {rel:.3e})", rel)


def pressure_project(u_star, grid: GridSpec, mask=None, tol: float = 1e-8, *,
                     dt: float = 1.0, density: float = 1.0):
    """Remove the gradient part of ``u_star``.

    Solves ``lap(p) = (density/dt) div(u_star)`` with homogeneous Neumann
    conditions and returns ``(u, p)`` with ``u = u_star - (dt/density) grad p``.
    The whole box is projected; ``mask`` is accepted for interface symmetry
    with the coupling step and is not needed by the solve itself.
    """
    rhs = (density / dt) * divergence(u_star, grid)
    p, _, _ = solve_pressure_poisson(rhs, grid, tol)
    g = gradient(p, grid)
    u = [u_star[c] - (dt / density) * g[c] for c in range(3)]
    return u, p


def constrained_project(u_star, grid: GridSpec, free, tol: float = 1e-8,
                        max_iter: int = 500) -> list[np.ndarray]:
    """Project onto divergence-free fields while leaving faces with ``free == 0`` untouched.

    ``free`` holds one 0/1 array per component.  The fixed faces must already
    carry a field whose divergence vanishes on the cells they enclose.
    """
    rhs = divergence(u_star, grid)
    p, _, _ = solve_pressure_poisson(rhs, grid, tol, max_iter, weights=free)
    g = gradient(p, grid)
    return [u_star[c] - free[c] * g[c] for c in range(3)]


def cfl_dt(u, xi, omega, grid: GridSpec, nu: float, safety: float = 0.5,
           dt_max: float = 1.0) -> float:
    """Explicit stability limit for the advective and viscous terms."""
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    h = grid.h
    umax = max(float(np.abs(c).max()) for c in u)
    speed = umax + float(np.linalg.norm(xi)) + float(np.linalg.norm(omega)) * np.sqrt(3) * grid.half_width
    limits = []
    if speed > 0:
        limits.append(h / speed)
    if nu > 0:
        limits.append(h * h / (6.0 * nu))
    if not limits:
        return dt_max
    return min(safety * min(limits), dt_max)


# -- snapshots ----------------------------------------------------------------

SNAP_MAGIC = "FSI-SNAP v1"


def write_snapshot(path: str | Path, state: FluidState, t: float) -> None:
    """Header ``FSI-SNAP v1 N L t`` then p, u_x, u_y, u_z as little-endian
    float64 in row-major (z, y, x) order."""
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(f"{SNAP_MAGIC} {g.cells} {g.half_width!r} {t!r}\n".encode())
        for arr in (state.p, *state.u):
            fh.write(np.ascontiguousarray(arr.transpose(2, 1, 0)).astype("<f8").tobytes())


def read_snapshot(path: str | Path) -> tuple[FluidState, float]:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    parts = data[:nl].decode().split()
    if " ".join(parts[:2]) != SNAP_MAGIC or len(parts) != 5:
        raise ValueError(f"{path}: not an {SNAP_MAGIC} file")
    n, L, t = int(parts[2]), float(parts[3]), float(parts[4])
    grid = GridSpec(L, n)
    offset = nl + 1
    arrays = []
    for shape in [(n, n, n)] + [grid.face_shape(c) for c in range(3)]:
        zyx = shape[::-1]
        count = int(np.prod(zyx))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(zyx)
        arrays.append(arr.transpose(2, 1, 0).astype(float))
        offset += 8 * count
    return FluidState(arrays[1:], arrays[0], grid), t



# -- fused kernel used by the time stepper ------------------------------------

@numba.njit(cache=True, fastmath=False)
def _rhs_first_component(ux, uy, uz, xi, om, xn, xc, h, nu, out):
    n = uy.shape[0]
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for i in range(1, n):
        x = xn[i]
        for j in range(n):
            y = xc[j]
            for k in range(n):
                z = xc[k]
                c = ux[i, j, k]
                xm = ux[i - 1, j, k]
                xp = ux[i + 1, j, k]
                ym = ux[i, j - 1, k] if j > 0 else -c
                yp = ux[i, j + 1, k] if j < n - 1 else -c
                zm = ux[i, j, k - 1] if k > 0 else -c
                zp = ux[i, j, k + 1] if k < n - 1 else -c
                lap = (xm + xp + ym + yp + zm + zp - 6.0 * c) * invh2
                vy = 0.25 * (uy[i - 1, j, k] + uy[i - 1, j + 1, k] + uy[i, j, k] + uy[i, j + 1, k])
                vz = 0.25 * (uz[i - 1, j, k] + uz[i - 1, j, k + 1] + uz[i, j, k] + uz[i, j, k + 1])
                Vx = xi[0] + om[1] * z - om[2] * y
                Vy = xi[1] + om[2] * x - om[0] * z
                Vz = xi[2] + om[0] * y - om[1] * x
                adv = ((c - Vx) * (xp - xm) + (vy - Vy) * (yp - ym) + (vz - Vz) * (zp - zm)) * inv2h
                adv += om[1] * vz - om[2] * vy
                out[i, j, k] = nu * lap - adv


def momentum_rhs(u, xi, omega, grid: GridSpec, nu: float) -> list[np.ndarray]:
    """``nu lap(u) - [(u - V) . grad u + omega x u]`` on interior faces.

    Same discretization as :func:`diffusive_term` and :func:`advective_term`,
    evaluated in one pass per component.
    """
    xi = np.asarray(xi, float)
    omega = np.asarray(omega, float)
    xn, xc = grid.nodes, grid.centers
    out = grid.zeros_velocity()
    for c in range(3):
        perm = (c, (c + 1) % 3, (c + 2) % 3)
        views = [np.transpose(u[d], perm) for d in perm]
        _rhs_first_component(*views, xi[list(perm)], omega[list(perm)], xn, xc,
                             grid.h, nu, np.transpose(out[c], perm))
    return out
