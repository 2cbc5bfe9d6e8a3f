"""Body shapes, mass properties, the truncated grid and the voxel body mask."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

SUBSAMPLES = 4
CLEARANCE_CELLS = 4
RIGID_FACE_FRACTION = 0.25


class GeometryError(ValueError):
    """Invalid body, grid or mask configuration."""


@dataclass(frozen=True)
class BodySpec:
    """Rigid body description in its own center-of-mass frame.

    ``shape`` is one of ``"sphere"``, ``"ellipsoid"`` or ``"mesh"``.  For
    analytic shapes ``semi_axes`` holds (a, b, c); for meshes ``triangles``
    holds an array of shape (n, 3, 3), already translated so that the
    centroid sits at the origin.
    """

    shape: str
    density: float
    mass: float
    inertia: np.ndarray
    r_star: float
    semi_axes: tuple[float, float, float] | None = None
    triangles: np.ndarray | None = field(default=None, repr=False)

    @property
    def volume(self) -> float:
        return self.mass / self.density

    def min_dimension(self) -> float:
        """Smallest body diameter (used for resolution warnings)."""
        if self.semi_axes is not None:
            return 2.0 * min(self.semi_axes)
        pts = self.triangles.reshape(-1, 3)
        return float((pts.max(axis=0) - pts.min(axis=0)).min())

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership test for an (..., 3) array of points."""
        if self.semi_axes is not None:
            a = np.asarray(self.semi_axes)
            return np.sum((points / a) ** 2, axis=-1) < 1.0
        shape = points.shape[:-1]
        flat = points.reshape(-1, 3)
        out = np.empty(flat.shape[0], dtype=bool)
        chunk = max(1, 2_000_000 // max(1, len(self.triangles)))
        for s in range(0, flat.shape[0], chunk):
            out[s:s + chunk] = winding_number(flat[s:s + chunk], self.triangles) > 0.5
        return out.reshape(shape)


def winding_number(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Generalized winding number of a closed triangle surface at each point.

    Uses the Van Oosterom-Strackee solid angle formula; close to 1 inside an
    outward-oriented surface and 0 outside.
    """
    a = triangles[None, :, 0, :] - points[:, None, :]
    b = triangles[None, :, 1, :] - points[:, None, :]
    c = triangles[None, :, 2, :] - points[:, None, :]
    la = np.linalg.norm(a, axis=-1)
    lb = np.linalg.norm(b, axis=-1)
    lc = np.linalg.norm(c, axis=-1)
    det = np.einsum("pti,pti->pt", a, np.cross(b, c))
    den = (la * lb * lc + np.einsum("pti,pti->pt", a, b) * lc
           + np.einsum("pti,pti->pt", b, c) * la + np.einsum("pti,pti->pt", c, a) * lb)
    return np.arctan2(det, den).sum(axis=1) / (2.0 * np.pi)


def read_triangle_mesh(path: str | Path) -> np.ndarray:
    """Read a mesh file: one triangle per line, nine whitespace-separated floats."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 9:
            raise GeometryError(f"{path}:{lineno}: expected 9 numbers, got {len(parts)}")
        rows.append([float(v) for v in parts])
    if not rows:
        raise GeometryError(f"{path}: no triangles")
    return np.asarray(rows).reshape(-1, 3, 3)


def write_triangle_mesh(path: str | Path, triangles: np.ndarray) -> None:
    lines = [" ".join(repr(float(v)) for v in tri.ravel()) for tri in np.asarray(triangles)]
    Path(path).write_text("\n".join(lines) + "\n")


def _check_closed(triangles: np.ndarray) -> None:
    # every directed edge must be matched by its reverse exactly once
    verts, inv = np.unique(np.round(triangles.reshape(-1, 3), 12), axis=0, return_inverse=True)
    idx = inv.reshape(-1, 3)
    edges = np.concatenate([idx[:, [0, 1]], idx[:, [1, 2]], idx[:, [2, 0]]])
    forward = {tuple(e) for e in edges.tolist()}
    if len(forward) != len(edges):
        raise GeometryError("mesh has a repeated directed edge (inconsistent orientation)")
    for e in forward:
        if (e[1], e[0]) not in forward:
            raise GeometryError("mesh is not closed or not consistently oriented")


def polyhedron_mass_properties(triangles: np.ndarray, density: float):
    """Volume, centroid and inertia tensor (about the centroid) of a closed mesh.

    Divergence-theorem formula: the body is decomposed into signed tetrahedra
    spanned by the origin and each triangle.
    """
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    det = np.einsum("ti,ti->t", a, np.cross(b, c))
    volume = det.sum() / 6.0
    if volume <= 0:
        raise GeometryError("mesh encloses non-positive volume (inward orientation?)")
    centroid = (det[:, None] * (a + b + c)).sum(axis=0) / (24.0 * volume)
    # canonical second moment of a tetrahedron with a vertex at the origin
    s = a + b + c
    cov = (np.einsum("t,ti,tj->ij", det, s, s)
           + np.einsum("t,ti,tj->ij", det, a, a)
           + np.einsum("t,ti,tj->ij", det, b, b)
           + np.einsum("t,ti,tj->ij", det, c, c)) / 120.0
    cov = density * cov - density * volume * np.outer(centroid, centroid)
    inertia = np.trace(cov) * np.eye(3) - cov
    return volume, centroid, 0.5 * (inertia + inertia.T)


SHAPES = ("sphere", "ellipsoid", "mesh")


def make_body(shape: str, density: float, *, radius: float | None = None,
              semi_axes=None, triangles=None) -> BodySpec:
    """Build a :class:`BodySpec` with mass, inertia and ``r_star`` filled in."""
    if density <= 0:
        raise GeometryError("body density must be positive")
    if shape == "sphere":
        if radius is None or radius <= 0:
            raise GeometryError("sphere radius must be positive")
        a = float(radius)
        mass = density * 4.0 / 3.0 * np.pi * a**3
        inertia = 0.4 * mass * a**2 * np.eye(3)
        axes = (a, a, a)
        return BodySpec("sphere", density, mass, inertia, 2.0 * a, semi_axes=axes)
    if shape == "ellipsoid":
        axes = tuple(float(v) for v in semi_axes)
        if len(axes) != 3 or min(axes) <= 0:
            raise GeometryError("ellipsoid needs three positive semi-axes")
        a, b, c = axes
        if a == b == c:
            return make_body("sphere", density, radius=a)
        mass = density * 4.0 / 3.0 * np.pi * a * b * c
        inertia = mass / 5.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
        return BodySpec("ellipsoid", density, mass, inertia, 2.0 * max(axes), semi_axes=axes)
    if shape == "mesh":
        tris = np.array(triangles, dtype=float).reshape(-1, 3, 3)
        _check_closed(tris)
        volume, centroid, inertia = polyhedron_mass_properties(tris, density)
        tris = tris - centroid
        body = BodySpec("mesh", density, density * volume, inertia, 0.0, triangles=tris)
        return BodySpec("mesh", density, body.mass, inertia, compute_r_star(body), triangles=tris)
    raise GeometryError(f"unknown shape {shape!r}")


def compute_r_star(body: BodySpec) -> float:
    """Twice the radius of the smallest origin-centred ball containing the body."""
    if body.semi_axes is not None:
        return 2.0 * max(body.semi_axes)
    return 2.0 * float(np.linalg.norm(body.triangles.reshape(-1, 3), axis=1).max())


@dataclass(frozen=True)
class GridSpec:
    """Uniform staggered grid on the box [-L, L]^3 with N cells per side.

    Arrays are indexed (x, y, z).  ``u[0]`` has shape (N+1, N, N), ``u[1]``
    (N, N+1, N), ``u[2]`` (N, N, N+1); pressure lives on (N, N, N) cells.
    """

    half_width: float
    cells: int

    def __post_init__(self):
        if self.cells < 16 or self.cells % 2:
            raise GeometryError(f"cells_per_side must be even and >= 16, got {self.cells}")
        if self.half_width <= 0:
            raise GeometryError("half_width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.cells) + 0.5) * self.h

    @property
    def nodes(self) -> np.ndarray:
        return -self.half_width + np.arange(self.cells + 1) * self.h

    def face_shape(self, c: int) -> tuple[int, int, int]:
        shape = [self.cells] * 3
        shape[c] += 1
        return tuple(shape)

    def face_coords(self, c: int):
        """Open-mesh (x, y, z) coordinates of the component-``c`` faces."""
        axes = [self.nodes if d == c else self.centers for d in range(3)]
        return np.ix_(*axes)

    def zeros_velocity(self) -> list[np.ndarray]:
        return [np.zeros(self.face_shape(c)) for c in range(3)]

    def check_body(self, body: BodySpec, min_ratio: float = 2.0) -> None:
        if self.half_width < min_ratio * body.r_star:
            raise GeometryError(
                f"half_width {self.half_width} < {min_ratio}*r_star = {min_ratio * body.r_star}")


@dataclass
class DomainMask:
    """Voxel partition of the grid into body and fluid.

    ``phi`` is the per-cell body volume fraction.  ``rigid`` holds one boolean
    array per velocity component marking faces whose control volume is at
    least a quarter inside the body; those faces carry the rigid velocity.
    """

    phi: np.ndarray
    rigid: list[np.ndarray]
    grid: GridSpec

    @property
    def fluid_weight(self) -> list[np.ndarray]:
        return [1.0 - r for r in self.rigid]

    @property
    def interior_cells(self) -> np.ndarray:
        return np.argwhere(self.phi >= 1.0)

    @property
    def rigid_cells(self) -> np.ndarray:
        """Cells all of whose six faces are rigid."""
        rx, ry, rz = self.rigid
        return rx[:-1] & rx[1:] & ry[:, :-1] & ry[:, 1:] & rz[..., :-1] & rz[..., 1:]

    def body_volume(self) -> float:
        return float(self.phi.sum() * self.grid.h**3)


def rasterize(body: BodySpec, grid: GridSpec, min_ratio: float = 2.0) -> DomainMask:
    """Per-cell volume fractions by corner classification and 4^3 subsampling.

    The grid half-width must be at least ``min_ratio * r_star``.
    """
    grid.check_body(body, min_ratio)
    n, h = grid.cells, grid.h
    if body.semi_axes is not None:
        extent = np.asarray(body.semi_axes)
    else:
        extent = np.abs(body.triangles.reshape(-1, 3)).max(axis=0)
    if np.any(extent > grid.half_width - CLEARANCE_CELLS * h):
        raise GeometryError("body does not fit inside the grid with 4-cell clearance")

    nodes = grid.nodes
    corners = body.inside(np.stack(np.meshgrid(nodes, nodes, nodes, indexing="ij"), axis=-1))
    count = sum(corners[i:n + i, j:n + j, k:n + k].astype(np.int8)
                for i in (0, 1) for j in (0, 1) for k in (0, 1))
    phi = (count == 8).astype(float)
    mixed = (count > 0) & (count < 8)
    cut = ndimage.binary_dilation(mixed, structure=np.ones((3, 3, 3), bool))

    idx = np.argwhere(cut)
    offs = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES * h
    sub = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), axis=-1).reshape(-1, 3)
    lo = nodes[idx]
    pts = lo[:, None, :] + sub[None, :, :]
    phi[tuple(idx.T)] = body.inside(pts).mean(axis=1)

    rigid = []
    for c in range(3):
        pad = [(0, 0)] * 3
        pad[c] = (1, 1)
        p = np.pad(phi, pad)
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[c] = slice(0, n + 1)
        sl_hi[c] = slice(1, n + 2)
        rigid.append(0.5 * (p[tuple(sl_lo)] + p[tuple(sl_hi)]) >= RIGID_FACE_FRACTION)
    mask = DomainMask(phi, rigid, grid)

    if not mask.rigid_cells.any():
        raise GeometryError("body is not resolved by any rigid cell")
    across = body.min_dimension() / h
    if across < 8:
        warnings.warn(f"body resolved by only {across:.1f} cells across its smallest dimension",
                      stacklevel=2)
    logger.debug("rasterized body: %d interior cells, %d cut cells",
                 int((phi >= 1).sum()), int(((phi > 0) & (phi < 1)).sum()))
    return mask
