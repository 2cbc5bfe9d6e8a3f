import numpy as np
import pytest

from rigidfsi.fluid import (FluidParams, FluidState, SolverError, advective_term, cfl_dt,
                            diffusive_term, divergence, gradient, laplacian, momentum_rhs,
                            pressure_project, read_snapshot, solve_pressure_poisson,
                            write_snapshot)
from rigidfsi.geometry import GridSpec


def bump(r2, R=2.5):
    """Smooth, compactly supported weight (zero for |x| >= R)."""
    s = np.clip(1.0 - r2 / R**2, 0.0, None)
    return s**4


def sample(grid, funcs):
    out = []
    for c, f in enumerate(funcs):
        x, y, z = (np.broadcast_to(v, grid.face_shape(c)) for v in grid.face_coords(c))
        out.append(f(x, y, z).astype(float))
    return out


def manufactured():
    """Smooth compact field (not divergence-free; advection is pointwise)."""
    def w(x, y, z):
        return bump(x * x + y * y + z * z)

    def dw(x, y, z, d):
        r2 = x * x + y * y + z * z
        s = np.clip(1.0 - r2 / 6.25, 0.0, None)
        return 4 * s**3 * (-2 * (x, y, z)[d] / 6.25)

    comps = [lambda x, y, z: np.sin(y) + 0.5 * z, lambda x, y, z: np.cos(x) * z,
             lambda x, y, z: x * y + 0.3]
    dcomps = [lambda x, y, z: (0 * x, np.cos(y), 0.5 + 0 * x),
              lambda x, y, z: (-np.sin(x) * z, 0 * x, np.cos(x)),
              lambda x, y, z: (y, x, 0 * x)]
    u = [lambda x, y, z, c=c: w(x, y, z) * comps[c](x, y, z) for c in range(3)]

    def grad(c, x, y, z):
        g = dcomps[c](x, y, z)
        return [w(x, y, z) * g[d] + dw(x, y, z, d) * comps[c](x, y, z) for d in range(3)]
    return u, grad


def advective_oracle(grid, xi, omega):
    u, grad = manufactured()
    out = []
    for c in range(3):
        x, y, z = (np.broadcast_to(v, grid.face_shape(c)) for v in grid.face_coords(c))
        X = (x, y, z)
        vel = [u[d](x, y, z) for d in range(3)]
        V = [xi[d] + omega[(d + 1) % 3] * X[(d + 2) % 3] - omega[(d + 2) % 3] * X[(d + 1) % 3]
             for d in range(3)]
        g = grad(c, x, y, z)
        a, b = (c + 1) % 3, (c + 2) % 3
        out.append(sum((vel[d] - V[d]) * g[d] for d in range(3))
                   + omega[a] * vel[b] - omega[b] * vel[a])
    return out


def test_advective_zero_and_constant_fields():
    g = GridSpec(2.0, 16)
    zero = g.zeros_velocity()
    for arr in advective_term(zero, [1, 2, 3], [0.1, 0.2, 0.3], g):
        assert not arr.any()
    const = [np.full(g.face_shape(c), v) for c, v in enumerate((0.5, -1.0, 2.0))]
    for c, arr in enumerate(advective_term(const, [0, 0, 0], [0, 0, 0], g)):
        inner = arr[tuple(slice(2, -2) for _ in range(3))]
        np.testing.assert_allclose(inner, 0.0, atol=1e-14)


def test_advective_second_order():
    xi, omega = np.array([0.3, -0.2, 0.1]), np.array([0.2, 0.1, -0.3])
    u, _ = manufactured()
    errs = []
    for n in (32, 64):
        g = GridSpec(4.0, n)
        got = advective_term(sample(g, u), xi, omega, g)
        ref = advective_oracle(g, xi, omega)
        errs.append(max(np.abs(a - b)[tuple(slice(1, -1) for _ in range(3))].max()
                        for a, b in zip(got, ref)))
    assert np.log2(errs[0] / errs[1]) >= 1.9


def test_fused_rhs_matches_reference_operators():
    g = GridSpec(3.0, 20)
    rng = np.random.default_rng(3)
    u = [rng.standard_normal(g.face_shape(c)) for c in range(3)]
    for c in range(3):
        u[c][tuple(slice(0, 1) if d == c else slice(None) for d in range(3))] = 0
        u[c][tuple(slice(-1, None) if d == c else slice(None) for d in range(3))] = 0
    xi, om, nu = np.array([0.1, 0.2, -0.3]), np.array([-0.2, 0.05, 0.4]), 0.37
    fused = momentum_rhs(u, xi, om, g, nu)
    ref = [d - a for d, a in zip(diffusive_term(u, nu, g), advective_term(u, xi, om, g))]
    for a, b in zip(fused, ref):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_laplacian_affine_and_sine():
    g = GridSpec(4.0, 32)
    inner = tuple(slice(2, -2) for _ in range(3))
    lin = sample(g, [lambda x, y, z: 2 * x + 1, lambda x, y, z: 0 * x, lambda x, y, z: 0 * x])
    np.testing.assert_allclose(laplacian(lin, g)[0][inner], 0.0, atol=1e-12)
    mu = 0.7
    errs = []
    for n in (32, 64):
        g = GridSpec(4.0, n)
        inner = tuple(slice(2, -2) for _ in range(3))
        s = sample(g, [lambda x, y, z: np.sin(x), lambda x, y, z: 0 * x, lambda x, y, z: 0 * x])
        d = diffusive_term(s, mu, g)[0]
        errs.append(np.abs(d + mu * s[0])[inner].max())
    assert errs[0] < 0.01 and np.log2(errs[0] / errs[1]) > 1.9
    assert all(not a.any() for a in diffusive_term(s, 0.0, g))


def test_diffusive_superposition():
    g = GridSpec(2.0, 16)
    rng = np.random.default_rng(0)
    u = [rng.standard_normal(g.face_shape(c)) for c in range(3)]
    w = [rng.standard_normal(g.face_shape(c)) for c in range(3)]
    lhs = diffusive_term([a + 2 * b for a, b in zip(u, w)], 0.3, g)
    du, dw = diffusive_term(u, 0.3, g), diffusive_term(w, 0.3, g)
    for c in range(3):
        np.testing.assert_allclose(lhs[c], du[c] + 2 * dw[c], atol=1e-10)


def test_advective_linear_in_frame_terms():
    g = GridSpec(2.0, 16)
    rng = np.random.default_rng(2)
    u = [rng.standard_normal(g.face_shape(c)) for c in range(3)]
    x1, w1 = rng.standard_normal(3), rng.standard_normal(3)
    x2, w2 = rng.standard_normal(3), rng.standard_normal(3)
    base = advective_term(u, [0, 0, 0], [0, 0, 0], g)
    a1 = advective_term(u, x1, w1, g)
    a2 = advective_term(u, x2, w2, g)
    a12 = advective_term(u, x1 + x2, w1 + w2, g)
    for c in range(3):
        np.testing.assert_allclose(a12[c] - base[c], (a1[c] - base[c]) + (a2[c] - base[c]),
                                   atol=1e-10)


def test_summation_by_parts():
    g = GridSpec(2.0, 24)
    rng = np.random.default_rng(5)

    def interior_random():
        out = []
        for c in range(3):
            a = np.zeros(g.face_shape(c))
            a[tuple(slice(3, -3) for _ in range(3))] = rng.standard_normal(
                tuple(s - 6 for s in g.face_shape(c)))
            out.append(a)
        return out
    u, w = interior_random(), interior_random()
    lhs = sum(float((L * b).sum()) for L, b in zip(laplacian(u, g), w)) * g.h**3
    rhs = -sum(float((np.diff(a, axis=d) * np.diff(b, axis=d)).sum())
               for a, b in zip(u, w) for d in range(3)) * g.h
    assert lhs == pytest.approx(rhs, rel=1e-12)


def random_field(g, rng):
    u = [rng.standard_normal(g.face_shape(c)) for c in range(3)]
    for c in range(3):
        u[c][tuple(slice(0, 1) if d == c else slice(None) for d in range(3))] = 0
        u[c][tuple(slice(-1, None) if d == c else slice(None) for d in range(3))] = 0
    return u


def test_projection_of_divergence_free_field_is_identity():
    g = GridSpec(2.0, 16)
    u0, _ = pressure_project(random_field(g, np.random.default_rng(1)), g)
    u1, p = pressure_project(u0, g)
    for a, b in zip(u0, u1):
        np.testing.assert_allclose(a, b, atol=1e-12)
    assert abs(p.mean()) < 1e-14 and np.abs(p).max() < 1e-10


def test_projection_removes_gradients():
    g = GridSpec(2.0, 24)
    rng = np.random.default_rng(9)
    c = g.centers
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    k = rng.uniform(0.5, 1.5, size=3)
    phi = np.cos(k[0] * X) * np.sin(k[1] * Y + 0.3) * np.cos(k[2] * Z - 0.2)
    phi -= phi.mean()
    u_star = gradient(phi, g)
    u, _ = pressure_project(u_star, g, tol=1e-8)
    umax = max(np.abs(a).max() for a in u_star)
    assert max(np.abs(a).max() for a in u) <= 10 * 1e-8 * umax


def test_projection_divergence_at_n48():
    g = GridSpec(4.0, 48)
    u, _ = pressure_project(random_field(g, np.random.default_rng(4)), g, tol=1e-8)
    assert np.abs(divergence(u, g)).max() <= 1e-7


def test_projection_idempotent():
    g = GridSpec(2.0, 16)
    u1, _ = pressure_project(random_field(g, np.random.default_rng(6)), g, tol=1e-8)
    u2, _ = pressure_project(u1, g, tol=1e-8)
    scale = max(np.abs(a).max() for a in u1)
    assert max(np.abs(a - b).max() for a, b in zip(u1, u2)) <= 10 * 1e-8 * scale


def test_poisson_non_convergence_reports_residual():
    g = GridSpec(2.0, 16)
    rhs = np.random.default_rng(0).standard_normal((16, 16, 16))
    rhs -= rhs.mean()
    with pytest.raises(SolverError) as err:
        solve_pressure_poisson(rhs, g, tol=1e-30, max_iter=2)
    assert err.value.residual > 0


def test_cfl_examples():
    g = GridSpec(0.8, 16)  # h = 0.1
    zero = g.zeros_velocity()
    assert cfl_dt(zero, [0, 0, 0], [0, 0, 0], g, nu=1.0, safety=0.5) == pytest.approx(
        0.5 * 0.01 / 6)
    assert cfl_dt(zero, [0, 0, 0], [0, 0, 0], g, nu=0.0, dt_max=0.25) == 0.25
    slow = cfl_dt(zero, [0, 0, 0], [0, 0, 2.0], g, nu=1e-6)
    fast = cfl_dt(zero, [0, 0, 0], [0, 0, 4.0], g, nu=1e-6)
    assert fast <= slow
    with pytest.raises(ValueError):
        cfl_dt(zero, [0, 0, 0], [0, 0, 0], g, nu=1.0, safety=0.0)


def test_cfl_random_state_respects_both_limits():
    g = GridSpec(2.0, 16)
    rng = np.random.default_rng(8)
    for _ in range(20):
        u = [rng.standard_normal(g.face_shape(c)) * rng.uniform(0, 3) for c in range(3)]
        xi, om = rng.standard_normal(3), rng.standard_normal(3)
        nu = rng.uniform(0.01, 1)
        safety = rng.uniform(0.1, 1)
        dt = cfl_dt(u, xi, om, g, nu, safety)
        speed = (max(np.abs(a).max() for a in u) + np.linalg.norm(xi)
                 + np.linalg.norm(om) * np.sqrt(3) * g.half_width)
        assert dt <= safety * g.h / speed * (1 + 1e-12)
        assert dt <= safety * g.h**2 / (6 * nu) * (1 + 1e-12)


def test_snapshot_round_trip(tmp_path):
    g = GridSpec(3.0, 16)
    rng = np.random.default_rng(11)
    state = FluidState([rng.standard_normal(g.face_shape(c)) for c in range(3)],
                       rng.standard_normal((16, 16, 16)), g)
    write_snapshot(tmp_path / "s.bin", state, 1.25)
    back, t = read_snapshot(tmp_path / "s.bin")
    assert t == 1.25 and back.grid == g
    np.testing.assert_array_equal(back.p, state.p)
    for a, b in zip(back.u, state.u):
        np.testing.assert_array_equal(a, b)
    header = (tmp_path / "s.bin").read_bytes().split(b"\n", 1)[0].decode()
    assert header.split()[:4] == ["FSI-SNAP", "v1", "16", "3.0"]
    # pressure is stored z-major: the second value is p[1, 0, 0]
    raw = np.frombuffer((tmp_path / "s.bin").read_bytes()[len(header) + 1:][:16], "<f8")
    assert raw[1] == state.p[1, 0, 0]


def test_fluid_params_validation():
    assert FluidParams(2.0, 0.5).nu == 0.25
    with pytest.raises(ValueError):
        FluidParams(0.0, 1.0)
    with pytest.raises(ValueError):
        FluidParams(1.0, -1.0)
