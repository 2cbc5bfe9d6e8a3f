import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigidfsi.config import ConfigError
from rigidfsi.gronwall import (GronwallProblem, ScalarProfile, certify, constants,
                               integrate_equality_ode, parse_problem, reduce_powers)

# halving a subnormal coefficient underflows to zero, so keep them out
nonneg = st.floats(0, 50, allow_nan=False, allow_subnormal=False)


def test_constants_examples():
    assert constants(3, 0.5, 3)[0] == 6
    big, eta = constants(0, 0, 1.5)
    assert big == 2 and eta == pytest.approx(0.5 ** 2)
    big, eta = constants(0, 1, 3)
    assert big == 2 and eta == pytest.approx(1 / math.sqrt(2)) and eta == pytest.approx(0.70711,
                                                                                          abs=1e-5)
    with pytest.raises(ValueError):
        constants(1, 1, 1.0)


@given(nonneg, nonneg, nonneg, st.floats(1.01, 6))
def test_constants_monotone(c1, c2, bump, alpha):
    m0, e0 = constants(c1, c2, alpha)
    for m1, e1 in (constants(c1 + bump, c2, alpha), constants(c1, c2 + bump, alpha)):
        assert m1 >= m0 and e1 <= e0
    assert m0 >= 2 and 0 < e0 <= 1


def test_equality_ode_closed_forms():
    tr = integrate_equality_ode(GronwallProblem(0.3, T=5.0), 0.1)
    assert np.all(tr.y == 0.3)
    tr = integrate_equality_ode(GronwallProblem(1.0, c1=1.0, T=1.0), 1e-3)
    assert tr.y[-1] == pytest.approx(math.e, abs=1e-6)
    tr = integrate_equality_ode(GronwallProblem(0.1, c2=1.0, alpha=3, T=40.0), 1e-2)
    exact = 0.1 / np.sqrt(1 - 2 * 0.01 * tr.t)
    assert tr.t[-1] == pytest.approx(40.0) and np.abs(tr.y - exact).max() < 1e-6


def test_boxcar_jump_is_resolved():
    G = ScalarProfile("boxcar", 2.0, 0.25, 1.05)
    tr = integrate_equality_ode(GronwallProblem(0.0, G=G, T=2.0), 0.1)
    assert tr.y[-1] == pytest.approx(2.0 * 0.8, abs=1e-12)


def test_blow_up_flagged_and_premise_unmet():
    p = GronwallProblem(2.0, c2=1.0, alpha=3, T=1.0)  # blows up at t = 1/8
    tr = integrate_equality_ode(p, 1e-3)
    assert tr.blew_up and tr.t[-1] < 0.2
    cert = certify(p, tr)
    assert not cert.premise_met and cert.co1_pass is None and cert.co3_pass is None


def test_zero_problem_passes_vacuously():
    p = GronwallProblem(0.0, T=10.0, c1=1.0, c2=1.0, infinite=True)
    cert = certify(p, integrate_equality_ode(p, 0.1))
    assert cert.premise_value == 0 and cert.premise_met
    assert cert.co1_pass and cert.co2_pass and cert.ok


def test_small_boxcar_problem():
    G = ScalarProfile("boxcar", 0.01, 0, 1)
    p = GronwallProblem(0.01, G=G, c2=1.0, alpha=3, T=10.0)
    cert = certify(p, integrate_equality_ode(p))
    assert cert.premise_met and cert.co1_pass
    assert cert.max_y < 2 * cert.eta
    assert cert.co3_pass and cert.A_bound >= 0
    # over a horizon of 100 the integral of y alone exceeds eta_sup, so the
    # premise is not met there
    long = GronwallProblem(0.01, G=G, c2=1.0, alpha=3, T=100.0)
    assert not certify(long, integrate_equality_ode(long)).premise_met


def random_problem(rng, c1_zero=False):
    kind = rng.choice(["zero", "constant", "boxcar", "exp", "table"])
    amp = 10 ** rng.uniform(-4, -1)
    if kind == "boxcar":
        a = rng.uniform(0, 2)
        G = ScalarProfile("boxcar", amp, a, a + rng.uniform(0.1, 2))
    elif kind == "exp":
        G = ScalarProfile("exp", amp, rate=rng.uniform(0.1, 3))
    elif kind == "table":
        times = np.sort(rng.uniform(0, 3, 4))
        G = ScalarProfile("table", times=tuple(times), values=tuple(rng.uniform(0, amp, 4)))
    else:
        G = ScalarProfile(kind, amp if kind == "constant" else 0.0)
    alpha = 3.0 if c1_zero else rng.uniform(1.2, 4)
    c1 = 0.0 if c1_zero else rng.uniform(0, 3)
    return GronwallProblem(10 ** rng.uniform(-4, -1), G=G, c1=c1, c2=rng.uniform(0, 3),
                           alpha=alpha, T=rng.uniform(1, 10))


def test_randomized_co1_sweep():
    rng = np.random.default_rng(2024)
    accepted = violations = 0
    while accepted < 120:
        p = random_problem(rng)
        cert = certify(p, integrate_equality_ode(p, 1e-2))
        if not cert.premise_met:
            continue
        accepted += 1
        violations += not cert.co1_pass
    assert violations == 0


def test_weighted_bound_subfamily():
    rng = np.random.default_rng(7)
    accepted = 0
    while accepted < 60:
        p = random_problem(rng, c1_zero=True)
        if p.G.kind in ("constant", "exp"):
            continue  # keep t G compactly supported
        cert = certify(p, integrate_equality_ode(p, 1e-2))
        if not cert.premise_met:
            continue
        accepted += 1
        assert cert.co3_pass, (p, cert)


def test_tail_criterion_on_decaying_trajectory():
    # a trajectory satisfying the differential inequality with y -> 0
    from rigidfsi.gronwall import Trajectory
    t = np.linspace(0, 1000, 100001)
    y = 1e-3 / (1 + t) ** 2
    p = GronwallProblem(1e-3, c2=1.0, alpha=3, T=1000.0, infinite=True)
    cert = certify(p, Trajectory(t, y))
    assert cert.premise_met and cert.co1_pass and cert.co2_pass and cert.co3_pass


def test_reduce_powers_examples():
    assert reduce_powers(0, 0, 1) == (0, 1)
    assert reduce_powers(0, 2, 0) == (1, 1)
    with pytest.raises(ValueError):
        reduce_powers(-1, 0, 0)


def _dominates(a32, a2, a3, n=100_000):
    c1, c2 = reduce_powers(a32, a2, a3)
    y = np.logspace(-8, 8, n)
    lhs = a32 * y**1.5 + a2 * y**2 + a3 * y**3
    rhs = c1 * y + c2 * y**3
    return np.all(lhs <= rhs * (1 + 1e-12))


def test_reduce_powers_dominance_grid():
    assert _dominates(1, 1, 1)


@settings(max_examples=50, deadline=None)
@given(nonneg, nonneg, nonneg)
def test_reduce_powers_dominance_random(a32, a2, a3):
    assert _dominates(a32, a2, a3, 2000)


def test_parse_problem():
    text = """
    # small boxcar problem
    problem.y0 = 0.01
    problem.c2 = 1
    problem.alpha = 3
    problem.T = 10
    G.kind = boxcar
    G.amplitude = 0.01
    G.stop = 1
    """
    p, dt = parse_problem(text)
    assert p.G == ScalarProfile("boxcar", 0.01, 0.0, 1.0) and p.T == 10 and dt == 1e-2
    with pytest.raises(ConfigError, match=":2:"):
        parse_problem("problem.y0 = 1\nproblem.alpha = x\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_problem("problem.y0 = 1\nproblem.gamma = 2\n")
    with pytest.raises(ConfigError):
        parse_problem("problem.y0 = 1\nproblem.alpha = 0.5\n")
