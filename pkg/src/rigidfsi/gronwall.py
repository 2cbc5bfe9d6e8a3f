"""A generalized Gronwall lemma made executable.

For ``y' <= G + c1 y + c2 y**alpha`` with ``y(0) + int G + int y < eta`` and
``eta`` below ``(1/M)**(1/(alpha-1))``, ``M = 2 max(1, c1, c2)``, the lemma
gives ``y < M eta``; with integrable data ``y -> 0``; and when ``c1 = 0``
the weighted bound ``t y(t) <= beta exp(c2 int y**(alpha-1))`` with
``beta = int (t G + y)``.  This module integrates the equality case with
RK4 as an oracle and checks those conclusions on a sampled trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, FlatConfig

G_KINDS = ("zero", "constant", "boxcar", "exp", "table")


@dataclass(frozen=True)
class ScalarProfile:
    """Non-negative scalar forcing ``G(t)``; same kinds as the force profiles."""

    kind: str = "zero"
    amplitude: float = 0.0
    start: float = 0.0
    stop: float = 0.0
    rate: float = 0.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in G_KINDS:
            raise ValueError(f"unknown profile {self.kind!r}")
        if self.kind in ("constant", "boxcar", "exp") and self.amplitude < 0:
            raise ValueError("G must be non-negative")
        if self.kind == "boxcar" and self.stop < self.start:
            raise ValueError("boxcar stop must not precede start")
        if self.kind == "exp" and self.rate < 0:
            raise ValueError("exponential rate must be non-negative")
        if self.kind == "table":
            t = np.asarray(self.times, float)
            if len(t) < 2 or np.any(np.diff(t) <= 0) or len(self.values) != len(t):
                raise ValueError("table needs increasing times and one value per time")
            if min(self.values) < 0:
                raise ValueError("G must be non-negative")

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, self.amplitude)
        if self.kind == "boxcar":
            return np.where((t >= self.start) & (t < self.stop), self.amplitude, 0.0)
        if self.kind == "exp":
            return self.amplitude * np.exp(-self.rate * t)
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)

    def limit(self, t, side: str):
        """One-sided limit of ``G`` at ``t`` (``side`` is ``"left"`` or ``"right"``)."""
        t = np.asarray(t, float)
        if self.kind == "boxcar":
            lo, hi = self.start, self.stop
            inside = (t >= lo) & (t < hi) if side == "right" else (t > lo) & (t <= hi)
            return np.where(inside, self.amplitude, 0.0)
        if self.kind == "table":
            lo, hi = self.times[0], self.times[-1]
            inside = (t >= lo) & (t < hi) if side == "right" else (t > lo) & (t <= hi)
            return np.where(inside, np.interp(t, self.times, self.values), 0.0)
        return self(t)

    def breakpoints(self) -> tuple[float, ...]:
        if self.kind == "boxcar":
            return (self.start, self.stop)
        if self.kind == "table":
            return tuple(self.times)
        return ()

    def weighted_integral_finite(self) -> bool:
        """Whether ``int_0^inf t G(t) dt`` is finite."""
        if self.kind == "constant":
            return self.amplitude == 0
        if self.kind == "exp":
            return self.amplitude == 0 or self.rate > 0
        return True


@dataclass(frozen=True)
class GronwallProblem:
    y0: float
    G: ScalarProfile = field(default_factory=ScalarProfile)
    c1: float = 0.0
    c2: float = 0.0
    alpha: float = 3.0
    T: float = 1000.0
    infinite: bool = False

    def __post_init__(self):
        if self.y0 < 0:
            raise ValueError("y0 must be non-negative")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    blew_up: bool = False


@dataclass(frozen=True)
class GronwallCertificate:
    """Constants and conclusions.  A check is ``None`` when it does not apply."""

    bigM: float
    eta_sup: float
    premise_value: float
    premise_met: bool
    eta: float | None
    co1_pass: bool | None
    co2_pass: bool | None
    co3_pass: bool | None
    A_bound: float | None
    beta: float | None
    max_y: float
    blew_up: bool

    @property
    def ok(self) -> bool:
        return self.premise_met and all(c is not False for c in
                                        (self.co1_pass, self.co2_pass, self.co3_pass))

    def report(self) -> str:
        def fmt(v):
            if v is None:
                return "n/a"
            if isinstance(v, bool):
                return "pass" if v else "FAIL"
            return f"{v:.10g}"
        lines = [f"bigM = {fmt(self.bigM)}",
                 f"eta_sup = {fmt(self.eta_sup)}",
                 f"premise_value = {fmt(self.premise_value)}",
                 f"premise_met = {'yes' if self.premise_met else 'no'}",
                 f"eta = {fmt(self.eta)}",
                 f"max_y = {fmt(self.max_y)}",
                 f"blew_up = {'yes' if self.blew_up else 'no'}",
                 f"co1 = {fmt(self.co1_pass)}",
                 f"co2 = {fmt(self.co2_pass)}",
                 f"co3 = {fmt(self.co3_pass)}",
                 f"A_bound = {fmt(self.A_bound)}",
                 f"beta = {fmt(self.beta)}"]
        return "\n".join(lines) + "\n"


def constants(c1: float, c2: float, alpha: float) -> tuple[float, float]:
    """``(M, eta_sup)`` with ``M = 2 max(1, c1, c2)`` and ``eta_sup = M**(-1/(alpha-1))``."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if c1 < 0 or c2 < 0:
        raise ValueError("c1 and c2 must be non-negative")
    big = 2.0 * max(1.0, c1, c2)
    return big, (1.0 / big) ** (1.0 / (alpha - 1.0))


def integrate_equality_ode(problem: GronwallProblem, dt: float = 1e-2,
                           guard: float = 1e12) -> Trajectory:
    """RK4 for ``y' = G + c1 y + c2 y**alpha`` on ``[0, T]``.

    Steps are shortened to land on the jumps of ``G``.  If ``y`` passes
    ``guard`` the integration stops and the trajectory is flagged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    G, c1, c2, a = problem.G, problem.c1, problem.c2, problem.alpha
    T = problem.T
    n = int(math.ceil(T / dt - 1e-9))
    grid = np.linspace(0.0, T, n + 1)
    marks = [b for b in G.breakpoints() if 0 < b < T]
    if marks:
        grid = np.union1d(grid, marks)
    ts = grid.tolist()

    def f(t, y, side=None):
        g = float(G(t)) if side is None else float(G.limit(t, side))
        return g + c1 * y + c2 * y**a

    y = float(problem.y0)
    out = [y]
    blew = False
    for k in range(len(ts) - 1):
        t0, t1 = ts[k], ts[k + 1]
        h = t1 - t0
        try:
            k1 = f(t0, y, "right")
            k2 = f(t0 + h / 2, y + h / 2 * k1)
            k3 = f(t0 + h / 2, y + h / 2 * k2)
            k4 = f(t1, y + h * k3, "left")
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        except OverflowError:
            y = math.inf
        out.append(y)
        if not y <= guard:
            blew = True
            break
    t = np.asarray(ts[:len(out)])
    return Trajectory(t, np.asarray(out), blew)


def _trapz(y, t) -> float:
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def _trapz_limits(G: ScalarProfile, t, weight=None) -> float:
    """Trapezoid rule for ``weight * G`` using one-sided limits, exact across jumps on the grid."""
    w = np.ones_like(t) if weight is None else weight
    right = w[:-1] * G.limit(t[:-1], "right")
    left = w[1:] * G.limit(t[1:], "left")
    return float(0.5 * (np.diff(t) * (right + left)).sum())


def certify(problem: GronwallProblem, traj: Trajectory, tail_ratio: float = 1e-3,
            co3_margin: float = 1e-6) -> GronwallCertificate:
    """Check the premise and the three conclusions on a sampled trajectory.

    The tail check only runs for problems flagged as long-horizon: the mean of
    ``y`` over the last decade ``[T/10, T]`` must not exceed ``tail_ratio``
    times the peak.
    """
    big, eta_sup = constants(problem.c1, problem.c2, problem.alpha)
    t, y = np.asarray(traj.t, float), np.asarray(traj.y, float)
    finite = bool(np.all(np.isfinite(y)))
    max_y = float(np.max(y)) if finite else math.inf
    if traj.blew_up or not finite:
        premise = math.inf
    else:
        premise = float(y[0] + _trapz_limits(problem.G, t) + _trapz(y, t))
    met = premise < eta_sup and not traj.blew_up
    if not met:
        return GronwallCertificate(big, eta_sup, premise, False, None, None, None, None,
                                   None, None, max_y, traj.blew_up)
    eta = premise
    co1 = bool(max_y < big * eta) or (eta == 0.0 and max_y == 0.0)

    co2 = None
    if problem.infinite:
        peak = max_y
        tail = t >= t[-1] / 10.0
        if peak == 0.0:
            co2 = True
        else:
            co2 = bool(_trapz(y[tail], t[tail]) / (t[-1] - t[tail][0]) <= tail_ratio * peak)

    co3 = A = beta = None
    if problem.c1 == 0 and problem.alpha >= 2 and problem.G.weighted_integral_finite():
        beta = _trapz_limits(problem.G, t, t) + _trapz(y, t)
        A = beta * math.exp(problem.c2 * _trapz(y ** (problem.alpha - 1.0), t))
        co3 = bool(np.max(t * y) <= A * (1.0 + co3_margin))
    return GronwallCertificate(big, eta_sup, premise, True, eta, co1, co2, co3, A, beta,
                               max_y, False)


def reduce_powers(a32: float, a2: float, a3: float) -> tuple[float, float]:
    """``(c1, c2)`` with ``a32 y^1.5 + a2 y^2 + a3 y^3 <= c1 y + c2 y^3`` for ``y >= 0``.

    Uses ``y^1.5 <= (y + y^2)/2`` and then ``y^2 <= (y + y^3)/2``.
    """
    if min(a32, a2, a3) < 0:
        raise ValueError("coefficients must be non-negative")
    quad = a2 + 0.5 * a32
    return 0.5 * a32 + 0.5 * quad, a3 + 0.5 * quad


# -- problem files ------------------------------------------------------------

def read_g_profile(cfg: FlatConfig, section: str = "G") -> ScalarProfile:
    kind = cfg.text(f"{section}.kind", "zero")
    if kind not in G_KINDS:
        cfg.fail(f"{section}.kind", f"unknown profile {kind!r} (choose from {', '.join(G_KINDS)})")
    kw = {"kind": kind}
    if kind in ("constant", "boxcar", "exp"):
        kw["amplitude"] = cfg.number(f"{section}.amplitude")
    if kind == "boxcar":
        kw["start"] = cfg.number(f"{section}.start", 0.0)
        kw["stop"] = cfg.number(f"{section}.stop")
    if kind == "exp":
        kw["rate"] = cfg.number(f"{section}.rate")
    if kind == "table":
        kw["times"] = cfg.numbers(f"{section}.times")
        kw["values"] = cfg.numbers(f"{section}.values")
    try:
        return ScalarProfile(**kw)
    except ValueError as exc:
        cfg.fail(f"{section}.kind", str(exc))


def parse_problem(text: str, source: str = "<problem>") -> tuple[GronwallProblem, float]:
    """Read a problem block; returns the problem and the integration step."""
    cfg = FlatConfig.parse(text, source)
    G = read_g_profile(cfg)
    kw = dict(y0=cfg.number("problem.y0"), c1=cfg.number("problem.c1", 0.0),
              c2=cfg.number("problem.c2", 0.0), alpha=cfg.number("problem.alpha", 3.0),
              T=cfg.number("problem.T", 1000.0),
              infinite=cfg.boolean("problem.infinite", False))
    dt = cfg.number("problem.dt", 1e-2)
    if not dt > 0:
        cfg.fail("problem.dt", "must be positive")
    cfg.check_unused()
    try:
        return GronwallProblem(G=G, **kw), dt
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
