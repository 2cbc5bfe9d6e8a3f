"""Flat ``section.key = value`` configuration files.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Every
error names the file and line it came from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .coupling import INITIAL_PRESETS, PROFILE_KINDS, ForcingProgram, Profile
from .geometry import SHAPES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    value: str
    line: int


class FlatConfig:
    """Parsed ``section.key -> Entry`` mapping with typed, line-aware accessors."""

    def __init__(self, entries: dict[str, Entry], source: str = "<config>"):
        self.entries = entries
        self.source = source
        self._used: set[str] = set()

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "FlatConfig":
        entries: dict[str, Entry] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line[0] in "#;":
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{n}: expected 'section.key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.count(".") != 1 or not all(key.split(".")):
                raise ConfigError(f"{source}:{n}: key {key!r} must look like section.key")
            if key in entries:
                raise ConfigError(f"{source}:{n}: duplicate key {key!r} "
                                  f"(first set on line {entries[key].line})")
            entries[key] = Entry(value, n)
        return cls(entries, source)

    @classmethod
    def read(cls, path: str | Path) -> "FlatConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        return cls.parse(text, str(path))

    def _where(self, key: str) -> str:
        e = self.entries.get(key)
        return f"{self.source}:{e.line}" if e else self.source

    def fail(self, key: str, msg: str):
        raise ConfigError(f"{self._where(key)}: {key}: {msg}")

    def has(self, key: str) -> bool:
        return key in self.entries

    def raw(self, key: str, default=None) -> str | None:
        if key not in self.entries:
            if default is None:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return default
        self._used.add(key)
        return self.entries[key].value

    def text(self, key: str, default: str | None = None) -> str:
        return self.raw(key, default)

    def number(self, key: str, default: float | None = None) -> float:
        value = self.raw(key, None if default is None else repr(default))
        try:
            out = float(value)
        except ValueError:
            self.fail(key, f"expected a number, got {value!r}")
        if math.isnan(out):
            self.fail(key, "NaN is not allowed")
        return out

    def integer(self, key: str, default: int | None = None) -> int:
        value = self.raw(key, None if default is None else str(default))
        try:
            return int(value)
        except ValueError:
            self.fail(key, f"expected an integer, got {value!r}")

    def boolean(self, key: str, default: bool | None = None) -> bool:
        value = self.raw(key, None if default is None else str(default)).lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        self.fail(key, f"expected true/false, got {value!r}")

    def vector(self, key: str, default=None, size: int = 3) -> tuple[float, ...]:
        value = self.raw(key, None if default is None else ",".join(map(repr, default)))
        try:
            out = tuple(float(v) for v in value.split(","))
        except ValueError:
            self.fail(key, f"expected {size} comma-separated numbers, got {value!r}")
        if len(out) != size:
            self.fail(key, f"expected {size} comma-separated numbers, got {len(out)}")
        return out

    def numbers(self, key: str) -> tuple[float, ...]:
        value = self.raw(key)
        try:
            return tuple(float(v) for v in value.replace(";", ",").split(","))
        except ValueError:
            self.fail(key, f"expected comma-separated numbers, got {value!r}")

    def check_unused(self) -> None:
        for key, e in sorted(self.entries.items(), key=lambda kv: kv[1].line):
            if key not in self._used:
                raise ConfigError(f"{self.source}:{e.line}: unknown key {key!r}")


def read_profile(cfg: FlatConfig, section: str) -> Profile:
    """Build a :class:`Profile` from ``<section>.kind`` and its parameters."""
    kind = cfg.text(f"{section}.kind", "zero")
    if kind not in PROFILE_KINDS:
        cfg.fail(f"{section}.kind", f"unknown profile {kind!r} (choose from {', '.join(PROFILE_KINDS)})")
    kw = {"kind": kind}
    if kind in ("constant", "boxcar", "exp"):
        kw["amplitude"] = cfg.vector(f"{section}.amplitude")
    if kind == "boxcar":
        kw["start"] = cfg.number(f"{section}.start", 0.0)
        kw["stop"] = cfg.number(f"{section}.stop")
    if kind == "exp":
        kw["rate"] = cfg.number(f"{section}.rate")
    if kind == "table":
        times = cfg.numbers(f"{section}.times")
        vals = cfg.numbers(f"{section}.values")
        if len(vals) != 3 * len(times):
            cfg.fail(f"{section}.values", "need one x,y,z triple per table time")
        kw["times"] = times
        kw["values"] = tuple(tuple(vals[3 * i:3 * i + 3]) for i in range(len(times)))
    try:
        return Profile(**kw)
    except ValueError as exc:
        cfg.fail(f"{section}.kind", str(exc))


@dataclass
class SimConfig:
    """Everything needed to set up and run one simulation."""

    shape: str = "sphere"
    body_density: float = 1.0
    radius: float = 1.0
    semi_axes: tuple = (1.0, 1.0, 1.0)
    mesh: str | None = None
    fluid_density: float = 1.0
    viscosity: float = 0.1
    half_width: float = 4.0
    cells: int = 32
    xi0: tuple = (0.0, 0.0, 0.0)
    omega0: tuple = (0.0, 0.0, 0.0)
    preset: str = "zero"
    velocity_file: str | None = None
    noise: float = 0.0
    forcing: ForcingProgram = field(default_factory=ForcingProgram)
    t_end: float = 1.0
    cfl_safety: float = 0.5
    dt_max: float = 1.0
    snapshot_every: int = 0
    output_dir: str = "run"
    seed: int = 0
    tol: float = 1e-8
    decay_window: tuple | None = None
    text: str = ""
    source: str = "<config>"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", base: Path | None = None) -> "SimConfig":
        cfg = FlatConfig.parse(text, source)
        base = base or Path.cwd()
        out = cls(text=text, source=source)

        out.shape = cfg.text("body.shape", "sphere")
        if out.shape not in SHAPES:
            cfg.fail("body.shape", f"unknown shape {out.shape!r} (choose from {', '.join(SHAPES)})")
        out.body_density = cfg.number("body.density")
        if out.shape == "sphere":
            out.radius = cfg.number("body.radius", 1.0)
        elif out.shape == "ellipsoid":
            out.semi_axes = cfg.vector("body.semi_axes")
        else:
            out.mesh = str(base / cfg.text("body.mesh"))
            if not Path(out.mesh).is_file():
                cfg.fail("body.mesh", f"file not found: {out.mesh}")

        out.fluid_density = cfg.number("fluid.density", 1.0)
        out.viscosity = cfg.number("fluid.viscosity")
        for key, val in (("fluid.density", out.fluid_density), ("fluid.viscosity", out.viscosity),
                         ("body.density", out.body_density)):
            if val <= 0:
                cfg.fail(key, "must be positive")

        out.half_width = cfg.number("grid.half_width")
        out.cells = cfg.integer("grid.cells")
        if out.cells < 16 or out.cells % 2:
            cfg.fail("grid.cells", f"must be an even integer >= 16, got {out.cells}")
        if out.half_width <= 0:
            cfg.fail("grid.half_width", "must be positive")

        out.xi0 = cfg.vector("initial.xi", (0.0, 0.0, 0.0))
        out.omega0 = cfg.vector("initial.omega", (0.0, 0.0, 0.0))
        out.preset = cfg.text("initial.preset", "zero")
        if out.preset not in INITIAL_PRESETS:
            cfg.fail("initial.preset", f"unknown preset {out.preset!r} "
                                       f"(choose from {', '.join(INITIAL_PRESETS)})")
        if out.preset == "file":
            out.velocity_file = str(base / cfg.text("initial.file"))
            if not Path(out.velocity_file).is_file():
                cfg.fail("initial.file", f"file not found: {out.velocity_file}")
        out.noise = cfg.number("initial.noise", 0.0)
        if out.noise < 0:
            cfg.fail("initial.noise", "must be non-negative")

        out.forcing = ForcingProgram(read_profile(cfg, "force"), read_profile(cfg, "torque"))

        out.t_end = cfg.number("run.t_end")
        if out.t_end <= 0:
            cfg.fail("run.t_end", "must be positive")
        out.cfl_safety = cfg.number("run.cfl_safety", 0.5)
        if not 0 < out.cfl_safety <= 1:
            cfg.fail("run.cfl_safety", "must lie in (0, 1]")
        out.dt_max = cfg.number("run.dt_max", 1.0)
        out.snapshot_every = cfg.integer("run.snapshot_every", 0)
        out.output_dir = cfg.text("run.output_dir", "run")
        out.seed = cfg.integer("run.seed", 0)
        out.tol = cfg.number("run.tol", 1e-8)
        if cfg.has("run.decay_window"):
            w = cfg.vector("run.decay_window", size=2)
            if not 0 < w[0] < w[1]:
                cfg.fail("run.decay_window", "needs 0 < t1 < t2")
            out.decay_window = w
        cfg.check_unused()
        return out

    @classmethod
    def read(cls, path: str | Path) -> "SimConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        return cls.from_text(text, str(path), path.parent)
