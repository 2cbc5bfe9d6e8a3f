"""Scenario configs shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def list_scenarios() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files(__name__).iterdir()
                  if p.name.endswith(".cfg"))


def scenario_path(name: str) -> Path | None:
    """Filesystem path of a shipped scenario (``name`` with or without ``.cfg``)."""
    name = name[:-4] if name.endswith(".cfg") else name
    if name not in list_scenarios():
        return None
    return Path(str(resources.files(__name__) / f"{name}.cfg"))
