"""Shipped fixture meshes.

``brain_d1``, ``brain_d2`` and ``brain_d3`` triangulate the same convex,
brain-slice-like domain with 49, 80 and 144 triangles. ``square_4`` is a
regular 32-triangle mesh of the unit square.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

HERE = Path(__file__).resolve().parent
FIXTURES = ("brain_d1", "brain_d2", "brain_d3", "square_4")
ALIASES = {"d1": "brain_d1", "d2": "brain_d2", "d3": "brain_d3", "49": "brain_d1", "80": "brain_d2", "144": "brain_d3"}


def fixture_paths(name: str) -> tuple[Path, Path]:
    name = ALIASES.get(name, name)
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture mesh {name!r}; available: {', '.join(FIXTURES)}")
    return HERE / f"{name}_vertices.csv", HERE / f"{name}_triangles.csv"


@lru_cache(maxsize=None)
def load_fixture(name: str):
    from ..geometry import load_mesh

    v, t = fixture_paths(name)
    return load_mesh(v, t, name=ALIASES.get(name, name))
