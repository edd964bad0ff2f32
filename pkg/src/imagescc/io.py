"""File formats and run provenance.

Images
    Wide CSV with header ``z1,z2,y1,...,yn``, one row per pixel. Large stacks
    may instead be a raw little-endian float64 file of shape ``(n, N)`` next
    to a JSON sidecar ``{"format": "f8le", "n": .., "N": .., "data": "<file>",
    "coords": [[z1, z2], ...]}``.
Reports
    JSON, written with sorted keys and no timestamps so reruns are
    byte-identical. Every report carries a ``provenance`` block holding the
    run configuration, the seed and the package version.
Grids
    CSV with ``repr`` floats.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainMismatch, InputError, ParseError
from .estimator import ImageStack
from .geometry import OUTSIDE, TriangulationMesh
from .scc import ADJUSTED, BASIC, SccBand, exceedance_map

TOOL = "imagescc"


# ---------------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    """Everything that determines a CLI run's outputs.

    ``threads`` is deliberately left out of :meth:`provenance` since results
    do not depend on it.
    """

    command: str
    images: list = field(default_factory=list)
    meshes: dict = field(default_factory=dict)
    degree: int = 5
    smoothness: int = 1
    eta_degree: int = 2
    eta_smoothness: int = 1
    rho: str | float = "auto"
    rho_eta: str | float = "auto"
    alphas: list = field(default_factory=lambda: [0.05])
    B: int = 1000
    seed: int = 0
    variant: str = BASIC
    kappa: str = "fve:0.95"
    out: str = "."
    extra: dict = field(default_factory=dict)
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.degree < 1 or self.eta_degree < 1:
            raise ConfigError("spline degree must be at least 1")
        if self.smoothness < 0 or self.eta_smoothness < 0:
            raise ConfigError("smoothness must be nonnegative")
        if self.smoothness >= self.degree or self.eta_smoothness >= self.eta_degree:
            raise ConfigError("smoothness must be below the degree")
        for name in ("rho", "rho_eta"):
            v = getattr(self, name)
            if isinstance(v, str) and v != "auto":
                raise ConfigError(f"{name} must be 'auto' or a number")
            if not isinstance(v, str) and (not math.isfinite(v) or v < 0):
                raise ConfigError(f"{name} must be nonnegative")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError("every alpha must lie in (0, 1)")
        if self.B < 1:
            raise ConfigError("B must be positive")
        if self.variant not in (BASIC, ADJUSTED):
            raise ConfigError(f"variant must be {BASIC!r} or {ADJUSTED!r}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        from .fpca import parse_kappa

        try:
            parse_kappa(self.kappa)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def provenance(self) -> dict:
        cfg = asdict(self)
        cfg.pop("threads")
        return {"tool": TOOL, "version": __version__, "seed": self.seed, "config": cfg}


def parse_rho(text: str):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"rho must be 'auto' or a number, got {text!r}") from None
    return v


# ---------------------------------------------------------------------- images


def _parse_float(text, path, line):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line=line, path=path) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", line=line, path=path)
    return v


def load_images_csv(path, mesh: TriangulationMesh | None = None, group: str | None = None) -> ImageStack:
    """Read a wide image CSV.

    With ``mesh`` given, pixels outside it are an error reporting how many
    there are; they are never dropped silently.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ParseError("file is not valid UTF-8", path=path) from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty file", path=path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[:2] != ["z1", "z2"]:
        raise ParseError("header must be z1,z2,y1,...,yn", line=1, path=path)
    n = len(header) - 2
    coords, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n + 2:
            raise ParseError(f"expected {n + 2} fields, got {len(row)}", line=lineno, path=path)
        nums = [_parse_float(c, path, lineno) for c in row]
        coords.append(nums[:2])
        vals.append(nums[2:])
    if not coords:
        raise ParseError("no pixel rows", path=path)
    stack = ImageStack(np.array(coords), np.array(vals).T, group)
    if mesh is not None:
        _check_inside(stack, mesh, path)
    return stack


def _check_inside(stack: ImageStack, mesh: TriangulationMesh, path):
    bad = int(np.sum(mesh.locate(stack.coords) == OUTSIDE))
    if bad:
        raise DomainMismatch(f"{path}: {bad} of {stack.N} pixels lie outside the mesh {mesh.name or ''}".rstrip())


def save_images_csv(path, coords, values) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n = values.shape[0]
    lines = ["z1,z2," + ",".join(f"y{i + 1}" for i in range(n))]
    for j, (z1, z2) in enumerate(np.asarray(coords, dtype=float).tolist()):
        lines.append(",".join(repr(v) for v in [z1, z2] + values[:, j].tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_images_raw(sidecar, mesh: TriangulationMesh | None = None, group: str | None = None) -> ImageStack:
    """Read a raw float64 stack described by a JSON sidecar."""
    sidecar = Path(sidecar)
    if not sidecar.exists():
        raise InputError(f"{sidecar}: no such file")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, path=sidecar) from None
    for key in ("format", "n", "N", "data", "coords"):
        if key not in meta:
            raise ParseError(f"sidecar lacks {key!r}", path=sidecar)
    if meta["format"] != "f8le":
        raise ParseError(f"unsupported format {meta['format']!r}", path=sidecar)
    n, N = int(meta["n"]), int(meta["N"])
    data = sidecar.parent / meta["data"]
    if not data.exists():
        raise InputError(f"{data}: no such file")
    raw = np.fromfile(data, dtype="<f8")
    if raw.size != n * N:
        raise ParseError(f"expected {n * N} values, found {raw.size}", path=data)
    coords = np.asarray(meta["coords"], dtype=float)
    if coords.shape != (N, 2):
        raise ParseError(f"coords must have shape ({N}, 2)", path=sidecar)
    stack = ImageStack(coords, raw.reshape(n, N), group)
    if mesh is not None:
        _check_inside(stack, mesh, sidecar)
    return stack


def save_images_raw(sidecar, coords, values) -> None:
    sidecar = Path(sidecar)
    values = np.atleast_2d(np.asarray(values, dtype="<f8"))
    data = sidecar.with_suffix(".f8")
    values.tofile(data)
    meta = {"format": "f8le", "n": values.shape[0], "N": values.shape[1], "data": data.name,
            "coords": np.asarray(coords, dtype=float).tolist()}
    write_json(sidecar, meta)


def load_images(path, mesh: TriangulationMesh | None = None, group: str | None = None) -> ImageStack:
    """Dispatch on extension: ``.json`` sidecar for raw stacks, otherwise CSV."""
    if Path(path).suffix.lower() == ".json":
        return load_images_raw(path, mesh, group)
    return load_images_csv(path, mesh, group)


# ---------------------------------------------------------------------- reports


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="\n")


def write_report(path, payload: dict, config: RunConfig) -> None:
    write_json(path, {"provenance": config.provenance(), **payload})


def _write_rows(path, header, columns) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_surface_csv(path, coords, values, name: str = "value") -> None:
    c = np.asarray(coords, dtype=float)
    _write_rows(path, ["z1", "z2", name], [c[:, 0], c[:, 1], np.asarray(values, dtype=float)])


def write_band_csv(path, band: SccBand) -> None:
    c = band.coords
    _write_rows(path, ["z1", "z2", "center", "lower", "upper"],
                [c[:, 0], c[:, 1], band.center, band.lower, band.upper])


def write_exceedance_csv(path, band: SccBand) -> None:
    c = band.coords
    _write_rows(path, ["z1", "z2", "label"], [c[:, 0], c[:, 1], exceedance_map(band).tolist()])


def band_summary(band: SccBand) -> dict:
    labels = exceedance_map(band)
    out = band.summary()
    out["n_pixels"] = int(len(labels))
    out["counts"] = {k: int(np.sum(labels == k)) for k in sorted(set(labels.tolist()))}
    out["excludes_zero"] = band.excludes_zero()
    return out
