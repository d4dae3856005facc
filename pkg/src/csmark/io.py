"""File formats: observation CSV, bin-weight grid CSV, traces, JSON, PGM images.

All numbers are written with ``repr`` so they round-trip exactly and never
depend on the locale.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .censoring import Observation
from .errors import DataValidationError, DomainError, InvalidArgumentError, ParseError
from .grid import WEIGHT_TOL, BinWeights, GridSpec


def _fmt(v) -> str:
    return repr(float(v))


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def write_observations(path, data: Sequence[Observation]):
    with _open_for_write(path) as fh:
        fh.write("t,z\n")
        for obs in data:
            fh.write(f"{_fmt(obs.t)},{_fmt(obs.z)}\n")


def read_observations(path) -> list[Observation]:
    lines = _read_lines(path)
    if not lines or lines[0].strip().replace(" ", "") != "t,z":
        raise ParseError(f"{path}: line 1: expected header 't,z'")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t, z = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        try:
            out.append(Observation(t, z))
        except DomainError as exc:
            raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
    return out


def write_latent_truth(path, x, y, t):
    with _open_for_write(path) as fh:
        fh.write("x,y,t\n")
        for a, b, c in zip(x, y, t):
            fh.write(f"{_fmt(a)},{_fmt(b)},{_fmt(c)}\n")


def write_weights(path, w: BinWeights, grid: GridSpec):
    """Bin weights as ``k_bins`` lines of ``j_bins`` values; line ``k`` is mark row ``k``."""
    table = w.as_grid(grid)
    with _open_for_write(path) as fh:
        for row in table:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_weight_table(path) -> np.ndarray:
    """Raw ``(k_bins, j_bins)`` table from a weight CSV."""
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"{path}: line {lineno}: expected {len(rows[0])} values, got {len(rows[-1])}")
        if not all(math.isfinite(v) and v >= 0 for v in rows[-1]):
            raise ParseError(f"{path}: line {lineno}: weights must be finite and nonnegative")
    if not rows:
        raise ParseError(f"{path}: no data")
    return np.array(rows)


def read_weights(path, m1: float = 1.0, m2: float = 2.0) -> tuple[BinWeights, GridSpec]:
    table = read_weight_table(path)
    total = table.sum()
    if abs(total - 1.0) > 1e-6:
        raise DataValidationError(f"{path}: weights sum to {total!r}, not 1")
    grid = GridSpec(m1, m2, table.shape[1], table.shape[0])
    # keep the values bit-exact when they already form a valid weight vector
    if abs(total - 1.0) <= WEIGHT_TOL:
        return BinWeights(table.ravel()), grid
    return BinWeights.normalized(table.ravel()), grid


def write_trace(path, values: Iterable[float]):
    with _open_for_write(path) as fh:
        for v in values:
            fh.write(_fmt(v) + "\n")


def read_trace(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if line.strip():
            try:
                out.append(float(line))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return np.array(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    with _open_for_write(path) as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def heatmap_pixels(table: np.ndarray, block: int = 8) -> tuple[np.ndarray, float]:
    """8-bit image of a ``(k_bins, j_bins)`` table, mark axis pointing up.

    Intensities scale linearly from 0 to the largest entry; returns the image
    and that maximum.
    """
    if block < 1:
        raise InvalidArgumentError("block size must be >= 1")
    vmax = float(table.max())
    scaled = table / vmax if vmax > 0 else np.zeros_like(table)
    pixels = np.rint(255 * scaled).astype(np.uint8)[::-1]
    return np.kron(pixels, np.ones((block, block), dtype=np.uint8)), vmax


def write_pgm(path, image: np.ndarray):
    height, width = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    # exactly one whitespace byte separates the header from the pixels
    pos += 1
    if tokens[0] != b"P5" or tokens[3] != b"255":
        raise ParseError(f"{path}: not an 8-bit P5 graymap")
    width, height = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos).reshape(height, width)
