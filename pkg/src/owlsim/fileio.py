"""Line-oriented voxel file codec (run-length payload) and ASCII PLY export."""
from __future__ import annotations

from pathlib import Path

import numpy as np

RUNS_PER_LINE = 16


class FileFormatError(ValueError):
    """Malformed world/map file. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


def encode_runs(flat: np.ndarray) -> list[tuple[int, int]]:
    """Run-length encode a 1-D integer array as (value, count) pairs."""
    flat = np.asarray(flat)
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], change))
    counts = np.diff(np.concatenate((starts, [flat.size])))
    return [(int(flat[s]), int(c)) for s, c in zip(starts, counts)]


def decode_runs(runs: list[tuple[int, int]], size: int, dtype=np.uint8) -> np.ndarray:
    total = sum(c for _, c in runs)
    if total != size:
        raise FileFormatError(f"payload covers {total} cells, expected {size}")
    values = np.array([v for v, _ in runs], dtype=dtype)
    counts = np.array([c for _, c in runs], dtype=np.int64)
    return np.repeat(values, counts)


def grid_to_flat(grid: np.ndarray) -> np.ndarray:
    """x-fastest flattening of an (nx, ny, nz) array."""
    return np.ravel(grid, order="F")


def flat_to_grid(flat: np.ndarray, dims) -> np.ndarray:
    return np.reshape(flat, tuple(dims), order="F")


def format_payload(grid: np.ndarray) -> list[str]:
    runs = encode_runs(grid_to_flat(grid))
    lines = [f"RLE {len(runs)}"]
    for i in range(0, len(runs), RUNS_PER_LINE):
        chunk = runs[i : i + RUNS_PER_LINE]
        lines.append(" ".join(f"{v} {c}" for v, c in chunk))
    lines.append("END")
    return lines


def parse_payload(lines: list[str], start: int, dims, allowed: set[int]) -> np.ndarray:
    """Parse an ``RLE n`` block beginning at index ``start`` of ``lines``."""
    if start >= len(lines):
        raise FileFormatError("missing RLE payload", start + 1)
    head = lines[start].split()
    if len(head) != 2 or head[0] != "RLE":
        raise FileFormatError(f"expected 'RLE <n>', got {lines[start]!r}", start + 1)
    try:
        n_runs = int(head[1])
    except ValueError:
        raise FileFormatError(f"bad run count {head[1]!r}", start + 1) from None
    runs: list[tuple[int, int]] = []
    i = start + 1
    while len(runs) < n_runs:
        if i >= len(lines):
            raise FileFormatError(f"truncated payload: {len(runs)} of {n_runs} runs", i)
        if lines[i].strip() == "END":
            raise FileFormatError(f"truncated payload: {len(runs)} of {n_runs} runs", i + 1)
        toks = lines[i].split()
        if len(toks) % 2:
            raise FileFormatError("odd token count in payload line", i + 1)
        for v, c in zip(toks[0::2], toks[1::2]):
            try:
                value, count = int(v), int(c)
            except ValueError:
                raise FileFormatError(f"non-integer run {v!r} {c!r}", i + 1) from None
            if value not in allowed or count <= 0:
                raise FileFormatError(f"invalid run ({value}, {count})", i + 1)
            runs.append((value, count))
        i += 1
    if len(runs) != n_runs:
        raise FileFormatError(f"expected {n_runs} runs, found {len(runs)}", i)
    if i >= len(lines) or lines[i].strip() != "END":
        raise FileFormatError("missing END marker", i + 1)
    flat = decode_runs(runs, int(np.prod(dims)))
    return flat_to_grid(flat, dims)


def write_ply(path: str | Path, points: np.ndarray) -> None:
    """Write an (N, 3) array as an ASCII PLY vertex list."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        for x, y, z in points:
            fh.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


def read_ply(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    n = 0
    for i, line in enumerate(lines):
        if line.startswith("element vertex"):
            n = int(line.split()[2])
        if line == "end_header":
            body = lines[i + 1 : i + 1 + n]
            if not body:
                return np.zeros((0, 3))
            return np.array([[float(t) for t in row.split()] for row in body])
    raise FileFormatError("no end_header in PLY")
