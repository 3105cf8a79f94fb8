"""Uniform 1-D grids, profiles on them, and moving-frame bookkeeping.

The frame offset lets a long-running traveling front stay inside a finite
window: node i of a grid sits at physical coordinate x0 + frame_offset + i*dx,
and shifting the frame moves the window right while preserving physical
values in the overlap.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError, MisuseError, NumericError

_HEADER = struct.Struct("<ddqdd")  # x0, dx, n, frame_offset, time


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid window. Node i lies at x0 + frame_offset + i*dx."""

    x0: float
    dx: float
    n: int
    frame_offset: float = 0.0

    def __post_init__(self):
        if not self.dx > 0:
            raise ConfigurationError(f"dx must be positive, got {self.dx}")
        if self.n < 3:
            raise ConfigurationError(f"need at least 3 nodes, got {self.n}")

    def coords(self) -> np.ndarray:
        return self.x0 + self.frame_offset + self.dx * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.dx * (self.n - 1)

    def shifted(self, cells: int) -> "GridSpec":
        return replace(self, frame_offset=self.frame_offset + cells * self.dx)


@dataclass
class Field:
    """Real-valued profile on a grid at one instant."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n,):
            raise ConfigurationError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NumericError("field contains non-finite values")

    @property
    def x(self) -> np.ndarray:
        return self.grid.coords()

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.time)


def make_initial_condition(params, grid: GridSpec) -> Field:
    """Front-like initial profile: 1 on the left, (1/2)e^{-N x} on the right.

    The two branches meet continuously at x = -log(2)/N, and the profile
    passes through 1/2 at x = 0.  `params` may be anything with an `N`
    attribute, or a bare decay rate.
    """
    N = float(getattr(params, "N", params))
    if not N > 0:
        raise ConfigurationError(f"decay rate N must be positive, got {N}")
    junction = -np.log(2.0) / N
    x = grid.coords()
    if not (x[0] <= junction and x[-1] >= 0.0):
        raise ConfigurationError(
            f"grid [{x[0]:g}, {x[-1]:g}] does not contain the profile junction at {junction:g}"
        )
    values = np.where(x < junction, 1.0, 0.5 * np.exp(-N * x))
    return Field(grid, values, time=0.0)


def fit_tail_rate(values: np.ndarray, dx: float, fraction: float = 0.1,
                  fallback: float = 0.0) -> float:
    """Exponential decay rate of the rightmost `fraction` of nodes.

    Least-squares slope of -log(values); returns `fallback` when the tail
    is not strictly positive or has fewer than two usable nodes.  The rate
    is clamped at 0 so continuation never grows to the right.
    """
    m = max(2, int(round(len(values) * fraction)))
    tail = values[-m:]
    if np.any(tail <= 0) or not np.all(np.isfinite(tail)):
        return max(fallback, 0.0)
    y = np.log(tail)
    xs = dx * np.arange(m)
    slope = np.polyfit(xs, y, 1)[0]
    return max(-slope, 0.0)


def shift_frame(field: Field, cells: int, left_fill: float,
                right_fill_rate: float) -> Field:
    """Move the window right by `cells` nodes.

    Physical values in the overlap are preserved bitwise; the vacated right
    end is filled by exponential continuation whose rate is fitted from the
    rightmost decade of nodes (falling back to `right_fill_rate`).
    `left_fill` documents the off-window value on the left (the saturated
    state); it only fills nodes in the degenerate no-overlap case.
    """
    if cells < 0:
        raise MisuseError("shift_frame only moves the window right (cells >= 0)")
    if cells == 0:
        return field.copy()
    n = field.grid.n
    old = field.values
    new = np.empty(n)
    if cells >= n:
        new[:] = left_fill
    else:
        new[: n - cells] = old[cells:]
        rate = fit_tail_rate(old, field.grid.dx, fallback=right_fill_rate)
        anchor = old[-1]
        if anchor < 0:
            raise NumericError("cannot continue a negative right boundary value")
        k = np.arange(1, cells + 1)
        new[n - cells:] = anchor * np.exp(-rate * field.grid.dx * k)
    if np.any(new < 0):
        raise NumericError("frame shift fill produced negative values")
    return Field(field.grid.shifted(cells), new, field.time)


def log_gradient(field: Field) -> Field:
    """Negative logarithmic derivative -(log u)_x.

    Central quotient-rule differences -(u_{i+1} - u_{i-1}) / (2 dx u_i) in
    the interior, one-sided at the boundaries.  Scaling the profile by a
    positive constant leaves the result unchanged.
    """
    u = field.values
    if np.any(u <= 0):
        raise DomainError("log_gradient requires a strictly positive profile")
    dx = field.grid.dx
    theta = np.empty_like(u)
    theta[1:-1] = -(u[2:] - u[:-2]) / (2.0 * dx * u[1:-1])
    theta[0] = -(u[1] - u[0]) / (dx * u[0])
    theta[-1] = -(u[-1] - u[-2]) / (dx * u[-1])
    return Field(field.grid, theta, field.time)


# ---------------------------------------------------------------------------
# serialization

def field_to_csv(field: Field, path) -> None:
    """Two-column CSV (x, value) with a header row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for xi, vi in zip(field.x, field.values):
            w.writerow([f"{xi:.17g}", f"{vi:.17g}"])


def field_from_csv(path, time: float = 0.0) -> Field:
    """Read a two-column (x, value) CSV written by field_to_csv."""
    xs, vs = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["x", "value"]:
            raise ConfigurationError(f"unexpected CSV header {header!r} in {path}")
        for row in r:
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    xs = np.asarray(xs)
    if len(xs) < 3:
        raise ConfigurationError("field CSV needs at least 3 rows")
    dx = float(xs[1] - xs[0])
    grid = GridSpec(x0=float(xs[0]), dx=dx, n=len(xs))
    return Field(grid, np.asarray(vs), time)


def write_field_binary(field: Field, path) -> None:
    """Binary snapshot: little-endian header (x0, dx, n, frame_offset, time) + n float64 values."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.x0, g.dx, g.n, g.frame_offset, field.time))
        fh.write(field.values.astype("<f8").tobytes())


def read_field_binary(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ConfigurationError(f"truncated field snapshot {path}")
        x0, dx, n, frame_offset, time = _HEADER.unpack(raw)
        values = np.frombuffer(fh.read(8 * n), dtype="<f8")
        if values.size != n:
            raise ConfigurationError(f"truncated field snapshot {path}")
    grid = GridSpec(x0=x0, dx=dx, n=n, frame_offset=frame_offset)
    return Field(grid, values.astype(np.float64), time)
