"""Wave markers and front statistics.

Pathwise markers invert a monotone profile at a level; expectation markers
invert an isotonically regularized ensemble mean.  Speed comes from a
least-squares fit of marker position against time over a late window, decay
from the log-slope of the tail ahead of the marker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDomainError, LevelNotAttainedError, MisuseError
from .grid import Field
from .stats import Estimate, linear_fit, pava_nonincreasing
from .theory import TheoryPrediction

logger = logging.getLogger(__name__)

PATHWISE = "pathwise"
EXPECTATION = "expectation"

MONOTONE_TOL = 1e-8


@dataclass
class MarkerTrack:
    """Positions of one level over time, in physical (frame-corrected) coordinates."""

    a: float
    times: np.ndarray
    positions: np.ndarray
    kind: str = PATHWISE
    stream_id: int | None = None

    def trimmed(self) -> "MarkerTrack":
        """Drop entries where the level was not attained."""
        keep = np.isfinite(self.positions)
        return MarkerTrack(self.a, self.times[keep], self.positions[keep],
                           self.kind, self.stream_id)


@dataclass
class FrontReport:
    """Measured speed and tail decay with confidence half-widths, next to theory."""

    speed: float
    speed_half_width: float
    decay: float
    decay_half_width: float
    window: tuple[float, float]
    theory: TheoryPrediction

    def as_dict(self) -> dict:
        return {
            "speed": self.speed,
            "speed_ci": self.speed_half_width,
            "decay": self.decay,
            "decay_ci": self.decay_half_width,
            "window": list(self.window),
            "theory_speed": self.theory.speed,
            "theory_decay": self.theory.decay,
            "regime": self.theory.regime,
        }


def _invert_monotone(x: np.ndarray, v: np.ndarray, a: float, dx: float) -> float:
    """Linear-interpolation inverse of a non-increasing profile at level a."""
    if not (v.min() < a < v.max()):
        raise LevelNotAttainedError(
            f"level {a:g} outside profile range [{v.min():g}, {v.max():g}]"
        )
    j = int(np.searchsorted(-v, -a, side="left"))
    j = min(max(j, 1), v.size - 1)
    lo, hi = v[j - 1], v[j]
    if lo == hi:
        return float(x[j])
    return float(x[j - 1] + (lo - a) / (lo - hi) * dx)


def a_marker(field: Field, a: float) -> float:
    """Physical coordinate where the (monotone) profile crosses level a.

    Profiles violating monotonicity beyond tolerance are regularized by a
    running minimum from the left before inversion (flagged in the log).
    """
    v = field.values
    if np.any(np.diff(v) > MONOTONE_TOL):
        logger.warning(
            "profile at t=%g is non-monotone beyond tolerance; applying running-minimum "
            "regularization before marker inversion", field.time,
        )
        v = np.minimum.accumulate(v)
    return _invert_monotone(field.x, v, a, field.grid.dx)


def expectation_marker(mean_field: Field, a: float) -> float:
    """Marker of an ensemble-mean profile, after isotonic (non-increasing) regression.

    A level above the regularized maximum signals that the requested level
    exceeds the stationary plateau.
    """
    reg = pava_nonincreasing(mean_field.values)
    return _invert_monotone(mean_field.x, reg, a, mean_field.grid.dx)


def speed_estimate(track: MarkerTrack, window_fraction: tuple[float, float] = (0.4, 0.9)
                   ) -> Estimate:
    """Least-squares slope of position vs time inside the fractional window."""
    tr = track.trimmed()
    if tr.times.size == 0:
        raise MisuseError("marker track is empty")
    lo, hi = window_fraction
    T = tr.times[-1]
    keep = (tr.times >= lo * T) & (tr.times <= hi * T)
    if keep.sum() < 10:
        raise MisuseError(
            f"speed window [{lo * T:g}, {hi * T:g}] holds {int(keep.sum())} samples; need 10"
        )
    slope, _, half = linear_fit(tr.times[keep], tr.positions[keep])
    return Estimate(slope, half)


def decay_estimate(field: Field, marker: float,
                   offset_range: tuple[float, float] = (5.0, 15.0)) -> Estimate:
    """Exponential decay rate of the tail: slope of -log u over [marker+lo, marker+hi]."""
    lo, hi = offset_range
    x = field.x
    keep = (x >= marker + lo) & (x <= marker + hi)
    if keep.sum() < 3:
        raise InsufficientDomainError(
            f"tail window [{marker + lo:g}, {marker + hi:g}] has {int(keep.sum())} nodes"
        )
    vals = field.values[keep]
    if np.any(vals <= 0):
        raise DomainError("tail window contains nonpositive values")
    slope, _, half = linear_fit(x[keep], -np.log(vals))
    return Estimate(slope, half)


def instantaneous_speed(u_field: Field, theta_field: Field, v: float, a: float,
                        kappa: float) -> float:
    """Marker velocity from the local identity.

    Evaluates -(kappa/2) (log theta)_x + kappa theta / 2 + v (1 - a) / theta
    at the level-a marker, interpolating theta and its log-slope between the
    bracketing nodes.
    """
    g = a_marker(u_field, a)
    x = theta_field.x
    dx = theta_field.grid.dx
    th = theta_field.values
    j = int(np.clip(np.searchsorted(x, g), 2, x.size - 2))
    window = th[j - 2 : j + 2]  # nodes j-2 .. j+1 straddling the marker
    if np.any(window <= 0):
        raise DomainError("decay profile is nonpositive at the marker (degenerate front)")
    theta_g = float(np.interp(g, x, th))
    logth = np.log(window)
    # centered log-slope at nodes j-1 and j, interpolated to the marker
    s_left = (logth[2] - logth[0]) / (2.0 * dx)
    s_right = (logth[3] - logth[1]) / (2.0 * dx)
    w = np.clip((g - x[j - 1]) / dx, 0.0, 1.0)
    dlog_theta = (1.0 - w) * s_left + w * s_right
    return float(-0.5 * kappa * dlog_theta + 0.5 * kappa * theta_g + v * (1.0 - a) / theta_g)
