"""Spatially flat stochastic logistic dynamics and its stationary statistics.

The path scheme splits each step into the exact logistic flow of
v' = v(1 - v) followed by an exact geometric noise factor, so positivity
holds by construction and the Ito/Stratonovich distinction is a single
explicit drift term in the factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InstabilityError, MisuseError
from .noise import ITO, STRATONOVICH, NoiseModel, scalar_increments
from .stats import Estimate

OVERFLOW_LIMIT = 1e15


@dataclass
class SdePath:
    """One trajectory of the flat logistic dynamics, including the initial value."""

    dt: float
    values: np.ndarray
    interpretation: str
    epsilon: float

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.values.size - 1)


def logistic_map(u, rate_dt):
    """Exact flow of u' = r u(1-u) over one step, with rate_dt = r*dt.

    The form u / (u + (1-u) e^{-r dt}) fixes 0 and 1 exactly and preserves
    positivity and ordering.
    """
    return u / (u + (1.0 - u) * np.exp(-rate_dt))


def noise_factors(epsilon: float, increments: np.ndarray, sigma2: float,
                  interpretation: str, dt: float) -> np.ndarray:
    """Multiplicative noise factors exp(eps*dW - correction) for a step batch.

    Ito carries the mean-one correction eps^2 * Gamma(0) * dt / 2; the
    Stratonovich factor is the bare exponential (its Ito drift is exactly
    the conversion term).
    """
    if interpretation == ITO:
        return np.exp(epsilon * increments - 0.5 * epsilon**2 * sigma2 * dt)
    return np.exp(epsilon * increments)


def simulate_v(epsilon: float, interpretation: str, v0: float, dt: float,
               steps: int, model: NoiseModel) -> SdePath:
    """Simulate the flat logistic dynamics driven by `model`'s Wiener stream."""
    if not v0 > 0:
        raise MisuseError(f"v0 must be positive, got {v0}")
    if not dt > 0:
        raise MisuseError(f"dt must be positive, got {dt}")
    if interpretation not in (ITO, STRATONOVICH):
        raise MisuseError(f"unknown interpretation {interpretation!r}")
    dw = scalar_increments(model, dt, steps)
    factors = noise_factors(epsilon, dw, model.kernel.sigma2, interpretation, dt)
    e = np.exp(-dt)
    values = np.empty(steps + 1)
    v = float(v0)
    values[0] = v
    for k in range(steps):
        v = v / (v + (1.0 - v) * e)
        v = v * factors[k]
        if v > OVERFLOW_LIMIT:
            raise InstabilityError(f"logistic path overflow at step {k + 1}", step=k + 1)
        values[k + 1] = v
    return SdePath(dt=dt, values=values, interpretation=interpretation, epsilon=epsilon)


def simulate_v_midpoint(epsilon: float, v0: float, dt: float, steps: int,
                        model: NoiseModel) -> SdePath:
    """Heun predictor-corrector reference scheme (Stratonovich limit).

    Independent route used to cross-check the geometric-factor scheme's
    Stratonovich interpretation on short horizons.
    """
    dw = scalar_increments(model, dt, steps)
    values = np.empty(steps + 1)
    v = float(v0)
    values[0] = v
    for k in range(steps):
        a0 = v * (1.0 - v)
        b0 = epsilon * v
        pred = v + a0 * dt + b0 * dw[k]
        a1 = pred * (1.0 - pred)
        b1 = epsilon * pred
        v = v + 0.5 * (a0 + a1) * dt + 0.5 * (b0 + b1) * dw[k]
        if v <= 0:
            v = 1e-300  # Heun is not positivity-preserving; floor for the reference only
        values[k + 1] = v
    return SdePath(dt=dt, values=values, interpretation=STRATONOVICH, epsilon=epsilon)


def stationary_mean(epsilon: float) -> float | None:
    """Long-run mean of the Ito flat logistic dynamics; None when degenerate."""
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    if epsilon >= np.sqrt(2.0):
        return None
    return 1.0 - 0.5 * epsilon**2


def stationary_laplace(lam: float, epsilon: float) -> float:
    """Laplace transform E[e^{lam v}] of the Ito stationary law.

    Closed form (1 - eps^2 lam / 2)^{1 - 2/eps^2} for 0 < eps < sqrt(2);
    the eps -> 0 limit e^{lam} is returned at eps = 0.
    """
    if epsilon < 0 or epsilon >= np.sqrt(2.0):
        raise DomainError(f"stationary law requires 0 <= epsilon < sqrt(2), got {epsilon}")
    if epsilon == 0.0:
        return float(np.exp(lam))
    if lam >= 2.0 / epsilon**2:
        raise DomainError(
            f"Laplace transform diverges for lambda >= 2/eps^2 = {2.0 / epsilon**2:g}"
        )
    return float((1.0 - 0.5 * epsilon**2 * lam) ** (1.0 - 2.0 / epsilon**2))


def estimate_laplace(paths, lam: float, burn_in: float) -> Estimate:
    """Time-and-ensemble average of e^{lam v(t)} over t > burn_in.

    The half-width is 1.96 standard errors across the per-path time means
    (0 for a single path).
    """
    paths = list(paths)
    if not paths:
        raise MisuseError("estimate_laplace needs at least one path")
    per_path = []
    for p in paths:
        if burn_in >= p.duration:
            raise MisuseError(
                f"burn_in {burn_in:g} is not shorter than the path duration {p.duration:g}"
            )
        keep = p.times > burn_in
        per_path.append(np.exp(lam * p.values[keep]).mean())
    per_path = np.asarray(per_path)
    if per_path.size == 1:
        return Estimate(float(per_path[0]), 0.0)
    half = 1.96 * per_path.std(ddof=1) / np.sqrt(per_path.size)
    return Estimate(float(per_path.mean()), float(half))
