"""Closed-form front speed and tail-decay predictions for the three noise regimes.

All three regimes share the same two-branch structure: a pulled branch with
minimal speed sqrt(2*kappa*v_eff) for steep initial decay, and a pushed
branch v_eff/N + kappa*N/2 for shallow decay, switching at
N = sqrt(2*v_eff/kappa).  Scalar Ito noise sets v_eff = 1 - eps^2/2
(degenerate at eps >= sqrt(2)); Stratonovich scalar noise and
integrable-covariance Ito noise leave the noiseless formulas untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .noise import CovarianceKernel, kernel_eval

ITO_SCALAR = "ito_scalar"
STRATONOVICH_SCALAR = "stratonovich_scalar"
ITO_CORRELATED = "ito_correlated"

REGIMES = (ITO_SCALAR, STRATONOVICH_SCALAR, ITO_CORRELATED)


@dataclass(frozen=True)
class TheoryPrediction:
    """Predicted asymptotic speed and tail decay; None values mean a degenerate front."""

    regime: str
    speed: float | None
    decay: float | None
    v_bar: float | None
    threshold: float

    @property
    def degenerate(self) -> bool:
        return self.speed is None

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "speed": self.speed,
            "decay": self.decay,
            "v_bar": self.v_bar,
            "threshold": self.threshold,
            "degenerate": self.degenerate,
        }


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ConfigurationError(f"{name} must be positive, got {value}")


def _two_branch(kappa: float, N: float, v_eff: float) -> tuple[float, float, float]:
    """(speed, decay, threshold) of the shared two-branch formula.

    The tail decay saturates at the threshold, decay = min(N, sqrt(2*v_eff/kappa)),
    and the speed is the dispersion value at that decay,
    speed = v_eff/decay + kappa*decay/2.  This is branch-free, continuous at
    the threshold, and reduces to sqrt(2*kappa*v_eff) on the steep branch.
    """
    threshold = np.sqrt(2.0 * v_eff / kappa)
    decay = min(N, threshold)
    speed = v_eff / decay + 0.5 * kappa * decay
    return float(speed), float(decay), float(threshold)


def ito_scalar_prediction(kappa: float, epsilon: float, N: float) -> TheoryPrediction:
    """Scalar Wiener noise, Ito integral: the front slows down and dies at eps >= sqrt(2)."""
    _check_positive(kappa=kappa, N=N)
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be nonnegative, got {epsilon}")
    v_bar = 1.0 - 0.5 * epsilon**2
    if v_bar <= 0:
        return TheoryPrediction(ITO_SCALAR, None, None, None, threshold=0.0)
    speed, decay, threshold = _two_branch(kappa, N, v_bar)
    return TheoryPrediction(ITO_SCALAR, speed, decay, v_bar, threshold)


def stratonovich_scalar_prediction(kappa: float, N: float) -> TheoryPrediction:
    """Scalar Wiener noise, Stratonovich integral: noise amplitude drops out."""
    _check_positive(kappa=kappa, N=N)
    speed, decay, threshold = _two_branch(kappa, N, 1.0)
    return TheoryPrediction(STRATONOVICH_SCALAR, speed, decay, 1.0, threshold)


def correlated_prediction(kappa: float, N: float) -> TheoryPrediction:
    """Integrable spatial covariance, Ito integral: noise amplitude drops out."""
    _check_positive(kappa=kappa, N=N)
    speed, decay, threshold = _two_branch(kappa, N, 1.0)
    return TheoryPrediction(ITO_CORRELATED, speed, decay, 1.0, threshold)


def prediction_for(regime: str, kappa: float, epsilon: float, N: float) -> TheoryPrediction:
    if regime == ITO_SCALAR:
        return ito_scalar_prediction(kappa, epsilon, N)
    if regime == STRATONOVICH_SCALAR:
        return stratonovich_scalar_prediction(kappa, N)
    if regime == ITO_CORRELATED:
        return correlated_prediction(kappa, N)
    raise ConfigurationError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def dispersion_roots(kappa: float, gamma: float) -> tuple[float, float] | None:
    """Real roots of mu^2 - (2 gamma / kappa) mu + 2/kappa = 0, or None.

    Real roots exist exactly for gamma >= sqrt(2*kappa); at equality the
    double root equals the minimal-speed decay sqrt(2/kappa).
    """
    _check_positive(kappa=kappa)
    disc = gamma**2 - 2.0 * kappa
    if disc < 0:
        if gamma > 0 and disc > -1e-12 * gamma**2:
            disc = 0.0  # boundary case gamma = sqrt(2*kappa) up to rounding
        else:
            return None
    root = np.sqrt(disc)
    return (float((gamma - root) / kappa), float((gamma + root) / kappa))


def w_covariance_prediction(kernel: CovarianceKernel, kappa: float, epsilon: float,
                            mu: float, lag: float) -> float:
    """Predicted tail second moment E[w(x) w(x+lag)] = mu^2 + (eps^2/kappa) Gamma(lag)."""
    _check_positive(kappa=kappa)
    return float(mu**2 + (epsilon**2 / kappa) * kernel_eval(kernel, lag))
