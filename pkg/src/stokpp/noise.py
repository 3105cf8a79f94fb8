"""Driving Gaussian increments for the stochastic front dynamics.

Two flavors: scalar Wiener increments (perfectly correlated in space,
constant covariance kernel) and stationary Gaussian field increments with
Cov[dz(x_i), dz(x_j)] = dt * Gamma((i-j)*dx).  Field increments are sampled
exactly by circulant embedding on a padded ring, with a dense symmetric
factorization as fallback for small grids.

Streams are counter-based (Philox keyed by (seed, stream_id)) so ensemble
members are independent and reproducible regardless of scheduling order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import next_fast_len

from .errors import (
    ConfigurationError,
    KernelNotRepresentableError,
    MisuseError,
)
from .grid import GridSpec

ITO = "ito"
STRATONOVICH = "stratonovich"

CONSTANT = "constant"
SQUARED_EXPONENTIAL = "squared_exponential"
TABULATED = "tabulated"

_MASK64 = (1 << 64) - 1

# relative negative spectral mass above which an embedding is rejected
NEGATIVE_MASS_TOL = 1e-6
# dense factorization is only attempted up to this grid size
DENSE_FALLBACK_MAX_N = 512


@dataclass(frozen=True, eq=False)
class CovarianceKernel:
    """Spatial covariance Gamma of the noise; symmetric with Gamma(0) = sigma2."""

    kind: str
    sigma2: float = 1.0
    length: float = 1.0
    table: tuple | None = None  # (lags >= 0, values), linear interpolation

    def __post_init__(self):
        if self.kind not in (CONSTANT, SQUARED_EXPONENTIAL, TABULATED):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ConfigurationError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.kind == SQUARED_EXPONENTIAL and not self.length > 0:
            raise ConfigurationError(f"correlation length must be positive, got {self.length}")
        if self.kind == TABULATED:
            if self.table is None:
                raise ConfigurationError("tabulated kernel requires a table")
            lags, vals = self.table
            lags = np.asarray(lags, dtype=float)
            vals = np.asarray(vals, dtype=float)
            if lags.ndim != 1 or lags.shape != vals.shape or lags.size < 2:
                raise ConfigurationError("kernel table needs matching 1-D lag/value columns")
            if not (np.all(np.isfinite(lags)) and np.all(np.isfinite(vals))):
                raise ConfigurationError("kernel table contains non-finite entries")
            if lags[0] != 0.0 or np.any(np.diff(lags) <= 0):
                raise ConfigurationError("kernel table lags must start at 0 and increase")
            object.__setattr__(self, "table", (lags, vals))
            object.__setattr__(self, "sigma2", float(vals[0]))

    @classmethod
    def constant(cls, sigma2: float = 1.0) -> "CovarianceKernel":
        return cls(kind=CONSTANT, sigma2=sigma2)

    @classmethod
    def squared_exponential(cls, sigma2: float = 1.0, length: float = 1.0) -> "CovarianceKernel":
        return cls(kind=SQUARED_EXPONENTIAL, sigma2=sigma2, length=length)

    @classmethod
    def tabulated(cls, lags, values) -> "CovarianceKernel":
        return cls(kind=TABULATED, table=(np.asarray(lags, float), np.asarray(values, float)))

    @classmethod
    def from_csv(cls, path) -> "CovarianceKernel":
        """Load a tabulated kernel from a two-column (lag, value) CSV."""
        lags, vals = [], []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            for row in r:
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    lags.append(float(row[0]))
                    vals.append(float(row[1]))
                except (ValueError, IndexError):
                    if not lags:  # tolerate a header row
                        continue
                    raise ConfigurationError(f"bad kernel table row {row!r} in {path}")
        return cls.tabulated(lags, vals)


def kernel_eval(kernel: CovarianceKernel, x) -> float | np.ndarray:
    """Gamma(x); symmetric in x, zero beyond the table for tabulated kernels."""
    ax = np.abs(np.asarray(x, dtype=float))
    if kernel.kind == CONSTANT:
        out = np.full_like(ax, kernel.sigma2)
    elif kernel.kind == SQUARED_EXPONENTIAL:
        out = kernel.sigma2 * np.exp(-(ax * ax) / (2.0 * kernel.length**2))
    else:
        lags, vals = kernel.table
        out = np.interp(ax, lags, vals, right=0.0)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Noise regime descriptor: kernel, integral interpretation, RNG stream."""

    kernel: CovarianceKernel
    interpretation: str = ITO
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.interpretation not in (ITO, STRATONOVICH):
            raise ConfigurationError(
                f"interpretation must be {ITO!r} or {STRATONOVICH!r}, got {self.interpretation!r}"
            )

    def with_stream(self, stream_id: int) -> "NoiseModel":
        return replace(self, stream_id=stream_id)


def make_rng(model: NoiseModel) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream_id)."""
    key = np.array([model.seed & _MASK64, model.stream_id & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def scalar_increments(model: NoiseModel, dt: float, steps: int) -> np.ndarray:
    """Independent Wiener increments, each ~ Normal(0, sigma2 * dt)."""
    if model.kernel.kind != CONSTANT:
        raise MisuseError("scalar increments require a constant covariance kernel")
    if not dt > 0:
        raise MisuseError(f"dt must be positive, got {dt}")
    rng = make_rng(model)
    return rng.standard_normal(steps) * np.sqrt(model.kernel.sigma2 * dt)


def _ring_spectrum(kernel: CovarianceKernel, grid: GridSpec, dt: float):
    """Eigenvalues of the circulant embedding of dt*Gamma on a padded ring.

    The ring is grown until Gamma at the half-ring distance is negligible
    (<= 1e-12) or the ring reaches 8x the grid, whichever comes first.
    Returns (sqrt_eigenvalues, ring_size) or None when the embedding carries
    too much negative spectral mass to be trusted.
    """
    n, dx = grid.n, grid.dx
    m = 2 * n
    while abs(kernel_eval(kernel, 0.5 * m * dx)) > 1e-12 and m < 8 * n:
        m *= 2
    m = next_fast_len(min(m, 8 * n))
    ring_lag = np.minimum(np.arange(m), m - np.arange(m)) * dx
    row = dt * kernel_eval(kernel, ring_lag)
    lam = np.fft.fft(row).real
    neg = lam[lam < 0]
    total = np.abs(lam).sum()
    if total > 0 and neg.size and -neg.sum() / total > NEGATIVE_MASS_TOL:
        return None
    return np.sqrt(np.clip(lam, 0.0, None)), m


def _dense_root(kernel: CovarianceKernel, grid: GridSpec, dt: float) -> np.ndarray:
    """Symmetric square root of the (clamped) dense covariance matrix."""
    x = grid.dx * np.arange(grid.n)
    cov = dt * kernel_eval(kernel, x[:, None] - x[None, :])
    w, u = np.linalg.eigh(cov)
    neg = w[w < 0]
    total = np.abs(w).sum()
    if total > 0 and neg.size and -neg.sum() / total > NEGATIVE_MASS_TOL:
        raise KernelNotRepresentableError(
            "covariance is not positive semi-definite on this grid "
            f"(negative spectral mass fraction {-neg.sum() / total:.2e})"
        )
    return u * np.sqrt(np.clip(w, 0.0, None))


class FieldNoiseSampler:
    """Sequential sampler for spatially correlated field increments.

    Each call to sample() returns one n-vector with covariance
    dt * Gamma((i-j)*dx), consuming the stream deterministically.  Constant
    kernels reduce to a single shared scalar draw per step, which keeps
    scalar-Wiener and constant-kernel field runs on identical trajectories.
    """

    def __init__(self, model: NoiseModel, grid: GridSpec, dt: float):
        if not dt > 0:
            raise MisuseError(f"dt must be positive, got {dt}")
        self.model = model
        self.grid = grid
        self.dt = dt
        self.rng = make_rng(model)
        self._spare = None
        kernel = model.kernel
        if kernel.kind == CONSTANT or kernel.sigma2 == 0.0:
            self._mode = "constant"
            self._scale = np.sqrt(kernel.sigma2 * dt)
            return
        spec = _ring_spectrum(kernel, grid, dt)
        if spec is not None:
            self._mode = "fft"
            self._sqrt_lam, self._ring = spec
            self._norm = 1.0 / np.sqrt(self._ring)
            return
        if grid.n > DENSE_FALLBACK_MAX_N:
            raise KernelNotRepresentableError(
                "circulant embedding has too much negative spectral mass and the grid "
                f"(n={grid.n}) is too large for a dense factorization"
            )
        self._mode = "dense"
        self._root = _dense_root(kernel, grid, dt)

    def sample(self) -> np.ndarray:
        if self._mode == "constant":
            w = self.rng.standard_normal() * self._scale
            return np.full(self.grid.n, w)
        if self._mode == "dense":
            return self._root @ self.rng.standard_normal(self.grid.n)
        if self._spare is not None:
            out, self._spare = self._spare, None
            return out
        z = self.rng.standard_normal(self._ring) + 1j * self.rng.standard_normal(self._ring)
        y = np.fft.fft(self._sqrt_lam * z) * self._norm
        n = self.grid.n
        self._spare = np.ascontiguousarray(y.imag[:n])
        return np.ascontiguousarray(y.real[:n])

    def sample_block(self, k: int) -> np.ndarray:
        """k consecutive draws, identical to k sample() calls, as a (k, n) array."""
        return np.stack([self.sample() for _ in range(k)])


def field_increments(model: NoiseModel, grid: GridSpec, dt: float) -> np.ndarray:
    """One draw of the stationary Gaussian increment vector on `grid`."""
    return FieldNoiseSampler(model, grid, dt).sample()
