"""Core domain types: antenna geometry, Gaussian priors, channel draws, frames.

All types are immutable after construction and validate their own
invariants, so downstream numerics never have to re-check shapes or
Hermitian symmetry. Frequencies are normalized (cycles per symbol),
noise is unit variance per complex sample unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

SeedLike = Union[int, np.integer, list, tuple, np.random.Generator]

HERMITIAN_TOL = 1e-12
PSD_EIG_FLOOR = -1e-10


class ConfigError(ValueError):
    """Inconsistent dimensions, invalid parameters, or bad flag combinations."""


class NumericalError(RuntimeError):
    """A numerical operation could not produce a valid result."""


class NoFrequencyInformation(NumericalError):
    """The frame carries no usable frequency information (no correlation lags)."""


def as_rng(seed: SeedLike) -> np.random.Generator:
    """Return a Generator; ints / int sequences are used as the seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MimoConfig:
    """Antenna counts and pilot length.

    Attributes
    ----------
    l_t : int
        Transmit-antenna count.
    l_r : int
        Receive-antenna count.
    n : int
        Pilot length in symbols.
    """

    l_t: int
    l_r: int
    n: int

    def __post_init__(self):
        for name in ("l_t", "l_r", "n"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")

    @property
    def dim(self) -> int:
        """Length of the stacked channel vector (l_r * l_t)."""
        return self.l_r * self.l_t


@dataclass(frozen=True)
class ChannelPrior:
    """Gaussian prior on the stacked channel vector.

    The channel coefficients h[r, t] are stacked receive-antenna-major:
    ``h = [h[1,1], ..., h[1,l_t], h[2,1], ...]`` so covariance blocks for
    one receive antenna are contiguous.

    Attributes
    ----------
    mean : ndarray
        Length l_r*l_t complex mean vector.
    covariance : ndarray
        (l_r*l_t) x (l_r*l_t) Hermitian PSD covariance.
    iid_variance : float, optional
        Set when the prior is zero-mean white: covariance == iid_variance * I.
    """

    mean: np.ndarray
    covariance: np.ndarray
    iid_variance: Optional[float] = None

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=complex).ravel())
        cov = _readonly(np.asarray(self.covariance, dtype=complex))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        d = mean.size
        if cov.shape != (d, d):
            raise ConfigError(f"covariance shape {cov.shape} does not match mean length {d}")
        scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
        if np.abs(cov - cov.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
            raise ConfigError("covariance is not Hermitian")
        eigs = np.linalg.eigvalsh(cov)
        if eigs.min(initial=0.0) < PSD_EIG_FLOOR * scale:
            raise ConfigError(f"covariance is not PSD (min eigenvalue {eigs.min():g})")
        if self.iid_variance is not None:
            v = float(self.iid_variance)
            if np.any(mean != 0) or not np.array_equal(cov, v * np.eye(d)):
                raise ConfigError("iid_variance requires zero mean and covariance == v*I")
            object.__setattr__(self, "iid_variance", v)

    @classmethod
    def iid(cls, sigma_h2: float, l_r: int, l_t: int) -> "ChannelPrior":
        """Zero-mean white prior with per-coefficient variance sigma_h2."""
        d = l_r * l_t
        return cls(np.zeros(d, dtype=complex), sigma_h2 * np.eye(d), iid_variance=float(sigma_h2))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_zero_mean(self) -> bool:
        return bool(np.all(self.mean == 0))

    @property
    def is_iid(self) -> bool:
        return self.iid_variance is not None


@dataclass(frozen=True)
class CfoPrior:
    """Gaussian prior on the normalized frequency offset.

    ``precision == 0`` encodes the flat prior: estimation then reduces to
    maximum likelihood, with ``mean`` kept only as an acquisition center
    (derotation / phase-unwrap seed).
    """

    mean: float
    precision: float

    def __post_init__(self):
        mean = float(self.mean)
        precision = float(self.precision)
        if not np.isfinite(mean):
            raise ConfigError("prior mean must be finite")
        if precision < 0 or not np.isfinite(precision):
            raise ConfigError("precision must be finite and >= 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", precision)

    @classmethod
    def from_variance(cls, mean: float, variance: float) -> "CfoPrior":
        """Build from a variance; ``variance=inf`` gives the flat prior."""
        if variance <= 0:
            raise ConfigError(f"variance must be positive (got {variance!r}); use inf for flat")
        return cls(mean, 0.0 if np.isinf(variance) else 1.0 / variance)

    @classmethod
    def flat(cls, mean: float = 0.0) -> "CfoPrior":
        return cls(mean, 0.0)

    @property
    def variance(self) -> float:
        return np.inf if self.precision == 0 else 1.0 / self.precision

    @property
    def is_flat(self) -> bool:
        return self.precision == 0


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the stacked channel vector (receive-antenna-major)."""

    coefficients: np.ndarray

    def __post_init__(self):
        coeff = _readonly(np.asarray(self.coefficients, dtype=complex).ravel())
        if not np.all(np.isfinite(coeff)):
            raise ConfigError("channel coefficients must be finite")
        object.__setattr__(self, "coefficients", coeff)

    def as_matrix(self, l_r: int, l_t: int) -> np.ndarray:
        """Return the l_t x l_r matrix H with H[t, r] = h[r, t]."""
        if self.coefficients.size != l_r * l_t:
            raise ConfigError("channel vector length does not match l_r*l_t")
        return self.coefficients.reshape(l_r, l_t).T


@dataclass(frozen=True)
class Frame:
    """Received n x l_r sample block; column r holds receive antenna r."""

    samples: np.ndarray
    config: MimoConfig

    def __post_init__(self):
        samples = _readonly(np.asarray(self.samples, dtype=complex))
        object.__setattr__(self, "samples", samples)
        if samples.shape != (self.config.n, self.config.l_r):
            raise ConfigError(
                f"frame shape {samples.shape} does not match (n, l_r)="
                f"({self.config.n}, {self.config.l_r})"
            )
