"""Sampling of channels, frequency offsets, and received frames.

Complex Gaussian convention: CN(0, v) has real and imaginary parts each
N(0, v/2). Every sampler takes an explicit seed (or Generator) so
Monte-Carlo runs are reproducible draw by draw.
"""

from __future__ import annotations

import numpy as np

from .pilots import PilotMatrix
from .types import (
    ChannelPrior,
    ChannelRealization,
    CfoPrior,
    ConfigError,
    Frame,
    MimoConfig,
    NumericalError,
    SeedLike,
    as_rng,
)


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channel(prior: ChannelPrior, seed: SeedLike) -> ChannelRealization:
    """Draw h = mean + L z with L L^H = covariance and z ~ CN(0, I)."""
    rng = as_rng(seed)
    z = _complex_normal(rng, prior.dim)
    if prior.is_iid:
        return ChannelRealization(prior.mean + np.sqrt(prior.iid_variance) * z)
    try:
        eigvals, eigvecs = np.linalg.eigh(prior.covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance factorization failed: {exc}") from exc
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return ChannelRealization(prior.mean + factor @ z)


def sample_cfo(prior: CfoPrior, seed: SeedLike) -> float:
    """Draw a frequency offset from N(mean, 1/precision)."""
    if prior.precision == 0:
        raise ConfigError("flat CFO prior (precision 0) is not sampleable")
    rng = as_rng(seed)
    return prior.mean + np.sqrt(1.0 / prior.precision) * rng.standard_normal()


def synthesize_frame(
    pilot: PilotMatrix,
    h: ChannelRealization,
    f_delta: float,
    noise_scale: float = 1.0,
    seed: SeedLike = 0,
) -> Frame:
    """Generate y[k, r] = exp(j 2 pi f_delta (k-1)) * sum_t s[t,k] h[r,t] + noise.

    The rotation is applied as an elementwise phase ramp; noise is i.i.d.
    CN(0, noise_scale^2) per sample.
    """
    d = h.coefficients.size
    if d % pilot.l_t != 0:
        raise ConfigError(
            f"channel length {d} is not a multiple of the pilot's l_t={pilot.l_t}"
        )
    l_r = d // pilot.l_t
    cfg = MimoConfig(pilot.l_t, l_r, pilot.n)
    ramp = np.exp(2j * np.pi * f_delta * np.arange(pilot.n))
    clean = ramp[:, None] * (pilot.entries @ h.as_matrix(l_r, pilot.l_t))
    if noise_scale != 0:
        rng = as_rng(seed)
        clean = clean + noise_scale * _complex_normal(rng, clean.shape)
    return Frame(clean, cfg)
