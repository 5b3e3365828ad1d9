"""Shared fixtures-in-spirit: small builders used across test modules."""

import numpy as np

from mapcfo import ChannelPrior, MimoConfig


def correlated_prior(d: int = 4, coherence: complex = 0.5 * np.exp(0.3j)) -> ChannelPrior:
    """Toeplitz-correlated Hermitian PSD prior with a non-zero mean."""
    idx = np.subtract.outer(np.arange(d), np.arange(d))
    cov = (np.abs(coherence) ** np.abs(idx)) * np.exp(1j * np.angle(coherence) * idx)
    rng = np.random.default_rng(d)
    mean = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) * 0.3
    return ChannelPrior(mean, cov)


def mimo_2x2_n16() -> MimoConfig:
    return MimoConfig(2, 2, 16)
