"""Bayesian and classical Cramer-Rao bounds for the frequency estimate.

``beta`` is the expected curvature of the log-likelihood in the
frequency (the data's Fisher-information contribution); the Bayesian
bound adds the prior precision:

    bcrlb = 1 / (beta + precision),   crlb = 1 / beta.

All bound operations assume pilots orthogonal across transmit antennas,
and none of them takes the true frequency: the bounds do not depend on
it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import EstimatorWorkspace, build_workspace
from .pilots import PilotMatrix
from .types import ChannelPrior, CfoPrior, ConfigError

EIGHT_PI2 = 8.0 * np.pi**2


@dataclass(frozen=True)
class BoundResult:
    """beta plus the derived BCRLB/CRLB for one configuration."""

    beta: float
    bcrlb: float
    crlb: float
    pilot_kind: str = "custom"
    inputs: Optional[dict] = None


def _require_orthogonal(pilot: PilotMatrix) -> None:
    if not pilot.is_orthogonal:
        raise ConfigError("bound formulas require an orthogonal pilot (S^H S = (n rho / l_t) I)")


def beta_general(pilot: PilotMatrix, prior: ChannelPrior) -> float:
    """Fisher-information term for an arbitrary Gaussian channel prior.

    Sums, over all lags, the expected lag statistics weighted by lag
    squared: a single-row term against the prior mean plus a quadruple
    contraction of the shrinkage matrix with the channel second moment.
    """
    _require_orthogonal(pilot)
    if prior.dim % pilot.l_t != 0:
        raise ConfigError("prior dimension is not a multiple of the pilot's l_t")
    l_t = pilot.l_t
    l_r = prior.dim // l_t
    n = pilot.n
    s = pilot.entries
    if not prior.covariance.any():
        # Deterministic channel: infinite prior precision shrinks the
        # quadratic term away entirely and the estimate pins to the mean.
        ws = EstimatorWorkspace(
            np.zeros((prior.dim, prior.dim), dtype=complex),
            prior.mean.astype(complex),
            pilot,
            prior,
        )
    else:
        ws = build_workspace(pilot, prior)
    lag_terms = np.zeros(n - 1, dtype=complex)

    second_moment = prior.covariance + np.outer(prior.mean, prior.mean.conj())
    a4 = ws.error_cov.reshape(l_r, l_t, l_r, l_t)
    r4 = second_moment.reshape(l_r, l_t, l_r, l_t)
    # coupling[t1, t2, t1', t2'] contracts the receive indices away
    coupling = np.einsum("ixjy,jviu->xyuv", a4, r4)
    outer = np.einsum("kx,ku->kxu", s, s.conj())
    outer_conj = outer.conj()
    for k in range(1, n):
        lag_terms[k - 1] = np.einsum(
            "xyuv,kxu,kyv->", coupling, outer[k:], outer_conj[: n - k]
        )

    if not prior.is_zero_mean:
        mean_rows = s @ prior.mean.reshape(l_r, l_t).T  # (n, l_r)
        bias_rows = s @ ws.mean_term.reshape(l_r, l_t).T
        single = np.sum(bias_rows * mean_rows.conj(), axis=1)
        lag_terms += single[1:]

    k = np.arange(1, n)
    return float(EIGHT_PI2 * np.real(np.sum(k**2 * lag_terms)))


def beta_iid(pilot: PilotMatrix, sigma_h2: float, l_r: int) -> float:
    """Fisher-information term for a zero-mean white channel prior.

    Reduces to a weighted sum of squared pilot row products over all row
    separations.
    """
    _require_orthogonal(pilot)
    if sigma_h2 <= 0:
        raise ConfigError("sigma_h2 must be positive")
    n = pilot.n
    products = pilot.row_products()
    total = 0.0
    for k in range(1, n):
        total += k * k * float(np.sum(np.abs(np.diagonal(products, offset=-k)) ** 2))
    shrink = 1.0 / (1.0 / sigma_h2 + pilot.n * pilot.power / pilot.l_t)
    return float(EIGHT_PI2 * l_r * shrink * sigma_h2 * total)


def beta_periodic_closed(n: int, l_t: int, l_r: int, rho: float, sigma_h2: float) -> float:
    """Closed form of beta_iid for the periodic pilot layout."""
    if n % l_t != 0:
        raise ConfigError(f"n={n} must be a multiple of l_t={l_t}")
    q = n * rho * sigma_h2 / l_t
    if q == 0:
        return 0.0
    return float((2.0 / 3.0) * np.pi**2 * l_r * l_t * (q * q / (1.0 + q)) * (n * n - l_t * l_t))


def beta_td_closed(n: int, l_t: int, l_r: int, rho: float, sigma_h2: float) -> float:
    """Closed form of beta_iid for the TD pilot layout: periodic / l_t^2."""
    return beta_periodic_closed(n, l_t, l_r, rho, sigma_h2) / (l_t * l_t)


def make_bounds(
    beta: float,
    prior: CfoPrior,
    pilot_kind: str = "custom",
    inputs: Optional[dict] = None,
) -> BoundResult:
    """Package beta with its Bayesian and classical bounds.

    ``beta == 0`` is a legitimate degenerate query (an unobservable
    frequency): the classical bound is infinite and the Bayesian bound
    collapses to the prior variance.
    """
    if beta < 0:
        raise ConfigError(f"beta must be nonnegative, got {beta}")
    denom = beta + prior.precision
    bcrlb = np.inf if denom == 0 else 1.0 / denom
    crlb = np.inf if beta == 0 else 1.0 / beta
    return BoundResult(float(beta), float(bcrlb), float(crlb), pilot_kind, inputs)
