"""Separable MAP estimation of frequency offset and MIMO channel.

The joint posterior over (frequency, channel) separates: maximize a
scalar objective ``g`` over the frequency alone, then plug the argmax
into the linear MMSE channel estimate. ``g``'s stationarity condition
depends on the frame only through lagged statistics ``r_k e^{-j theta_k}``,
so the frequency estimate reduces to a phase unwrap followed by a
weighted average of per-lag phase slopes with the prior mean.

Sign convention: the stored phase ``theta_k`` is the *negative* argument
of the complex lag statistic, so a clean rotation by f gives
``theta_k = 2 pi f k`` and slopes read directly as frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .pilots import PilotMatrix
from .types import (
    ChannelPrior,
    CfoPrior,
    ConfigError,
    Frame,
    NoFrequencyInformation,
    NumericalError,
)

# Lags whose statistic magnitude falls below this fraction of the maximum
# carry no structural signal (exact zeros for periodic/TD pilots) and are
# dropped rather than contributing noise-only phases.
LAG_DROP_REL = 1e-12

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class EstimatorWorkspace:
    """Frame-independent quantities shared by every estimator operation.

    ``error_cov`` is the MMSE channel-error covariance (the regularized
    inverse Gram); ``mean_term`` is the data-independent component of the
    channel estimate contributed by a non-zero prior mean.
    """

    error_cov: np.ndarray
    mean_term: np.ndarray
    pilot: PilotMatrix
    prior: Optional[ChannelPrior]
    ml_channel: bool = False

    @property
    def dim(self) -> int:
        return self.error_cov.shape[0]

    @property
    def l_r(self) -> int:
        return self.dim // self.pilot.l_t


@dataclass(frozen=True)
class CorrelationSequence:
    """Retained lag statistics: magnitudes r_k and phases theta_k per lag.

    ``unwrapped`` holds theta_k + 2 pi m_k once ``phase_unwrap`` has run.
    """

    lags: np.ndarray
    magnitudes: np.ndarray
    phases: np.ndarray
    unwrapped: Optional[np.ndarray] = None

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=int)
        mags = np.asarray(self.magnitudes, dtype=float)
        phases = np.asarray(self.phases, dtype=float)
        if not (lags.shape == mags.shape == phases.shape):
            raise ConfigError("lags, magnitudes, phases must have equal length")
        if lags.size and (np.any(lags < 1) or np.any(np.diff(lags) <= 0)):
            raise ConfigError("lags must be strictly increasing positive integers")
        if np.any(~np.isfinite(mags)) or np.any(mags < 0):
            raise ConfigError("magnitudes must be finite and nonnegative")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "phases", phases)
        if self.unwrapped is not None:
            unw = np.asarray(self.unwrapped, dtype=float)
            if unw.shape != lags.shape:
                raise ConfigError("unwrapped must match the lag count")
            object.__setattr__(self, "unwrapped", unw)

    @property
    def is_empty(self) -> bool:
        return self.lags.size == 0

    @classmethod
    def empty(cls) -> "CorrelationSequence":
        z = np.zeros(0)
        return cls(z.astype(int), z, z, z)


@dataclass(frozen=True)
class CfoEstimate:
    """A frequency-offset estimate with the statistics that produced it."""

    value: float
    mode: str  # "map" or "ml"
    correlation: CorrelationSequence

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalError(f"non-finite frequency estimate: {self.value!r}")


@dataclass(frozen=True)
class ChannelEstimate:
    """MMSE (or least-squares) channel estimate and its error covariance."""

    coefficients: np.ndarray
    error_covariance: np.ndarray


def build_workspace(
    pilot: PilotMatrix,
    prior: Optional[ChannelPrior] = None,
    *,
    l_r: Optional[int] = None,
    ml_channel: bool = False,
) -> EstimatorWorkspace:
    """Precompute the shrinkage matrix and prior-mean term.

    With a channel prior, ``error_cov`` inverts the prior precision plus
    the blockwise pilot Gram; orthogonal pilots take the scalar-Gram
    branch. ``ml_channel=True`` drops the prior precision entirely
    (least squares), which requires an invertible Gram.
    """
    l_t = pilot.l_t
    if prior is not None:
        if prior.dim % l_t != 0:
            raise ConfigError("prior dimension is not a multiple of the pilot's l_t")
        if l_r is not None and l_r * l_t != prior.dim:
            raise ConfigError("explicit l_r contradicts prior dimension")
        l_r = prior.dim // l_t
    if l_r is None:
        raise ConfigError("need a channel prior or an explicit l_r")
    d = l_r * l_t
    gram = pilot.gram()
    scaled_identity = pilot.n * pilot.power / l_t

    if ml_channel:
        try:
            if pilot.is_orthogonal:
                error_cov = np.eye(d, dtype=complex) / scaled_identity
            else:
                block = np.linalg.inv(gram)
                error_cov = np.kron(np.eye(l_r), block)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular pilot Gram in least-squares mode: {exc}") from exc
        mean_term = np.zeros(d, dtype=complex)
        return EstimatorWorkspace(error_cov, mean_term, pilot, prior, ml_channel=True)

    if prior.is_iid:
        prior_precision = np.eye(d) / prior.iid_variance
    else:
        try:
            prior_precision = np.linalg.inv(prior.covariance)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"channel covariance is not invertible: {exc}") from exc

    if pilot.is_orthogonal:
        error_cov = np.linalg.inv(prior_precision + scaled_identity * np.eye(d))
    else:
        big_gram = np.kron(np.eye(l_r), gram)
        error_cov = np.linalg.inv(big_gram + prior_precision)
    error_cov = 0.5 * (error_cov + error_cov.conj().T)

    if prior.is_zero_mean:
        mean_term = np.zeros(d, dtype=complex)
    elif pilot.is_orthogonal:
        mean_term = prior.mean - scaled_identity * (error_cov @ prior.mean)
    else:
        big_gram = np.kron(np.eye(l_r), gram)
        mean_term = prior.mean - error_cov @ (big_gram @ prior.mean)
    return EstimatorWorkspace(error_cov, mean_term, pilot, prior)


def _check_frame(frame: Frame, ws: EstimatorWorkspace) -> None:
    if frame.config.l_t != ws.pilot.l_t or frame.config.n != ws.pilot.n:
        raise ConfigError("frame dimensions do not match the workspace pilot")
    if frame.config.l_r != ws.l_r:
        raise ConfigError("frame receive-antenna count does not match the workspace")


def _pilot_weighted_products(frame: Frame, ws: EstimatorWorkspace) -> np.ndarray:
    """u[k, (r,t)] = s[t, k] * conj(y[r, k]), flattened receive-major."""
    n = ws.pilot.n
    u = np.einsum("kt,kr->krt", ws.pilot.entries, frame.samples.conj())
    return u.reshape(n, ws.dim)


def _lag_statistics(frame: Frame, ws: EstimatorWorkspace) -> np.ndarray:
    """Complex statistics r_k e^{-j theta_k} for every lag k = 1 .. n-1.

    Each lag sums shrinkage-weighted products of pilot rows against
    conjugated sample products at that row separation, plus a single-row
    term from the prior mean.
    """
    _check_frame(frame, ws)
    n = ws.pilot.n
    u = _pilot_weighted_products(frame, ws)
    w = u @ ws.error_cov
    u_conj = u.conj()
    z = np.empty(n - 1, dtype=complex)
    for k in range(1, n):
        z[k - 1] = np.einsum("kd,kd->", w[k:], u_conj[: n - k])
    if np.any(ws.mean_term != 0):
        z += u[1:] @ ws.mean_term
    return z


def _sequence_from_statistics(z: np.ndarray, lags: np.ndarray) -> CorrelationSequence:
    mags = np.abs(z)
    peak = mags.max(initial=0.0)
    if peak <= 0.0:
        raise NoFrequencyInformation("all correlation lags vanished")
    keep = mags >= LAG_DROP_REL * peak
    if not np.any(keep):
        raise NoFrequencyInformation("all correlation lags fell below threshold")
    phases = -np.angle(z[keep])
    phases[phases == -np.pi] = np.pi
    return CorrelationSequence(lags[keep], mags[keep], phases)


def correlation_general(frame: Frame, ws: EstimatorWorkspace) -> CorrelationSequence:
    """Lag statistics for arbitrary pilots and (possibly correlated) priors."""
    z = _lag_statistics(frame, ws)
    return _sequence_from_statistics(z, np.arange(1, ws.pilot.n))


def _scrambled_samples(frame: Frame, pilot: PilotMatrix) -> np.ndarray:
    code = pilot.scrambling
    if code is None:
        return np.asarray(frame.samples)
    return code[:, None].conj() * frame.samples


def _iid_shrinkage(pilot: PilotMatrix, sigma_h2: float) -> float:
    return 1.0 / (1.0 / sigma_h2 + pilot.n * pilot.power / pilot.l_t)


def correlation_periodic(
    frame: Frame, pilot: PilotMatrix, sigma_h2: float
) -> CorrelationSequence:
    """Reduced lag statistics for a periodic pilot and zero-mean white prior.

    Only lags at multiples of l_t carry signal; each is a plain sample
    autocorrelation of the descrambled frame at that row separation.
    """
    if pilot.layout != "periodic":
        raise ConfigError("correlation_periodic requires a periodic-layout pilot")
    if frame.config.n != pilot.n or frame.config.l_t != pilot.l_t:
        raise ConfigError("frame dimensions do not match the pilot")
    m = pilot.n // pilot.l_t
    if m < 2:
        raise NoFrequencyInformation(
            "single-period pilot: phase shifts are indistinguishable from fading"
        )
    coef = _iid_shrinkage(pilot, sigma_h2) * pilot.power
    v = _scrambled_samples(frame, pilot)  # rows carry c_k* y_{r,k}
    z = np.empty(m - 1, dtype=complex)
    for i in range(1, m):
        lag = i * pilot.l_t
        z[i - 1] = coef * np.einsum("kr,kr->", v[:-lag], v[lag:].conj())
    lags = pilot.l_t * np.arange(1, m)
    return _sequence_from_statistics(z, lags)


def correlation_td(frame: Frame, pilot: PilotMatrix, sigma_h2: float) -> CorrelationSequence:
    """Reduced lag statistics for a TD pilot and zero-mean white prior.

    Lags 1 .. m-1 carry signal; sums run only within each antenna's
    transmission block.
    """
    if pilot.layout != "td":
        raise ConfigError("correlation_td requires a TD-layout pilot")
    if frame.config.n != pilot.n or frame.config.l_t != pilot.l_t:
        raise ConfigError("frame dimensions do not match the pilot")
    m = pilot.n // pilot.l_t
    if m < 2:
        raise NoFrequencyInformation(
            "single-symbol-per-antenna pilot carries no frequency information"
        )
    coef = _iid_shrinkage(pilot, sigma_h2) * pilot.power
    v = _scrambled_samples(frame, pilot)
    z = np.zeros(m - 1, dtype=complex)
    for t in range(pilot.l_t):
        seg = v[t * m : (t + 1) * m]
        for i in range(1, m):
            z[i - 1] += np.einsum("kr,kr->", seg[:-i], seg[i:].conj())
    z *= coef
    return _sequence_from_statistics(z, np.arange(1, m))


def phase_unwrap(
    seq: CorrelationSequence, hint: float = 0.0, hint_precision: float = 0.0
) -> CorrelationSequence:
    """Choose integer 2-pi multiples so lag phases lie on one linear branch.

    Lags are processed in order; each phase is centered on the slope of
    the running frequency estimate built from the lags already
    unwrapped, seeded at the hint frequency. ``hint_precision`` adds the
    hint as a pseudo-observation with that weight, which keeps early
    predictions anchored near the prior at low SNR. With no prior
    information (hint 0, precision 0) the first lag keeps its raw phase.
    Residuals land in (-pi, pi] with ties at the boundary resolved
    upward.
    """
    if seq.is_empty:
        raise NoFrequencyInformation("cannot unwrap an empty correlation sequence")
    if hint_precision < 0:
        raise ConfigError("hint_precision must be >= 0")
    unwrapped = np.empty(seq.lags.size)
    numer = hint_precision * hint
    denom = hint_precision
    slope = hint
    for j, (lag, mag, theta) in enumerate(zip(seq.lags, seq.magnitudes, seq.phases)):
        center = TWO_PI * slope * lag
        wraps = np.floor((center - theta) / TWO_PI + 0.5)
        unwrapped[j] = theta + TWO_PI * wraps
        numer += 2.0 * TWO_PI * lag * mag * unwrapped[j]
        denom += 2.0 * TWO_PI**2 * lag**2 * mag
        slope = numer / denom
    return replace(seq, unwrapped=unwrapped)


def estimate_cfo(seq: CorrelationSequence, prior: CfoPrior) -> CfoEstimate:
    """Closed-form frequency estimate from unwrapped lag phases.

    Returns the precision-weighted average of per-lag phase slopes and
    the prior mean. With a flat prior this is the ML estimate; an empty
    sequence falls back to the prior mean (MAP) or fails (ML).
    """
    mode = "ml" if prior.is_flat else "map"
    if seq.is_empty:
        if prior.is_flat:
            raise NoFrequencyInformation("no lags retained and no prior to fall back on")
        return CfoEstimate(prior.mean, mode, seq)
    if seq.unwrapped is None:
        raise ConfigError("estimate_cfo requires an unwrapped correlation sequence")
    lags = seq.lags
    mags = seq.magnitudes
    numer = 2.0 * TWO_PI * np.sum(lags * mags * seq.unwrapped) + prior.precision * prior.mean
    denom = 2.0 * TWO_PI**2 * np.sum(lags**2 * mags) + prior.precision
    if denom == 0:
        raise NoFrequencyInformation("zero curvature: no usable frequency information")
    return CfoEstimate(numer / denom, mode, seq)


def _rotated_projection(frame: Frame, ws: EstimatorWorkspace, f: float) -> np.ndarray:
    """v[(r,t)] = sum_k conj(s[t,k]) e^{-j 2 pi f (k-1)} y[r,k]."""
    ramp = np.exp(-2j * np.pi * f * np.arange(ws.pilot.n))
    v = np.einsum("kt,k,kr->rt", ws.pilot.entries.conj(), ramp, frame.samples)
    return v.reshape(ws.dim)


def estimate_channel(
    frame: Frame, ws: EstimatorWorkspace, f_hat: Union[CfoEstimate, float]
) -> ChannelEstimate:
    """Linear MMSE channel estimate at the given frequency."""
    _check_frame(frame, ws)
    f = f_hat.value if isinstance(f_hat, CfoEstimate) else float(f_hat)
    v = _rotated_projection(frame, ws, f)
    coeff = ws.error_cov @ v + ws.mean_term
    return ChannelEstimate(coeff, ws.error_cov)


def objective_g(frame: Frame, ws: EstimatorWorkspace, prior: CfoPrior, f: float) -> float:
    """Exact posterior objective for the frequency (up to f-independent terms)."""
    _check_frame(frame, ws)
    v = _rotated_projection(frame, ws, f)
    value = 2.0 * np.real(np.vdot(ws.mean_term, v))
    value += np.real(v.conj() @ ws.error_cov @ v)
    value -= 0.5 * prior.precision * (f - prior.mean) ** 2
    return float(value)


def objective_g_derivative(
    frame: Frame, ws: EstimatorWorkspace, prior: CfoPrior, f: float
) -> float:
    """d g / d f via the lag statistics (no finite differencing)."""
    z = _lag_statistics(frame, ws)
    k = np.arange(1, ws.pilot.n)
    data = -2.0 * TWO_PI * np.sum(k * np.imag(np.exp(2j * np.pi * f * k) * z))
    return float(data - prior.precision * (f - prior.mean))


def grid_search_oracle(
    frame: Frame,
    ws: EstimatorWorkspace,
    prior: CfoPrior,
    f_min: float = -0.5,
    f_max: float = 0.5,
    step: float = 1e-5,
) -> CfoEstimate:
    """Exhaustive maximization of the objective on a frequency grid.

    Slow but assumption-free; serves as the correctness oracle for the
    closed-form estimate.
    """
    if not (f_min < f_max) or step <= 0:
        raise ConfigError("need f_min < f_max and step > 0")
    _check_frame(frame, ws)
    n = ws.pilot.n
    count = int(np.ceil((f_max - f_min) / step - 1e-9))
    grid = f_min + step * np.arange(count)
    pilot_conj_y = np.einsum("kt,kr->krt", ws.pilot.entries.conj(), frame.samples)
    pilot_conj_y = pilot_conj_y.reshape(n, ws.dim)
    best_value = -np.inf
    best_f = grid[0]
    symbols = np.arange(n)
    for start in range(0, count, 8192):
        chunk = grid[start : start + 8192]
        ramps = np.exp(-2j * np.pi * np.outer(chunk, symbols))
        v = ramps @ pilot_conj_y  # (chunk, dim)
        values = np.einsum("fi,ij,fj->f", v.conj(), ws.error_cov, v).real
        values += 2.0 * (v @ ws.mean_term.conj()).real
        values -= 0.5 * prior.precision * (chunk - prior.mean) ** 2
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value = float(values[idx])
            best_f = float(chunk[idx])
    seq = correlation_general(frame, ws)
    return CfoEstimate(best_f, "ml" if prior.is_flat else "map", seq)


def derotate(frame: Frame, f_offset: float) -> Frame:
    """Counter-rotate the samples by f_offset (cycles/symbol)."""
    ramp = np.exp(-2j * np.pi * f_offset * np.arange(frame.config.n))
    return Frame(ramp[:, None] * frame.samples, frame.config)


def feedback_error(seq: CorrelationSequence, f: float, gamma: float) -> float:
    """Loop-filter error signal at candidate frequency f.

    Exposed for external closed-loop trackers; no loop is implemented
    here. Zero exactly at stationary points of the data term.
    """
    if seq.is_empty:
        raise NoFrequencyInformation("feedback error needs a non-empty sequence")
    lags = seq.lags
    return float(
        -gamma * np.sum(lags * seq.magnitudes * np.sin(TWO_PI * f * lags - seq.phases))
    )


def exact_log_likelihood(
    frame: Frame, pilot: PilotMatrix, prior: ChannelPrior, f: float
) -> float:
    """ln f(y | f) with the channel marginalized out, computed exactly.

    Uses the rank-reduced quadratic form so only an (l_r l_t)-sized
    system is inverted. Requires an invertible channel covariance.
    """
    l_t = pilot.l_t
    if prior.dim % l_t != 0:
        raise ConfigError("prior dimension is not a multiple of the pilot's l_t")
    l_r = prior.dim // l_t
    if frame.config.l_r != l_r or frame.config.n != pilot.n:
        raise ConfigError("frame dimensions do not match pilot/prior")
    gram_big = np.kron(np.eye(l_r), pilot.gram())
    try:
        precision = np.linalg.inv(prior.covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"channel covariance is not invertible: {exc}") from exc
    core = np.linalg.inv(precision + gram_big)
    ws = EstimatorWorkspace(core, np.zeros(prior.dim, dtype=complex), pilot, prior)
    v = _rotated_projection(frame, ws, f)
    w = v - gram_big @ prior.mean
    y = frame.samples
    quad = float(np.sum(np.abs(y) ** 2))
    quad -= 2.0 * np.real(np.vdot(prior.mean, v))
    quad += float(np.real(prior.mean.conj() @ gram_big @ prior.mean))
    quad -= float(np.real(w.conj() @ core @ w))
    sign, logdet = np.linalg.slogdet(np.eye(prior.dim) + prior.covariance @ gram_big)
    if sign.real <= 0:
        raise NumericalError("non-positive determinant in likelihood evaluation")
    return float(-pilot.n * l_r * np.log(np.pi) - logdet - quad)


def estimate_frame(
    frame: Frame,
    pilot: PilotMatrix,
    channel_prior: ChannelPrior,
    cfo_prior: CfoPrior,
    *,
    ml_channel: bool = False,
    hint: Optional[float] = None,
    workspace: Optional[EstimatorWorkspace] = None,
) -> tuple[CfoEstimate, ChannelEstimate]:
    """Full pipeline: correlate, unwrap, estimate frequency, then channel.

    The unwrap hint defaults to the CFO prior mean, which widens the
    usable range to offsets around that mean (equivalent to derotating
    by it first). Structured pilots with a zero-mean white prior take
    the reduced correlation path.
    """
    ws = workspace if workspace is not None else build_workspace(
        pilot, channel_prior, ml_channel=ml_channel
    )
    if hint is None:
        hint = cfo_prior.mean
    reduced = (
        not ml_channel
        and channel_prior.is_iid
        and pilot.layout in ("periodic", "td")
    )
    try:
        if reduced and pilot.layout == "periodic":
            seq = correlation_periodic(frame, pilot, channel_prior.iid_variance)
        elif reduced:
            seq = correlation_td(frame, pilot, channel_prior.iid_variance)
        else:
            seq = correlation_general(frame, ws)
        seq = phase_unwrap(seq, hint=hint, hint_precision=cfo_prior.precision)
        cfo = estimate_cfo(seq, cfo_prior)
    except NoFrequencyInformation:
        if cfo_prior.is_flat:
            raise
        cfo = CfoEstimate(cfo_prior.mean, "map", CorrelationSequence.empty())
    chan = estimate_channel(frame, ws, cfo)
    return cfo, chan
