"""Monte-Carlo harness: error curves, acquisition range, and CFO tracking.

Determinism contract: every trial draws from a generator seeded by
``(master_seed, point_index, trial_index)``, so results are bit-identical
for a given seed regardless of worker count or scheduling order.
Aggregation always reduces trial arrays in index order.

SNR convention: SNR = rho * sigma_h^2 with unit noise variance, so
sweeps vary the pilot power rho only.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bounds import beta_general, beta_iid, make_bounds
from .channel import sample_channel, sample_cfo, synthesize_frame
from .estimators import (
    EstimatorWorkspace,
    build_workspace,
    correlation_general,
    correlation_periodic,
    correlation_td,
    estimate_cfo,
    phase_unwrap,
)
from .pilots import (
    PilotMatrix,
    make_combined_pilot,
    make_periodic_pilot,
    make_td_pilot,
    zadoff_chu,
)
from .types import (
    ChannelPrior,
    CfoPrior,
    ConfigError,
    MimoConfig,
    NoFrequencyInformation,
)

MODES = ("map", "ml")


def snr_db_to_power(snr_db: float, sigma_h2: float) -> float:
    """Pilot power rho achieving the requested SNR at unit noise variance."""
    return 10.0 ** (snr_db / 10.0) / sigma_h2


@dataclass(frozen=True)
class PilotSpec:
    """Recipe for building a pilot once the power is known.

    ``m`` is the period count for periodic/TD layouts; combined layouts
    use ``head_m`` periodic periods followed by ``tail_m`` TD periods.
    """

    layout: str
    l_t: int
    m: Optional[int] = None
    head_m: Optional[int] = None
    tail_m: Optional[int] = None
    scrambling: str = "none"

    def __post_init__(self):
        if self.layout not in ("periodic", "td", "combined"):
            raise ConfigError(f"unsupported pilot layout {self.layout!r}")
        if self.layout == "combined":
            if not self.head_m or not self.tail_m:
                raise ConfigError("combined layout needs head_m and tail_m")
        elif not self.m:
            raise ConfigError(f"{self.layout} layout needs m")
        if self.scrambling not in ("none", "zc"):
            raise ConfigError(f"unknown scrambling {self.scrambling!r}")

    @property
    def n(self) -> int:
        if self.layout == "combined":
            return (self.head_m + self.tail_m) * self.l_t
        return self.m * self.l_t

    def build(self, power: float) -> PilotMatrix:
        code = zadoff_chu(self.n) if self.scrambling == "zc" else None
        if self.layout == "periodic":
            cfg = MimoConfig(self.l_t, 1, self.n)
            return make_periodic_pilot(cfg, self.m, power, scrambling=code)
        if self.layout == "td":
            cfg = MimoConfig(self.l_t, 1, self.n)
            return make_td_pilot(cfg, self.m, power, scrambling=code)
        n_head = self.head_m * self.l_t
        head = make_periodic_pilot(
            MimoConfig(self.l_t, 1, n_head),
            self.head_m,
            power,
            scrambling=None if code is None else code[:n_head],
        )
        tail = make_td_pilot(
            MimoConfig(self.l_t, 1, self.n - n_head),
            self.tail_m,
            power,
            scrambling=None if code is None else code[n_head:],
        )
        return make_combined_pilot(head, tail)


@dataclass(frozen=True)
class SweepConfig:
    """One Monte-Carlo sweep: either MSE-vs-SNR or acquisition range.

    Exactly one of ``snr_db`` (sweep the SNR, frequency drawn from the
    prior) or ``true_cfo`` (sweep the true frequency at ``fixed_snr_db``)
    must be set.
    """

    mimo: MimoConfig
    pilot: PilotSpec
    channel_prior: ChannelPrior
    cfo_prior: CfoPrior
    trials: int
    seed: int
    modes: tuple = MODES
    snr_db: Optional[tuple] = None
    true_cfo: Optional[tuple] = None
    fixed_snr_db: Optional[float] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError(f"modes must be a non-empty subset of {MODES}")
        if (self.snr_db is None) == (self.true_cfo is None):
            raise ConfigError("set exactly one of snr_db or true_cfo")
        if self.snr_db is not None and len(self.snr_db) == 0:
            raise ConfigError("snr_db list must be non-empty")
        if self.true_cfo is not None:
            if len(self.true_cfo) == 0:
                raise ConfigError("true_cfo list must be non-empty")
            if self.fixed_snr_db is None:
                raise ConfigError("acquisition sweeps need fixed_snr_db")
        if self.snr_db is not None and self.cfo_prior.is_flat:
            raise ConfigError("MSE-vs-SNR sweeps sample the CFO from the prior; it cannot be flat")
        if self.mimo.l_t != self.pilot.l_t or self.mimo.n != self.pilot.n:
            raise ConfigError("mimo config does not match the pilot spec")
        if self.channel_prior.dim != self.mimo.dim:
            raise ConfigError("channel prior dimension does not match the MIMO config")
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.snr_db is not None:
            object.__setattr__(self, "snr_db", tuple(float(x) for x in self.snr_db))
        if self.true_cfo is not None:
            object.__setattr__(self, "true_cfo", tuple(float(x) for x in self.true_cfo))


@dataclass(frozen=True)
class TrackingConfig:
    """Packet-to-packet tracking run with an AR(1) frequency process."""

    mimo: MimoConfig
    pilot: PilotSpec
    channel_prior: ChannelPrior
    snr_db: float
    ar_rho: float
    ar_mean: float
    ar_noise_var: float
    frames: int
    runs: int
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.ar_rho <= 1.0):
            raise ConfigError("ar_rho must lie in [0, 1]")
        if self.ar_noise_var < 0:
            raise ConfigError("ar_noise_var must be >= 0")
        if self.frames < 1 or self.runs < 1:
            raise ConfigError("frames and runs must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.mimo.l_t != self.pilot.l_t or self.mimo.n != self.pilot.n:
            raise ConfigError("mimo config does not match the pilot spec")
        if self.channel_prior.dim != self.mimo.dim:
            raise ConfigError("channel prior dimension does not match the MIMO config")


@dataclass(frozen=True)
class SweepRecord:
    x: float
    mode: str
    mse: float
    trials: int
    bcrlb: float
    crlb: float


@dataclass(frozen=True)
class SweepResult:
    """Per-point MSE records for one experiment."""

    kind: str  # "snr" | "range" | "track"
    records: tuple

    def for_mode(self, mode: str) -> list:
        return [r for r in self.records if r.mode == mode]

    def to_csv(self, path) -> None:
        write_sweep_csv(self, path)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_sweep_csv(result: SweepResult, path) -> None:
    """Serialize records as ``x,mode,mse,trials,bcrlb,crlb`` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("x,mode,mse,trials,bcrlb,crlb\n")
        for r in result.records:
            fh.write(
                f"{_fmt(r.x)},{r.mode},{_fmt(r.mse)},{r.trials},"
                f"{_fmt(r.bcrlb)},{_fmt(r.crlb)}\n"
            )


def _effective_sigma_h2(prior: ChannelPrior) -> float:
    """Average per-coefficient channel power used for the SNR mapping."""
    if prior.is_iid:
        return prior.iid_variance
    second = prior.covariance + np.outer(prior.mean, prior.mean.conj())
    return float(np.real(np.trace(second)) / prior.dim)


def _beta_for(pilot: PilotMatrix, prior: ChannelPrior, l_r: int) -> float:
    if prior.is_iid:
        return beta_iid(pilot, prior.iid_variance, l_r)
    return beta_general(pilot, prior)


def _correlate(frame, pilot: PilotMatrix, prior: ChannelPrior, ws: EstimatorWorkspace):
    if prior.is_iid and pilot.layout == "periodic":
        return correlation_periodic(frame, pilot, prior.iid_variance)
    if prior.is_iid and pilot.layout == "td":
        return correlation_td(frame, pilot, prior.iid_variance)
    return correlation_general(frame, ws)


def _estimate_modes(
    frame,
    pilot: PilotMatrix,
    prior: ChannelPrior,
    cfo_prior: CfoPrior,
    ws: EstimatorWorkspace,
    modes: Sequence[str],
) -> dict:
    """One frame, one correlation pass, an estimate per requested mode."""
    try:
        seq = _correlate(frame, pilot, prior, ws)
    except NoFrequencyInformation:
        return {mode: cfo_prior.mean for mode in modes}
    out = {}
    for mode in modes:
        prior_m = cfo_prior if mode == "map" else CfoPrior.flat(cfo_prior.mean)
        unwrapped = phase_unwrap(seq, hint=prior_m.mean, hint_precision=prior_m.precision)
        out[mode] = estimate_cfo(unwrapped, prior_m).value
    return out


def _snr_point(cfg: SweepConfig, idx: int) -> list:
    snr = cfg.snr_db[idx]
    sigma_h2 = _effective_sigma_h2(cfg.channel_prior)
    pilot = cfg.pilot.build(snr_db_to_power(snr, sigma_h2))
    ws = build_workspace(pilot, cfg.channel_prior)
    beta = _beta_for(pilot, cfg.channel_prior, cfg.mimo.l_r)
    bayes = make_bounds(beta, cfg.cfo_prior)
    errors = {mode: np.empty(cfg.trials) for mode in cfg.modes}
    for t in range(cfg.trials):
        rng = np.random.default_rng([cfg.seed, idx, t])
        f_true = sample_cfo(cfg.cfo_prior, rng)
        h = sample_channel(cfg.channel_prior, rng)
        frame = synthesize_frame(pilot, h, f_true, 1.0, rng)
        est = _estimate_modes(frame, pilot, cfg.channel_prior, cfg.cfo_prior, ws, cfg.modes)
        for mode in cfg.modes:
            errors[mode][t] = (est[mode] - f_true) ** 2
    records = []
    for mode in cfg.modes:
        bcrlb = bayes.bcrlb if mode == "map" else bayes.crlb
        records.append(
            SweepRecord(snr, mode, float(errors[mode].mean()), cfg.trials, bcrlb, bayes.crlb)
        )
    return records


def _range_point(cfg: SweepConfig, idx: int) -> list:
    f_true = cfg.true_cfo[idx]
    sigma_h2 = _effective_sigma_h2(cfg.channel_prior)
    pilot = cfg.pilot.build(snr_db_to_power(cfg.fixed_snr_db, sigma_h2))
    ws = build_workspace(pilot, cfg.channel_prior)
    beta = _beta_for(pilot, cfg.channel_prior, cfg.mimo.l_r)
    bayes = make_bounds(beta, cfg.cfo_prior)
    errors = {mode: np.empty(cfg.trials) for mode in cfg.modes}
    for t in range(cfg.trials):
        rng = np.random.default_rng([cfg.seed, idx, t])
        h = sample_channel(cfg.channel_prior, rng)
        frame = synthesize_frame(pilot, h, f_true, 1.0, rng)
        est = _estimate_modes(frame, pilot, cfg.channel_prior, cfg.cfo_prior, ws, cfg.modes)
        for mode in cfg.modes:
            errors[mode][t] = (est[mode] - f_true) ** 2
    records = []
    for mode in cfg.modes:
        bcrlb = bayes.bcrlb if mode == "map" else bayes.crlb
        records.append(
            SweepRecord(f_true, mode, float(errors[mode].mean()), cfg.trials, bcrlb, bayes.crlb)
        )
    return records


def _run_points(point_fn, cfg, count: int, workers: int) -> list:
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=min(workers, count)) as pool:
            per_point = list(pool.map(point_fn, [cfg] * count, range(count)))
    else:
        per_point = [point_fn(cfg, idx) for idx in range(count)]
    records = []
    for point_records in per_point:
        records.extend(point_records)
    return records


def run_mse_vs_snr(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Estimation MSE against the bounds across an SNR sweep.

    Each trial draws the frequency from the prior and the channel from
    its prior, synthesizes one frame, and runs every requested mode on
    it. Unwrap-failure outliers stay in the average.
    """
    if cfg.snr_db is None:
        raise ConfigError("run_mse_vs_snr needs a SweepConfig with snr_db set")
    return SweepResult("snr", tuple(_run_points(_snr_point, cfg, len(cfg.snr_db), workers)))


def run_acquisition_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """MSE against the true frequency offset at a fixed SNR.

    The frequency is swept deterministically; the prior mean only seeds
    the unwrap (acquisition center), which is what limits the usable
    range for each pilot structure.
    """
    if cfg.true_cfo is None:
        raise ConfigError("run_acquisition_sweep needs a SweepConfig with true_cfo set")
    return SweepResult(
        "range", tuple(_run_points(_range_point, cfg, len(cfg.true_cfo), workers))
    )


def ar1_prior_update(
    f_hat: float, bcrlb: float, ar_rho: float, ar_mean: float, ar_noise_var: float
) -> CfoPrior:
    """Propagate an estimate one AR(1) step forward into the next prior.

    mean = rho * f_hat + (1 - rho) * stationary mean;
    variance = rho^2 * bcrlb + process noise variance.
    """
    if bcrlb < 0:
        raise ConfigError("bcrlb must be >= 0")
    variance = ar_rho * ar_rho * bcrlb + ar_noise_var
    if variance <= 0:
        raise ConfigError("degenerate tracking prior: zero variance")
    return CfoPrior(ar_rho * f_hat + (1.0 - ar_rho) * ar_mean, 1.0 / variance)


def tracking_bound_series(beta: float, cfg: TrackingConfig) -> np.ndarray:
    """Deterministic per-frame Bayesian bound under the tracking recursion.

    Frame 1 is estimated without a prior (classical bound); afterwards
    each frame's prior variance is the AR(1)-propagated previous bound.
    """
    if beta <= 0:
        raise ConfigError("tracking needs a pilot with frequency information (beta > 0)")
    series = np.empty(cfg.frames)
    series[0] = 1.0 / beta
    for idx in range(1, cfg.frames):
        variance = cfg.ar_rho**2 * series[idx - 1] + cfg.ar_noise_var
        series[idx] = 1.0 / (beta + 1.0 / variance)
    return series


def tracking_stationary_variance(beta: float, ar_rho: float, ar_noise_var: float) -> float:
    """Fixed point of v = ar_rho^2 / (beta + 1/v) + ar_noise_var."""
    if beta == 0:
        if ar_rho >= 1.0 and ar_noise_var > 0:
            return np.inf
        return ar_noise_var / (1.0 - ar_rho**2) if ar_rho < 1 else 0.0
    b = 1.0 - ar_rho**2 - beta * ar_noise_var
    disc = b * b + 4.0 * beta * ar_noise_var
    return float((-b + np.sqrt(disc)) / (2.0 * beta))


def _tracking_run(cfg: TrackingConfig, run_idx: int, pilot, ws, bound_series):
    map_err = np.empty(cfg.frames)
    ml_err = np.empty(cfg.frames)
    if cfg.ar_rho < 1.0:
        init_var = cfg.ar_noise_var / (1.0 - cfg.ar_rho**2)
    else:
        init_var = 0.0
    rng0 = np.random.default_rng([cfg.seed, run_idx, 0])
    f_true = cfg.ar_mean + np.sqrt(init_var) * rng0.standard_normal()
    prev_estimate = None
    for nu in range(1, cfg.frames + 1):
        rng = np.random.default_rng([cfg.seed, run_idx, nu])
        if nu > 1:
            f_true = (
                cfg.ar_rho * f_true
                + (1.0 - cfg.ar_rho) * cfg.ar_mean
                + np.sqrt(cfg.ar_noise_var) * rng.standard_normal()
            )
        h = sample_channel(cfg.channel_prior, rng)
        frame = synthesize_frame(pilot, h, f_true, 1.0, rng)
        if nu == 1:
            map_prior = CfoPrior.flat(cfg.ar_mean)
        else:
            map_prior = ar1_prior_update(
                prev_estimate, bound_series[nu - 2], cfg.ar_rho, cfg.ar_mean, cfg.ar_noise_var
            )
        est = _estimate_modes(
            frame, pilot, cfg.channel_prior, map_prior, ws, ("map",)
        )["map"]
        ml_est = _estimate_modes(
            frame, pilot, cfg.channel_prior, CfoPrior.flat(cfg.ar_mean), ws, ("ml",)
        )["ml"]
        map_err[nu - 1] = (est - f_true) ** 2
        ml_err[nu - 1] = (ml_est - f_true) ** 2
        prev_estimate = est
    return map_err, ml_err


def _tracking_run_worker(args):
    return _tracking_run(*args)


def run_tracking(cfg: TrackingConfig, workers: int = 1) -> SweepResult:
    """Per-frame MSE of tracked MAP estimation versus memoryless ML.

    Frame 1 is estimated with a flat prior; every later frame reuses the
    previous estimate through the AR(1) update. Channels redraw
    independently each frame.
    """
    sigma_h2 = _effective_sigma_h2(cfg.channel_prior)
    pilot = cfg.pilot.build(snr_db_to_power(cfg.snr_db, sigma_h2))
    ws = build_workspace(pilot, cfg.channel_prior)
    beta = _beta_for(pilot, cfg.channel_prior, cfg.mimo.l_r)
    bound_series = tracking_bound_series(beta, cfg)
    args = [(cfg, r, pilot, ws, bound_series) for r in range(cfg.runs)]
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.runs)) as pool:
            results = list(pool.map(_tracking_run_worker, args))
    else:
        results = [_tracking_run(*a) for a in args]
    map_err = np.vstack([r[0] for r in results])
    ml_err = np.vstack([r[1] for r in results])
    crlb = 1.0 / beta
    records = []
    for nu in range(cfg.frames):
        records.append(
            SweepRecord(nu + 1, "map", float(map_err[:, nu].mean()), cfg.runs, bound_series[nu], crlb)
        )
    for nu in range(cfg.frames):
        records.append(
            SweepRecord(nu + 1, "ml", float(ml_err[:, nu].mean()), cfg.runs, crlb, crlb)
        )
    return SweepResult("track", tuple(records))
