"""MAP frequency-offset and MIMO flat-fading channel estimation toolkit.

Library layout:

* :mod:`mapcfo.types` -- configuration, priors, frames
* :mod:`mapcfo.pilots` -- pilot matrix construction and CSV serialization
* :mod:`mapcfo.channel` -- channel / offset / frame sampling
* :mod:`mapcfo.estimators` -- the separable MAP solve and its oracles
* :mod:`mapcfo.bounds` -- Bayesian and classical Cramer-Rao bounds
* :mod:`mapcfo.simulation` -- seeded Monte-Carlo experiment harness
* :mod:`mapcfo.cli` -- the ``mapcfo`` command-line tool
"""

__version__ = "0.1.0"

from .types import (
    ChannelPrior,
    ChannelRealization,
    CfoPrior,
    ConfigError,
    Frame,
    MimoConfig,
    NoFrequencyInformation,
    NumericalError,
)
from .pilots import (
    PilotMatrix,
    custom_pilot,
    make_combined_pilot,
    make_periodic_pilot,
    make_td_pilot,
    read_complex_csv,
    write_complex_csv,
    zadoff_chu,
)
from .channel import sample_channel, sample_cfo, synthesize_frame
from .estimators import (
    CfoEstimate,
    ChannelEstimate,
    CorrelationSequence,
    EstimatorWorkspace,
    build_workspace,
    correlation_general,
    correlation_periodic,
    correlation_td,
    derotate,
    estimate_cfo,
    estimate_channel,
    estimate_frame,
    exact_log_likelihood,
    feedback_error,
    grid_search_oracle,
    objective_g,
    objective_g_derivative,
    phase_unwrap,
)
from .bounds import (
    BoundResult,
    beta_general,
    beta_iid,
    beta_periodic_closed,
    beta_td_closed,
    make_bounds,
)
from .simulation import (
    PilotSpec,
    SweepConfig,
    SweepRecord,
    SweepResult,
    TrackingConfig,
    ar1_prior_update,
    run_acquisition_sweep,
    run_mse_vs_snr,
    run_tracking,
    snr_db_to_power,
    tracking_bound_series,
    tracking_stationary_variance,
    write_sweep_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
