"""Non-reversible parallel tempering with windowed even/odd swaps.

SGD-based exploration kernels, a deterministic swap condition with an
adaptive correction buffer, stochastic-approximation ladder adaptation, and
round-trip theory for the index process.
"""

from .config import PRESETS, RunConfig, parse_config
from .driver import run, sweep
from .exceptions import ConfigError, DeostarError, InternalError, InvalidArgumentError, NumericalError
from .index_sim import (
    RoundTripModel,
    estimate_optimal_chains,
    expected_round_trip,
    optimal_window,
    simulate_index_process,
    solve_g_root,
)
from .kernels import ChainState, KernelKind, KernelSpec, momentum_sgd_step, preconditioned_sgd_step, sgd_step, sgld_step
from .ladder import CorrectionBuffer, GapState, Ladder, StepSchedule, geometric_init, update_buffer, update_ladder
from .metrics import RunReport, acceptance_rates, count_round_trips, mode_coverage, tv_distance
from .sampler import DEOSampler
from .swap import (
    GateBank,
    Rule,
    Scheme,
    SwapDecision,
    SwapPolicy,
    adj_sweep,
    attempt_swaps,
    deterministic_condition,
    eligible_pairs,
    metropolis_corrected_rate,
    metropolis_window_corrected_rate,
    seo_step,
)
from .targets import Custom, Grid25, Mixture1D, Quadratic, TargetModel, reference_density_grid

__version__ = "0.1.0"
