"""Dissipative modified kicked rotator toolkit.

Classical and quantum simulation of a periodically kicked particle with
velocity-proportional friction, phase-space (Wigner/Moyal) calculus for
the friction dissipator, and a reproducible (k, gamma) sweep harness
comparing classical and quantum equilibrium momentum distributions.
"""

from .classical import (
    Ensemble,
    PhaseState,
    evolve_ensemble,
    initial_band_ensemble,
    inverse_map_step,
    kick_force,
    map_step,
    momentum_histogram,
    sample_noise,
)
from .errors import (
    BandFitError,
    ConfigError,
    DmkrError,
    DomainError,
    EmptyDistributionError,
    GeometryError,
    LeakageError,
    SingularityError,
    StabilityError,
    UndefinedMeasureError,
)
from .measures import (
    BinSpec,
    MomentumDistribution,
    dispersion,
    dispersion_complement,
    literal_overlap,
    normalize_distribution,
    overlap,
    participation_ratio,
)
from .moyal import (
    PhaseSpaceField,
    SymbolSpec,
    VelocityProfile,
    coarse_graining_diagnostic,
    dissipator_semiclassical,
    dissipator_semiclassical_linear,
    double_symplectic_derivative,
    lindblad_symbol,
    make_grid_field,
    moyal_bracket_truncated,
    s1_closed,
    s1_general,
    s2_closed,
    s2_general,
    semiclassical_period_map,
    star_product_truncated,
    symplectic_derivative,
)
from .params import HBAR_PRESETS, ModelParams
from .quantum import (
    HilbertSpec,
    LindbladPair,
    apply_free_rotation,
    apply_kick,
    build_lindblad,
    dissipative_channel,
    dissipative_channel_ode,
    evolve_periods,
    initial_band_state,
    momentum_marginal,
    n_max_for_tau,
    period_map,
    validate_density_matrix,
)
from .sweep import (
    CellBudgets,
    MeasureRecord,
    SweepPlan,
    SweepResult,
    compute_cell,
    emit,
    run_cell,
    run_sweep,
)
from .weyl import discrete_weyl_symbol, wigner_function, wigner_momentum_marginal

__version__ = "0.1.0"
