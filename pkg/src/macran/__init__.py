"""Finite-blocklength analysis and simulation for the additive-noise MAC and rateless RAC."""

from .analytics import (
    DispersionMatrix,
    DispersionSet,
    PowerPair,
    capacity,
    capacity_vector,
    dispersion_matrix,
    dispersions,
    rac_dispersions,
    verify_jacobian_identity,
)
from .codec import (
    Codebook,
    EnumerationBudgetError,
    RacCodebook,
    build_rac_codebook,
    info_density,
    jnn_decode_mac,
    rac_jnn_decode,
    rac_sic_decode,
    sample_sphere,
    sic_decode_mac,
    stopping_stat,
)
from .mac_regions import (
    BoundaryRatePair,
    SecondOrderRegion,
    UnifiedRatePoint,
    boundary_rate_pair,
    compare_regions,
    jnn_unified_point,
    mac_jnn_region,
    mac_sic_region,
)
from .montecarlo import (
    MacSimConfig,
    RacSimConfig,
    SimResult,
    estimate_g,
    rcu_bound_mc,
    simulate_mac,
    simulate_rac,
)
from .mvnormal import RegionBoundary2D, mvn_lower_prob, q, q_inv, qinv_boundary
from .noise import NoiseModel, empirical_moments, make_noise, noise_from_config
from .rac_rates import first_order_gap, rac_jnn_log_m, rac_sic_log_m, rate_table

__version__ = "0.1.0"
