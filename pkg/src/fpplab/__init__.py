"""Simulation laboratory for first passage percolation over long-range
correlated environments and random conductance models with killing.
"""

from .analysis import (
    ConstantOne,
    CorrelationReport,
    CrossingCurve,
    FracAbove,
    GffSampler,
    HeatKernelShapeFit,
    IidGaussianSampler,
    MinAbove,
    confidence_interval,
    crossing_curve,
    crossing_curves,
    decoupling_check,
    heat_kernel_shape_fit,
    wilson_interval,
)
from .environments import (
    EquilibriumMeasure,
    ExpDecay,
    IndicatorBelow,
    InterlacementSampler,
    PassageWeights,
    ScalarField,
    TabulatedDecreasing,
    dirichlet_green,
    dirichlet_green_column,
    dirichlet_laplacian,
    equilibrium_measure,
    sample_gff_batch,
    sample_gff_dirichlet,
    sample_iid_weights,
    sample_interlacement_occupation,
    weights_from_field,
)
from .fpp import (
    DistanceMap,
    GffFunctionalModel,
    GrowthExponentFit,
    IidModel,
    ScaleSchedule,
    ShapeConvergenceReport,
    TailProbabilityCurve,
    TimeConstantEstimate,
    build_scale_schedule,
    estimate_time_constant,
    fpp_distances,
    growth_exponent,
    sample_level_distances,
    shape_ball,
    shape_convergence,
    tail_probability_curve,
    zero_cluster_criterion,
)
from .io import RunManifest, config_hash, read_array, read_field, write_array, write_csv, write_field
from .lattice import (
    ClusterLabeling,
    LatticeBox,
    build_box,
    centered_box,
    crossing_event,
    label_clusters,
    linf_distance,
)
from .rcm import (
    ConductanceEnvironment,
    GreenColumn,
    GreenDecayFit,
    HeatKernelEvaluator,
    HeatKernelSlice,
    WalkTrajectory,
    build_gff_rcm,
    chemical_distance,
    fit_green_decay,
    heat_kernel,
    homogeneous_environment,
    kappa_metric,
    monte_carlo_green,
    simulate_killed_walk,
    solve_green,
    theta_metric,
)
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
