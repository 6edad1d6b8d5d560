"""Optimal transport and Wasserstein gradient flows on metric graphs."""

from .dynamics import (
    FluxField,
    SolverOptions,
    SpaceTimePath,
    bb_action,
    check_continuity,
    flux_between,
    path_action,
    regularize_path,
    solve_bb,
)
from .errors import *  # noqa: F401,F403
from .graph import GraphPoint, MetricGraph, build_graph, distance, geodesic, interpolate, load_graph
from .gradient_flow import (
    MkvState,
    dissipation,
    energy_dissipation_check,
    jko_flow,
    jko_step,
    linfty_bound_check,
    mkv_step,
    mkv_trajectory,
)
from .measure import (
    Grid,
    GridMeasure,
    NodalFunction,
    Potential,
    entropy,
    free_energy,
    gibbs,
    lebesgue,
    relative_entropy,
)
from .regularize import ExtendedGraph, regularize_function, regularize_measure
from .transport import c_transform, geodesic_interpolation, hopf_lax, wasserstein

__version__ = "0.1.0"
