"""
Memoryscope computes the trace-distance measure of quantum non-Markovianity
for finite-dimensional open systems, both by maximizing over orthogonal pairs
of initial states and by scanning an enclosing surface around one fixed
interior reference state.
"""
__version__ = "0.1.0"

from memoryscope.dynamics import (
    DelayMap,
    DynamicalMapFamily,
    FPDephasingParams,
    ThicknessGrid,
    TimeGrid,
    amplitude_damping_family,
    apply_map,
    check_family,
    fp_dephasing_family,
    identity_family,
    kappa,
    random_cptp_family,
)
from memoryscope.experiment import (
    ExperimentConfig,
    bin_average,
    increase_between,
    local_coords,
    surface_scan_dataset,
    table1_run,
)
from memoryscope.measure import (
    MeasureResult,
    TraceDistanceTrajectory,
    equivalence_report,
    integrate_increases,
    measure_local_scan,
    measure_orthogonal_scan,
    trajectory,
)
from memoryscope.qstate import (
    BlochVector,
    DensityMatrix,
    OrthogonalPair,
    TracelessDirection,
    bloch_to_density,
    density_to_bloch,
    is_interior,
    jordan_hahn_pair,
    trace_distance,
)
from memoryscope.surfaces import (
    DirectionLattice,
    EnclosingSurface,
    make_convex_combination_surface,
    make_hemispherical_surface,
    make_sphere_surface,
    ray_intersection,
    validate_surface,
)

__all__ = [
    "BlochVector",
    "DelayMap",
    "DensityMatrix",
    "DirectionLattice",
    "DynamicalMapFamily",
    "EnclosingSurface",
    "ExperimentConfig",
    "FPDephasingParams",
    "MeasureResult",
    "OrthogonalPair",
    "ThicknessGrid",
    "TimeGrid",
    "TraceDistanceTrajectory",
    "TracelessDirection",
    "amplitude_damping_family",
    "apply_map",
    "bin_average",
    "bloch_to_density",
    "check_family",
    "density_to_bloch",
    "equivalence_report",
    "fp_dephasing_family",
    "identity_family",
    "increase_between",
    "integrate_increases",
    "is_interior",
    "jordan_hahn_pair",
    "kappa",
    "local_coords",
    "make_convex_combination_surface",
    "make_hemispherical_surface",
    "make_sphere_surface",
    "measure_local_scan",
    "measure_orthogonal_scan",
    "random_cptp_family",
    "ray_intersection",
    "surface_scan_dataset",
    "table1_run",
    "trace_distance",
    "trajectory",
    "validate_surface",
]
