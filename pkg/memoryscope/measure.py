"""
Trace-distance non-Markovianity: the orthogonal-pair engine and the local
engine over an enclosing surface of a fixed reference state.

Both engines share one kernel. A trajectory D(t) is sampled on a time grid and
the measure is the total of its strict increases, optionally divided by the
initial distance. Lattices are processed in fixed-size chunks on a thread pool;
reductions run on the gathered arrays, so results never depend on ``jobs``.
"""
import dataclasses
import logging
import math
import typing as tp

import numpy as np
import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, model_validator

from memoryscope.dynamics import DynamicalMapFamily, TimeGrid, evolve
from memoryscope.errors import (
    CPTPViolationError,
    DimensionMismatchError,
    MeasureError,
    StateError,
    SurfaceError,
)
from memoryscope.linalg import bloch_components, haar_unitary
from memoryscope.parallel import DEFAULT_CHUNK_SIZE, chunk_slices, ordered_map
from memoryscope.qstate import (
    TOL_DISTINCT,
    DensityMatrix,
    MatrixPayload,
    density_to_bloch,
    is_interior,
    jordan_hahn_parts,
    trace_distances,
    validate_states,
)
from memoryscope.surfaces import (
    INTERIOR_EPS,
    DirectionLattice,
    EnclosingSurface,
    pure_qubit_states,
    same_state,
)

logger = logging.getLogger(__name__)

INCREASE_TOL = 1e-14
TOL_VALUE = 1e-12
TOL_TELESCOPE = 1e-12

GridLike = tp.Union[TimeGrid, np.ndarray, tp.Sequence[float]]


def grid_times(grid: GridLike) -> np.ndarray:
    times = grid.times() if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=np.float64)
    times = np.atleast_1d(times)
    if times.ndim != 1:
        raise MeasureError("time grid must be one-dimensional")
    if times.size >= 2 and np.any(np.diff(times) <= 0.0):
        raise MeasureError("time grid must be strictly increasing")
    return times


def grid_metadata(times: np.ndarray) -> dict[str, tp.Any]:
    return {"t_min": float(times[0]), "t_max": float(times[-1]), "points": int(times.size)}


class TraceDistanceTrajectory(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    initial_distance: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> te.Self:
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if self.values.size and (
            np.min(self.values) < -TOL_VALUE or np.max(self.values) > 1.0 + TOL_VALUE
        ):
            raise ValueError("trace distances must lie in [0, 1]")
        return self

    def __len__(self) -> int:
        return int(self.times.size)


class IncreaseInterval(BaseModel):
    """Maximal run of strictly increasing samples, by index and by time."""

    i_start: int
    i_end: int
    t_start: float
    t_end: float
    gain: float


class MeasureResult(BaseModel):
    value: float = Field(ge=0.0)
    argmax: dict[str, tp.Any] | None = None
    increase_intervals: list[IncreaseInterval] = Field(default_factory=list)
    grid: dict[str, tp.Any] = Field(default_factory=dict)
    method: str = "trajectory"

    @model_validator(mode="after")
    def _check_gains(self) -> te.Self:
        total = math.fsum(interval.gain for interval in self.increase_intervals)
        if abs(total - self.value) > TOL_TELESCOPE:
            raise ValueError(f"value {self.value!r} differs from the sum of gains {total!r}")
        return self


def positive_variation(values: np.ndarray) -> np.ndarray:
    """Sum of sample-to-sample increases above INCREASE_TOL along the last axis."""
    steps = np.diff(values, axis=-1)
    return np.sum(np.where(steps > INCREASE_TOL, steps, 0.0), axis=-1)


def integrate_increases(traj: TraceDistanceTrajectory, normalize: bool = False) -> MeasureResult:
    values = traj.values
    if values.size < 2:
        raise MeasureError("a trajectory needs at least two points")
    up = np.diff(values) > INCREASE_TOL
    edges = np.diff(np.concatenate([[0], up.astype(np.int8), [0]]))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0]

    scale = 1.0 / traj.initial_distance if normalize else 1.0
    intervals = [
        IncreaseInterval(
            i_start=int(i),
            i_end=int(j),
            t_start=float(traj.times[i]),
            t_end=float(traj.times[j]),
            gain=float(values[j] - values[i]) * scale,
        )
        for i, j in zip(starts, ends)
    ]
    value = math.fsum(interval.gain for interval in intervals)
    discrete = float(positive_variation(values)) * scale
    if abs(discrete - value) > TOL_TELESCOPE * max(1.0, scale):
        raise MeasureError(f"run gains {value!r} disagree with summed increments {discrete!r}")
    return MeasureResult(
        value=value,
        increase_intervals=intervals,
        grid=grid_metadata(traj.times),
        method="normalized" if normalize else "trajectory",
    )


def trajectory(
    family: DynamicalMapFamily,
    rho_a: DensityMatrix,
    rho_b: DensityMatrix,
    grid: GridLike,
) -> TraceDistanceTrajectory:
    """D(Phi_t(rho_a), Phi_t(rho_b)) on the grid, both images checked to be states."""
    for rho in (rho_a, rho_b):
        if rho.dim != family.dim:
            raise DimensionMismatchError(
                f"family acts on dim {family.dim}, state has dim {rho.dim}"
            )
    initial = float(trace_distances(rho_a.entries, rho_b.entries))
    if initial <= TOL_DISTINCT:
        raise MeasureError("the two states coincide")
    times = family.check_times(grid_times(grid))
    images = evolve(family, times, np.stack([rho_a.entries, rho_b.entries]))
    try:
        validate_states(images, what=f"{family.kind} image")
    except StateError as exc:
        raise CPTPViolationError(str(exc)) from exc
    values = np.clip(trace_distances(images[0], images[1]), 0.0, 1.0)
    return TraceDistanceTrajectory(times=times, values=values, initial_distance=initial)


class _Propagator:
    """Distances D(t) = 1/2 ||Phi_t(delta)||_1 for batches of traceless differences."""

    def __init__(self, family: DynamicalMapFamily, times: np.ndarray) -> None:
        self.dim = family.dim
        self.times = family.check_times(times)
        if self.dim == 2:
            self._affine, _ = family.bloch_affine(self.times)
        else:
            self._superops = family.superoperators(self.times)

    def distances(self, deltas: np.ndarray) -> np.ndarray:
        if deltas.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"family acts on dim {self.dim}, differences have dim {deltas.shape[-1]}"
            )
        if self.dim == 2:
            moved = np.einsum("tij,nj->nti", self._affine, bloch_components(deltas))
            return 0.5 * np.linalg.norm(moved, axis=-1)
        d = self.dim
        vecs = deltas.reshape(deltas.shape[0], d * d)
        moved = np.einsum("tij,nj->nti", self._superops, vecs)
        return trace_distances(moved.reshape(deltas.shape[0], self.times.size, d, d))

    def trajectory(self, delta: np.ndarray, initial: float) -> TraceDistanceTrajectory:
        values = np.clip(self.distances(delta[None])[0], 0.0, 1.0)
        return TraceDistanceTrajectory(times=self.times, values=values, initial_distance=initial)


def _scan_increases(
    propagator: _Propagator, deltas: np.ndarray, chunk_size: int, jobs: int | None
) -> np.ndarray:
    def run(part: slice) -> np.ndarray:
        out = positive_variation(propagator.distances(deltas[part]))
        logger.debug("scanned states %d..%d", part.start, part.stop)
        return out

    parts = ordered_map(run, chunk_slices(len(deltas), chunk_size), jobs)
    return np.concatenate(parts) if parts else np.empty(0)


@dataclasses.dataclass(frozen=True)
class StateScan:
    """Per-state outcome of a scan next to the reduced MeasureResult."""

    theta: np.ndarray
    phi: np.ndarray
    increase: np.ndarray
    normalized_increase: np.ndarray
    result: MeasureResult

    def __len__(self) -> int:
        return int(self.increase.size)

    def rows(self) -> tp.Iterator[tuple[float, float, float, float]]:
        for row in zip(self.theta, self.phi, self.increase, self.normalized_increase):
            yield tuple(float(x) for x in row)  # type: ignore[misc]


def _reduce(
    propagator: _Propagator,
    deltas: np.ndarray,
    initial: np.ndarray,
    scores: np.ndarray,
    normalize: bool,
    describe: tp.Callable[[int], dict[str, tp.Any]],
    metadata: dict[str, tp.Any],
    method: str,
) -> MeasureResult:
    if scores.size == 0:
        raise MeasureError("empty lattice")
    best = int(np.argmax(scores))
    traj = propagator.trajectory(deltas[best], float(initial[best]))
    result = integrate_increases(traj, normalize=normalize)
    return result.model_copy(
        update={
            "argmax": {"index": best, **describe(best)},
            "grid": {**result.grid, **metadata},
            "method": method,
        }
    )


def _state_descriptor(state: np.ndarray) -> dict[str, tp.Any]:
    out: dict[str, tp.Any] = {"state": MatrixPayload.from_array(state).model_dump()}
    if state.shape[-1] == 2:
        out["bloch"] = density_to_bloch(DensityMatrix(state)).model_dump()
    return out


def orthogonal_pairs(
    dim: int, lattice: DirectionLattice
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (rho1, rho2, theta, phi) for the lattice: antipodal pure qubit pairs on an
    angle lattice, otherwise seeded Haar-random orthogonal pure pairs.
    """
    if lattice.is_angular:
        if dim != 2:
            raise DimensionMismatchError("angular pair lattices describe qubits only")
        theta, phi = lattice.angles()
        rho1 = pure_qubit_states(theta, phi)
        rho2 = np.eye(2)[None] - rho1
        return rho1, rho2, theta, phi
    rng = np.random.default_rng(lattice.seed)
    unitaries = np.stack([haar_unitary(dim, rng) for _ in range(lattice.size)])
    u0 = unitaries[:, :, 0]
    u1 = unitaries[:, :, 1]
    rho1 = np.einsum("ni,nj->nij", u0, np.conj(u0))
    rho2 = np.einsum("ni,nj->nij", u1, np.conj(u1))
    nan = np.full(lattice.size, np.nan)
    return rho1, rho2, nan, nan.copy()


def orthogonal_scan(
    family: DynamicalMapFamily,
    pair_lattice: DirectionLattice,
    grid: GridLike,
    jobs: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> StateScan:
    rho1, rho2, theta, phi = orthogonal_pairs(family.dim, pair_lattice)
    propagator = _Propagator(family, grid_times(grid))
    deltas = rho1 - rho2
    initial = trace_distances(deltas)
    increase = _scan_increases(propagator, deltas, chunk_size, jobs)

    def describe(i: int) -> dict[str, tp.Any]:
        out = {"rho1": _state_descriptor(rho1[i]), "rho2": _state_descriptor(rho2[i])}
        if pair_lattice.is_angular:
            out.update(theta=float(theta[i]), phi=float(phi[i]))
        return out

    result = _reduce(
        propagator,
        deltas,
        initial,
        increase,
        normalize=False,
        describe=describe,
        metadata={"lattice": pair_lattice.model_dump(exclude_none=True)},
        method="orthogonal",
    )
    logger.info(
        "orthogonal scan of %s over %d pairs: N = %.6g", family.kind, len(deltas), result.value
    )
    return StateScan(theta, phi, increase, increase / initial, result)


def measure_orthogonal_scan(
    family: DynamicalMapFamily,
    pair_lattice: DirectionLattice,
    grid: GridLike,
    jobs: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> MeasureResult:
    return orthogonal_scan(family, pair_lattice, grid, jobs, chunk_size).result


def _check_reference(
    family: DynamicalMapFamily, rho0: DensityMatrix, surface: EnclosingSurface
) -> None:
    if rho0.dim != family.dim:
        raise DimensionMismatchError(
            f"family acts on dim {family.dim}, reference has dim {rho0.dim}"
        )
    if not is_interior(rho0, INTERIOR_EPS):
        raise SurfaceError("reference state is not interior")
    if not same_state(rho0, surface.reference):
        raise SurfaceError("surface is built around a different reference state")


def local_scan(
    family: DynamicalMapFamily,
    rho0: DensityMatrix,
    surface: EnclosingSurface,
    lattice: DirectionLattice | None,
    grid: GridLike,
    jobs: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> StateScan:
    _check_reference(family, rho0, surface)
    sample = surface.sample(lattice)
    deltas = sample.states - rho0.entries[None]
    initial = trace_distances(deltas)
    if np.any(initial <= TOL_DISTINCT):
        raise SurfaceError("a surface state coincides with the reference")
    propagator = _Propagator(family, grid_times(grid))
    increase = _scan_increases(propagator, deltas, chunk_size, jobs)
    normalized = increase / initial

    def describe(i: int) -> dict[str, tp.Any]:
        out = _state_descriptor(sample.states[i])
        if not math.isnan(sample.theta[i]):
            out.update(theta=float(sample.theta[i]), phi=float(sample.phi[i]))
        return out

    used = lattice or surface.lattice
    result = _reduce(
        propagator,
        deltas,
        initial,
        normalized,
        normalize=True,
        describe=describe,
        metadata={
            "surface": surface.kind.value,
            "lattice": used.model_dump(exclude_none=True) if used else None,
        },
        method="local",
    )
    logger.info(
        "local scan of %s over %d %s states: N = %.6g",
        family.kind,
        len(deltas),
        surface.kind.value,
        result.value,
    )
    return StateScan(sample.theta, sample.phi, increase, normalized, result)


def measure_local_scan(
    family: DynamicalMapFamily,
    rho0: DensityMatrix,
    surface: EnclosingSurface,
    lattice: DirectionLattice | None,
    grid: GridLike,
    jobs: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> MeasureResult:
    return local_scan(family, rho0, surface, lattice, grid, jobs, chunk_size).result


class EquivalenceReport(BaseModel):
    """
    Residuals between the normalized trajectory of (rho, rho0) and the
    trajectory of the orthogonal pair obtained from rho - rho0.
    """

    n_states: int
    n_times: int
    max_decomposition_residual: float
    max_pointwise_residual: float
    max_increment_residual: float
    max_measure_residual: float
    worst_index: int

    def ok(self, tol: float = 1e-9) -> bool:
        return max(self.max_pointwise_residual, self.max_measure_residual) <= tol


def equivalence_report(
    family: DynamicalMapFamily,
    rho0: DensityMatrix,
    surface: EnclosingSurface,
    lattice: DirectionLattice | None,
    grid: GridLike,
    jobs: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> EquivalenceReport:
    _check_reference(family, rho0, surface)
    states = surface.sample(lattice).states
    deltas = states - rho0.entries[None]
    propagator = _Propagator(family, grid_times(grid))

    def run(part: slice) -> np.ndarray:
        delta = deltas[part]
        rho1, rho2, lam = jordan_hahn_parts(delta)
        decomposition = np.max(np.abs(lam[:, None, None] * (rho1 - rho2) - delta), axis=(1, 2))
        scaled = propagator.distances(delta) / lam[:, None]
        paired = propagator.distances(rho1 - rho2)
        pointwise = np.max(np.abs(scaled - paired), axis=-1)
        increments = np.max(np.abs(np.diff(scaled, axis=-1) - np.diff(paired, axis=-1)), axis=-1)
        measure = np.abs(positive_variation(scaled) - positive_variation(paired))
        return np.stack([decomposition, pointwise, increments, measure], axis=-1)

    parts = ordered_map(run, chunk_slices(len(deltas), chunk_size), jobs)
    residuals = np.concatenate(parts)
    report = EquivalenceReport(
        n_states=len(deltas),
        n_times=int(propagator.times.size),
        max_decomposition_residual=float(np.max(residuals[:, 0])),
        max_pointwise_residual=float(np.max(residuals[:, 1])),
        max_increment_residual=float(np.max(residuals[:, 2])),
        max_measure_residual=float(np.max(residuals[:, 3])),
        worst_index=int(np.argmax(residuals[:, 1])),
    )
    logger.info(
        "equivalence residual %.3e over %d states", report.max_pointwise_residual, len(deltas)
    )
    return report
