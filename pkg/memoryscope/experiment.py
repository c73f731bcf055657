"""
Polarization-qubit dephasing experiment: surface scans around the two
reference states, orthogonal-pair scans, z-binned increase profiles and the
three-row comparison of methods across spectral amplitudes.

Datasets evaluate the trace distance at two plate thicknesses L1 < L2 and keep
signed increases; nothing is clamped.
"""
import dataclasses
import enum
import logging
import math
import typing as tp

import numpy as np
import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from memoryscope.dynamics import (
    DelayMap,
    DynamicalMapFamily,
    FPDephasingFamily,
    FPDephasingParams,
    ThicknessGrid,
    fp_dephasing_family,
    kappa,
)
from memoryscope.errors import DimensionMismatchError, MeasureError, SurfaceError
from memoryscope.linalg import bloch_components
from memoryscope.measure import (
    StateScan,
    local_scan,
    orthogonal_scan,
    positive_variation,
    trajectory,
)
from memoryscope.parallel import DEFAULT_CHUNK_SIZE, chunk_slices, ordered_map
from memoryscope.qstate import DensityMatrix, StateSpec, parse_state
from memoryscope.surfaces import ConvexCombinationSurface, DirectionLattice, unit_bloch

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (175.0, 318.0)
TABLE_AMPLITUDES = (0.64, 0.22, 0.01)
CALIBRATION_TARGET = 0.59
CALIBRATION_BOUNDS = (0.95, 1.05)


class Reading(str, enum.Enum):
    """
    WINDOWED: the single increase between L1 and L2.
    FULL: all increases on the thickness grid.
    """

    WINDOWED = "windowed"
    FULL = "full"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    params: FPDephasingParams = FPDephasingParams(a_alpha=0.64)
    delay: DelayMap | None = None
    thickness: ThicknessGrid = ThicknessGrid()
    window: tuple[float, float] = DEFAULT_WINDOW
    reference: StateSpec = "r01"
    w: float = Field(default=0.7, gt=0.0, le=1.0)
    lattice: DirectionLattice = DirectionLattice.dense()
    n_bins: int = Field(default=25, ge=2)
    noise: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    chunk_size: int = Field(default=DEFAULT_CHUNK_SIZE, ge=1)

    @model_validator(mode="after")
    def _check_window(self) -> te.Self:
        l1, l2 = self.window
        if not l1 < l2:
            raise ValueError(f"window needs L1 < L2, got {self.window}")
        if l1 < self.thickness.L_min_lambda or l2 > self.thickness.L_max_lambda:
            raise ValueError(
                f"window {self.window} leaves the thickness grid "
                f"[{self.thickness.L_min_lambda:g}, {self.thickness.L_max_lambda:g}]"
            )
        if not self.lattice.is_angular:
            raise ValueError("the experiment scans an angle lattice")
        return self

    def reference_state(self) -> DensityMatrix:
        return parse_state(self.reference)

    def delay_map(self) -> DelayMap:
        return self.delay or DelayMap.retardation(self.params)

    def family(self) -> FPDephasingFamily:
        return fp_dephasing_family(self.params, self.delay_map(), self.thickness)

    def with_amplitude(self, a_alpha: float) -> te.Self:
        return self.model_copy(
            update={"params": self.params.model_copy(update={"a_alpha": a_alpha})}
        )


def local_coordinates(deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spherical (r, theta, phi) of Bloch difference vectors (..., 3); phi in [0, 2 pi)."""
    x, y, z = deltas[..., 0], deltas[..., 1], deltas[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    theta = np.arccos(np.clip(z / np.where(r > 0.0, r, 1.0), -1.0, 1.0))
    phi = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    return r, theta, phi


def local_coords(rho: DensityMatrix, rho0: DensityMatrix) -> tuple[float, float, float]:
    """
    Spherical coordinates of b(rho) - b(rho0) in axes parallel to the global
    Bloch frame and centered at rho0; r_loc is twice the trace distance.
    """
    if rho.dim != 2 or rho0.dim != 2:
        raise DimensionMismatchError("local coordinates are defined for qubits")
    delta = bloch_components(rho.entries) - bloch_components(rho0.entries)
    if float(np.linalg.norm(delta)) <= 1e-12:
        raise MeasureError("state coincides with the reference")
    r, theta, phi = local_coordinates(delta)
    return float(r), float(theta), float(phi)


def _times_for(family: DynamicalMapFamily, l1: float, l2: float) -> np.ndarray:
    if not l1 < l2:
        raise MeasureError(f"need L1 < L2, got {l1:g} and {l2:g}")
    if isinstance(family, FPDephasingFamily):
        return family.delays([l1, l2])
    return np.array([l1, l2], dtype=np.float64)


def increase_between(
    family: DynamicalMapFamily,
    rho_a: DensityMatrix,
    rho_b: DensityMatrix,
    l1: float,
    l2: float,
) -> float:
    """D at L2 minus D at L1, signed. Thicknesses are delays for non-optical families."""
    values = trajectory(family, rho_a, rho_b, _times_for(family, l1, l2)).values
    return float(values[1] - values[0])


COLUMNS = ("theta", "phi", "theta_loc", "phi_loc", "increase", "normalized_increase")


@dataclasses.dataclass(frozen=True)
class ScanDataset:
    """One row per scanned state (theta-major); columns as in COLUMNS."""

    label: str
    theta: np.ndarray
    phi: np.ndarray
    theta_loc: np.ndarray
    phi_loc: np.ndarray
    increase: np.ndarray
    normalized_increase: np.ndarray

    def __len__(self) -> int:
        return int(self.increase.size)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        return tp.cast(np.ndarray, getattr(self, name))

    def table(self) -> np.ndarray:
        return np.stack([self.column(name) for name in COLUMNS], axis=-1)

    def max_normalized(self) -> float:
        return float(np.max(self.normalized_increase))


def _into_ball(vectors: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.where(norm > 1.0, vectors / np.where(norm > 0.0, norm, 1.0), vectors)


def _two_time_dataset(
    label: str,
    family: FPDephasingFamily,
    config: ExperimentConfig,
    b_states: np.ndarray,
    b_refs: np.ndarray,
    theta: np.ndarray,
    phi: np.ndarray,
    jobs: int | None,
) -> ScanDataset:
    """
    Trace distances between Phi(rho) and Phi(rho_ref) at both thicknesses.
    With ``noise`` set, every reconstructed Bloch vector gets seeded Gaussian
    noise and is projected back into the Bloch ball.
    """
    m, c = family.bloch_affine(_times_for(family, *config.window))
    n = len(b_states)
    b_refs = np.broadcast_to(b_refs, b_states.shape)
    if config.noise > 0.0:
        rng = np.random.default_rng(config.seed)
        jitter = rng.normal(scale=config.noise, size=(2, n, 2, 3))
    else:
        jitter = np.zeros((2, n, 2, 3))

    def run(part: slice) -> np.ndarray:
        a = np.einsum("tij,nj->nti", m, b_states[part]) + c[None] + jitter[0, part]
        b = np.einsum("tij,nj->nti", m, b_refs[part]) + c[None] + jitter[1, part]
        return 0.5 * np.linalg.norm(_into_ball(a) - _into_ball(b), axis=-1)

    distances = np.concatenate(ordered_map(run, chunk_slices(n, config.chunk_size), jobs))
    deltas = b_states - b_refs
    initial = 0.5 * np.linalg.norm(deltas, axis=-1)
    if np.any(initial <= 1e-12):
        raise SurfaceError(f"{label}: a scanned state coincides with its partner")
    increase = distances[:, 1] - distances[:, 0]
    _, theta_loc, phi_loc = local_coordinates(deltas)
    return ScanDataset(
        label=label,
        theta=np.asarray(theta, dtype=np.float64),
        phi=np.asarray(phi, dtype=np.float64),
        theta_loc=theta_loc,
        phi_loc=phi_loc,
        increase=increase,
        normalized_increase=increase / initial,
    )


def surface_scan_dataset(
    config: ExperimentConfig,
    family: FPDephasingFamily | None = None,
    jobs: int | None = None,
    label: str | None = None,
) -> ScanDataset:
    """
    Scan (1 - w) rho0 + w rho_pure along the lattice directions and record the
    increase of D(Phi(rho), Phi(rho0)) between the two window thicknesses.
    """
    family = family or config.family()
    rho0 = config.reference_state()
    surface = ConvexCombinationSurface(rho0, config.w, config.lattice)
    sample = surface.sample()
    b_states = bloch_components(sample.states)
    if np.any(np.linalg.norm(b_states, axis=-1) >= 1.0 - 1e-12):
        raise SurfaceError("surface contains a pure state")
    name = label or f"surface_{config.reference if isinstance(config.reference, str) else 'custom'}"
    dataset = _two_time_dataset(
        name,
        family,
        config,
        b_states,
        bloch_components(rho0.entries)[None],
        sample.theta,
        sample.phi,
        jobs,
    )
    logger.info(
        "%s: %d states, max normalized increase %.6g", name, len(dataset), dataset.max_normalized()
    )
    return dataset


def orthogonal_dataset(
    config: ExperimentConfig,
    family: FPDephasingFamily | None = None,
    jobs: int | None = None,
    label: str = "orthogonal",
) -> ScanDataset:
    """Antipodal pure pairs on the lattice; local coordinates are the angles of rho1."""
    family = family or config.family()
    theta, phi = config.lattice.angles()
    n = unit_bloch(theta, phi)
    dataset = _two_time_dataset(label, family, config, n, -n, theta, phi, jobs)
    logger.info("%s: %d pairs, max increase %.6g", label, len(dataset), dataset.max_normalized())
    return dataset


@dataclasses.dataclass(frozen=True)
class BinnedProfile:
    """Per-bin statistics on z_loc = cos(theta_loc); empty bins are left out."""

    theta_loc: np.ndarray
    z_mean: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return int(self.counts.size)

    def peak(self) -> tuple[float, float]:
        """(mean, std) of the bin with the largest mean."""
        i = int(np.argmax(self.mean))
        return float(self.mean[i]), float(self.std[i])


def bin_average(
    dataset: ScanDataset, n_bins: int, column: str = "normalized_increase"
) -> BinnedProfile:
    if n_bins < 2:
        raise MeasureError(f"need at least 2 bins, got {n_bins}")
    if len(dataset) == 0:
        raise MeasureError("cannot bin an empty dataset")
    z = np.cos(dataset.theta_loc)
    values = dataset.column(column)
    index = np.clip(((z + 1.0) * 0.5 * n_bins).astype(int), 0, n_bins - 1)

    rows = []
    for k in range(n_bins):
        mask = index == k
        count = int(np.count_nonzero(mask))
        if count == 0:
            continue
        z_mean = float(np.mean(z[mask]))
        std = float(np.std(values[mask], ddof=1)) if count > 1 else 0.0
        theta = math.acos(max(-1.0, min(1.0, z_mean)))
        rows.append((theta, z_mean, float(np.mean(values[mask])), std, count))
    theta_loc, z_mean, mean, std, counts = (np.array(col) for col in zip(*rows))
    return BinnedProfile(theta_loc, z_mean, mean, std, counts.astype(np.int64))


def compare_profiles(a: BinnedProfile, b: BinnedProfile) -> float:
    """Largest |mean_a - mean_b| with b interpolated at the z-means of a."""
    order = np.argsort(b.z_mean)
    interpolated = np.interp(a.z_mean, b.z_mean[order], b.mean[order])
    return float(np.max(np.abs(a.mean - interpolated)))


def theoretical_measure(
    params: FPDephasingParams,
    delay: DelayMap,
    window: tuple[float, float] = DEFAULT_WINDOW,
    reading: Reading = Reading.WINDOWED,
    thickness: ThicknessGrid | None = None,
) -> float:
    """
    Model value from the decoherence function alone: equatorial antipodal pairs
    follow D = |kappa|, and no pair does better.
    """
    if reading is Reading.WINDOWED:
        k1, k2 = np.abs(kappa(delay.delay(np.asarray(window)), params))
        return max(float(k2 - k1), 0.0)
    grid = (thickness or ThicknessGrid()).thicknesses()
    return float(positive_variation(np.abs(kappa(delay.delay(grid), params))))


class DelayCalibration(BaseModel):
    """Delay map fitted to the target value of the strongest-memory row."""

    model_config = ConfigDict(frozen=True)

    delay: DelayMap
    base_scale: float
    target: float
    achieved: float
    a_alpha: float
    amplitude_convention: str
    frequency_convention: str
    window: tuple[float, float]


def calibrate_delay(
    params: FPDephasingParams,
    target: float = CALIBRATION_TARGET,
    window: tuple[float, float] = DEFAULT_WINDOW,
    base: DelayMap | None = None,
    bounds: tuple[float, float] = CALIBRATION_BOUNDS,
) -> DelayCalibration:
    """
    Fit the thickness-to-delay scale within ``bounds`` times the base scale
    (the retardation reading by default) so the windowed model value hits
    ``target``.
    """
    base = base or DelayMap.retardation(params)

    def loss(scale: float) -> float:
        trial = DelayMap(scale=scale, offset=base.offset)
        return (theoretical_measure(params, trial, window) - target) ** 2

    res = optimize.minimize_scalar(
        loss,
        bounds=(bounds[0] * base.scale, bounds[1] * base.scale),
        method="bounded",
        options={"xatol": 1e-12 * base.scale},
    )
    delay = DelayMap(scale=float(res.x), offset=base.offset)
    achieved = theoretical_measure(params, delay, window)
    logger.info(
        "calibrated delay scale %.6e (base %.6e): model value %.6f for target %.4f",
        delay.scale,
        base.scale,
        achieved,
        target,
    )
    return DelayCalibration(
        delay=delay,
        base_scale=base.scale,
        target=target,
        achieved=achieved,
        a_alpha=params.a_alpha,
        amplitude_convention=params.amplitude_convention.value,
        frequency_convention=params.frequency_convention.value,
        window=window,
    )


class MethodValue(BaseModel):
    value: float
    binned_mean: float
    binned_std: float


class Table1Row(BaseModel):
    a_alpha: float
    n_ref1: MethodValue
    n_ref2: MethodValue
    n_orth: MethodValue
    n_theo: float


class Table1(BaseModel):
    reading: Reading
    window: tuple[float, float]
    rows: list[Table1Row]

    def format(self) -> str:
        header = f"{'A_alpha':>8}  {'N(r01)':>18}  {'N(r02)':>18}  {'N(orth)':>18}  {'N_theo':>8}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            cells = [
                f"{m.binned_mean:+.4f}±{m.binned_std:.4f}"
                for m in (row.n_ref1, row.n_ref2, row.n_orth)
            ]
            lines.append(
                f"{row.a_alpha:>8.2f}  {cells[0]:>18}  {cells[1]:>18}  {cells[2]:>18}  "
                f"{row.n_theo:>8.4f}"
            )
        return "\n".join(lines) + "\n"


@dataclasses.dataclass
class Table1Result:
    table: Table1
    datasets: dict[str, ScanDataset]
    profiles: dict[str, BinnedProfile]
    calibration: DelayCalibration | None


def _method_value(
    dataset: ScanDataset, profile: BinnedProfile, full: StateScan | None
) -> MethodValue:
    mean, std = profile.peak()
    value = full.result.value if full is not None else dataset.max_normalized()
    return MethodValue(value=value, binned_mean=mean, binned_std=std)


def table1_run(
    config: ExperimentConfig | None = None,
    calibration: DelayCalibration | None = None,
    reading: Reading = Reading.WINDOWED,
    amplitudes: tp.Sequence[float] = TABLE_AMPLITUDES,
    jobs: int | None = None,
) -> Table1Result:
    """
    For each spectral amplitude: windowed datasets around r01 and r02 and for
    orthogonal pairs, their binned profiles, and one table row. The delay map
    comes from ``calibration`` when given, else from the config.
    """
    config = config or ExperimentConfig()
    if calibration is not None:
        config = config.model_copy(update={"delay": calibration.delay})

    rows: list[Table1Row] = []
    datasets: dict[str, ScanDataset] = {}
    profiles: dict[str, BinnedProfile] = {}
    for a_alpha in amplitudes:
        cfg = config.with_amplitude(a_alpha)
        family = cfg.family()
        tag = f"a{round(a_alpha * 100):03d}"
        values: dict[str, MethodValue] = {}
        for method in ("r01", "r02", "orthogonal"):
            key = f"{tag}_{method}"
            if method == "orthogonal":
                dataset = orthogonal_dataset(cfg, family, jobs, label=key)
            else:
                ref_cfg = cfg.model_copy(update={"reference": method})
                dataset = surface_scan_dataset(ref_cfg, family, jobs, label=key)
            profile = bin_average(dataset, cfg.n_bins)
            full = _full_reading(cfg, family, method, jobs) if reading is Reading.FULL else None
            datasets[key] = dataset
            profiles[key] = profile
            values[method] = _method_value(dataset, profile, full)
        rows.append(
            Table1Row(
                a_alpha=a_alpha,
                n_ref1=values["r01"],
                n_ref2=values["r02"],
                n_orth=values["orthogonal"],
                n_theo=theoretical_measure(
                    cfg.params, cfg.delay_map(), cfg.window, reading, cfg.thickness
                ),
            )
        )
        logger.info("row A_alpha=%.2f done", a_alpha)
    table = Table1(reading=reading, window=config.window, rows=rows)
    return Table1Result(table, datasets, profiles, calibration)


def _full_reading(
    config: ExperimentConfig, family: FPDephasingFamily, method: str, jobs: int | None
) -> StateScan:
    times = family.delays(config.thickness.thicknesses())
    if method == "orthogonal":
        return orthogonal_scan(family, config.lattice, times, jobs, config.chunk_size)
    rho0 = parse_state(method)
    surface = ConvexCombinationSurface(rho0, config.w, config.lattice)
    return local_scan(family, rho0, surface, None, times, jobs, config.chunk_size)
