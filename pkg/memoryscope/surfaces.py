"""
Enclosing surfaces around interior reference states.

A surface answers, for a traceless Hermitian direction A, the step lam > 0
placing rho0 + lam * A on the surface. Full kinds answer for every A;
hemispherical kinds answer for exactly one of +A and -A. Directions are
handled in batches of shape (N, d, d).
"""
import abc
import dataclasses
import enum
import logging
import math
import typing as tp

import numpy as np
import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, model_validator

from memoryscope.errors import DimensionMismatchError, StateError, SurfaceError
from memoryscope.linalg import (
    bloch_components,
    eigvalsh_hermitian,
    from_bloch_components,
    gaussian_traceless,
    hermitian_basis,
    matrix_sqrt_inverse,
    trace_norm,
)
from memoryscope.qstate import (
    TOL_PSD,
    DensityMatrix,
    TracelessDirection,
    trace_distances,
)

logger = logging.getLogger(__name__)

INTERIOR_EPS = 1e-9
TOL_SIGN = 1e-12


class DirectionLattice(BaseModel):
    """
    Deterministic direction sampling. Qubit lattices are angle grids with
    theta_k = (k + 1/2) pi / n_theta and phi_j = 2 pi j / n_phi (theta-major);
    otherwise ``n_directions`` seeded Gaussian traceless directions.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_theta: int | None = Field(default=None, ge=1)
    n_phi: int | None = Field(default=None, ge=1)
    n_directions: int | None = Field(default=None, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_kind(self) -> te.Self:
        angular = self.n_theta is not None or self.n_phi is not None
        if angular and (self.n_theta is None or self.n_phi is None):
            raise ValueError("angular lattices need both n_theta and n_phi")
        if angular == (self.n_directions is not None):
            raise ValueError("give either n_theta/n_phi or n_directions")
        return self

    @classmethod
    def dense(cls) -> te.Self:
        """50 x 100 angles at spacing 2 pi / 100: 5000 states."""
        return cls(n_theta=50, n_phi=100)

    @property
    def is_angular(self) -> bool:
        return self.n_theta is not None

    @property
    def size(self) -> int:
        if self.is_angular:
            assert self.n_theta is not None and self.n_phi is not None
            return self.n_theta * self.n_phi
        assert self.n_directions is not None
        return self.n_directions

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.is_angular:
            raise SurfaceError("lattice has no angles; it samples random directions")
        assert self.n_theta is not None and self.n_phi is not None
        theta = (np.arange(self.n_theta) + 0.5) * math.pi / self.n_theta
        phi = np.arange(self.n_phi) * 2.0 * math.pi / self.n_phi
        grid_theta, grid_phi = np.meshgrid(theta, phi, indexing="ij")
        return grid_theta.ravel(), grid_phi.ravel()

    def unit_vectors(self) -> np.ndarray:
        theta, phi = self.angles()
        return unit_bloch(theta, phi)

    def directions(self, dim: int) -> np.ndarray:
        if self.is_angular:
            if dim != 2:
                raise DimensionMismatchError("angular lattices describe qubit directions only")
            return from_bloch_components(self.unit_vectors(), trace=0.0)
        assert self.n_directions is not None
        return gaussian_traceless(dim, np.random.default_rng(self.seed), self.n_directions)


def unit_bloch(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    s = np.sin(theta)
    return np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=-1)


def bloch_angles(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar and azimuthal angles of nonzero Bloch vectors, phi in [0, 2 pi)."""
    norm = np.linalg.norm(vectors, axis=-1)
    theta = np.arccos(np.clip(vectors[..., 2] / norm, -1.0, 1.0))
    phi = np.mod(np.arctan2(vectors[..., 1], vectors[..., 0]), 2.0 * math.pi)
    return theta, phi


def pure_qubit_states(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return from_bloch_components(unit_bloch(theta, phi))


class SurfaceKind(str, enum.Enum):
    SPHERE = "sphere"
    CONVEX_COMBINATION = "convex_combination"
    CUSTOM_RADIAL = "custom_radial"
    HEMISPHERICAL_PATCHWORK = "hemispherical_patchwork"


class RayHit(tp.NamedTuple):
    lam: float
    sign: int
    point: DensityMatrix


@dataclasses.dataclass(frozen=True)
class SurfaceSample:
    """Surface states (N, d, d) with the angles of their directions from rho0, NaN if none."""

    states: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __len__(self) -> int:
        return int(self.states.shape[0])


def half_trace_norms(directions: np.ndarray) -> np.ndarray:
    return 0.5 * trace_norm(directions)


class EnclosingSurface(abc.ABC):
    kind: tp.ClassVar[SurfaceKind]
    hemispherical: tp.ClassVar[bool] = False

    def __init__(
        self,
        reference: DensityMatrix,
        lattice: DirectionLattice | None = None,
        interior_eps: float = INTERIOR_EPS,
    ) -> None:
        if reference.min_eigenvalue() < interior_eps:
            raise SurfaceError(
                f"reference state is not interior: min eigenvalue "
                f"{reference.min_eigenvalue():.3e} < {interior_eps:g}"
            )
        self.reference = reference
        self.lattice = lattice

    @property
    def dim(self) -> int:
        return self.reference.dim

    @abc.abstractmethod
    def radii(self, directions: np.ndarray) -> np.ndarray:
        """Steps lam for +A per direction; NaN where +A has no intersection."""

    def radius(self, direction: TracelessDirection) -> float | None:
        lam = float(self.radii(direction.entries[None])[0])
        return None if math.isnan(lam) else lam

    def ray_intersection(self, direction: TracelessDirection) -> RayHit:
        if direction.dim != self.dim:
            raise DimensionMismatchError(f"direction dim {direction.dim} != surface dim {self.dim}")
        for sign, candidate in ((1, direction), (-1, -direction)):
            lam = self.radius(candidate)
            if lam is not None and lam > 0.0:
                point = self.reference.entries + lam * candidate.entries
                try:
                    return RayHit(lam, sign, DensityMatrix(point))
                except StateError as exc:
                    raise SurfaceError(
                        f"direction leaves the state space before reaching the surface: {exc}"
                    ) from exc
            if not self.hemispherical:
                break
        raise SurfaceError("direction has no intersection with the surface")

    def sample(self, lattice: DirectionLattice | None = None) -> SurfaceSample:
        lattice = lattice or self.lattice
        if lattice is None:
            raise SurfaceError("no lattice given and the surface carries none")
        directions = lattice.directions(self.dim)
        theta, phi = _lattice_angles(lattice)
        if self.hemispherical:
            directions = directions * canonical_signs(directions)[:, None, None]
            if lattice.is_angular:
                theta, phi = bloch_angles(bloch_components(directions))
        lam = self.radii(directions)
        if np.any(np.isnan(lam)):
            raise SurfaceError(f"{int(np.sum(np.isnan(lam)))} lattice directions miss the surface")
        states = self.reference.entries[None] + lam[:, None, None] * directions
        return SurfaceSample(states, theta, phi)

    def describe(self) -> dict[str, tp.Any]:
        out: dict[str, tp.Any] = {
            "kind": self.kind.value,
            "reference": self.reference.to_payload().model_dump(),
        }
        if self.lattice is not None:
            out["lattice"] = self.lattice.model_dump(exclude_none=True)
        return out


def _lattice_angles(lattice: DirectionLattice) -> tuple[np.ndarray, np.ndarray]:
    if lattice.is_angular:
        return lattice.angles()
    nan = np.full(lattice.size, np.nan)
    return nan, nan.copy()


def _interior_margin(reference: DensityMatrix) -> float:
    return reference.min_eigenvalue()


class SphereSurface(EnclosingSurface):
    """States at trace distance eps from the reference."""

    kind = SurfaceKind.SPHERE

    def __init__(
        self,
        reference: DensityMatrix,
        eps: float,
        lattice: DirectionLattice | None = None,
        strict: bool = True,
    ) -> None:
        super().__init__(reference, lattice)
        if not eps > 0.0:
            raise SurfaceError(f"eps must be positive, got {eps}")
        if strict and eps >= _interior_margin(reference):
            raise SurfaceError(
                f"eps {eps:g} reaches beyond the interior margin "
                f"{_interior_margin(reference):.6g} of the reference"
            )
        self.eps = eps

    def radii(self, directions: np.ndarray) -> np.ndarray:
        return self.eps / half_trace_norms(directions)

    def describe(self) -> dict[str, tp.Any]:
        return {**super().describe(), "eps": self.eps}


class ConvexCombinationSurface(EnclosingSurface):
    """
    (1 - w) rho0 + w rho_b with rho_b the boundary state on the ray from rho0
    along each lattice direction; for qubits the boundary states are pure.
    """

    kind = SurfaceKind.CONVEX_COMBINATION

    def __init__(
        self, reference: DensityMatrix, w: float, lattice: DirectionLattice | None = None
    ) -> None:
        super().__init__(reference, lattice)
        if not 0.0 < w <= 1.0:
            raise SurfaceError(f"weight w must lie in (0, 1], got {w}")
        self.w = w

    def boundary_steps(self, directions: np.ndarray) -> np.ndarray:
        """mu > 0 with rho0 + mu * A on the state-space boundary."""
        if self.dim == 2:
            b0 = bloch_components(self.reference.entries)
            a = bloch_components(directions)
            norm = np.linalg.norm(a, axis=-1)
            unit = a / norm[:, None]
            proj = unit @ b0
            mu = -proj + np.sqrt(proj * proj + 1.0 - b0 @ b0)
            return mu / norm
        root = matrix_sqrt_inverse(self.reference.entries)
        scaled = root[None] @ directions @ root[None]
        return -1.0 / eigvalsh_hermitian(scaled)[:, 0]

    def radii(self, directions: np.ndarray) -> np.ndarray:
        return self.w * self.boundary_steps(directions)

    def describe(self) -> dict[str, tp.Any]:
        return {**super().describe(), "w": self.w}


RadialFunction = tp.Callable[[np.ndarray], np.ndarray]


class RadialSurface(EnclosingSurface):
    """
    Surface given by a trace-distance radius per direction; the radial function
    receives directions normalized to trace norm 2 and returns radii, with
    non-positive values meaning no intersection.
    """

    kind = SurfaceKind.CUSTOM_RADIAL

    def __init__(
        self,
        reference: DensityMatrix,
        radial: RadialFunction,
        lattice: DirectionLattice | None = None,
    ) -> None:
        super().__init__(reference, lattice)
        self.radial = radial

    def radii(self, directions: np.ndarray) -> np.ndarray:
        half = half_trace_norms(directions)
        r = np.asarray(self.radial(directions / half[:, None, None]), dtype=np.float64)
        return np.where(r > 0.0, r / half, np.nan)


def basis_coordinates(directions: np.ndarray) -> np.ndarray:
    basis = hermitian_basis(directions.shape[-1])
    return np.einsum("kij,nji->nk", basis, directions).real


def canonical_signs(directions: np.ndarray) -> np.ndarray:
    """
    +1 for directions in the fundamental half of direction space, -1 otherwise.
    The first basis coordinate above tolerance decides; for qubits this orders
    the Bloch components as z, then x, then y.
    """
    coords = basis_coordinates(directions)
    scale = np.max(np.abs(coords), axis=-1, keepdims=True)
    significant = np.abs(coords) > TOL_SIGN * np.maximum(scale, 1e-300)
    first = np.argmax(significant, axis=-1)
    lead = np.take_along_axis(coords, first[:, None], axis=-1)[:, 0]
    return np.where(lead > 0.0, 1.0, -1.0)


class HemisphericalSurface(EnclosingSurface):
    """
    Patchwork hemispherical surface: only directions in the fundamental half
    intersect, at trace-distance radii that are constant on azimuthal sectors
    of the second and third basis coordinates. Several distinct radii give a
    disconnected surface.
    """

    kind = SurfaceKind.HEMISPHERICAL_PATCHWORK
    hemispherical = True

    def __init__(
        self,
        reference: DensityMatrix,
        radii: tp.Sequence[float],
        lattice: DirectionLattice | None = None,
        strict: bool = True,
    ) -> None:
        super().__init__(reference, lattice)
        if not radii or any(not r > 0.0 for r in radii):
            raise SurfaceError("patch radii must be positive")
        if strict and max(radii) >= _interior_margin(reference):
            raise SurfaceError(
                f"patch radius {max(radii):g} reaches beyond the interior margin "
                f"{_interior_margin(reference):.6g} of the reference"
            )
        self.patch_radii = tuple(float(r) for r in radii)

    def sectors(self, directions: np.ndarray) -> np.ndarray:
        coords = basis_coordinates(directions)
        azimuth = np.mod(np.arctan2(coords[:, 2], coords[:, 1]), 2.0 * math.pi)
        n = len(self.patch_radii)
        return np.minimum((azimuth / (2.0 * math.pi / n)).astype(int), n - 1)

    def radii(self, directions: np.ndarray) -> np.ndarray:
        r = np.asarray(self.patch_radii)[self.sectors(directions)]
        lam = r / half_trace_norms(directions)
        return np.where(canonical_signs(directions) > 0.0, lam, np.nan)

    def describe(self) -> dict[str, tp.Any]:
        return {**super().describe(), "radii": list(self.patch_radii)}


def make_convex_combination_surface(
    rho0: DensityMatrix, w: float, pure_lattice: DirectionLattice | None = None
) -> ConvexCombinationSurface:
    return ConvexCombinationSurface(rho0, w, pure_lattice)


def make_sphere_surface(
    rho0: DensityMatrix,
    eps: float,
    lattice: DirectionLattice | None = None,
    strict: bool = True,
) -> SphereSurface:
    return SphereSurface(rho0, eps, lattice, strict=strict)


def make_radial_surface(
    rho0: DensityMatrix, radial: RadialFunction, lattice: DirectionLattice | None = None
) -> RadialSurface:
    return RadialSurface(rho0, radial, lattice)


def make_hemispherical_surface(
    rho0: DensityMatrix,
    radii: tp.Sequence[float],
    lattice: DirectionLattice | None = None,
    strict: bool = True,
) -> HemisphericalSurface:
    return HemisphericalSurface(rho0, radii, lattice, strict=strict)


def ray_intersection(
    rho0: DensityMatrix, direction: TracelessDirection, surface: EnclosingSurface
) -> RayHit:
    if not same_state(rho0, surface.reference):
        raise SurfaceError("surface is built around a different reference state")
    return surface.ray_intersection(direction)


def same_state(a: DensityMatrix, b: DensityMatrix, tol: float = 1e-12) -> bool:
    return a.dim == b.dim and float(np.max(np.abs(a.entries - b.entries))) <= tol


class SurfaceFailure(BaseModel):
    index: int
    direction: list[float]
    reason: str


class SurfaceReport(BaseModel):
    kind: str
    n_directions: int
    seed: int
    failures: list[SurfaceFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def _direction_label(direction: np.ndarray) -> list[float]:
    if direction.shape[-1] == 2:
        return [float(c) for c in bloch_components(direction)]
    return [float(c) for c in basis_coordinates(direction[None])[0]]


def validate_surface(surface: EnclosingSurface, n_directions: int, seed: int) -> SurfaceReport:
    """
    Probe ``n_directions`` seeded random directions: each must meet the surface
    (exactly one of +A, -A for hemispherical kinds) at a valid state distinct
    from the reference. Failures are reported, not raised.
    """
    directions = gaussian_traceless(surface.dim, np.random.default_rng(seed), n_directions)
    plus = surface.radii(directions)
    minus = surface.radii(-directions)
    hit_plus = ~np.isnan(plus) & (np.nan_to_num(plus) > 0.0)
    hit_minus = ~np.isnan(minus) & (np.nan_to_num(minus) > 0.0)

    failures: list[SurfaceFailure] = []
    reasons: dict[int, str] = {}
    if surface.hemispherical:
        for i in np.nonzero(hit_plus & hit_minus)[0]:
            reasons[int(i)] = "both A and -A meet the hemispherical surface"
        for i in np.nonzero(~hit_plus & ~hit_minus)[0]:
            reasons[int(i)] = "neither A nor -A meets the surface"
        steps = np.where(hit_plus, plus, -np.nan_to_num(minus))
    else:
        for i in np.nonzero(~hit_plus)[0]:
            reasons[int(i)] = "direction has no intersection"
        steps = np.where(hit_plus, plus, 0.0)

    hit = hit_plus | hit_minus
    points = surface.reference.entries[None] + np.nan_to_num(steps)[:, None, None] * directions
    min_eig = eigvalsh_hermitian(points)[:, 0]
    distance = trace_distances(points, surface.reference.entries[None])
    for i in np.nonzero(hit & (min_eig < -TOL_PSD))[0]:
        reasons.setdefault(
            int(i), f"intersection leaves the state space (min eigenvalue {min_eig[i]:.3e})"
        )
    for i in np.nonzero(hit & (distance <= 0.0))[0]:
        reasons.setdefault(int(i), "intersection coincides with the reference")

    for i in sorted(reasons):
        failures.append(
            SurfaceFailure(index=i, direction=_direction_label(directions[i]), reason=reasons[i])
        )
    report = SurfaceReport(
        kind=surface.kind.value, n_directions=n_directions, seed=seed, failures=failures
    )
    logger.info("validated %s surface: %d/%d failures", report.kind, len(failures), n_directions)
    return report

