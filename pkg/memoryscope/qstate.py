"""
State-space algebra for finite-dimensional quantum systems.

Density matrices, Bloch vectors, traceless directions and orthogonal pairs are
immutable values validated on construction. Batched helpers operating on plain
``(..., d, d)`` arrays back the scan engines; the classes wrap single states for
the public API and for JSON exchange.
"""
import logging
import math
import typing as tp

import numpy as np
import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from memoryscope.errors import DimensionMismatchError, NumericalError, StateError
from memoryscope.linalg import (
    bloch_components,
    eigh_hermitian,
    eigvalsh_hermitian,
    from_bloch_components,
    ginibre_state,
    hermitize,
    trace_norm,
)

logger = logging.getLogger(__name__)

TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_PSD = 1e-9
TOL_ORTHO = 1e-8
TOL_DISTINCT = 1e-12
TOL_ROUND = 1e-12

TWO_PI = 2.0 * math.pi


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


def _check_square(entries: np.ndarray, min_dim: int = 2) -> int:
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise StateError(f"expected a square matrix, got shape {entries.shape}")
    dim = entries.shape[0]
    if dim < min_dim:
        raise StateError(f"dimension must be at least {min_dim}, got {dim}")
    return dim


def validate_states(states: np.ndarray, what: str = "state") -> None:
    """
    Check the density-matrix invariants on a batch ``(..., d, d)``.
    Raises StateError naming the first offending entry.
    """
    states = np.asarray(states)
    flat = states.reshape(-1, *states.shape[-2:])
    herm = np.max(np.abs(flat - np.conj(np.swapaxes(flat, -1, -2))), axis=(1, 2))
    trace_err = np.abs(np.trace(flat, axis1=1, axis2=2) - 1.0)
    if not np.all(np.isfinite(flat)):
        raise StateError(f"{what} has non-finite entries")
    eigenvalues = eigvalsh_hermitian(flat)
    if not np.all(np.isfinite(eigenvalues)):
        raise NumericalError(f"eigenvalues of {what} did not converge to finite values")
    min_eig = eigenvalues[:, 0]
    for label, bad in (
        ("not Hermitian", herm > TOL_HERM),
        ("trace differs from one", trace_err > TOL_TRACE),
        ("not positive semidefinite", min_eig < -TOL_PSD),
    ):
        if bad.any():
            index = int(np.argmax(bad))
            raise StateError(
                f"{what} #{index} is {label} "
                f"(hermiticity {herm[index]:.3e}, trace error {trace_err[index]:.3e}, "
                f"min eigenvalue {min_eig[index]:.3e})"
            )


class MatrixPayload(BaseModel):
    """JSON form {"dim": n, "re": [[...]], "im": [[...]]} of an operator."""

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(ge=1)
    re: list[list[float]]
    im: list[list[float]]

    @model_validator(mode="after")
    def _check_shape(self) -> te.Self:
        for name in ("re", "im"):
            rows = getattr(self, name)
            if len(rows) != self.dim or any(len(row) != self.dim for row in rows):
                raise ValueError(f"'{name}' must be a {self.dim}x{self.dim} array")
        return self

    def to_array(self) -> np.ndarray:
        return np.asarray(self.re, dtype=np.float64) + 1j * np.asarray(
            self.im, dtype=np.float64
        )

    @classmethod
    def from_array(cls, entries: np.ndarray) -> te.Self:
        entries = np.asarray(entries)
        return cls(
            dim=entries.shape[0],
            re=entries.real.tolist(),
            im=entries.imag.tolist(),
        )


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator."""

    __slots__ = ("_entries",)

    def __init__(self, entries: tp.Any) -> None:
        arr = np.asarray(entries, dtype=np.complex128)
        _check_square(arr)
        validate_states(arr[None], what="density matrix")
        self._entries = _readonly(hermitize(arr))

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return int(self._entries.shape[0])

    def eigenvalues(self) -> np.ndarray:
        return eigvalsh_hermitian(self._entries)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def purity(self) -> float:
        return float(np.real(np.trace(self._entries @ self._entries)))

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """(1 - weight) * self + weight * other."""
        _same_dim(self, other)
        return DensityMatrix((1.0 - weight) * self._entries + weight * other._entries)

    @classmethod
    def maximally_mixed(cls, dim: int) -> te.Self:
        return cls(np.eye(dim) / dim)

    @classmethod
    def pure(cls, vector: tp.Sequence[complex] | np.ndarray) -> te.Self:
        psi = np.asarray(vector, dtype=np.complex128)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, np.conj(psi)))

    @classmethod
    def basis(cls, dim: int, index: int) -> te.Self:
        psi = np.zeros(dim)
        psi[index] = 1.0
        return cls.pure(psi)

    def to_payload(self) -> MatrixPayload:
        return MatrixPayload.from_array(self._entries)

    @classmethod
    def from_payload(cls, payload: MatrixPayload | dict[str, tp.Any]) -> te.Self:
        if isinstance(payload, dict):
            payload = MatrixPayload.model_validate(payload)
        return cls(payload.to_array())

    def __repr__(self) -> str:
        eigenvalues = np.round(self.eigenvalues(), 6).tolist()
        return f"DensityMatrix(dim={self.dim}, eigenvalues={eigenvalues})"


class BlochVector(BaseModel):
    """Spherical Bloch coordinates of a qubit state; angles in radians."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    r: float = Field(ge=0.0, le=1.0)
    theta: float = Field(ge=0.0, le=math.pi)
    phi: float = 0.0

    @field_validator("phi")
    @classmethod
    def _canonical_phi(cls, value: float) -> float:
        value = math.fmod(value, TWO_PI)
        if value < 0.0:
            value += TWO_PI
        if value >= TWO_PI:
            value = 0.0
        return value

    def cartesian(self) -> np.ndarray:
        s = math.sin(self.theta)
        return self.r * np.array(
            [s * math.cos(self.phi), s * math.sin(self.phi), math.cos(self.theta)]
        )

    @classmethod
    def from_cartesian(cls, vec: tp.Sequence[float] | np.ndarray) -> te.Self:
        x, y, z = (float(c) for c in vec)
        r = math.sqrt(x * x + y * y + z * z)
        if r > 1.0:
            if r > 1.0 + 2.0 * TOL_PSD:
                raise StateError(f"Bloch radius {r} exceeds 1")
            r = 1.0
        if r <= TOL_ROUND:
            return cls(r=0.0, theta=0.0, phi=0.0)
        theta = math.acos(max(-1.0, min(1.0, z / r)))
        transverse = math.hypot(x, y)
        phi = 0.0 if transverse <= TOL_ROUND * max(r, 1.0) else math.atan2(y, x)
        return cls(r=r, theta=theta, phi=phi)


class TracelessDirection:
    """Nonzero Hermitian traceless operator: a direction in state space."""

    __slots__ = ("_entries",)

    def __init__(self, entries: tp.Any) -> None:
        arr = np.asarray(entries, dtype=np.complex128)
        _check_square(arr)
        if np.max(np.abs(arr - np.conj(arr.T))) > TOL_HERM:
            raise StateError("direction is not Hermitian")
        if abs(np.trace(arr)) > TOL_TRACE:
            raise StateError(f"direction has nonzero trace {np.trace(arr):.3e}")
        if float(np.max(np.abs(eigvalsh_hermitian(arr)))) <= TOL_DISTINCT:
            raise StateError("direction is the zero operator")
        self._entries = _readonly(hermitize(arr))

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return int(self._entries.shape[0])

    def trace_norm(self) -> float:
        return float(trace_norm(self._entries))

    def __neg__(self) -> "TracelessDirection":
        return TracelessDirection(-self._entries)

    @classmethod
    def from_bloch(cls, vec: tp.Sequence[float] | np.ndarray) -> te.Self:
        """Qubit direction 1/2 v . sigma; its trace norm is |v|."""
        return cls(from_bloch_components(np.asarray(vec, dtype=np.float64), trace=0.0))

    @classmethod
    def between(cls, rho: DensityMatrix, rho0: DensityMatrix) -> te.Self:
        _same_dim(rho, rho0)
        return cls(rho.entries - rho0.entries)

    def __repr__(self) -> str:
        return f"TracelessDirection(dim={self.dim}, trace_norm={self.trace_norm():.6g})"


class OrthogonalPair:
    """Two states with orthogonal supports, Tr(rho1 rho2) ~ 0."""

    __slots__ = ("rho1", "rho2")

    def __init__(self, rho1: DensityMatrix, rho2: DensityMatrix) -> None:
        _same_dim(rho1, rho2)
        overlap = float(np.real(np.trace(rho1.entries @ rho2.entries)))
        if overlap > TOL_ORTHO:
            raise StateError(f"supports are not orthogonal: Tr(rho1 rho2) = {overlap:.3e}")
        self.rho1 = rho1
        self.rho2 = rho2

    def overlap(self) -> float:
        return float(np.real(np.trace(self.rho1.entries @ self.rho2.entries)))

    def __iter__(self) -> tp.Iterator[DensityMatrix]:
        yield self.rho1
        yield self.rho2


def _same_dim(a: tp.Any, b: tp.Any) -> None:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} != {b.dim}")


def trace_distances(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """
    Batched trace distance 1/2 Tr|a - b|; with ``b`` omitted ``a`` holds the
    differences themselves.
    """
    delta = np.asarray(a) if b is None else np.asarray(a) - np.asarray(b)
    return 0.5 * trace_norm(delta)


def trace_distance(rho_a: DensityMatrix, rho_b: DensityMatrix) -> float:
    _same_dim(rho_a, rho_b)
    value = float(trace_distances(rho_a.entries, rho_b.entries))
    if not math.isfinite(value):
        raise NumericalError("trace distance is not finite")
    return min(max(value, 0.0), 1.0)


def jordan_hahn_parts(
    delta: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split traceless Hermitian operators into normalized positive and negative
    parts: delta = lam * (rho1 - rho2) with orthogonal rho1, rho2.
    Returns (rho1, rho2, lam) batched over leading axes.
    """
    w, v = eigh_hermitian(delta)
    v_h = np.conj(np.swapaxes(v, -1, -2))
    pos = np.where(w > 0.0, w, 0.0)
    neg = np.where(w < 0.0, -w, 0.0)
    p_trace = pos.sum(axis=-1)
    n_trace = neg.sum(axis=-1)
    if np.any(np.minimum(p_trace, n_trace) <= TOL_DISTINCT):
        raise StateError("states coincide; the difference has no direction")
    positive = (v * pos[..., None, :]) @ v_h
    negative = (v * neg[..., None, :]) @ v_h
    rho1 = hermitize(positive / p_trace[..., None, None])
    rho2 = hermitize(negative / n_trace[..., None, None])
    return rho1, rho2, 0.5 * (p_trace + n_trace)


def jordan_hahn_pair(
    rho: DensityMatrix, rho0: DensityMatrix
) -> tuple[OrthogonalPair, float]:
    """
    Orthogonal pair (rho1, rho2) and lam = D(rho, rho0) such that
    rho1 - rho2 = (rho - rho0) / lam.
    """
    _same_dim(rho, rho0)
    if trace_distance(rho, rho0) <= TOL_DISTINCT:
        raise StateError("rho equals rho0 within tolerance; no direction to decompose")
    rho1, rho2, lam = jordan_hahn_parts(rho.entries - rho0.entries)
    return OrthogonalPair(DensityMatrix(rho1), DensityMatrix(rho2)), float(lam)


def is_interior(rho: DensityMatrix, eps: float) -> bool:
    return rho.min_eigenvalue() >= eps


def bloch_to_density(b: BlochVector) -> DensityMatrix:
    return DensityMatrix(from_bloch_components(b.cartesian()))


def density_to_bloch(rho: DensityMatrix) -> BlochVector:
    if rho.dim != 2:
        raise DimensionMismatchError(f"Bloch coordinates need a qubit, got dim {rho.dim}")
    return BlochVector.from_cartesian(bloch_components(rho.entries))


def project_to_state(matrix: tp.Any) -> DensityMatrix:
    """
    Nearest density matrix in Frobenius norm: hermitize, then project the
    spectrum onto the probability simplex. Meant for noisy data ingestion.
    """
    arr = hermitize(np.asarray(matrix, dtype=np.complex128))
    _check_square(arr)
    w, v = eigh_hermitian(arr)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(u) + 1)
    rho_idx = int(np.nonzero(u - css / k > 0)[0][-1])
    shift = css[rho_idx] / (rho_idx + 1)
    p = np.maximum(w - shift, 0.0)
    return DensityMatrix((v * p) @ np.conj(v.T))


def random_density_matrix(
    dim: int, rng: np.random.Generator, rank: int | None = None
) -> DensityMatrix:
    return DensityMatrix(ginibre_state(dim, rng, rank))


REFERENCE_PRESETS: dict[str, BlochVector] = {
    "r01": BlochVector(r=0.20, theta=0.5 * math.pi, phi=13.0 * math.pi / 50.0),
    "r02": BlochVector(r=0.88, theta=8.0 * math.pi / 50.0, phi=13.0 * math.pi / 50.0),
}

StatePreset = tp.Literal["r01", "r02", "maximally_mixed"]
StateSpec = tp.Union[StatePreset, BlochVector, MatrixPayload]


def parse_state(value: tp.Any) -> DensityMatrix:
    """
    Build a state from its JSON form: a preset name ("r01", "r02",
    "maximally_mixed"), a Bloch object or a matrix payload.
    """
    if isinstance(value, DensityMatrix):
        return value
    if isinstance(value, BlochVector):
        return bloch_to_density(value)
    if isinstance(value, MatrixPayload):
        return DensityMatrix.from_payload(value)
    if isinstance(value, str):
        if value == "maximally_mixed":
            return DensityMatrix.maximally_mixed(2)
        if value in REFERENCE_PRESETS:
            return bloch_to_density(REFERENCE_PRESETS[value])
        raise StateError(f"unknown state preset '{value}'")
    if isinstance(value, dict):
        if "dim" in value:
            return DensityMatrix.from_payload(value)
        return bloch_to_density(BlochVector.model_validate(value))
    raise StateError(f"cannot interpret {value!r} as a state")
