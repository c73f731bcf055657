"""
Time-parametrized families of completely positive, trace-preserving maps.

Every family exposes its maps as superoperators acting on row-major vectorized
operators, ``vec(X)[i * d + j] = X[i, j]``. Qubit families additionally expose
the affine Bloch form ``b -> M b + c``. Families are immutable; evaluation is a
pure function of the time array.
"""
import abc
import enum
import logging
import math
import typing as tp

import numpy as np
import typing_extensions as te
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from memoryscope.errors import (
    CPTPViolationError,
    DimensionMismatchError,
    DynamicsError,
    StateError,
)
from memoryscope.linalg import PAULI, eigh_hermitian, eigvalsh_hermitian
from memoryscope.qstate import DensityMatrix

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 2.998e8

TOL_IDENTITY = 1e-12
TOL_TRACE_PRESERVATION = 1e-10
TOL_CHOI = 1e-9

# rows are vec(sigma_mu), mu = 0..3
PAULI_VEC = PAULI.reshape(4, 4)


class Representation(str, enum.Enum):
    BLOCH_AFFINE = "qubit-bloch-affine"
    KRAUS = "kraus"


class FrequencyConvention(str, enum.Enum):
    ANGULAR = "angular"
    ORDINARY = "ordinary"


class AmplitudeConvention(str, enum.Enum):
    WEIGHT_RATIO = "weight_ratio"
    FIELD_RATIO = "field_ratio"
    ABSOLUTE = "absolute"


class FPDephasingParams(BaseModel):
    """
    Two-peak frequency spectrum of the Fabry-Perot filtered photons.

    ``sigma`` and ``delta_omega`` are in Hz and read as angular frequencies
    unless ``frequency_convention`` is "ordinary" (then scaled by 2 pi).
    ``a_alpha`` is the relative amplitude of the second peak, interpreted per
    ``amplitude_convention``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    a_alpha: float = Field(
        ge=0.0, le=1.0, validation_alias=AliasChoices("a_alpha", "A_alpha")
    )
    sigma: float = Field(default=7.7e11, gt=0.0)
    delta_omega: float = Field(default=7.2e12, gt=0.0)
    delta_n: float = Field(default=8.9e-3, gt=0.0)
    lambda0: float = Field(default=780e-9, gt=0.0)
    frequency_convention: FrequencyConvention = FrequencyConvention.ANGULAR
    amplitude_convention: AmplitudeConvention = AmplitudeConvention.WEIGHT_RATIO

    @property
    def _frequency_scale(self) -> float:
        if self.frequency_convention is FrequencyConvention.ORDINARY:
            return 2.0 * math.pi
        return 1.0

    @property
    def angular_sigma(self) -> float:
        return self.sigma * self._frequency_scale

    @property
    def angular_delta_omega(self) -> float:
        return self.delta_omega * self._frequency_scale

    def peak_weights(self) -> tuple[float, float]:
        a = self.a_alpha
        if self.amplitude_convention is AmplitudeConvention.ABSOLUTE:
            return 1.0 - a, a
        ratio = a * a if self.amplitude_convention is AmplitudeConvention.FIELD_RATIO else a
        return 1.0 / (1.0 + ratio), ratio / (1.0 + ratio)


class DelayMap(BaseModel):
    """Affine plate-thickness to delay rule, tau = scale * L + offset, L in lambda0 units."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scale: float = Field(gt=0.0)
    offset: float = 0.0

    @classmethod
    def birefringent(cls, params: FPDephasingParams) -> te.Self:
        """Group delay of a plate with birefringence delta_n: tau = delta_n * L / c."""
        return cls(scale=params.delta_n * params.lambda0 / SPEED_OF_LIGHT)

    @classmethod
    def retardation(cls, params: FPDephasingParams) -> te.Self:
        """Thickness read as retardation in wavelengths: tau = L * lambda0 / c."""
        return cls(scale=params.lambda0 / SPEED_OF_LIGHT)

    def delay(self, thickness: tp.Any) -> tp.Any:
        return self.scale * np.asarray(thickness, dtype=np.float64) + self.offset


class TimeGrid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_min: float = Field(default=0.0, ge=0.0)
    t_max: float
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_order(self) -> te.Self:
        if not self.t_max > self.t_min:
            raise ValueError("t_max must exceed t_min")
        return self

    def times(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.points)


class ThicknessGrid(BaseModel):
    """Plate thicknesses in units of lambda0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    L_min_lambda: float = Field(default=75.0, ge=0.0)
    L_max_lambda: float = Field(default=318.0, gt=0.0)
    points: int = 2000

    @model_validator(mode="after")
    def _check_order(self) -> te.Self:
        if self.points < 1:
            raise ValueError("thickness grid is empty")
        if self.L_max_lambda < self.L_min_lambda:
            raise ValueError("L_max_lambda must not be below L_min_lambda")
        return self

    def thicknesses(self) -> np.ndarray:
        return np.linspace(self.L_min_lambda, self.L_max_lambda, self.points)


def kappa(tau: tp.Any, params: FPDephasingParams) -> tp.Any:
    """
    Decoherence function of the two-Gaussian spectrum,
    exp(-sigma^2 tau^2 / 2) * (w1 + w2 exp(i delta_omega tau)), global phase dropped.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0.0):
        raise DynamicsError("kappa is defined for non-negative delays only")
    w1, w2 = params.peak_weights()
    envelope = np.exp(-0.5 * (params.angular_sigma * tau) ** 2)
    value = envelope * (w1 + w2 * np.exp(1j * params.angular_delta_omega * tau))
    return value[()] if value.ndim == 0 else value


def kappa_quadrature(tau: float, params: FPDephasingParams) -> complex:
    """
    Direct numerical Fourier integral of the two-peak spectrum, the reference
    the closed form is checked against. Frequencies are integrated in units of
    sigma.
    """
    if tau < 0.0:
        raise DynamicsError("kappa is defined for non-negative delays only")
    w1, w2 = params.peak_weights()
    sigma = params.angular_sigma
    shift = params.angular_delta_omega / sigma
    phase_rate = sigma * tau
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def density(x: float) -> float:
        return norm * (w1 * math.exp(-0.5 * x * x) + w2 * math.exp(-0.5 * (x - shift) ** 2))

    lower, upper = -14.0, shift + 14.0
    options = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
    re, _ = integrate.quad(lambda x: density(x) * math.cos(phase_rate * x), lower, upper, **options)
    im, _ = integrate.quad(lambda x: density(x) * math.sin(phase_rate * x), lower, upper, **options)
    return complex(re, im)


def _superoperators_from_ptm(ptm: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ai,tab,bj->tij", PAULI_VEC, ptm, np.conj(PAULI_VEC))


def _ptm_from_superoperators(superops: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ai,tij,bj->tab", np.conj(PAULI_VEC), superops, PAULI_VEC).real


class DynamicalMapFamily(abc.ABC):
    """
    Family {Phi_t, 0 <= t <= horizon, Phi_0 = I} of CPTP maps on dim x dim operators.
    """

    kind: tp.ClassVar[str] = "family"

    def __init__(self, dim: int, horizon: float, representation: Representation) -> None:
        if dim < 2:
            raise DynamicsError(f"dimension must be at least 2, got {dim}")
        if not horizon >= 0.0:
            raise DynamicsError(f"horizon must be non-negative, got {horizon}")
        self.dim = dim
        self.horizon = float(horizon)
        self.representation = representation

    def check_times(self, times: tp.Any) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        slack = 1e-12 * max(1.0, self.horizon)
        if t.size and (np.min(t) < 0.0 or np.max(t) > self.horizon + slack):
            raise DynamicsError(
                f"time outside [0, {self.horizon:g}]: [{np.min(t):g}, {np.max(t):g}]"
            )
        return t

    @abc.abstractmethod
    def superoperators(self, times: tp.Any) -> np.ndarray:
        """Stack of (d^2, d^2) superoperators, one per time."""

    def pauli_transfer(self, times: tp.Any) -> np.ndarray:
        self._require_qubit()
        return _ptm_from_superoperators(self.superoperators(times))

    def bloch_affine(self, times: tp.Any) -> tuple[np.ndarray, np.ndarray]:
        """(M, c) stacks with Phi_t acting on Bloch vectors as b -> M b + c."""
        ptm = self.pauli_transfer(times)
        return ptm[:, 1:, 1:], ptm[:, 1:, 0]

    def choi(self, t: float) -> np.ndarray:
        return choi_matrices(self.superoperators([t]), self.dim)[0]

    def describe(self) -> dict[str, tp.Any]:
        return {
            "family": self.kind,
            "dim": self.dim,
            "horizon": self.horizon,
            "representation": self.representation.value,
        }

    def _require_qubit(self) -> None:
        if self.dim != 2:
            raise DimensionMismatchError(f"{self.kind} acts on dim {self.dim}, not a qubit")


class BlochAffineFamily(DynamicalMapFamily):
    def __init__(self, horizon: float) -> None:
        super().__init__(2, horizon, Representation.BLOCH_AFFINE)

    @abc.abstractmethod
    def bloch_affine(self, times: tp.Any) -> tuple[np.ndarray, np.ndarray]:
        ...

    def pauli_transfer(self, times: tp.Any) -> np.ndarray:
        m, c = self.bloch_affine(times)
        ptm = np.zeros((m.shape[0], 4, 4))
        ptm[:, 0, 0] = 1.0
        ptm[:, 1:, 0] = c
        ptm[:, 1:, 1:] = m
        return ptm

    def superoperators(self, times: tp.Any) -> np.ndarray:
        return _superoperators_from_ptm(self.pauli_transfer(times))


class KrausFamily(DynamicalMapFamily):
    def __init__(self, dim: int, horizon: float) -> None:
        super().__init__(dim, horizon, Representation.KRAUS)

    @abc.abstractmethod
    def kraus(self, times: tp.Any) -> np.ndarray:
        """Kraus operators, shape (T, k, d, d)."""

    def superoperators(self, times: tp.Any) -> np.ndarray:
        k = self.kraus(times)
        d = self.dim
        superops = np.einsum("tkij,tklm->tiljm", k, np.conj(k))
        return superops.reshape(k.shape[0], d * d, d * d)


class IdentityFamily(KrausFamily):
    kind = "identity"

    def kraus(self, times: tp.Any) -> np.ndarray:
        t = self.check_times(times)
        eye = np.eye(self.dim, dtype=np.complex128)
        return np.broadcast_to(eye, (t.size, 1, self.dim, self.dim)).copy()


class FPDephasingFamily(BlochAffineFamily):
    """
    Pure dephasing in the H/V basis: rho_01 -> kappa(tau) rho_01, populations fixed.
    The time parameter is the delay tau in seconds.
    """

    kind = "fp_dephasing"

    def __init__(self, params: FPDephasingParams, delay: DelayMap, horizon: float) -> None:
        super().__init__(horizon)
        self.params = params
        self.delay = delay

    def bloch_affine(self, times: tp.Any) -> tuple[np.ndarray, np.ndarray]:
        t = self.check_times(times)
        k = np.atleast_1d(kappa(t, self.params))
        mag = np.abs(k)
        cos = mag * np.cos(np.angle(k))
        sin = mag * np.sin(np.angle(k))
        m = np.zeros((t.size, 3, 3))
        m[:, 0, 0] = cos
        m[:, 0, 1] = sin
        m[:, 1, 0] = -sin
        m[:, 1, 1] = cos
        m[:, 2, 2] = 1.0
        return m, np.zeros((t.size, 3))

    def delays(self, thickness: tp.Any) -> np.ndarray:
        return np.atleast_1d(self.delay.delay(thickness))

    def describe(self) -> dict[str, tp.Any]:
        out = super().describe()
        out["params"] = self.params.model_dump(mode="json")
        out["delay"] = self.delay.model_dump(mode="json")
        return out


class AmplitudeDampingFamily(KrausFamily):
    """Qubit amplitude damping toward |0><0| with p(t) = 1 - exp(-gamma t)."""

    kind = "amplitude_damping"

    def __init__(self, gamma: float, horizon: float | None = None) -> None:
        if not gamma > 0.0:
            raise DynamicsError(f"gamma must be positive, got {gamma}")
        super().__init__(2, 20.0 / gamma if horizon is None else horizon)
        self.gamma = gamma

    def decay_probability(self, times: tp.Any) -> np.ndarray:
        return -np.expm1(-self.gamma * self.check_times(times))

    def kraus(self, times: tp.Any) -> np.ndarray:
        p = self.decay_probability(times)
        k = np.zeros((p.size, 2, 2, 2), dtype=np.complex128)
        k[:, 0, 0, 0] = 1.0
        k[:, 0, 1, 1] = np.sqrt(1.0 - p)
        k[:, 1, 0, 1] = np.sqrt(p)
        return k

    def describe(self) -> dict[str, tp.Any]:
        out = super().describe()
        out["gamma"] = self.gamma
        return out


class RandomCPTPFamily(KrausFamily):
    """
    Seeded random family from a unitary dilation: a Hermitian generator H on
    system (x) environment, U(t) = exp(-i t H), environment starting in |0>.
    Kraus operators K_k(t) = <k|_E U(t) |0>_E.
    """

    kind = "random_cptp"
    SUPPORTED_DIMS = (2, 3, 4)

    def __init__(
        self, seed: int, dim: int, strength: float = 2.0 * math.pi, horizon: float = 1.0
    ) -> None:
        if dim not in self.SUPPORTED_DIMS:
            raise DynamicsError(f"random families support dims {self.SUPPORTED_DIMS}, got {dim}")
        super().__init__(dim, horizon)
        self.seed = seed
        self.strength = strength
        rng = np.random.default_rng(seed)
        n = dim * dim
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        energies, basis = eigh_hermitian(0.5 * (g + np.conj(g.T)))
        self._energies = energies * (strength / np.max(np.abs(energies)))
        self._basis = basis

    def unitaries(self, times: tp.Any) -> np.ndarray:
        t = self.check_times(times)
        phases = np.exp(-1j * t[:, None] * self._energies[None, :])
        return np.einsum("ij,tj,kj->tik", self._basis, phases, np.conj(self._basis))

    def kraus(self, times: tp.Any) -> np.ndarray:
        d = self.dim
        u = self.unitaries(times).reshape(-1, d, d, d, d)
        # u[t, s, e, s', e'] ; environment enters in |0>
        return np.transpose(u[:, :, :, :, 0], (0, 2, 1, 3))

    def describe(self) -> dict[str, tp.Any]:
        out = super().describe()
        out.update(seed=self.seed, strength=self.strength)
        return out


def identity_family(dim: int = 2, horizon: float = 1.0) -> IdentityFamily:
    return IdentityFamily(dim, horizon)


def fp_dephasing_family(
    params: FPDephasingParams,
    delay: DelayMap | None = None,
    thickness: ThicknessGrid | None = None,
) -> FPDephasingFamily:
    """
    Dephasing family over a plate-thickness grid; the horizon is the delay of
    the thickest plate. ``delay`` defaults to the birefringent group delay.
    """
    thickness = thickness or ThicknessGrid()
    delay = delay or DelayMap.birefringent(params)
    if thickness.points < 1:
        raise DynamicsError("thickness grid is empty")
    horizon = float(delay.delay(thickness.L_max_lambda))
    if float(delay.delay(thickness.L_min_lambda)) < 0.0:
        raise DynamicsError("delay map yields negative delays on the thickness grid")
    return FPDephasingFamily(params, delay, horizon)


def amplitude_damping_family(gamma: float, horizon: float | None = None) -> AmplitudeDampingFamily:
    return AmplitudeDampingFamily(gamma, horizon)


def random_cptp_family(seed: int, dim: int, strength: float = 2.0 * math.pi) -> RandomCPTPFamily:
    return RandomCPTPFamily(seed, dim, strength)


def _check_dim(family: DynamicalMapFamily, states: np.ndarray) -> None:
    if states.shape[-1] != family.dim:
        raise DimensionMismatchError(
            f"family acts on dim {family.dim}, state has dim {states.shape[-1]}"
        )


def evolve(family: DynamicalMapFamily, times: tp.Any, operators: np.ndarray) -> np.ndarray:
    """
    Apply Phi_t to a batch of operators (N, d, d) at every time; returns (N, T, d, d).
    Works for arbitrary (not necessarily positive) operators by linearity.
    """
    ops = np.asarray(operators, dtype=np.complex128)
    _check_dim(family, ops)
    d = family.dim
    superops = family.superoperators(times)
    vecs = ops.reshape(ops.shape[0], d * d)
    out = np.einsum("tij,nj->nti", superops, vecs)
    return out.reshape(ops.shape[0], superops.shape[0], d, d)


def apply_map(family: DynamicalMapFamily, t: float, rho: DensityMatrix) -> DensityMatrix:
    if rho.dim != family.dim:
        raise DimensionMismatchError(f"family acts on dim {family.dim}, state has dim {rho.dim}")
    family.check_times([t])
    out = evolve(family, [t], rho.entries[None])[0, 0]
    try:
        return DensityMatrix(out)
    except StateError as exc:
        raise CPTPViolationError(
            f"{family.kind} at t={t:g} produced an invalid state: {exc}"
        ) from exc


def choi_matrices(superops: np.ndarray, dim: int) -> np.ndarray:
    """Choi matrices sum_ij |i><j| (x) Phi(|i><j|) from row-major superoperators."""
    d = dim
    s4 = superops.reshape(-1, d, d, d, d)
    return np.transpose(s4, (0, 3, 1, 4, 2)).reshape(-1, d * d, d * d)


class FamilyReport(BaseModel):
    family: str
    points: int
    max_trace_error: float
    min_choi_eigenvalue: float
    identity_error: float

    @property
    def ok(self) -> bool:
        return (
            self.max_trace_error <= TOL_TRACE_PRESERVATION
            and self.min_choi_eigenvalue >= -TOL_CHOI
            and self.identity_error <= TOL_IDENTITY
        )

    def raise_if_failed(self) -> None:
        if not self.ok:
            raise CPTPViolationError(
                f"{self.family}: trace error {self.max_trace_error:.3e}, "
                f"Choi min eigenvalue {self.min_choi_eigenvalue:.3e}, "
                f"identity error {self.identity_error:.3e}"
            )


def check_family(family: DynamicalMapFamily, times: tp.Any) -> FamilyReport:
    """Trace preservation, complete positivity and Phi_0 = I on the given times."""
    t = family.check_times(times)
    d = family.dim
    superops = family.superoperators(t)
    # Tr Phi(|i><j|) = delta_ij
    traces = np.einsum("tkkij->tij", superops.reshape(-1, d, d, d, d))
    trace_error = float(np.max(np.abs(traces - np.eye(d))))
    choi_min = float(np.min(eigvalsh_hermitian(choi_matrices(superops, d))))
    at_zero = family.superoperators([0.0])[0]
    identity_error = float(np.max(np.abs(at_zero - np.eye(d * d))))
    report = FamilyReport(
        family=family.kind,
        points=int(t.size),
        max_trace_error=trace_error,
        min_choi_eigenvalue=choi_min,
        identity_error=identity_error,
    )
    logger.debug("CPTP check %s", report)
    return report
