"""
JSON run configuration.

Every model forbids unknown keys. Dynamics and surfaces are discriminated
unions on ``family`` and ``kind``. Loader failures become ``ConfigError`` with
the JSON line and column for syntax errors, or the dotted key path for schema
errors.
"""
import json
import math
import pathlib
import typing as tp

import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from memoryscope.dynamics import (
    DelayMap,
    DynamicalMapFamily,
    FPDephasingFamily,
    FPDephasingParams,
    ThicknessGrid,
    TimeGrid,
    amplitude_damping_family,
    fp_dephasing_family,
    identity_family,
    random_cptp_family,
)
from memoryscope.errors import ConfigError
from memoryscope.experiment import ExperimentConfig
from memoryscope.parallel import DEFAULT_CHUNK_SIZE
from memoryscope.qstate import DensityMatrix, StateSpec, parse_state
from memoryscope.surfaces import (
    DirectionLattice,
    EnclosingSurface,
    make_convex_combination_surface,
    make_hemispherical_surface,
    make_sphere_surface,
)


class Schema(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FPDephasingSpec(Schema):
    family: tp.Literal["fp_dephasing"]
    params: FPDephasingParams
    grid: ThicknessGrid | TimeGrid = ThicknessGrid()
    delay: DelayMap | None = None
    delay_reading: tp.Literal["birefringent", "retardation"] = "birefringent"

    def delay_map(self) -> DelayMap:
        if self.delay is not None:
            return self.delay
        if self.delay_reading == "retardation":
            return DelayMap.retardation(self.params)
        return DelayMap.birefringent(self.params)

    def build(self) -> tuple[DynamicalMapFamily, tp.Any]:
        if isinstance(self.grid, TimeGrid):
            family = FPDephasingFamily(self.params, self.delay_map(), self.grid.t_max)
            return family, self.grid.times()
        family = fp_dephasing_family(self.params, self.delay_map(), self.grid)
        return family, family.delays(self.grid.thicknesses())

    def windowed(self, l1: float, l2: float) -> te.Self:
        if isinstance(self.grid, TimeGrid):
            t1, t2 = (float(t) for t in self.delay_map().delay([l1, l2]))
            grid: ThicknessGrid | TimeGrid = TimeGrid(t_min=t1, t_max=t2, points=self.grid.points)
        else:
            grid = ThicknessGrid(L_min_lambda=l1, L_max_lambda=l2, points=self.grid.points)
        return self.model_copy(update={"grid": grid})


class GammaParams(Schema):
    gamma: float = Field(gt=0.0)


class AmplitudeDampingSpec(Schema):
    family: tp.Literal["amplitude_damping"]
    params: GammaParams
    grid: TimeGrid

    def build(self) -> tuple[DynamicalMapFamily, tp.Any]:
        family = amplitude_damping_family(self.params.gamma, horizon=self.grid.t_max)
        return family, self.grid.times()


class RandomCPTPParams(Schema):
    seed: int = 0
    dim: tp.Literal[2, 3, 4] = 2
    strength: float = Field(default=2.0 * math.pi, gt=0.0)


class RandomCPTPSpec(Schema):
    family: tp.Literal["random_cptp"]
    params: RandomCPTPParams = RandomCPTPParams()
    grid: TimeGrid = TimeGrid(t_max=1.0, points=2000)

    def build(self) -> tuple[DynamicalMapFamily, tp.Any]:
        if self.grid.t_max > 1.0:
            raise ConfigError(
                "random_cptp families are defined on [0, 1]", location="dynamics.grid.t_max"
            )
        family = random_cptp_family(self.params.seed, self.params.dim, self.params.strength)
        return family, self.grid.times()


class IdentityParams(Schema):
    dim: int = Field(default=2, ge=2)
    horizon: float = Field(default=1.0, gt=0.0)


class IdentitySpec(Schema):
    family: tp.Literal["identity"]
    params: IdentityParams = IdentityParams()
    grid: TimeGrid | None = None

    def build(self) -> tuple[DynamicalMapFamily, tp.Any]:
        grid = self.grid or TimeGrid(t_max=self.params.horizon, points=2)
        return identity_family(self.params.dim, max(self.params.horizon, grid.t_max)), grid.times()


DynamicsSpec = te.Annotated[
    tp.Union[FPDephasingSpec, AmplitudeDampingSpec, RandomCPTPSpec, IdentitySpec],
    Field(discriminator="family"),
]


class SphereSpec(Schema):
    kind: tp.Literal["sphere"]
    reference: StateSpec
    eps: float = Field(gt=0.0)
    lattice: DirectionLattice = DirectionLattice.dense()
    strict: bool = True

    def build(self) -> EnclosingSurface:
        return make_sphere_surface(parse_state(self.reference), self.eps, self.lattice, self.strict)


class ConvexCombinationSpec(Schema):
    kind: tp.Literal["convex_combination"]
    reference: StateSpec
    w: float = Field(default=0.7, gt=0.0, le=1.0)
    lattice: DirectionLattice = DirectionLattice.dense()

    def build(self) -> EnclosingSurface:
        return make_convex_combination_surface(parse_state(self.reference), self.w, self.lattice)


class HemisphericalSpec(Schema):
    kind: tp.Literal["hemispherical_patchwork"]
    reference: StateSpec
    radii: list[float] = Field(min_length=1)
    lattice: DirectionLattice = DirectionLattice.dense()
    strict: bool = True

    def build(self) -> EnclosingSurface:
        return make_hemispherical_surface(
            parse_state(self.reference), self.radii, self.lattice, self.strict
        )


SurfaceSpec = te.Annotated[
    tp.Union[SphereSpec, ConvexCombinationSpec, HemisphericalSpec],
    Field(discriminator="kind"),
]


class PairSpec(Schema):
    a: StateSpec
    b: StateSpec

    def build(self) -> tuple[DensityMatrix, DensityMatrix]:
        return parse_state(self.a), parse_state(self.b)


class ValidationSpec(Schema):
    n_directions: int = Field(default=10_000, ge=1)
    seed: int = 0
    cptp_points: int = Field(default=200, ge=2)


class RunConfig(Schema):
    dynamics: DynamicsSpec
    surface: SurfaceSpec | None = None
    pairs: DirectionLattice | None = None
    pair: PairSpec | None = None
    seed: int = 0
    chunk_size: int = Field(default=DEFAULT_CHUNK_SIZE, ge=1)
    validation: ValidationSpec = ValidationSpec()
    experiment: ExperimentConfig | None = None

    def pair_lattice(self, dim: int) -> DirectionLattice:
        if self.pairs is not None:
            return self.pairs
        if dim == 2:
            return DirectionLattice.dense()
        return DirectionLattice(n_directions=5000, seed=self.seed)

    def with_seed(self, seed: int) -> te.Self:
        """Route ``seed`` into every seeded component that is not an angle lattice."""
        update: dict[str, tp.Any] = {
            "seed": seed,
            "validation": self.validation.model_copy(update={"seed": seed}),
        }
        if self.pairs is not None and not self.pairs.is_angular:
            update["pairs"] = self.pairs.model_copy(update={"seed": seed})
        if self.surface is not None and not self.surface.lattice.is_angular:
            update["surface"] = self.surface.model_copy(
                update={"lattice": self.surface.lattice.model_copy(update={"seed": seed})}
            )
        if self.experiment is not None:
            update["experiment"] = self.experiment.model_copy(update={"seed": seed})
        return self.model_copy(update=update)

    def seeds(self) -> dict[str, int]:
        out = {"run": self.seed, "validation": self.validation.seed}
        if isinstance(self.dynamics, RandomCPTPSpec):
            out["dynamics"] = self.dynamics.params.seed
        if self.pairs is not None and not self.pairs.is_angular:
            out["pairs"] = self.pairs.seed
        if self.surface is not None and not self.surface.lattice.is_angular:
            out["surface"] = self.surface.lattice.seed
        if self.experiment is not None:
            out["experiment"] = self.experiment.seed
        return out


def _location(loc: tp.Sequence[tp.Any]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON: {exc.msg}", location=f"{source}:{exc.lineno}:{exc.colno}"
        ) from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        more = exc.error_count() - 1
        suffix = f" (and {more} more)" if more else ""
        raise ConfigError(
            f"{first['msg']}{suffix}", location=f"{source}: {_location(first['loc'])}"
        ) from exc


def load_config(path: str | pathlib.Path) -> RunConfig:
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", location=str(path)) from exc
    return parse_config(text, source=str(path))


def canonical_json(config: BaseModel) -> str:
    """Sorted-key compact JSON; stable under key reordering of the source file."""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
