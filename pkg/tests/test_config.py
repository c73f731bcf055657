"""
Test JSON run configuration parsing and error reporting.
"""

import json

import numpy as np
import pytest

from memoryscope.config import (
    FPDephasingSpec,
    RandomCPTPSpec,
    RunConfig,
    canonical_json,
    load_config,
    parse_config,
)
from memoryscope.dynamics import FPDephasingFamily, ThicknessGrid, TimeGrid
from memoryscope.errors import ConfigError
from memoryscope.surfaces import ConvexCombinationSurface, HemisphericalSurface, SphereSurface

DEPHASING = {
    "family": "fp_dephasing",
    "params": {"A_alpha": 0.64},
    "grid": {"L_min_lambda": 175.0, "L_max_lambda": 318.0, "points": 50},
    "delay_reading": "retardation",
}


def config_text(**sections):
    return json.dumps({"dynamics": DEPHASING, **sections}, indent=2)


class TestParse:
    """Valid configurations."""

    def test_minimal(self):
        """Only the dynamics section is required."""
        config = parse_config(config_text())
        assert isinstance(config.dynamics, FPDephasingSpec)
        assert config.surface is None
        assert config.chunk_size == 256

    def test_dephasing_build(self):
        """The dephasing spec yields the family and its delay grid."""
        family, times = parse_config(config_text()).dynamics.build()
        assert isinstance(family, FPDephasingFamily)
        assert times.size == 50
        assert times[-1] == pytest.approx(family.horizon)

    def test_dephasing_on_time_grid(self):
        """A time grid is used as given."""
        spec = FPDephasingSpec.model_validate(
            {**DEPHASING, "grid": {"t_max": 8e-13, "points": 20}}
        )
        family, times = spec.build()
        assert family.horizon == 8e-13
        assert np.array_equal(times, TimeGrid(t_max=8e-13, points=20).times())

    def test_windowed(self):
        """Windows replace the thickness range and keep the point count."""
        spec = FPDephasingSpec.model_validate(DEPHASING).windowed(200.0, 300.0)
        assert spec.grid == ThicknessGrid(L_min_lambda=200.0, L_max_lambda=300.0, points=50)

    def test_windowed_time_grid(self):
        """On a time grid the window is mapped through the delay."""
        spec = FPDephasingSpec.model_validate({**DEPHASING, "grid": {"t_max": 1e-12, "points": 5}})
        grid = spec.windowed(200.0, 300.0).grid
        assert isinstance(grid, TimeGrid)
        assert grid.t_min == pytest.approx(spec.delay_map().delay(200.0))

    @pytest.mark.parametrize(
        "surface, cls",
        [
            ({"kind": "sphere", "reference": "r01", "eps": 0.1}, SphereSurface),
            ({"kind": "convex_combination", "reference": "r02"}, ConvexCombinationSurface),
            (
                {"kind": "hemispherical_patchwork", "reference": "r01", "radii": [0.05, 0.1]},
                HemisphericalSurface,
            ),
        ],
    )
    def test_surfaces(self, surface, cls):
        """Each surface kind builds its class."""
        built = parse_config(config_text(surface=surface)).surface.build()
        assert isinstance(built, cls)

    def test_matrix_reference(self, r02):
        """References may be given as matrix payloads."""
        surface = {"kind": "sphere", "reference": r02.to_payload().model_dump(), "eps": 0.05}
        built = parse_config(config_text(surface=surface)).surface.build()
        assert np.allclose(built.reference.entries, r02.entries)

    def test_pair(self, r01):
        """Pairs accept presets and Bloch objects."""
        pair = {"a": "r01", "b": {"r": 0.5, "theta": 1.0, "phi": 2.0}}
        a, b = parse_config(config_text(pair=pair)).pair.build()
        assert np.allclose(a.entries, r01.entries)
        assert b.purity() == pytest.approx(0.5 * (1 + 0.25))

    def test_experiment_section(self):
        """The experiment section accepts the A_alpha alias and a lattice."""
        experiment = {"params": {"A_alpha": 0.22}, "lattice": {"n_theta": 10, "n_phi": 20}}
        config = parse_config(config_text(experiment=experiment))
        assert config.experiment.params.a_alpha == 0.22
        assert config.experiment.lattice.size == 200


class TestSeeds:
    """Seed routing and reporting."""

    def test_with_seed(self):
        """A seed override reaches random lattices but not angle lattices."""
        config = parse_config(
            json.dumps(
                {
                    "dynamics": {"family": "random_cptp", "params": {"seed": 4, "dim": 3}},
                    "pairs": {"n_directions": 100, "seed": 1},
                    "surface": {
                        "kind": "sphere",
                        "reference": "r01",
                        "eps": 0.1,
                        "lattice": {"n_theta": 5, "n_phi": 5},
                    },
                }
            )
        ).with_seed(9)
        assert config.pairs.seed == 9
        assert config.validation.seed == 9
        assert config.surface.lattice.seed == 0
        assert config.seeds() == {"run": 9, "validation": 9, "dynamics": 4, "pairs": 9}

    def test_default_pair_lattice(self):
        """Qubits default to the dense angle lattice, higher dims to random pairs."""
        config = parse_config(config_text())
        assert config.pair_lattice(2).size == 5000
        assert not config.pair_lattice(3).is_angular


class TestErrors:
    """Loader failures become ConfigError with a location."""

    def test_malformed_json(self):
        """Syntax errors carry line and column."""
        with pytest.raises(ConfigError) as info:
            parse_config('{\n  "dynamics": \n}', source="run.json")
        assert info.value.location == "run.json:3:1"
        assert info.value.exit_code == 2

    def test_unknown_top_level_key(self):
        """Unknown keys are named."""
        with pytest.raises(ConfigError) as info:
            parse_config(config_text(surfaces={}))
        assert info.value.location.endswith("surfaces")

    def test_unknown_nested_key(self):
        """Nested paths are dotted."""
        bad = {**DEPHASING, "params": {"A_alpha": 0.64, "sigmaa": 1.0}}
        with pytest.raises(ConfigError) as info:
            parse_config(json.dumps({"dynamics": bad}))
        assert "dynamics.fp_dephasing.params.sigmaa" in info.value.location

    def test_unknown_family(self):
        """The family discriminator is checked."""
        with pytest.raises(ConfigError):
            parse_config(json.dumps({"dynamics": {"family": "lindblad"}}))

    def test_error_count(self):
        """Further errors are counted in the message."""
        with pytest.raises(ConfigError, match="more"):
            parse_config(json.dumps({"dynamics": DEPHASING, "a": 1, "b": 2}))

    def test_random_horizon(self):
        """Random families only live on [0, 1]."""
        spec = RandomCPTPSpec.model_validate(
            {"family": "random_cptp", "grid": {"t_max": 2.0, "points": 10}}
        )
        with pytest.raises(ConfigError):
            spec.build()

    def test_missing_file(self, tmp_path):
        """Unreadable files are configuration errors."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")


class TestCanonicalJson:
    """Stable hashing input."""

    def test_key_order_irrelevant(self, tmp_path):
        """Reordered keys give the same canonical form."""
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"seed": 1, "dynamics": DEPHASING}))
        b.write_text(json.dumps({"dynamics": dict(reversed(DEPHASING.items())), "seed": 1}))
        assert canonical_json(load_config(a)) == canonical_json(load_config(b))

    def test_roundtrip(self):
        """Canonical JSON parses back to the same config."""
        config = parse_config(config_text(seed=3))
        assert RunConfig.model_validate_json(canonical_json(config)) == config
