"""
Test the increase kernel, the orthogonal and local scans and their equivalence.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from memoryscope.dynamics import (
    FPDephasingParams,
    ThicknessGrid,
    TimeGrid,
    amplitude_damping_family,
    fp_dephasing_family,
    random_cptp_family,
)
from memoryscope.errors import DimensionMismatchError, MeasureError, SurfaceError
from memoryscope.measure import (
    IncreaseInterval,
    MeasureResult,
    TraceDistanceTrajectory,
    equivalence_report,
    integrate_increases,
    local_scan,
    measure_local_scan,
    measure_orthogonal_scan,
    orthogonal_pairs,
    orthogonal_scan,
    positive_variation,
    trajectory,
)
from memoryscope.qstate import (
    DensityMatrix,
    jordan_hahn_pair,
    random_density_matrix,
    trace_distances,
)
from memoryscope.surfaces import (
    DirectionLattice,
    make_convex_combination_surface,
    make_hemispherical_surface,
    make_sphere_surface,
)


def make_trajectory(values, initial=None):
    values = np.asarray(values, dtype=float)
    return TraceDistanceTrajectory(
        times=np.arange(values.size, dtype=float),
        values=values,
        initial_distance=values[0] if initial is None else initial,
    )


class TestIntegrateIncreases:
    """Discrete integral of the positive part of the derivative."""

    def test_two_runs(self):
        """Increases 0.2 -> 0.8 and 0.1 -> 0.3 give 0.8 over two intervals."""
        result = integrate_increases(make_trajectory([1.0, 0.2, 0.8, 0.1, 0.3]))
        assert result.value == pytest.approx(0.8)
        assert [(i.i_start, i.i_end) for i in result.increase_intervals] == [(1, 2), (3, 4)]
        assert [i.gain for i in result.increase_intervals] == pytest.approx([0.6, 0.2])

    def test_normalized(self):
        """Normalizing by the initial distance 0.5 doubles the value."""
        result = integrate_increases(
            make_trajectory([1.0, 0.2, 0.8, 0.1, 0.3], initial=0.5), normalize=True
        )
        assert result.value == pytest.approx(1.6)
        assert result.method == "normalized"

    def test_runs_merge(self):
        """Consecutive increases form a single interval."""
        result = integrate_increases(make_trajectory([0.5, 0.6, 0.7, 0.9, 0.4]))
        assert len(result.increase_intervals) == 1
        interval = result.increase_intervals[0]
        assert (interval.i_start, interval.i_end, interval.t_end) == (0, 3, 3.0)
        assert result.value == pytest.approx(0.4)

    def test_monotone(self):
        """A non-increasing trajectory has measure zero."""
        result = integrate_increases(make_trajectory([0.9, 0.9, 0.5, 0.1]))
        assert result.value == 0.0
        assert result.increase_intervals == []

    def test_round_off_ignored(self):
        """Steps below the increase tolerance do not count."""
        assert integrate_increases(make_trajectory([0.5, 0.5 + 1e-16, 0.4])).value == 0.0

    def test_single_point(self):
        """One sample is not a trajectory."""
        with pytest.raises(MeasureError):
            integrate_increases(make_trajectory([0.5]))

    def test_grid_metadata(self):
        """Results carry the grid they were computed on."""
        result = integrate_increases(make_trajectory([0.5, 0.7]))
        assert result.grid == {"t_min": 0.0, "t_max": 1.0, "points": 2}

    def test_refinement_never_lowers(self, full_family, random_qubit_family, r01, r02):
        """Inserting grid points can only add variation."""
        for family, grid in (full_family, random_qubit_family):
            times = grid if isinstance(grid, np.ndarray) else grid.times()
            times = times[: 4 * ((times.size - 1) // 4) + 1]
            values = [
                integrate_increases(trajectory(family, r01, r02, times[::step])).value
                for step in (4, 2, 1)
            ]
            assert values[0] <= values[1] + 1e-12
            assert values[1] <= values[2] + 1e-12

    def test_positive_variation_batched(self):
        """The batched kernel sums increases per row."""
        values = np.array([[1.0, 0.2, 0.8, 0.1, 0.3], [0.1, 0.2, 0.3, 0.4, 0.5]])
        assert positive_variation(values) == pytest.approx([0.8, 0.4])


class TestModels:
    """Validation of trajectories and results."""

    def test_times_increasing(self):
        """Times must increase strictly."""
        with pytest.raises(ValidationError):
            TraceDistanceTrajectory(
                times=np.array([0.0, 0.0]), values=np.array([0.5, 0.4]), initial_distance=0.5
            )

    def test_values_in_range(self):
        """Trace distances beyond one are rejected."""
        with pytest.raises(ValidationError):
            make_trajectory([0.5, 1.2])

    def test_value_matches_gains(self):
        """A result whose value differs from its gains is rejected."""
        interval = IncreaseInterval(i_start=0, i_end=1, t_start=0.0, t_end=1.0, gain=0.2)
        with pytest.raises(ValidationError):
            MeasureResult(value=0.3, increase_intervals=[interval])

    def test_result_json(self):
        """Results serialize to JSON and back."""
        result = integrate_increases(make_trajectory([1.0, 0.2, 0.8, 0.1, 0.3]))
        assert MeasureResult.model_validate_json(result.model_dump_json()) == result


class TestTrajectory:
    """Trace distance between evolved states."""

    def test_identity_is_constant(self, identity, r01, r02):
        """Under the identity the distance never changes."""
        family, grid = identity
        traj = trajectory(family, r01, r02, grid)
        assert np.allclose(traj.values, traj.initial_distance)
        assert integrate_increases(traj).value == 0.0

    def test_damping_is_markovian(self, damping, rng):
        """Amplitude damping never increases the distance."""
        family, grid = damping
        for _ in range(10):
            a = DensityMatrix.pure(rng.normal(size=2) + 1j * rng.normal(size=2))
            b = DensityMatrix.pure(rng.normal(size=2) + 1j * rng.normal(size=2))
            assert integrate_increases(trajectory(family, a, b, grid)).value == 0.0

    def test_single_peak_is_markovian(self, retardation):
        """Without the second peak dephasing has measure zero."""
        family = fp_dephasing_family(FPDephasingParams(a_alpha=0.0), retardation)
        times = family.delays(ThicknessGrid(points=300).thicknesses())
        rho1 = DensityMatrix.pure([1.0, 1.0])
        rho2 = DensityMatrix.pure([1.0, -1.0])
        assert integrate_increases(trajectory(family, rho1, rho2, times)).value == 0.0

    def test_second_peak_revives(self, full_family):
        """The strong second peak gives a positive measure."""
        family, times = full_family
        rho1 = DensityMatrix.pure([1.0, 1.0])
        rho2 = DensityMatrix.pure([1.0, -1.0])
        assert integrate_increases(trajectory(family, rho1, rho2, times)).value > 0.1

    def test_coincident_states(self, identity, r01):
        """Equal states have no trajectory."""
        family, grid = identity
        with pytest.raises(MeasureError):
            trajectory(family, r01, r01, grid)

    def test_unsorted_grid(self, identity, r01, r02):
        """Grids must be increasing."""
        family, _ = identity
        with pytest.raises(MeasureError):
            trajectory(family, r01, r02, [0.0, 0.5, 0.2])


class TestOrthogonalScan:
    """Maximization over orthogonal pairs."""

    def test_antipodal_pairs(self, small_lattice):
        """Angular pairs are antipodal pure states."""
        rho1, rho2, theta, _ = orthogonal_pairs(2, small_lattice)
        assert np.allclose(trace_distances(rho1, rho2), 1.0)
        assert np.allclose(np.einsum("nij,nji->n", rho1, rho2), 0.0)
        assert theta.size == small_lattice.size

    def test_random_pairs(self):
        """Seeded Haar pairs in dim 3 are orthogonal pure states."""
        rho1, rho2, theta, _ = orthogonal_pairs(3, DirectionLattice(n_directions=20, seed=2))
        assert np.allclose(np.einsum("nij,nji->n", rho1, rho1), 1.0)
        assert np.allclose(np.einsum("nij,nji->n", rho1, rho2), 0.0, atol=1e-12)
        assert np.all(np.isnan(theta))

    def test_dephasing_argmax_on_equator(self, window_family, small_lattice):
        """Pairs in the equatorial plane see the strongest revival."""
        family, times = window_family
        result = measure_orthogonal_scan(family, small_lattice, times)
        assert result.value > 0.0
        assert abs(result.argmax["theta"] - math.pi / 2) < math.pi / 20
        assert result.method == "orthogonal"

    def test_identity_and_damping_zero(self, identity, damping, small_lattice):
        """Markovian families score zero on every pair."""
        for family, grid in (identity, damping):
            scan = orthogonal_scan(family, small_lattice, grid)
            assert scan.result.value == 0.0
            assert np.all(scan.increase == 0.0)

    def test_jobs_do_not_change_results(self, window_family, small_lattice):
        """Serial and threaded scans are bitwise equal."""
        family, times = window_family
        serial = orthogonal_scan(family, small_lattice, times, jobs=1, chunk_size=64)
        threaded = orthogonal_scan(family, small_lattice, times, jobs=4, chunk_size=64)
        assert np.array_equal(serial.increase, threaded.increase)
        assert serial.result == threaded.result


class TestLocalScan:
    """Maximization over one enclosing surface."""

    def test_sphere_matches_orthogonal(self, window_family, r01, small_lattice):
        """A sphere sampled on the pair lattice gives the orthogonal value."""
        family, times = window_family
        surface = make_sphere_surface(r01, 0.1, small_lattice)
        local = measure_local_scan(family, r01, surface, None, times)
        orthogonal = measure_orthogonal_scan(family, small_lattice, times)
        assert local.value == pytest.approx(orthogonal.value, abs=1e-10)

    def test_surface_independent(self, window_family, r01, r02, small_lattice):
        """Spheres of different size around different references agree."""
        family, times = window_family
        values = [
            measure_local_scan(family, rho0, make_sphere_surface(rho0, eps), small_lattice, times)
            for rho0, eps in ((r01, 0.05), (r01, 0.3), (r02, 0.05))
        ]
        assert values[0].value == pytest.approx(values[1].value, abs=1e-10)
        assert values[0].value == pytest.approx(values[2].value, abs=1e-10)

    def test_convex_surface_close_to_orthogonal(self, window_family, r01):
        """The convex-combination surface reaches the orthogonal value on the dense lattice."""
        family, times = window_family
        lattice = DirectionLattice.dense()
        surface = make_convex_combination_surface(r01, 0.7, lattice)
        local = measure_local_scan(family, r01, surface, None, times)
        orthogonal = measure_orthogonal_scan(family, lattice, times)
        assert local.value == pytest.approx(orthogonal.value, abs=5e-3)

    def test_hemispherical_surface(self, window_family, r01, small_lattice):
        """Half the directions suffice: the patchwork matches the sphere."""
        family, times = window_family
        half = make_hemispherical_surface(r01, [0.05, 0.2], small_lattice)
        full = make_sphere_surface(r01, 0.1, small_lattice)
        assert measure_local_scan(family, r01, half, None, times).value == pytest.approx(
            measure_local_scan(family, r01, full, None, times).value, abs=1e-10
        )

    def test_scaling_invariance(self, random_qubit_family, maximally_mixed, small_lattice):
        """Normalized increases do not depend on how far along each direction the state sits."""
        family, grid = random_qubit_family
        rho0 = maximally_mixed
        scans = [
            local_scan(family, rho0, make_sphere_surface(rho0, eps), small_lattice, grid)
            for eps in (0.02, 0.1, 0.45)
        ]
        for scan in scans[1:]:
            assert np.allclose(scan.normalized_increase, scans[0].normalized_increase, atol=1e-10)
        assert np.allclose(scans[1].increase, 5.0 * scans[0].increase, atol=1e-10)

    def test_normalized_increase_columns(self, window_family, r01, small_lattice):
        """Normalized increases are raw increases over the initial distance."""
        family, times = window_family
        scan = local_scan(family, r01, make_sphere_surface(r01, 0.1), small_lattice, times)
        assert np.allclose(scan.normalized_increase, scan.increase / 0.1)
        assert len(list(scan.rows())) == len(scan) == small_lattice.size

    def test_foreign_reference(self, window_family, r01, r02, small_lattice):
        """The scan reference must be the surface reference."""
        family, times = window_family
        with pytest.raises(SurfaceError):
            local_scan(family, r02, make_sphere_surface(r01, 0.1), small_lattice, times)

    def test_dimension_mismatch(self, window_family):
        """A qutrit reference does not fit a qubit family."""
        family, times = window_family
        rho0 = DensityMatrix.maximally_mixed(3)
        lattice = DirectionLattice(n_directions=10)
        with pytest.raises(DimensionMismatchError):
            local_scan(family, rho0, make_sphere_surface(rho0, 0.1), lattice, times)

    @pytest.mark.parametrize("dim", [3, 4])
    def test_random_family_higher_dim(self, dim):
        """In dims 3 and 4 the best surface state scores the same as its orthogonal pair."""
        family = random_cptp_family(seed=dim, dim=dim)
        grid = TimeGrid(t_max=1.0, points=120)
        rho0 = DensityMatrix.maximally_mixed(dim)
        lattice = DirectionLattice(n_directions=200, seed=dim)
        surface = make_sphere_surface(rho0, 0.1, lattice)
        scan = local_scan(family, rho0, surface, None, grid)
        best = int(np.argmax(scan.normalized_increase))
        pair, lam = jordan_hahn_pair(DensityMatrix(surface.sample().states[best]), rho0)
        assert lam == pytest.approx(0.1, abs=1e-12)
        paired = integrate_increases(trajectory(family, pair.rho1, pair.rho2, grid))
        assert scan.result.value == pytest.approx(paired.value, abs=1e-9)
        assert scan.result.value > 0.0
        orthogonal = measure_orthogonal_scan(family, lattice, grid)
        assert orthogonal.value > 0.0
        assert scan.result.argmax is not None and "state" in scan.result.argmax


class TestEquivalence:
    """Local trajectories equal orthogonal-pair trajectories after rescaling."""

    def test_dephasing(self, window_family, r01, small_lattice):
        """Fabry-Perot dephasing with the convex-combination surface."""
        family, times = window_family
        surface = make_convex_combination_surface(r01, 0.7, small_lattice)
        report = equivalence_report(family, r01, surface, None, times)
        assert report.ok()
        assert report.max_decomposition_residual <= 1e-10
        assert report.n_states == small_lattice.size

    @pytest.mark.parametrize("dim", [2, 3, 4])
    def test_random_families(self, dim):
        """Random CPTP families with spheres around random interior references."""
        family = random_cptp_family(seed=10 + dim, dim=dim)
        mixed = random_density_matrix(dim, np.random.default_rng(dim)).entries
        rho0 = DensityMatrix(0.5 * mixed + 0.5 * np.eye(dim) / dim)
        surface = make_sphere_surface(rho0, 0.1, DirectionLattice(n_directions=100, seed=dim))
        report = equivalence_report(family, rho0, surface, None, TimeGrid(t_max=1.0, points=80))
        assert report.ok()

    @pytest.mark.slow
    @pytest.mark.parametrize("dim", [2, 3, 4])
    def test_random_families_acceptance(self, dim):
        """Acceptance size: 1000 surface states on a 500-point grid."""
        family = random_cptp_family(seed=100 + dim, dim=dim)
        rho0 = DensityMatrix.maximally_mixed(dim)
        surface = make_convex_combination_surface(
            rho0, 0.5, DirectionLattice(n_directions=1000, seed=dim)
        )
        report = equivalence_report(family, rho0, surface, None, TimeGrid(t_max=1.0, points=500))
        assert report.ok()


SURFACE_KINDS = {
    "sphere": lambda rho0, lattice: make_sphere_surface(rho0, 0.05, lattice),
    "convex": lambda rho0, lattice: make_convex_combination_surface(rho0, 0.7, lattice),
    "hemispherical": lambda rho0, lattice: make_hemispherical_surface(rho0, [0.03, 0.05], lattice),
}


class TestSurfaceAgreement:
    """Every surface kind around either reference reproduces the orthogonal value."""

    @pytest.mark.parametrize("kind", sorted(SURFACE_KINDS))
    def test_both_references(self, kind, r01, r02, small_lattice):
        """Qubit random families give one value for r01, r02 and orthogonal pairs."""
        family = random_cptp_family(seed=7, dim=2)
        grid = TimeGrid(t_max=1.0, points=200)
        orthogonal = measure_orthogonal_scan(family, small_lattice, grid)
        for rho0 in (r01, r02):
            surface = SURFACE_KINDS[kind](rho0, small_lattice)
            local = measure_local_scan(family, rho0, surface, None, grid)
            assert local.value == pytest.approx(orthogonal.value, abs=1e-8)

    @pytest.mark.parametrize("kind", sorted(SURFACE_KINDS))
    @pytest.mark.parametrize("gamma", [0.5, 2.0])
    def test_damping_scores_zero(self, kind, gamma, r01, r02, small_lattice):
        """Amplitude damping has no increases on any surface."""
        family = amplitude_damping_family(gamma, horizon=5.0)
        grid = TimeGrid(t_max=5.0, points=200)
        for rho0 in (r01, r02):
            surface = SURFACE_KINDS[kind](rho0, small_lattice)
            assert measure_local_scan(family, rho0, surface, None, grid).value == 0.0

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", sorted(SURFACE_KINDS))
    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_dense_lattice_acceptance(self, kind, seed, r01, r02):
        """Acceptance size: the dense lattice within 2e-3 for five random families."""
        family = random_cptp_family(seed=seed, dim=2)
        grid = TimeGrid(t_max=1.0, points=300)
        lattice = DirectionLattice.dense()
        orthogonal = measure_orthogonal_scan(family, lattice, grid)
        for rho0 in (r01, r02):
            surface = SURFACE_KINDS[kind](rho0, lattice)
            local = measure_local_scan(family, rho0, surface, None, grid)
            assert abs(local.value - orthogonal.value) <= 2e-3
