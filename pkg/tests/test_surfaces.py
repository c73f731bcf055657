"""
Test enclosing surfaces, ray intersections and the surface validator.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from memoryscope.errors import DimensionMismatchError, SurfaceError
from memoryscope.linalg import bloch_components, eigvalsh_hermitian
from memoryscope.qstate import (
    DensityMatrix,
    TracelessDirection,
    random_density_matrix,
    trace_distances,
)
from memoryscope.surfaces import (
    DirectionLattice,
    SurfaceKind,
    canonical_signs,
    make_convex_combination_surface,
    make_hemispherical_surface,
    make_radial_surface,
    make_sphere_surface,
    ray_intersection,
    unit_bloch,
    validate_surface,
)


def distances_to(sample, reference):
    return trace_distances(sample.states, reference.entries[None])


class TestDirectionLattice:
    """Angle grids and seeded random directions."""

    def test_dense_grid(self):
        """The dense lattice has 5000 directions with half-step polar angles."""
        lattice = DirectionLattice.dense()
        theta, phi = lattice.angles()
        assert lattice.size == theta.size == phi.size == 5000
        assert theta[0] == pytest.approx(0.5 * math.pi / 50)
        assert phi[1] - phi[0] == pytest.approx(2 * math.pi / 100)

    def test_theta_major(self, small_lattice):
        """Angles vary fastest in phi."""
        theta, phi = small_lattice.angles()
        assert np.all(theta[:40] == theta[0])
        assert np.unique(phi[:40]).size == 40

    def test_exactly_one_kind(self):
        """Angular and random parameters are exclusive."""
        with pytest.raises(ValidationError):
            DirectionLattice(n_theta=5, n_phi=5, n_directions=10)
        with pytest.raises(ValidationError):
            DirectionLattice(n_theta=5)
        with pytest.raises(ValidationError):
            DirectionLattice()

    def test_random_directions(self):
        """Random lattices are reproducible and traceless."""
        lattice = DirectionLattice(n_directions=30, seed=4)
        a = lattice.directions(3)
        assert np.array_equal(a, lattice.directions(3))
        assert np.allclose(np.trace(a, axis1=1, axis2=2), 0.0, atol=1e-12)

    def test_angular_needs_qubit(self, small_lattice):
        """Angle grids are qubit-only."""
        with pytest.raises(DimensionMismatchError):
            small_lattice.directions(3)

    def test_random_has_no_angles(self):
        """Random lattices carry no angles."""
        with pytest.raises(SurfaceError):
            DirectionLattice(n_directions=3).angles()


class TestSphere:
    """Trace-distance spheres."""

    def test_constant_distance(self, r01):
        """Every sampled state is at distance eps."""
        surface = make_sphere_surface(r01, 0.1, DirectionLattice.dense())
        sample = surface.sample()
        assert len(sample) == 5000
        assert np.allclose(distances_to(sample, r01), 0.1, atol=1e-12)

    def test_eps_beyond_margin(self, r01):
        """eps must stay below the minimum eigenvalue of the reference."""
        with pytest.raises(SurfaceError):
            make_sphere_surface(r01, 0.41)

    def test_pure_reference_rejected(self):
        """Boundary states cannot be references."""
        with pytest.raises(SurfaceError, match="interior"):
            make_sphere_surface(DensityMatrix.basis(2, 0), 0.1)

    @pytest.mark.parametrize("dim", [3, 4])
    def test_random_directions(self, dim):
        """Higher dimensions sample valid states at distance eps."""
        rho0 = DensityMatrix.maximally_mixed(dim)
        surface = make_sphere_surface(rho0, 0.05, DirectionLattice(n_directions=200, seed=dim))
        sample = surface.sample()
        assert np.allclose(distances_to(sample, rho0), 0.05, atol=1e-12)
        assert np.min(eigvalsh_hermitian(sample.states)[:, 0]) > 0.0
        assert np.all(np.isnan(sample.theta))


class TestConvexCombination:
    """Mixtures of the reference with boundary states."""

    def test_scaled_pure_distance(self, r02, small_lattice):
        """D(rho, rho0) = w D(pure, rho0) on every lattice point."""
        surface = make_convex_combination_surface(r02, 0.7, small_lattice)
        sample = surface.sample()
        pure = (sample.states - 0.3 * r02.entries[None]) / 0.7
        assert np.allclose(np.trace(pure @ pure, axis1=1, axis2=2).real, 1.0)
        assert np.allclose(
            distances_to(sample, r02),
            0.7 * trace_distances(pure, r02.entries[None]),
        )

    def test_samples_along_lattice_directions(self, r01, small_lattice):
        """Each state lies on the ray through its own lattice direction."""
        surface = make_convex_combination_surface(r01, 0.7, small_lattice)
        sample = surface.sample()
        theta, phi = small_lattice.angles()
        assert np.array_equal(sample.theta, theta) and np.array_equal(sample.phi, phi)
        b = bloch_components(sample.states - r01.entries[None])
        unit = b / np.linalg.norm(b, axis=-1, keepdims=True)
        assert np.allclose(unit, unit_bloch(theta, phi), atol=1e-12)

    def test_radius_reaches_pure_state(self, r01, equator_vector):
        """The ray step lands on the w-scaled pure state."""
        surface = make_convex_combination_surface(r01, 0.7)
        direction = TracelessDirection.from_bloch(equator_vector)
        hit = ray_intersection(r01, direction, surface)
        assert hit.sign == 1
        boundary = r01.entries + (hit.lam / 0.7) * direction.entries
        assert eigvalsh_hermitian(boundary)[0] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("dim", [3, 4])
    def test_boundary_steps_general(self, dim):
        """mu puts rho0 + mu A on the boundary of the state space."""
        rng = np.random.default_rng(dim)
        rho0 = random_density_matrix(dim, rng)
        surface = make_convex_combination_surface(rho0, 0.5)
        directions = DirectionLattice(n_directions=50, seed=1).directions(dim)
        mu = surface.boundary_steps(directions)
        boundary = rho0.entries[None] + mu[:, None, None] * directions
        assert np.all(mu > 0.0)
        assert np.allclose(eigvalsh_hermitian(boundary)[:, 0], 0.0, atol=1e-10)

    def test_weight_range(self, r01):
        """w must lie in (0, 1]."""
        with pytest.raises(SurfaceError):
            make_convex_combination_surface(r01, 0.0)


class TestHemispherical:
    """Patchwork surfaces met by exactly one of +A, -A."""

    def test_samples_are_canonical(self, r01, small_lattice):
        """Lattice directions are flipped into the fundamental half."""
        surface = make_hemispherical_surface(r01, [0.05, 0.1, 0.15], small_lattice)
        sample = surface.sample()
        deltas = sample.states - r01.entries[None]
        assert np.all(canonical_signs(deltas) > 0.0)
        assert set(np.round(distances_to(sample, r01), 12)) <= {0.05, 0.1, 0.15}

    def test_angles_follow_flipped_directions(self, r01, small_lattice):
        """Recorded angles describe the canonical direction actually sampled."""
        surface = make_hemispherical_surface(r01, [0.05, 0.1], small_lattice)
        sample = surface.sample()
        b = bloch_components(sample.states - r01.entries[None])
        unit = b / np.linalg.norm(b, axis=-1, keepdims=True)
        assert np.allclose(unit, unit_bloch(sample.theta, sample.phi), atol=1e-12)
        assert np.all((sample.phi >= 0.0) & (sample.phi < 2 * math.pi))
        theta, _ = small_lattice.angles()
        assert np.all(sample.theta[theta > math.pi / 2] < math.pi / 2)

    def test_disconnected_patches(self, r01, small_lattice):
        """Distinct radii all occur on the sample."""
        surface = make_hemispherical_surface(r01, [0.05, 0.15], small_lattice)
        radii = np.round(distances_to(surface.sample(), r01), 12)
        assert set(radii) == {0.05, 0.15}

    def test_ray_flips_sign(self, r01):
        """A non-canonical direction is answered by its negative."""
        surface = make_hemispherical_surface(r01, [0.1])
        down = TracelessDirection.from_bloch([0.0, 0.0, -1.0])
        hit = surface.ray_intersection(down)
        assert hit.sign == -1
        assert hit.lam == pytest.approx(0.2)
        assert hit.point.entries[0, 0].real == pytest.approx(r01.entries[0, 0].real + 0.1)

    def test_canonical_sign_order(self):
        """z decides first, then x, then y."""
        vectors = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, -1.0, 0.0]]
        signs = canonical_signs(
            np.stack([TracelessDirection.from_bloch(v).entries for v in vectors])
        )
        assert signs.tolist() == [1.0, 1.0, -1.0, -1.0]


class TestRayIntersection:
    """Single-direction queries."""

    def test_sphere_hit(self, r01):
        """A sphere is hit at lam = eps / (1/2 ||A||_1)."""
        surface = make_sphere_surface(r01, 0.1)
        hit = ray_intersection(r01, TracelessDirection.from_bloch([0.0, 0.0, 2.0]), surface)
        assert hit.lam == pytest.approx(0.1)
        assert hit.point.min_eigenvalue() > 0.0

    def test_foreign_reference(self, r01, r02):
        """The reference must match the surface."""
        surface = make_sphere_surface(r01, 0.1)
        with pytest.raises(SurfaceError, match="different reference"):
            ray_intersection(r02, TracelessDirection.from_bloch([1.0, 0.0, 0.0]), surface)

    def test_dimension_mismatch(self, r01):
        """Directions must match the surface dimension."""
        surface = make_sphere_surface(r01, 0.1)
        direction = TracelessDirection(np.diag([1.0, -1.0, 0.0]))
        with pytest.raises(DimensionMismatchError):
            surface.ray_intersection(direction)

    def test_radial_miss(self, r01):
        """A radial function returning zero means no intersection."""
        surface = make_radial_surface(r01, lambda a: np.zeros(len(a)))
        assert surface.radius(TracelessDirection.from_bloch([1.0, 0.0, 0.0])) is None
        with pytest.raises(SurfaceError, match="no intersection"):
            surface.ray_intersection(TracelessDirection.from_bloch([1.0, 0.0, 0.0]))


class TestValidateSurface:
    """Randomized surface checks."""

    def test_sphere_passes(self, r01):
        """A sphere inside the margin has no failures."""
        report = validate_surface(make_sphere_surface(r01, 0.3), 2000, seed=0)
        assert report.ok
        assert report.kind == SurfaceKind.SPHERE.value

    def test_convex_passes(self, r02):
        """The convex-combination surface has no failures."""
        assert validate_surface(make_convex_combination_surface(r02, 0.7), 2000, seed=1).ok

    def test_hemispherical_passes(self, r01):
        """Exactly one of +A, -A meets a patchwork surface."""
        surface = make_hemispherical_surface(r01, [0.05, 0.1, 0.2])
        assert validate_surface(surface, 2000, seed=2).ok

    @pytest.mark.parametrize("dim", [3, 4])
    def test_higher_dimensions(self, dim):
        """Surfaces around mixed states in dims 3 and 4 validate."""
        rho0 = DensityMatrix.maximally_mixed(dim)
        assert validate_surface(make_sphere_surface(rho0, 0.1), 500, seed=dim).ok
        assert validate_surface(make_convex_combination_surface(rho0, 0.5), 500, seed=dim).ok

    def test_hole_is_reported(self, r01):
        """A radial surface with a hole around +z lists the offending directions."""

        def radial(directions):
            z = (directions[:, 0, 0] - directions[:, 1, 1]).real
            return np.where(z > 0.9, 0.0, 0.1)

        report = validate_surface(make_radial_surface(r01, radial), 2000, seed=3)
        assert not report.ok
        assert all(f.reason == "direction has no intersection" for f in report.failures)
        assert all(f.direction[2] > 0.0 for f in report.failures)

    def test_oversized_sphere_leaves_state_space(self, r01):
        """A non-strict sphere beyond the margin fails on PSD."""
        surface = make_sphere_surface(r01, 0.45, strict=False)
        report = validate_surface(surface, 2000, seed=4)
        assert not report.ok
        assert all("leaves the state space" in f.reason for f in report.failures)
