import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtube.config import TUNNEL_PACKETS, grating_packets
from qtube.errors import ConfigurationError, DegenerateStateError
from qtube.grid import Grid1D, integrate
from qtube.states import (
    GaussianSpec,
    WaveFunction,
    current_density,
    density,
    expectation_x,
    gaussian_packet,
    mean_energy,
    momentum_expectation,
    normalization_constant,
    restricted_probability,
    superpose,
    velocity_field,
)


@pytest.fixture(scope="module")
def grid():
    return Grid1D(-20.0, 20.0, 4096)


@pytest.fixture(scope="module")
def tunnel_grid():
    return Grid1D(-40.0, 60.0, 16384)


class TestGaussianPacket:
    def test_unit_norm(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 0.2), grid)
        assert abs(psi.norm() - 1) <= 1e-10

    def test_centroid(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert abs(expectation_x(psi)) <= 1e-8

    def test_momentum(self, grid):
        psi = gaussian_packet(GaussianSpec(-10.0, 10.0, 0.2), grid)
        assert abs(momentum_expectation(psi) - 10.0) <= 1e-4

    def test_momentum_variance(self, grid):
        # <p^2> = p0^2 + 1/(4 sigma0^2)
        psi = gaussian_packet(GaussianSpec(1.0, 3.0, 0.5), grid)
        assert momentum_expectation(psi, 2) == pytest.approx(9.0 + 1.0, rel=1e-8)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ConfigurationError):
            GaussianSpec(0.0, 0.0, 0.0)

    def test_support_too_close_to_edge(self, grid):
        with pytest.raises(ConfigurationError):
            gaussian_packet(GaussianSpec(19.0, 0.0, 0.5), grid)

    def test_amplitudes_read_only(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        with pytest.raises(ValueError):
            psi.psi[0] = 1.0


class TestSuperpose:
    def test_tunnel_state_unit_norm(self, tunnel_grid):
        assert abs(superpose(TUNNEL_PACKETS, tunnel_grid).norm() - 1) <= 1e-10

    def test_five_slits(self):
        g = Grid1D(-20.0, 20.0, 4096)
        psi = superpose(grating_packets(), g)
        assert abs(psi.norm() - 1) <= 1e-10
        rho = density(psi)
        for c in (-4, -2, 0, 2, 4):
            assert integrate(g, rho, c - 1, c + 1) == pytest.approx(0.2, abs=1e-6)
        # valleys between slits are essentially empty
        for c in (-3, -1, 1, 3):
            assert rho[g.index_of(c)] <= 1e-4 * rho.max()

    def test_distant_pair_constant(self):
        g = Grid1D(-64.0, 64.0, 8192)
        specs = [GaussianSpec(-50.0, 0.0, 0.2), GaussianSpec(50.0, 0.0, 0.2)]
        assert normalization_constant(specs, g) ** 2 == pytest.approx(0.5, abs=1e-8)

    def test_empty(self, grid):
        with pytest.raises(ValueError):
            superpose([], grid)

    def test_weights_act_on_normalized_packets(self, grid):
        # disjoint packets: the probability ratio is |c1/c2|^2 whatever the widths
        specs = [GaussianSpec(-8.0, 0.0, 0.3, 1.0), GaussianSpec(8.0, 0.0, 1.5, 0.5)]
        psi = superpose(specs, grid)
        left = restricted_probability(psi, None, 0.0)
        assert left / (1 - left) == pytest.approx(4.0, rel=1e-6)


class TestDensity:
    def test_unit_integral(self, tunnel_grid):
        psi = superpose(TUNNEL_PACKETS, tunnel_grid)
        assert abs(integrate(tunnel_grid, density(psi)) - 1) <= 1e-10

    def test_antisymmetric_node(self):
        g = Grid1D(-16.0, 16.0, 1024)
        a = gaussian_packet(GaussianSpec(-1.0, 0.0, 0.5), g).psi
        b = gaussian_packet(GaussianSpec(1.0, 0.0, 0.5), g).psi
        psi = WaveFunction(g, (a - b) / math.sqrt(integrate(g, np.abs(a - b) ** 2)))
        assert density(psi)[g.index_of(0.0)] <= 1e-12

    def test_gaussian_peak(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert density(psi)[grid.index_of(0.0)] == pytest.approx((2 * math.pi) ** -0.5, abs=1e-8)


class TestCurrent:
    def test_real_state(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert np.max(np.abs(current_density(psi))) <= 1e-12

    def test_linear_phase(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 10.0, 1.0), grid)
        np.testing.assert_allclose(current_density(psi), 10 * density(psi), atol=1e-8)

    def test_tunnel_flux_matches_momentum(self, tunnel_grid):
        psi = superpose(TUNNEL_PACKETS, tunnel_grid)
        flux = integrate(tunnel_grid, current_density(psi)) / psi.norm()
        assert abs(flux - momentum_expectation(psi)) <= 1e-6

    def test_mass_scaling(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 4.0, 1.0), grid)
        np.testing.assert_allclose(current_density(psi, mass=2.0), 0.5 * current_density(psi), atol=1e-14)


class TestVelocity:
    def test_uniform(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 7.0, 1.0), grid)
        rho = density(psi)
        # deep tails carry quotient round-off; the support is what trajectories see
        support = rho >= 1e-10 * rho.max()
        assert np.max(np.abs(velocity_field(psi)[support] - 7.0)) <= 1e-8

    def test_global_phase(self, tunnel_grid):
        psi = superpose(TUNNEL_PACKETS, tunnel_grid)
        rotated = psi.with_psi(psi.psi * np.exp(0.7j))
        np.testing.assert_allclose(velocity_field(rotated), velocity_field(psi), rtol=1e-9, atol=1e-12)

    def test_local_gauge_shift(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 1.0, 1.0), grid)
        shifted = psi.with_psi(psi.psi * np.exp(3j * grid.x))
        mask = density(psi) >= 1e-6 * density(psi).max()
        diff = velocity_field(shifted) - velocity_field(psi)
        assert np.max(np.abs(diff[mask] - 3.0)) <= 1e-8

    def test_current_identity(self, tunnel_grid):
        psi = superpose(TUNNEL_PACKETS, tunnel_grid)
        rho = density(psi)
        ok = rho >= 1e-12 * rho.max()
        np.testing.assert_allclose((rho * velocity_field(psi))[ok], current_density(psi)[ok], rtol=1e-12, atol=1e-14)

    def test_fill_below_floor(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 2.0, 0.5), grid)
        v = velocity_field(psi)
        assert np.all(np.isfinite(v))
        # far tails lie below the floor and inherit the neighbouring value
        assert v[0] == pytest.approx(2.0, abs=1e-6)

    def test_degenerate(self, grid):
        with pytest.raises(DegenerateStateError):
            velocity_field(WaveFunction(grid, np.zeros(grid.n_points)))


class TestRestrictedProbability:
    def test_full_grid(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert abs(restricted_probability(psi) - 1) <= 1e-10

    def test_half(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert abs(restricted_probability(psi, 0.0, None) - 0.5) <= 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=3, max_size=3))
    def test_additive_and_bounded(self, pts):
        g = Grid1D(-20.0, 20.0, 1024)
        psi = superpose([GaussianSpec(-3.0, 2.0, 0.7), GaussianSpec(4.0, -1.0, 1.2, 0.6)], g)
        a, b, c = sorted(pts)
        pab, pbc, pac = (restricted_probability(psi, *iv) for iv in ((a, b), (b, c), (a, c)))
        assert pab + pbc == pytest.approx(pac, abs=1e-12)
        assert 0 <= pac <= 1 + 1e-9


class TestEnergy:
    def test_free_gaussian(self, grid):
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert abs(mean_energy(psi, np.zeros(grid.n_points)) - 0.125) <= 1e-6

    def test_closed_form_kinetic(self, grid):
        # <p^2>/2m = (p0^2 + 1/(4 sigma0^2))/2
        psi = gaussian_packet(GaussianSpec(0.0, 0.0, 1.0), grid)
        assert mean_energy(psi, np.zeros(grid.n_points)) == pytest.approx(0.5 * 0.25, abs=1e-6)

    def test_plane_wave_dominated(self):
        g = Grid1D(-64.0, 64.0, 8192)
        psi = gaussian_packet(GaussianSpec(0.0, 10.0, 5.0), g)
        assert abs(mean_energy(psi, np.zeros(g.n_points)) - 50.005) <= 1e-2

    def test_constant_offset(self, grid):
        psi = gaussian_packet(GaussianSpec(1.0, 3.0, 0.8), grid)
        base = mean_energy(psi, np.zeros(grid.n_points))
        assert mean_energy(psi, np.full(grid.n_points, 4.5)) == pytest.approx(base + 4.5, rel=1e-12)
