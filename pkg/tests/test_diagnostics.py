import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic_fluid.diagnostics import (
    UndefinedCenterError,
    centers,
    dissipation,
    drag_norm,
    enstrophy,
    fq_histogram_norm,
    lyapunov,
    max_cell_density,
    pair_dissipation_bruteforce,
    pair_dissipation_direct,
    pair_dissipation_grid,
    snapshot,
    subsample_w1,
    support_radius,
    total_energy,
    u_minus_mean_linf,
    v_infinity,
    vorticity_norm,
    wasserstein_bound,
    weighted_moment,
)
from kinetic_fluid.fluid import FluidState, random_solenoidal, taylor_green
from kinetic_fluid.kinetic import (
    CommunicationWeight,
    ParticleEnsemble,
    Toggles,
    deposit_moments,
    sample_ensemble,
    step_coupled,
)
from kinetic_fluid.torus import GridField, SpectralField, forward_transform, l2_norm_sq, wavenumber_sq

TWO_PI = 2 * np.pi


def ensemble(x, v, w):
    return ParticleEnsemble(np.atleast_2d(x).astype(float), np.atleast_2d(v).astype(float), np.asarray(w, float))


def constant_flow(c, n=8):
    s = SpectralField.zeros(len(c), n)
    s.coeffs[(slice(None),) + (0,) * len(c)] = c
    return s


def pm_pair():
    return ensemble([[0.5, 0.5], [2.0, 3.0]], [[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])


class TestCenters:
    def test_symmetric_pair(self):
        v_c, u_c, M = centers(pm_pair(), constant_flow([0.0, 0.0]))
        assert np.allclose(v_c, 0) and M == 1.0

    def test_constant_flow_mean(self):
        _, u_c, _ = centers(pm_pair(), constant_flow([0.3, -0.7]))
        assert np.allclose(u_c, [0.3, -0.7])

    def test_weighted_mean(self):
        ens = ensemble([[0, 0], [1, 1], [2, 2]], [[1, 0], [0, 2], [3, 3]], [0.2, 0.3, 0.5])
        v_c, _, M = centers(ens, constant_flow([0.0, 0.0]))
        assert M == pytest.approx(1.0)
        assert np.allclose(v_c, [0.2 + 1.5, 0.6 + 1.5])

    def test_zero_mass(self):
        with pytest.raises(UndefinedCenterError):
            centers(ensemble([[0, 0]], [[1, 1]], [0.0]), constant_flow([0.0, 0.0]))


class TestVInfinity:
    def test_formula(self):
        assert np.allclose(v_infinity([1, 0], [0, 1], 1.0), [0.5, 0.5])

    def test_fixed_point(self):
        assert np.allclose(v_infinity([0.3, 0.2], [0.3, 0.2], 2.5), [0.3, 0.2])

    def test_small_mass_limit(self):
        assert np.allclose(v_infinity([9, 9], [1, -1], 1e-12), [1, -1], atol=1e-10)


class TestLyapunov:
    def test_monokinetic_equilibrium(self):
        ens = ensemble([[0, 0], [1, 2]], [[0.4, 0.1], [0.4, 0.1]], [0.5, 0.5])
        u = constant_flow([0.4, 0.1])
        v_c, u_c, _ = centers(ens, u)
        assert lyapunov(ens, u, v_c, u_c, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_gap_only(self):
        ens = ensemble([[0, 0], [1, 2]], [[0.4, 0.1], [0.4, 0.1]], [0.5, 0.5])
        u = constant_flow([-0.6, 1.1])
        v_c, u_c, _ = centers(ens, u)
        assert lyapunov(ens, u, v_c, u_c, 1.0) == pytest.approx(2.0 / 4.0)

    def test_opposing_pair(self):
        ens = pm_pair()
        u = constant_flow([0.0, 0.0])
        v_c, u_c, _ = centers(ens, u)
        assert lyapunov(ens, u, v_c, u_c, 1.0) == pytest.approx(0.5)

    def test_fluid_fluctuation(self):
        u = taylor_green(16)
        ens = ensemble([[0, 0]], [[0, 0]], [1.0])
        # mean of |TG|^2 over the torus is 1/2
        assert lyapunov(ens, u, np.zeros(2), np.zeros(2), 1.0) == pytest.approx(0.25)


class TestDissipation:
    def test_rest_state(self):
        ens = ensemble([[0, 0], [1, 1]], [[0, 0], [0, 0]], [0.5, 0.5])
        assert dissipation(ens, constant_flow([0.0, 0.0]), CommunicationWeight(1, 0.3)) == 0.0

    def test_two_particle_pair_term(self):
        ens = ensemble([[0.5, 0.5], [2.0, 3.0]], [[1.0, 2.0], [-1.0, 0.5]], [0.3, 0.7])
        D = dissipation(ens, constant_flow([0.0, 0.0]), CommunicationWeight(1, 0), toggles=Toggles(False, True, False))
        assert D == pytest.approx(0.3 * 0.7 * (4 + 2.25))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), kappa1=st.floats(-0.5, 0.5))
    def test_nonnegative_for_nonnegative_psi(self, seed, kappa1):
        rng = np.random.default_rng(seed)
        ens = sample_ensemble(2, 50, 1.0, [0, 0], 1.0, rng)
        u = random_solenoidal(2, 16, rng)
        psi = CommunicationWeight(1.0, kappa1)
        assert psi.psi_min(2) >= 0
        assert dissipation(ens, u, psi) >= 0

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), k0=st.floats(-1, 1), k1=st.floats(-1, 1), dim=st.sampled_from([2, 3]))
    def test_pair_sum_routes_agree(self, seed, k0, k1, dim):
        rng = np.random.default_rng(seed)
        ens = sample_ensemble(dim, 40, 1.0, np.zeros(dim), 1.0, rng)
        psi = CommunicationWeight(k0, k1)
        brute = pair_dissipation_bruteforce(ens, psi)
        assert pair_dissipation_direct(ens, psi) == pytest.approx(brute, rel=1e-10, abs=1e-12)

    def test_grid_identity_close_to_direct(self):
        rng = np.random.default_rng(1)
        ens = sample_ensemble(2, 400, 1.0, [0, 0], 1.0, rng)
        psi = CommunicationWeight(0.5, 0.2)
        direct = pair_dissipation_direct(ens, psi)
        # psi has only |xi| <= 1 modes, so CIC smoothing is the only error
        assert pair_dissipation_grid(ens, psi, 64) == pytest.approx(direct, rel=1e-3)
        constant = CommunicationWeight(1.0, 0.0)
        assert pair_dissipation_grid(ens, constant, 8) == pytest.approx(pair_dissipation_direct(ens, constant), rel=1e-12)

    def test_threshold_switches_route(self):
        rng = np.random.default_rng(2)
        ens = sample_ensemble(2, 100, 1.0, [0, 0], 1.0, rng)
        psi = CommunicationWeight(0.5, 0.2)
        u = constant_flow([0.0, 0.0], 16)
        toggles = Toggles(False, True, True)
        assert dissipation(ens, u, psi, toggles=toggles, pair_threshold=1000) == pytest.approx(pair_dissipation_direct(ens, psi))
        assert dissipation(ens, u, psi, toggles=toggles, pair_threshold=10) == pytest.approx(pair_dissipation_grid(ens, psi, 16))

    def test_enstrophy_term(self):
        u = taylor_green(16)
        empty = ParticleEnsemble.empty(2)
        # |grad u|^2 averages to 2 * 1/2 for unit-amplitude Taylor-Green
        assert dissipation(empty, u, CommunicationWeight(), mu=1.0) == pytest.approx(1.0)
        assert enstrophy(u) == pytest.approx(1.0)


class TestEnergyAndMoments:
    def test_energy_examples(self):
        assert total_energy(ensemble([[0, 0]], [[0, 0]], [1.0]), constant_flow([0.0, 0.0])) == 0.0
        assert total_energy(ensemble([[0, 0]], [[0, 2.0]], [1.0]), constant_flow([0.0, 0.0])) == 2.0
        assert total_energy(ParticleEnsemble.empty(2), taylor_green(32)) == pytest.approx(0.25)

    def test_moment_at_center(self):
        ens = ensemble([[0, 0], [1, 1]], [[1, 1], [1, 1]], [0.5, 0.5])
        assert weighted_moment(ens, 4, [1, 1]) == 0.0

    def test_moment_p2_is_scaled_std(self):
        rng = np.random.default_rng(3)
        ens = sample_ensemble(2, 100, 2.0, [0, 0], 1.0, rng)
        v_c = ens.w @ ens.v / 2.0
        std = np.sqrt(np.sum(ens.w / 2.0 * np.sum((ens.v - v_c) ** 2, axis=1)))
        assert weighted_moment(ens, 2, v_c) == pytest.approx(std * np.sqrt(2.0))

    def test_moment_high_p(self):
        ens = ensemble([[0, 0], [1, 1]], [[1, 0], [2, 0]], [0.5, 0.5])
        assert weighted_moment(ens, 64, [0, 0]) == pytest.approx(2 * 0.5 ** (1 / 64), rel=1e-12)

    def test_moment_no_overflow(self):
        ens = ensemble([[0, 0], [1, 1]], [[1e3, 0], [0, 0]], [0.5, 0.5])
        assert weighted_moment(ens, 256, [0, 0]) == pytest.approx(1e3 * 0.5 ** (1 / 256))

    def test_support_radius(self):
        assert support_radius(ensemble([[0, 0]], [[1, 1]], [1.0]), [1, 1]) == 0.0
        assert support_radius(ensemble([[0, 0]], [[3, 0]], [1.0]), [0, 0]) == 3.0
        with pytest.raises(ValueError):
            support_radius(ParticleEnsemble.empty(2), [0, 0])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), M0=st.floats(0.05, 5))
    def test_moments_increase_to_support_radius(self, seed, M0):
        rng = np.random.default_rng(seed)
        ens = sample_ensemble(2, 60, M0, [0, 0], 1.0, rng)
        vinf = np.array([0.1, -0.2])
        S = support_radius(ens, vinf)
        scaled = [weighted_moment(ens, p, vinf) / M0 ** (1 / p) for p in (2, 8, 32, 128)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(scaled, scaled[1:]))
        assert scaled[-1] <= S * (1 + 1e-12)
        assert wasserstein_bound(ens, vinf, 2) == weighted_moment(ens, 2, vinf)


class TestFieldNorms:
    def test_drag_empty(self):
        assert drag_norm(ensemble([[0, 0]], [[1, 1]], [0.0]), taylor_green(8), 2) == 0.0

    def test_drag_zero_fluid(self):
        rng = np.random.default_rng(4)
        ens = sample_ensemble(2, 30, 1.0, [1, 0], 1.0, rng)
        _, j = deposit_moments(ens, 8)
        expected = np.sqrt(np.mean(np.sum(j.samples**2, axis=0)))
        assert drag_norm(ens, constant_flow([0.0, 0.0]), 2) == pytest.approx(expected)

    def test_drag_monokinetic_match(self):
        ens = ensemble([[TWO_PI * 2 / 8, TWO_PI * 5 / 8]], [[0.3, -0.4]], [1.0])
        u = constant_flow([0.3, -0.4])
        assert drag_norm(ens, u, np.inf) == pytest.approx(0.0, abs=1e-12)
        assert drag_norm(ens, u, 2) == pytest.approx(0.0, abs=1e-12)

    def test_drag_bad_p(self):
        with pytest.raises(ValueError):
            drag_norm(pm_pair(), constant_flow([0.0, 0.0]), 3)

    def test_vorticity_constant(self):
        assert vorticity_norm(constant_flow([1.0, 2.0]), 2) == 0.0

    @pytest.mark.parametrize("p", [1, 2, 4, np.inf])
    def test_vorticity_shear(self, p):
        n = 64
        u = forward_transform(GridField.from_function(lambda x, y: (np.sin(y), 0 * x), 2, n))
        c = np.abs(np.cos(TWO_PI * np.arange(n) / n))
        expected = c.max() if np.isinf(p) else np.mean(c**p) ** (1 / p)
        assert vorticity_norm(u, p) == pytest.approx(expected, rel=1e-12)
        if p in (2, 4):
            # smooth integrands: the grid rule is exact for these trigonometric polynomials
            assert expected == pytest.approx({2: np.sqrt(0.5), 4: (3 / 8) ** 0.25}[p], rel=1e-13)

    def test_vorticity_parseval(self):
        u = random_solenoidal(2, 32, np.random.default_rng(5))
        energy = float(np.sum(wavenumber_sq(2, 32) * np.abs(u.coeffs) ** 2))
        assert vorticity_norm(u, 2) ** 2 == pytest.approx(energy, rel=1e-10)

    def test_u_minus_mean(self):
        u = forward_transform(GridField.from_function(lambda x, y: (0.5 * np.sin(x) + 2.0, 0 * y - 1.0), 2, 32))
        assert u_minus_mean_linf(u) == pytest.approx(0.5, rel=1e-12)


class TestWasserstein:
    def test_bound_zero_when_monokinetic(self):
        ens = ensemble([[0, 0], [1, 2]], [[0.2, 0.2], [0.2, 0.2]], [0.5, 0.5])
        assert wasserstein_bound(ens, [0.2, 0.2], 1) == 0.0

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_exact_below_bound(self, seed):
        rng = np.random.default_rng(seed)
        ens = sample_ensemble(2, 500, 1.0, [0.5, 0], 1.0, rng)
        exact, bound = subsample_w1(ens, np.array([0.4, 0.1]), 64, rng)
        assert exact <= bound + 1e-12


class TestHistogram:
    def test_q1_is_mass(self):
        rng = np.random.default_rng(6)
        ens = sample_ensemble(2, 200, 0.37, [0, 0], 1.0, rng)
        assert fq_histogram_norm(ens, 1) == pytest.approx(0.37)

    def test_empty(self):
        assert fq_histogram_norm(ParticleEnsemble.empty(2), 2) == 0.0

    def test_uniform_density(self):
        bins, M = 4, 2.0
        centers_x = (np.arange(bins) + 0.5) * TWO_PI / bins
        centers_v = -1 + (np.arange(bins) + 0.5) * 2 / bins
        grid = np.array(np.meshgrid(centers_x, centers_x, centers_v, centers_v, indexing="ij")).reshape(4, -1).T
        K = grid.shape[0]
        ens = ParticleEnsemble(grid[:, :2], grid[:, 2:], np.full(K, M / K))
        V = 1.0 * 4.0  # unit torus measure times the [-1, 1]^2 velocity box
        for q in (2.0, 3.0):
            got = fq_histogram_norm(ens, q, bins, v_box=(-1.0, 1.0))
            assert got == pytest.approx(M * V ** ((1 - q) / q), rel=1e-12)


def test_mass_is_bit_exact_over_steps():
    rng = np.random.default_rng(7)
    ens = sample_ensemble(2, 300, 1.0, [1, 0], 1.0, rng)
    fluid = FluidState(random_solenoidal(2, 16, rng), 1.0)
    m0 = ens.w.sum()
    for _ in range(10):
        ens, fluid = step_coupled(ens, fluid, CommunicationWeight(1, 0.2), 1e-2)
        assert ens.w.sum() == m0


def test_energy_nonincreasing_and_balance():
    rng = np.random.default_rng(8)
    ens = sample_ensemble(2, 500, 1.0, [0.5, 0], 1.0, rng)
    fluid = FluidState(random_solenoidal(2, 16, rng, amplitude=0.5), 1.0)
    psi = CommunicationWeight(1.0, 0.3)
    E = [total_energy(ens, fluid.u)]
    for _ in range(20):
        ens, fluid = step_coupled(ens, fluid, psi, 5e-3)
        E.append(total_energy(ens, fluid.u))
    assert np.all(np.diff(E) <= 1e-8)


def test_snapshot_row_columns():
    rng = np.random.default_rng(9)
    ens = sample_ensemble(2, 100, 1.0, [0.5, 0], 1.0, rng)
    u = random_solenoidal(2, 16, rng)
    rec = snapshot(0.0, ens, u, CommunicationWeight(), 1.0, [0.25, 0.0], p_list=[1, 2], q_list=[2],
                   w1_sample=(32, rng))
    row = rec.as_row()
    for col in ("t", "mass", "momentum_0", "momentum_1", "energy", "lyapunov", "dissipation", "v_c_0", "u_c_1",
                "support_radius", "moment_p1", "moment_p2", "drag_l2", "drag_linf", "vorticity_l2",
                "u_minus_mean_linf", "w_bound_p1", "w1_exact", "fq_q2", "max_cell_density"):
        assert col in row
    assert row["w1_exact"] <= row["w1_bound_sub"] + 1e-12
    assert row["max_cell_density"] == max_cell_density(ens, 16)


def test_snapshot_without_particles():
    rec = snapshot(0.0, ParticleEnsemble.empty(2), taylor_green(16), CommunicationWeight(), 1.0, [0, 0])
    assert rec.mass == 0.0 and np.isnan(rec.support_radius)
    assert rec.lyapunov == pytest.approx(0.5 * l2_norm_sq(taylor_green(16)))
