import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import vicsekkit as vk
from vicsekkit.coefficients import (
    existence_horizon,
    flux_floor,
    tau_soft,
)
from vicsekkit.errors import (
    DegenerateInitialFluxError,
    InvalidInputError,
    SingularFluxError,
)
from vicsekkit.meanfield import wasserstein2_empirical
from vicsekkit.particles import ParticleEnsemble


def grid():
    return vk.SphereGridS1(256)


def vonmises_state(kappa, n_theta=256, mean=(1.0, 0.0)):
    g = vk.SphereGridS1(n_theta)
    return vk.KineticState(grid=g, f=vk.vonmises_values(g, kappa, mean))


class TestAlphaNormAndPsi:
    def test_alpha_one_is_one(self):
        assert vk.alpha_norm(np.array([3.0, -4.0]), 1.0) == 1.0

    def test_alpha_zero(self):
        assert vk.alpha_norm(np.array([0.3, 0.4]), 0.0) == pytest.approx(0.5)

    def test_interpolation(self):
        assert vk.alpha_norm(np.array([2.0, 0.0]), 0.25) == pytest.approx(1.75)

    def test_alpha_range(self):
        with pytest.raises(InvalidInputError):
            vk.alpha_norm(np.array([1.0, 0.0]), 1.5)

    def test_psi_normalizes(self):
        assert np.allclose(vk.psi(np.array([3.0, 0.0]), 0.0), [1.0, 0.0])
        assert np.allclose(vk.psi(np.array([3.0, 0.0]), 1.0), [3.0, 0.0])

    def test_psi_singular(self):
        with pytest.raises(SingularFluxError):
            vk.psi(np.zeros(2), 0.0)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-5, 5), min_size=2, max_size=3).filter(
            lambda v: np.linalg.norm(v) > 1e-6
        )
    )
    def test_psi_unit_norm_at_alpha_zero(self, j):
        assert abs(np.linalg.norm(vk.psi(np.array(j), 0.0)) - 1.0) < 1e-12


class TestTauRegularizations:
    def test_matches_psi_above_floor(self):
        j = np.array([0.13, -0.07])
        eps0 = 0.5 * np.linalg.norm(j)
        assert np.array_equal(tau_soft(j, 0.0, eps0), vk.psi(j, 0.0))

    def test_zero_flux_maps_to_zero(self):
        assert np.array_equal(tau_soft(np.zeros(2), 0.0, 0.1), np.zeros(2))

    def test_below_floor_divides_by_eps0(self):
        eps0 = 0.2
        j = np.array([0.05, 0.0])
        assert np.allclose(tau_soft(j, 0.0, eps0), j / eps0)

    def test_continuity_across_floor(self):
        eps0 = 0.3
        delta = 1e-9
        lo = tau_soft(np.array([eps0 - delta, 0.0]), 0.0, eps0)
        hi = tau_soft(np.array([eps0 + delta, 0.0]), 0.0, eps0)
        assert np.linalg.norm(hi - lo) < 1e-7

    def test_gamma_clamp(self):
        v = np.array([0.5, 0.5])
        assert np.array_equal(vk.gamma_clamp(v), v)
        big = np.array([10.0, 0.0])
        assert np.allclose(vk.gamma_clamp(big), [2.0, 0.0])
        assert np.array_equal(vk.gamma_clamp(np.zeros(2)), np.zeros(2))

    def test_tau0_total_at_zero_velocity(self):
        c = vk.preset("classic-vicsek")
        reg = vk.RegularizationSpec(eps0=0.1)
        ens = ParticleEnsemble(X=np.zeros((4, 2)), V=np.tile([1.0, 0.0], (4, 1)))
        out = vk.tau0(np.zeros(2), np.zeros(2), ens, c, reg)
        assert np.all(np.isfinite(out))

    def test_tau0_matches_tau_eps0_on_sphere(self):
        c = vk.preset("classic-vicsek")
        reg = vk.RegularizationSpec(eps0=0.1)
        ens = ParticleEnsemble(X=np.zeros((4, 2)), V=np.tile([1.0, 0.0], (4, 1)))
        v = np.array([0.0, 1.0])
        a = vk.tau0(np.zeros(2), v, ens, c, reg)
        b = vk.tau_eps0(np.zeros(2), v, ens, c, reg)
        assert np.array_equal(a, b)

    def test_tau1_tau2_on_sphere(self):
        v = np.array([0.0, 1.0])
        assert np.allclose(vk.tau1(v), np.eye(2) - np.outer(v, v))
        assert np.allclose(vk.tau2(v), v)

    def test_tau1_tau2_at_zero(self):
        assert np.array_equal(vk.tau1(np.zeros(3)), np.zeros((3, 3)))
        assert np.array_equal(vk.tau2(np.zeros(3)), np.zeros(3))

    def test_tau1_tau2_midrange(self):
        v = np.array([0.75, 0.0])
        expect1 = np.eye(2) - np.outer(v, v) / 0.5625
        assert np.allclose(vk.tau1(v), expect1)
        assert np.allclose(vk.tau2(v), v / 0.5625)

    def test_tau12_continuous_at_half(self):
        lo = vk.tau2(np.array([0.5 - 1e-9, 0.0]))
        hi = vk.tau2(np.array([0.5 + 1e-9, 0.0]))
        assert np.linalg.norm(hi - lo) < 1e-7


class TestFlux:
    def test_empirical_aligned(self):
        c = vk.preset("classic-vicsek")
        ens = ParticleEnsemble(X=np.zeros((8, 2)), V=np.tile([1.0, 0.0], (8, 1)))
        assert np.allclose(vk.flux_empirical(ens, c), [1.0, 0.0])

    def test_empirical_antipodal(self):
        c = vk.preset("classic-vicsek")
        ens = ParticleEnsemble(
            X=np.zeros((2, 2)), V=np.array([[1.0, 0.0], [-1.0, 0.0]])
        )
        assert np.allclose(vk.flux_empirical(ens, c), 0.0, atol=1e-16)

    def test_empirical_matches_bruteforce_mean(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal((5, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        ens = ParticleEnsemble(X=np.zeros((5, 3)), V=v)
        c = vk.preset("classic-vicsek", d=3)
        brute = sum(v[i] for i in range(5)) / 5.0
        assert np.allclose(vk.flux_empirical(ens, c), brute, atol=1e-15)

    def test_empty_ensemble(self):
        c = vk.preset("classic-vicsek")
        ens = ParticleEnsemble(X=np.zeros((0, 2)), V=np.zeros((0, 2)))
        with pytest.raises(InvalidInputError):
            vk.flux_empirical(ens, c)

    def test_kinetic_uniform_is_zero(self):
        c = vk.preset("classic-vicsek")
        g = grid()
        st_u = vk.KineticState(grid=g, f=np.full(g.n_theta, 1 / (2 * np.pi)))
        assert np.linalg.norm(vk.flux_kinetic(st_u, c)) < 1e-12

    def test_kinetic_constant_kernel_factors_out(self):
        k0 = np.array([0.3, -1.2])
        kern = vk.Kernel(func=lambda t, x, xs, v, vs: np.tile(k0, (len(vs), 1)))
        c = replace(vk.preset("classic-vicsek"), kernel=kern)
        state = vonmises_state(3.0)
        j = vk.flux_kinetic(state, c)
        assert np.allclose(j, k0 * state.mass(), atol=1e-12)

    def test_kinetic_vonmises_mean_resultant(self):
        # oracle: mean resultant length c1(kappa) = I1/I0
        c = vk.preset("classic-vicsek")
        state = vonmises_state(4.0)
        j = vk.flux_kinetic(state, c)
        assert np.allclose(j, [sp.i1(4.0) / sp.i0(4.0), 0.0], atol=1e-12)


class TestVonMises:
    def test_uniform_limit(self):
        g = grid()
        vals = vk.vonmises_values(g, 0.0)
        assert np.allclose(vals, 1.0 / (2.0 * np.pi), atol=1e-15)

    def test_normalizer_kappa_one(self):
        # 2 pi I0(1) = 7.954926521...
        g = vk.SphereGridS1(1024)
        params = vk.VonMisesParams.from_grid(g, 1.0)
        assert params.Z == pytest.approx(7.9549265210128452, abs=1e-10)
        assert params.Z == pytest.approx(2.0 * np.pi * sp.i0(1.0), abs=1e-10)

    def test_mean_direction_collinear_and_monotone(self):
        g = grid()
        lengths = []
        for kappa in (0.0, 1.0, 2.0, 4.0, 8.0):
            vals = vk.vonmises_values(g, kappa, (0.0, 1.0))
            j = (vals * g.weights) @ g.omega()
            if kappa > 0:
                assert abs(j[0]) < 1e-12  # collinear with e2
            lengths.append(np.linalg.norm(j))
        assert all(b > a - 1e-14 for a, b in zip(lengths, lengths[1:]))


class TestConstants:
    def test_synthetic_horizon_and_floor(self):
        assert existence_horizon(1.0, 2.0, 0.5) == pytest.approx(0.5)
        assert flux_floor(1.0, 2.0, 0.5, 0.2) == pytest.approx(0.8)

    def test_lambda_zero_at_origin_and_monotone(self):
        state = vonmises_state(2.0)
        rep = vk.constants_report(state, vk.preset("classic-vicsek"))
        assert rep.lambda_of(0.0) == 0.0
        ts = np.linspace(0.0, rep.T0, 50)
        vals = [rep.lambda_of(t) for t in ts]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_report_invariants(self):
        state = vonmises_state(2.0)
        rep = vk.constants_report(state, vk.preset("classic-vicsek"))
        assert rep.T0 == rep.J0 / (2.0 * rep.K_inf * rep.M0)
        assert rep.T1 <= rep.T0
        assert rep.lambda_of(rep.T1) <= 0.25 + 1e-9
        for t in np.linspace(0.0, rep.T1, 20):
            assert rep.c_star(t) > 0.0

    def test_uniform_alpha_one_j0(self):
        g = grid()
        state = vk.KineticState(grid=g, f=np.full(g.n_theta, 1 / (2 * np.pi)))
        rep = vk.constants_report(state, vk.preset("non-normalized"))
        assert rep.J0 == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_initial_flux(self):
        g = grid()
        state = vk.KineticState(grid=g, f=np.full(g.n_theta, 1 / (2 * np.pi)))
        with pytest.raises(DegenerateInitialFluxError):
            vk.constants_report(state, vk.preset("classic-vicsek"))

    def test_cp_limit(self):
        state = vonmises_state(2.0)
        rep = vk.constants_report(state, vk.preset("classic-vicsek"))
        assert rep.cp(math.inf) == rep.C2M
        assert rep.cp(2) > rep.cp(4) > rep.cp(math.inf)

    def test_bitwise_reproducible(self):
        state = vonmises_state(2.0)
        a = vk.constants_report(state, vk.preset("classic-vicsek"))
        b = vk.constants_report(state, vk.preset("classic-vicsek"))
        assert a == b


class TestPresets:
    def test_catalog(self):
        for name in ("classic-vicsek", "non-normalized", "flux-dependent",
                     "signed-kernel"):
            c = vk.preset(name)
            c.validate_sampled(np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            vk.preset("no-such-model")

    def test_alpha_values(self):
        assert vk.preset("classic-vicsek").alpha == 0.0
        assert vk.preset("non-normalized").alpha == 1.0

    def test_flux_dependent_ratio_bounded(self):
        c = vk.preset("flux-dependent")
        # nu(j)/j stays bounded near zero flux (global-existence family)
        for j in (1e-6, 1e-3, 0.1, 1.0):
            assert abs(c.nu(j) / j) <= 2.0 + 1e-12

    def test_signed_kernel_first_coordinate(self):
        c = vk.preset("signed-kernel")
        state = vonmises_state(1.0, mean=(0.0, 1.0))
        j = vk.flux_kinetic(state, c)
        assert j[0] >= 2.0 * state.mass() - 1e-9

    def test_alpha_validation(self):
        with pytest.raises(InvalidInputError):
            replace(vk.preset("classic-vicsek"), alpha=1.5)


class TestLipschitzProbe:
    def test_identity(self):
        est = vk.lipschitz_probe(
            lambda x: x, lambda rng: rng.uniform(-1, 1, 3), 64, seed=0
        )
        assert est <= 1.0 + 1e-12

    def test_constant(self):
        est = vk.lipschitz_probe(
            lambda x: np.zeros(2), lambda rng: rng.uniform(-1, 1, 3), 64, seed=0
        )
        assert est == 0.0

    def test_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            vk.lipschitz_probe(lambda x: x, lambda rng: rng.uniform(), 1, seed=0)

    def test_tau_eps0_probe_finite_and_stable(self):
        c = vk.preset("classic-vicsek")
        reg = vk.RegularizationSpec(eps0=0.2)

        def sampler(rng):
            v = rng.standard_normal(2)
            v /= np.linalg.norm(v)
            vs = rng.standard_normal((6, 2))
            vs /= np.linalg.norm(vs, axis=1, keepdims=True)
            return v, ParticleEnsemble(X=np.zeros((6, 2)), V=vs)

        def distance(a, b):
            zv = np.column_stack([a[1].X, a[1].V])
            zw = np.column_stack([b[1].X, b[1].V])
            return float(
                np.linalg.norm(a[0] - b[0]) + wasserstein2_empirical(zv, zw)
            )

        fn = lambda arg: vk.tau_eps0(np.zeros(2), arg[0], arg[1], c, reg)
        est1 = vk.lipschitz_probe(fn, sampler, 64, seed=5, distance=distance)
        est2 = vk.lipschitz_probe(fn, sampler, 128, seed=5, distance=distance)
        assert np.isfinite(est1) and est1 > 0.0
        assert est2 <= est1 * 1.2 or est1 <= est2 * 1.2
        assert abs(est2 - est1) <= 0.2 * max(est1, est2)
