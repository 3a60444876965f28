import math

import numpy as np
import pytest

import vicsekkit as vk
from vicsekkit.errors import (
    InvalidInputError,
    SingularFluxError,
    SnapshotRangeError,
)
from vicsekkit.kinetic import assemble_fields

REG = vk.RegularizationSpec(eps0=0.05)


def vonmises_state(kappa, n_theta=128, perturbation=0.0):
    g = vk.SphereGridS1(n_theta)
    f = vk.vonmises_values(g, kappa)
    if perturbation:
        f = f * (1.0 + perturbation * np.cos(2.0 * g.theta))
        f = f / (f @ g.weights)
    return vk.KineticState(grid=g, f=f)


class TestLinearStep:
    def test_heat_mode_decay(self):
        # Fourier oracle: 1 + cos theta -> 1 + e^{-sigma t} cos theta
        g = vk.SphereGridS1(128)
        state = vk.KineticState(grid=g, f=1.0 + np.cos(g.theta))
        fld = vk.LinearCoefficientField(
            sigma_bar=np.ones(128), psi_theta=np.zeros(128)
        )
        dt, steps = 1e-3, 500
        for _ in range(steps):
            state = vk.step_linear(state, fld, c=1.0, dt=dt)
        exact = 1.0 + math.exp(-dt * steps) * np.cos(g.theta)
        assert np.max(np.abs(state.f - exact)) < 1e-3

    def test_uniform_fixed_point(self):
        g = vk.SphereGridS1(64)
        state = vk.KineticState(grid=g, f=np.full(64, 0.25))
        fld = vk.LinearCoefficientField(
            sigma_bar=np.full(64, 2.0), psi_theta=np.zeros(64)
        )
        out = vk.step_linear(state, fld, c=0.0, dt=1e-2)
        assert np.max(np.abs(out.f - 0.25)) < 1e-13

    @pytest.mark.parametrize("method", ["implicit", "explicit"])
    def test_mass_conserved_1000_steps(self, method):
        g = vk.SphereGridS1(64)
        state = vonmises_state(2.0, 64)
        m0 = state.mass()
        sig = np.full(64, 1.0)
        psi = 0.8 * np.sin(g.theta)
        fld = vk.LinearCoefficientField(sigma_bar=sig, psi_theta=psi)
        dt = 1e-3 if method == "implicit" else 0.3 * g.dtheta**2
        for _ in range(1000):
            state = vk.step_linear(state, fld, c=1.0, dt=dt,
                                   theta_method=method)
        assert abs(state.mass() - m0) < 1e-12

    def test_positivity_implicit(self):
        g = vk.SphereGridS1(96)
        state = vonmises_state(3.0, 96)
        fld = vk.LinearCoefficientField(
            sigma_bar=np.ones(96), psi_theta=1.5 * np.sin(g.theta)
        )
        for _ in range(300):
            state = vk.step_linear(state, fld, c=0.0, dt=2e-3)
            assert float(np.min(state.f)) >= -1e-12

    def test_explicit_cfl_guard(self):
        g = vk.SphereGridS1(64)
        state = vonmises_state(1.0, 64)
        fld = vk.LinearCoefficientField(
            sigma_bar=np.ones(64), psi_theta=np.zeros(64)
        )
        with pytest.raises(InvalidInputError):
            vk.step_linear(state, fld, c=0.0, dt=1.0, theta_method="explicit")

    def test_field_shape_mismatch(self):
        g = vk.SphereGridS1(64)
        state = vonmises_state(1.0, 64)
        fld = vk.LinearCoefficientField(
            sigma_bar=np.ones(32), psi_theta=np.zeros(32)
        )
        with pytest.raises(vk.GridMismatchError):
            vk.step_linear(state, fld, c=0.0, dt=1e-3)


class TestTransport:
    def grid_state(self):
        g = vk.SphereGridS1(32)
        sp = vk.SpatialGrid1D(n_x=64, L=1.0)
        f_theta = np.zeros(32)
        f_theta[0] = 1.0 / g.dtheta  # concentrated at theta = 0
        prof = np.exp(-((sp.x - 0.5) ** 2) / 0.01)
        prof /= prof.sum() * sp.dx
        return vk.KineticState(grid=g, f=np.outer(prof, f_theta), spatial=sp)

    @pytest.mark.parametrize("theta_idx,direction", [(0, 1.0), (16, -1.0)])
    def test_transport_moves_center_of_mass(self, theta_idx, direction):
        # theta = 0 moves right at speed c, theta = pi moves left
        g = vk.SphereGridS1(32)
        sp = vk.SpatialGrid1D(n_x=64, L=1.0)
        f_theta = np.zeros(32)
        f_theta[theta_idx] = 1.0 / g.dtheta
        prof = np.exp(-((sp.x - 0.5) ** 2) / 0.01)
        prof /= prof.sum() * sp.dx
        state = vk.KineticState(grid=g, f=np.outer(prof, f_theta), spatial=sp)
        m0 = state.mass()
        fld = vk.LinearCoefficientField(
            sigma_bar=np.full(state.f.shape, 1e-8),
            psi_theta=np.zeros(state.f.shape),
        )
        dt, steps, c = 2e-3, 100, 1.0
        com0 = float(np.sum(state.spatial.x * state.f.sum(axis=1))
                     / state.f.sum())
        for _ in range(steps):
            state = vk.step_linear(state, fld, c=c, dt=dt)
        com = float(np.sum(state.spatial.x * state.f.sum(axis=1))
                    / state.f.sum())
        assert abs((com - com0) - direction * c * dt * steps) < 0.05
        assert abs(state.mass() - m0) < 1e-12
        assert float(np.min(state.f)) >= -1e-12


class TestNonlinearSolve:
    def test_alpha_one_uniform_is_stationary(self):
        c = vk.preset("non-normalized")
        g = vk.SphereGridS1(64)
        state = vk.uniform_state(g)
        traj = vk.solve_nonlinear(state, c, T=0.05, dt=1e-3, mode="exact")
        assert np.max(np.abs(traj.states[-1].f - state.f)) < 1e-12

    def test_vonmises_is_steady_state(self):
        c = vk.preset("classic-vicsek")  # kappa = |nu| / sigma = 2
        state = vonmises_state(2.0)
        traj = vk.solve_nonlinear(state, c, T=0.5, dt=1e-3, mode="exact",
                                  snapshot_stride=100)
        resid0 = vk.equilibrium_residual(state, c)
        for s in traj.states:
            assert vk.equilibrium_residual(s, c) < 10.0 * max(
                resid0, 2.0 * state.grid.dtheta**2
            )

    def test_regularized_matches_exact_above_floor(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0)
        a = vk.solve_nonlinear(state, c, T=0.1, dt=1e-3, mode="exact",
                               snapshot_stride=20)
        b = vk.solve_nonlinear(state, c, T=0.1, dt=1e-3, mode="regularized",
                               reg=vk.RegularizationSpec(eps0=0.1),
                               snapshot_stride=20)
        for sa, sb in zip(a.states, b.states):
            assert np.array_equal(sa.f, sb.f)

    def test_exact_mode_degenerate_flux_raises(self):
        c = vk.preset("classic-vicsek")
        g = vk.SphereGridS1(64)
        state = vk.uniform_state(g)
        with pytest.raises(SingularFluxError):
            vk.solve_nonlinear(state, c, T=0.01, dt=1e-3, mode="exact")

    def test_horizon_warning(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0)
        rep = vk.constants_report(state, c)
        with pytest.warns(UserWarning):
            vk.solve_nonlinear(state, c, T=10 * rep.T1, dt=1e-3,
                               mode="exact", snapshot_stride=1000, report=rep)

    def test_trajectory_interpolation(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0)
        traj = vk.solve_nonlinear(state, c, T=0.02, dt=1e-3, mode="exact",
                                  snapshot_stride=5)
        mid = traj.at(0.0075)
        assert mid.t == pytest.approx(0.0075)
        lo, hi = traj.at(0.005), traj.at(0.01)
        assert np.allclose(mid.f, 0.5 * (lo.f + hi.f), atol=1e-12)
        with pytest.raises(SnapshotRangeError):
            traj.at(1.0)


class TestDiagnostics:
    def test_uniform_stationary_energy(self):
        c = vk.preset("non-normalized")
        g = vk.SphereGridS1(64)
        state = vk.uniform_state(g)
        traj = vk.solve_nonlinear(state, c, T=0.02, dt=1e-3, mode="exact")
        er = vk.free_energy_and_dissipation(traj, c, mode="exact")
        assert np.max(np.abs(er.D)) < 1e-20
        assert np.max(np.abs(np.diff(er.F))) < 1e-14

    def test_energy_decay_and_identity(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0, 128, perturbation=0.3)
        traj = vk.solve_nonlinear(state, c, T=0.3, dt=2e-3, mode="exact")
        er = vk.free_energy_and_dissipation(traj, c, mode="exact")
        assert np.all(np.diff(er.F) <= 1e-12)
        d_mid = 0.5 * (er.D[1:] + er.D[:-1])
        assert np.all(er.residual <= 5e-3 * (1.0 + d_mid))

    def test_equilibrium_residual_cases(self):
        c1 = vk.preset("non-normalized")
        g = vk.SphereGridS1(64)
        assert vk.equilibrium_residual(vk.uniform_state(g), c1) < 1e-12
        rng = np.random.default_rng(0)
        noisy = vk.KineticState(grid=g, f=0.1 + rng.uniform(size=64))
        c0 = vk.preset("classic-vicsek")
        assert vk.equilibrium_residual(noisy, c0) > 0.1

    def test_lp_growth_pure_diffusion(self):
        c = vk.preset("non-normalized")
        g = vk.SphereGridS1(64)
        state = vk.uniform_state(g)
        traj = vk.solve_nonlinear(state, c, T=0.05, dt=1e-3, mode="exact")
        rep = vk.constants_report(state, c)
        for p in (2, math.inf):
            res = vk.lp_growth_check(traj, p, rep)
            assert res.ok

    def test_lp_growth_classic_run(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0, perturbation=0.2)
        traj = vk.solve_nonlinear(state, c, T=0.2, dt=1e-3, mode="exact")
        rep = vk.constants_report(state, c)
        assert vk.lp_growth_check(traj, 2, rep).ok
        assert vk.lp_growth_check(traj, math.inf, rep).ok
        # t = 0 snapshot sits exactly on the bound (up to the slack)
        n0 = traj.states[0].l2_norm()
        assert n0 <= math.exp(0.0) * n0 * (1 + 5e-3)

    def test_flux_floor_classic(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0)
        rep = vk.constants_report(state, c)
        traj = vk.solve_nonlinear(state, c, T=0.5, dt=1e-3, mode="exact",
                                  snapshot_stride=50)
        res = vk.flux_floor_check(traj, rep, c)
        assert res.ok, res

    def test_dependence_on_coefficients(self):
        g = vk.SphereGridS1(96)
        f0 = vonmises_state(2.0, 96)
        sig = np.ones(96)
        psi = 0.7 * np.sin(g.theta)
        fa = vk.LinearCoefficientField(sigma_bar=sig, psi_theta=psi)
        # identical fields: both sides vanish
        same = vk.coefficient_dependence_check(f0, fa, fa, c=1.0, T=0.05,
                                               dt=1e-3)
        assert same.ok
        # constant tangential shift of the drift
        fb = vk.LinearCoefficientField(sigma_bar=sig, psi_theta=psi + 0.3)
        shifted = vk.coefficient_dependence_check(f0, fa, fb, c=1.0, T=0.05,
                                                  dt=1e-3)
        assert shifted.ok, shifted
        # viscosity scaled by 1.5
        fc = vk.LinearCoefficientField(sigma_bar=1.5 * sig, psi_theta=psi)
        scaled = vk.coefficient_dependence_check(f0, fa, fc, c=1.0, T=0.05,
                                                 dt=1e-3)
        assert scaled.ok, scaled

    def test_assemble_fields_regularized_needs_reg(self):
        c = vk.preset("classic-vicsek")
        state = vonmises_state(2.0)
        with pytest.raises(InvalidInputError):
            assemble_fields(state, c, mode="regularized", reg=None)
