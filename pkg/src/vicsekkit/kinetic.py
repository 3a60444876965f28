"""Conservative solver for the kinetic equation on (point or 1D torus) x S^1.

The orientation operator is discretized in conservative flux form
d_theta(sigma_bar d_theta f + psi_theta f) with face-centered
coefficients, so total mass is preserved to round-off by telescoping.
Spatial transport (when a torus grid is present) is first-order upwind
inside a Strang splitting.  The nonlinear solve assembles the
coefficient fields from the model at every step and reuses the linear
stepper.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import (
    SINGULAR_FLUX_TOL,
    flux_field,
    tau_soft,
)
from .errors import (
    GridMismatchError,
    InvalidInputError,
    SingularFluxError,
    SnapshotRangeError,
)
from .sphere import SphereGridS1, ddtheta

#: nodes with f below this contribute nothing to entropy/log terms
ENTROPY_GUARD = 1e-30


@dataclass(frozen=True)
class SpatialGrid1D:
    """Uniform periodic grid on a torus of length L (cell centers)."""

    n_x: int
    L: float

    @property
    def dx(self):
        return self.L / self.n_x

    @property
    def x(self):
        return self.L * (np.arange(self.n_x) + 0.5) / self.n_x


@dataclass
class KineticState:
    """Discretized density f(t, x, theta) >= 0 with its grids.

    f has shape (n_theta,) when spatial is None (space-homogeneous) and
    (n_x, n_theta) on the torus.
    """

    grid: SphereGridS1
    f: np.ndarray
    t: float = 0.0
    spatial: Optional[SpatialGrid1D] = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        expected = (
            (self.grid.n_theta,)
            if self.spatial is None
            else (self.spatial.n_x, self.grid.n_theta)
        )
        if self.f.shape != expected:
            raise GridMismatchError(
                f"f has shape {self.f.shape}, expected {expected}"
            )

    def _dx(self):
        return 1.0 if self.spatial is None else self.spatial.dx

    def mass(self):
        return float(np.sum(self.f) * self.grid.dtheta * self._dx())

    def l2_norm(self):
        return float(math.sqrt(np.sum(self.f**2) * self.grid.dtheta * self._dx()))

    def linf_norm(self):
        return float(np.max(np.abs(self.f)))

    def volume(self):
        """Measure of the phase space Omega x S^1."""
        vol = 2.0 * np.pi
        if self.spatial is not None:
            vol *= self.spatial.L
        return vol

    def copy_with(self, f=None, t=None):
        return KineticState(
            grid=self.grid,
            f=self.f.copy() if f is None else f,
            t=self.t if t is None else t,
            spatial=self.spatial,
        )


@dataclass(frozen=True)
class LinearCoefficientField:
    """Given coefficients (sigma_bar, psi_theta) of the linear equation.

    psi_theta is the tangential component of the drift field in the
    theta parameterization (the full vector field is psi_theta *
    t(theta), automatically orthogonal to omega).  Shapes match the
    state's f.
    """

    sigma_bar: np.ndarray
    psi_theta: np.ndarray

    def sigma_min(self):
        return float(np.min(self.sigma_bar))


def uniform_state(grid, mass=1.0, spatial=None):
    """The uniform density with the given total mass."""
    vol = 2.0 * np.pi if spatial is None else 2.0 * np.pi * spatial.L
    value = mass / vol
    shape = (grid.n_theta,) if spatial is None else (spatial.n_x, grid.n_theta)
    return KineticState(grid=grid, f=np.full(shape, value), spatial=spatial)


# ---------------------------------------------------------------------------
# linear stepping


def _theta_operator_coeffs(f2d, sigma2d, psi2d, dtheta):
    """Periodic tridiagonal coefficients of the conservative theta operator.

    Returns (lower, diag, upper) per slice such that (A f)_k =
    lower_k f_{k-1} + diag_k f_k + upper_k f_{k+1} (indices cyclic).
    """
    sig_face = 0.5 * (sigma2d + np.roll(sigma2d, -1, axis=-1))  # at k + 1/2
    psi_face = 0.5 * (psi2d + np.roll(psi2d, -1, axis=-1))
    upper = (sig_face / dtheta + 0.5 * psi_face) / dtheta
    lower = (
        np.roll(sig_face, 1, axis=-1) / dtheta - 0.5 * np.roll(psi_face, 1, axis=-1)
    ) / dtheta
    diag = (
        -(sig_face + np.roll(sig_face, 1, axis=-1)) / dtheta
        + 0.5 * (psi_face - np.roll(psi_face, 1, axis=-1))
    ) / dtheta
    return lower, diag, upper


def _apply_theta_operator(f2d, lower, diag, upper):
    return (
        lower * np.roll(f2d, 1, axis=-1)
        + diag * f2d
        + upper * np.roll(f2d, -1, axis=-1)
    )


def _solve_periodic_tridiag(lower, diag, upper, rhs):
    """Solve the cyclic tridiagonal system via Sherman-Morrison.

    Row k is lower_k f_{k-1} + diag_k f_k + upper_k f_{k+1} = rhs_k with
    cyclic indices; corner entries are lower_0 and upper_{n-1}.
    """
    n = diag.shape[0]
    alpha = lower[0]  # M[0, n-1]
    beta = upper[n - 1]  # M[n-1, 0]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[n - 1] -= alpha * beta / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[: n - 1]
    ab[1] = d
    ab[2, : n - 1] = lower[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[n - 1] = beta
    sol = solve_banded((1, 1), ab, np.column_stack([rhs, u]))
    y, z = sol[:, 0], sol[:, 1]
    vy = y[0] + alpha / gamma * y[n - 1]
    vz = z[0] + alpha / gamma * z[n - 1]
    return y - z * (vy / (1.0 + vz))


def _theta_step(f2d, sigma2d, psi2d, dtheta, dt, method):
    lower, diag, upper = _theta_operator_coeffs(f2d, sigma2d, psi2d, dtheta)
    if method == "explicit":
        cfl = 0.4 * dtheta**2 / float(np.max(sigma2d))
        if dt > cfl:
            raise InvalidInputError(
                f"explicit theta step violates CFL: dt={dt} > {cfl:.3e}"
            )
        return f2d + dt * _apply_theta_operator(f2d, lower, diag, upper)
    if method != "implicit":
        raise InvalidInputError(f"unknown theta method {method!r}")
    out = np.empty_like(f2d)
    for i in range(f2d.shape[0]):
        # backward Euler: (I - dt A) f_new = f_old
        out[i] = _solve_periodic_tridiag(
            -dt * lower[i], 1.0 - dt * diag[i], -dt * upper[i], f2d[i]
        )
    return out


def _transport_step(f2d, c, theta, dx, dt):
    """First-order upwind advection in x with speed c cos(theta), periodic."""
    speeds = c * np.cos(theta)
    n_sub = max(1, int(np.ceil(np.max(np.abs(speeds)) * dt / (0.9 * dx))))
    h = dt / n_sub
    out = f2d
    pos = speeds > 0.0
    neg = speeds < 0.0
    lam = np.abs(speeds) * h / dx
    for _ in range(n_sub):
        nxt = out.copy()
        if np.any(pos):
            nxt[:, pos] = out[:, pos] - lam[pos] * (
                out[:, pos] - np.roll(out, 1, axis=0)[:, pos]
            )
        if np.any(neg):
            nxt[:, neg] = out[:, neg] + lam[neg] * (
                np.roll(out, -1, axis=0)[:, neg] - out[:, neg]
            )
        out = nxt
    return out


def step_linear(state, coeff_field, c, dt, theta_method="implicit"):
    """One Strang-split step of the linear equation.

    Half-step transport in x (when a spatial grid is present), full
    conservative theta step, half-step transport.
    """
    f2d = np.atleast_2d(state.f)
    sigma2d = np.atleast_2d(coeff_field.sigma_bar)
    psi2d = np.atleast_2d(coeff_field.psi_theta)
    if sigma2d.shape != f2d.shape or psi2d.shape != f2d.shape:
        raise GridMismatchError("coefficient fields must match the state grids")
    if state.spatial is not None:
        f2d = _transport_step(f2d, c, state.grid.theta, state.spatial.dx, 0.5 * dt)
    f2d = _theta_step(f2d, sigma2d, psi2d, state.grid.dtheta, dt, theta_method)
    if state.spatial is not None:
        f2d = _transport_step(f2d, c, state.grid.theta, state.spatial.dx, 0.5 * dt)
    f_new = f2d if state.spatial is not None else f2d[0]
    return state.copy_with(f=f_new, t=state.t + dt)


# ---------------------------------------------------------------------------
# nonlinear solve


def assemble_fields(state, coeffs, t=0.0, mode="regularized", reg=None):
    """Coefficient fields (sigma_bar, psi_theta) of the frozen linearization.

    psi_theta(x, theta) = nu(|J|(x)) * (tau(J(x)) . t(theta)) with tau
    either the exact normalized field or its eps0-softening.  Also
    returns the per-x flux norms for diagnostics.
    """
    jf = np.atleast_2d(flux_field(state, coeffs, t))  # (n_x_eff, d)
    j_norms = np.linalg.norm(jf, axis=-1)
    if mode == "exact":
        if coeffs.alpha == 0.0 and np.min(j_norms) < SINGULAR_FLUX_TOL:
            raise SingularFluxError(
                "flux degenerated during exact-psi solve: "
                f"min |J| = {np.min(j_norms):.3e} at t = {t:.6g} "
                "(sup nu(f)/|J[f]|_alpha = +inf)",
                t=t,
                flux_norm=float(np.min(j_norms)),
            )
        tau = jf / (coeffs.alpha + (1.0 - coeffs.alpha) * j_norms)[:, None]
    elif mode == "regularized":
        if reg is None:
            raise InvalidInputError("regularized mode needs a RegularizationSpec")
        tau = tau_soft(jf, coeffs.alpha, reg.eps0)
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    nu_x = np.array([coeffs.nu(j) for j in j_norms])
    sigma_x = np.array([coeffs.sigma(j) for j in j_norms])
    tang = state.grid.tangent()  # (n_theta, 2)
    psi_theta = nu_x[:, None] * (tau @ tang.T)  # (n_x_eff, n_theta)
    sigma_bar = np.broadcast_to(
        sigma_x[:, None], (len(sigma_x), state.grid.n_theta)
    ).copy()
    if state.spatial is None:
        psi_theta = psi_theta[0]
        sigma_bar = sigma_bar[0]
    return LinearCoefficientField(sigma_bar=sigma_bar, psi_theta=psi_theta), j_norms


@dataclass
class KineticTrajectory:
    """Snapshots of a solve plus per-step flux floor diagnostics."""

    states: list
    step_times: np.ndarray
    min_flux_raw: np.ndarray
    min_flux_alpha: np.ndarray
    mode: str = "regularized"

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def at(self, t, tol=1e-9):
        """State at time t by linear interpolation between snapshots."""
        times = self.times
        if t < times[0] - tol or t > times[-1] + tol:
            raise SnapshotRangeError(
                f"t = {t} outside solved range [{times[0]}, {times[-1]}]"
            )
        t = min(max(t, times[0]), times[-1])
        idx = int(np.searchsorted(times, t))
        if idx < len(times) and abs(times[idx] - t) <= tol:
            return self.states[idx]
        lo, hi = self.states[idx - 1], self.states[idx]
        w = (t - lo.t) / (hi.t - lo.t)
        return lo.copy_with(f=(1.0 - w) * lo.f + w * hi.f, t=t)


def solve_nonlinear(
    state0,
    coeffs,
    T,
    dt,
    mode="regularized",
    reg=None,
    theta_method="implicit",
    snapshot_stride=1,
    report=None,
):
    """March the nonlinear kinetic equation to time T.

    At each step the model coefficients are frozen at the current state
    (sigma(f), nu(f), and the alignment field from J[f]) and one linear
    step is taken.  min |J| and min |J|_alpha over the grid are recorded
    every step.
    """
    if report is not None and mode == "exact" and coeffs.alpha == 0.0:
        if T > report.T1:
            warnings.warn(
                f"horizon T={T} exceeds the certified contraction horizon "
                f"T1={report.T1:.4g}; the exact solve may degenerate",
                stacklevel=2,
            )
    n_steps = int(round(T / dt))
    state = state0.copy_with()
    states = [state.copy_with()]
    step_times, mins_raw, mins_alpha = [], [], []
    for k in range(n_steps):
        t = state.t
        fields, j_norms = assemble_fields(state, coeffs, t, mode, reg)
        step_times.append(t)
        mins_raw.append(float(np.min(j_norms)))
        mins_alpha.append(
            coeffs.alpha + (1.0 - coeffs.alpha) * float(np.min(j_norms))
        )
        state = step_linear(state, fields, coeffs.c, dt, theta_method)
        if (k + 1) % snapshot_stride == 0 or k == n_steps - 1:
            states.append(state.copy_with())
    # flux of the final state
    _, j_final = assemble_fields(state, coeffs, state.t, "regularized",
                                 reg or _unit_reg())
    step_times.append(state.t)
    mins_raw.append(float(np.min(j_final)))
    mins_alpha.append(coeffs.alpha + (1.0 - coeffs.alpha) * float(np.min(j_final)))
    return KineticTrajectory(
        states=states,
        step_times=np.array(step_times),
        min_flux_raw=np.array(mins_raw),
        min_flux_alpha=np.array(mins_alpha),
        mode=mode,
    )


def _unit_reg():
    from .coefficients import RegularizationSpec

    return RegularizationSpec(eps0=SINGULAR_FLUX_TOL)


# ---------------------------------------------------------------------------
# diagnostics


def _integrate(state, values):
    return float(np.sum(values) * state.grid.dtheta * state._dx())


@dataclass
class EnergyReport:
    """Free energy, dissipation, and the decay-identity residuals."""

    t: np.ndarray
    entropy: np.ndarray
    correction_integral: np.ndarray
    F: np.ndarray
    D: np.ndarray
    residual: np.ndarray  # |dF/dt + D| at midpoints, length len(t) - 1

    def max_relative_residual(self):
        d_mid = 0.5 * (self.D[1:] + self.D[:-1])
        return float(np.max(self.residual / (1.0 + np.abs(d_mid))))


def _entropy(state):
    f = state.f
    mask = f > ENTROPY_GUARD
    vals = np.zeros_like(f)
    vals[mask] = f[mask] * np.log(f[mask])
    return _integrate(state, vals)


def free_energy_and_dissipation(trajectory, coeffs, mode=None, reg=None):
    """Free energy F, dissipation D, and the identity residual per step.

    F(t) accumulates the drift correction term by trapezoidal time
    quadrature synchronized with the snapshots; the reported residual is
    |Delta F / Delta t + D| with D averaged over the step endpoints.
    """
    states = trajectory.states
    if len(states) < 2:
        raise InvalidInputError("need at least two snapshots")
    mode = mode or trajectory.mode
    ts, ent, gs, ds = [], [], [], []
    for s in states:
        fields, _ = assemble_fields(s, coeffs, s.t, mode, reg or _unit_reg())
        psi_t = fields.psi_theta
        sig = fields.sigma_bar
        f = s.f
        # G = integral of f [div(nu P Psi) - (nu^2/sigma)|P Psi|^2]
        g = _integrate(s, f * (ddtheta(s.grid, psi_t) - psi_t**2 / sig))
        mask = f > ENTROPY_GUARD
        dlog = np.zeros_like(f)
        dlog[mask] = ddtheta(s.grid, np.log(np.maximum(f, ENTROPY_GUARD)))[mask]
        integrand = np.where(mask, sig * f * (dlog + psi_t / sig) ** 2, 0.0)
        d = _integrate(s, integrand)
        ts.append(s.t)
        ent.append(_entropy(s))
        gs.append(g)
        ds.append(d)
    ts = np.array(ts)
    ent = np.array(ent)
    gs = np.array(gs)
    ds = np.array(ds)
    dt_steps = np.diff(ts)
    correction = np.concatenate(
        [[0.0], np.cumsum(0.5 * (gs[1:] + gs[:-1]) * dt_steps)]
    )
    f_energy = ent + correction
    d_mid = 0.5 * (ds[1:] + ds[:-1])
    residual = np.abs(np.diff(f_energy) / dt_steps + d_mid)
    return EnergyReport(
        t=ts, entropy=ent, correction_integral=correction,
        F=f_energy, D=ds, residual=residual,
    )


def equilibrium_residual(state, coeffs, mode="exact", reg=None):
    """sup over nodes of |d_theta ln f + psi_theta / sigma| (d=2 form).

    Vanishes (to scheme order) exactly on the equilibria set where the
    dissipation vanishes.
    """
    fields, _ = assemble_fields(state, coeffs, state.t, mode, reg or _unit_reg())
    f = state.f
    mask = f > ENTROPY_GUARD
    dlog = ddtheta(state.grid, np.log(np.maximum(f, ENTROPY_GUARD)))
    resid = np.abs(dlog + fields.psi_theta / fields.sigma_bar)
    return float(np.max(np.where(mask, resid, 0.0)))


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    margin: float
    first_violation: Optional[float] = None
    detail: str = ""


def lp_growth_check(trajectory, p, report, tol=5e-3):
    """Assert ||f(t)||_p <= e^{C_p t} ||f_0||_p (1 + tol) on every snapshot."""
    if p not in (2, 2.0, math.inf):
        raise InvalidInputError("p must be 2 or inf")
    cp = report.cp(p)
    states = trajectory.states
    t0 = states[0].t
    norm = (lambda s: s.l2_norm()) if p != math.inf else (lambda s: s.linf_norm())
    n0 = norm(states[0])
    worst = math.inf
    first_bad = None
    for s in states:
        bound = math.exp(cp * (s.t - t0)) * n0 * (1.0 + tol)
        margin = bound - norm(s)
        worst = min(worst, margin)
        if margin < 0.0 and first_bad is None:
            first_bad = s.t
    return CheckResult(ok=first_bad is None, margin=worst, first_violation=first_bad)


def flux_floor_check(trajectory, report, coeffs, tol=1e-3, exp_slack=5e-3,
                     check_exponential=None):
    """Check the linear flux floor, and the exponential bound for the
    classic kernel.

    Linear: min|J(t)| >= min|J(0)| - K_inf M0 t - tol for t < T0.
    Exponential (classic-vicsek): |J(t)|^2 >= |J(0)|^2 e^{-2(d-1) sigma0 t}
    (1 - exp_slack).
    """
    ts = trajectory.step_times
    raw = trajectory.min_flux_raw
    j0 = raw[0]
    first_bad = None
    worst = math.inf
    for t, j in zip(ts, raw):
        if t >= report.T0:
            break
        floor = j0 - report.K_inf * report.M0 * t - tol
        worst = min(worst, j - floor)
        if j < floor and first_bad is None:
            first_bad = t
    if check_exponential is None:
        check_exponential = coeffs.name == "classic-vicsek"
    exp_bad = None
    if check_exponential:
        decay = np.exp(-2.0 * (coeffs.d - 1) * coeffs.sigma0 * ts)
        lower = j0**2 * decay * (1.0 - exp_slack)
        bad = raw**2 < lower
        if np.any(bad):
            exp_bad = float(ts[np.argmax(bad)])
        worst = min(worst, float(np.min(raw**2 - lower)))
    ok = first_bad is None and exp_bad is None
    violation = first_bad if first_bad is not None else exp_bad
    return CheckResult(ok=ok, margin=worst, first_violation=violation)


def coefficient_dependence_check(f0_state, field_a, field_b, c, T, dt,
                                 theta_method="implicit", tol=0.05):
    """Two linear solves from the same datum against the stability bound.

    Evaluates both sides of the coefficient-dependence inequality with
    the sum-form pair constant C2(a) + C2(b); returns ok plus the
    left/right ratio.
    """
    def c2_of(fld, grid):
        div = float(np.max(np.abs(ddtheta(grid, np.atleast_2d(fld.psi_theta)))))
        sup = float(np.max(np.abs(fld.psi_theta)))
        return div + sup**2 / fld.sigma_min()

    grid = f0_state.grid
    c2 = c2_of(field_a, grid) + c2_of(field_b, grid)
    sig_plus = float(np.min(field_a.sigma_bar + field_b.sigma_bar))
    dpsi_sup2 = float(np.max(np.abs(field_a.psi_theta - field_b.psi_theta))) ** 2
    dsig_sup2 = float(np.max(np.abs(field_a.sigma_bar - field_b.sigma_bar))) ** 2

    n_steps = int(round(T / dt))
    sa = f0_state.copy_with()
    sb = f0_state.copy_with()
    times = [0.0]
    grad_sq = []  # |grad f1|^2 + |grad f2|^2 per snapshot
    for _ in range(n_steps):
        g = _integrate(sa, ddtheta(grid, sa.f) ** 2) + _integrate(
            sb, ddtheta(grid, sb.f) ** 2
        )
        grad_sq.append(g)
        sa = step_linear(sa, field_a, c, dt, theta_method)
        sb = step_linear(sb, field_b, c, dt, theta_method)
        times.append(sa.t)
    grad_sq.append(
        _integrate(sa, ddtheta(grid, sa.f) ** 2)
        + _integrate(sb, ddtheta(grid, sb.f) ** 2)
    )
    times = np.array(times)
    grad_sq = np.array(grad_sq)
    t_end = times[-1]

    diff = sa.copy_with(f=sa.f - sb.f)
    left = diff.l2_norm() ** 2
    f0_l2sq = f0_state.l2_norm() ** 2
    term_psi = (
        4.0 * math.exp(3.0 * c2 * t_end) * f0_l2sq / sig_plus
    ) * dpsi_sup2 * t_end
    kernel = np.exp(c2 * (t_end - times)) * grad_sq
    term_sigma = (2.0 / sig_plus) * np.trapezoid(kernel, times) * dsig_sup2
    right = term_psi + term_sigma
    if right == 0.0:
        ok = left <= 1e-24
        ratio = 0.0 if ok else math.inf
    else:
        ratio = left / right
        ok = left <= right * (1.0 + tol)
    return CheckResult(ok=ok, margin=right * (1.0 + tol) - left,
                       detail=f"ratio={ratio:.3e}")
