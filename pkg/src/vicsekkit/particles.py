"""Time integration of the interacting particle systems on the sphere.

Implements the approximated (eps0-regularized) system, the exact Vicsek
system, the tau1/tau2-regularized Ito system, and the auxiliary process
driven by a kinetic solution, in Stratonovich-Heun and projected-Ito
formulations, for d in {2, 3} on a torus or in free space.

Randomness is counter-based: every Brownian increment is reproducible
from (master seed, replica, step) with one row per stream id, so paired
runs can share noise exactly and permuting particles together with their
stream ids permutes trajectories bitwise.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import _fsum_rows, flux_field, tau1, tau2, tau_soft
from .errors import InvalidInputError, SingularFluxError

TAG_INIT = 0
TAG_NOISE = 1

#: corrector sweeps of the Stratonovich midpoint scheme
MIDPOINT_ITERS = 4

SCHEMES = ("stratonovich-heun", "ito-projected")
VARIANTS = ("approximated", "vicsek-exact", "regularized", "auxiliary")


def stream_rng(seed, replica, tag, step=0):
    """Deterministic generator for the (seed, replica, tag, step) stream."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(replica, tag, step))
    )


def brownian_increments(seed, replica, step, n_streams, d, dt):
    """Brownian increments over one step, one row per stream id."""
    xi = stream_rng(seed, replica, TAG_NOISE, step).standard_normal((n_streams, d))
    return math.sqrt(dt) * xi


@dataclass
class ParticleEnsemble:
    """N positions and N unit velocities with their RNG stream ids."""

    X: np.ndarray
    V: np.ndarray
    t: float = 0.0
    stream_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.stream_ids is None:
            self.stream_ids = np.arange(self.X.shape[0])

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def copy(self):
        return ParticleEnsemble(
            X=self.X.copy(), V=self.V.copy(), t=self.t,
            stream_ids=self.stream_ids.copy(),
        )

    def max_speed_error(self):
        return float(np.max(np.abs(np.linalg.norm(self.V, axis=1) - 1.0)))


@dataclass(frozen=True)
class SimConfig:
    """Integration parameters of one particle run."""

    dt: float
    T: float
    scheme: str = "stratonovich-heun"
    d: int = 2
    domain: Optional[float] = 1.0  # torus period, or None for free space
    seed: int = 0
    variant: str = "approximated"
    renormalize: bool = True
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0.0 or self.T < self.dt:
            raise InvalidInputError("need dt > 0 and T >= dt")
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.scheme!r}")
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {self.variant!r}")

    def n_steps(self):
        return int(round(self.T / self.dt))

    def check_stability(self, coeffs):
        if self.dt * coeffs.nu_inf > 0.1:
            warnings.warn(
                f"dt * nu_inf = {self.dt * coeffs.nu_inf:.3g} > 0.1; "
                "the alignment drift is marginally resolved",
                stacklevel=2,
            )


# ---------------------------------------------------------------------------
# initial sampling


@dataclass(frozen=True)
class InitialSpec:
    """Catalogued product initial laws: spatial marginal x orientation."""

    orientation: str = "uniform"  # "uniform" | "von-mises"
    kappa: float = 0.0
    mean_direction: Optional[tuple] = None
    space: str = "uniform"  # "point" | "uniform" | "gaussian"
    x0: float = 0.0
    std: float = 1.0

    def mu(self, d):
        if self.mean_direction is None:
            mu = np.zeros(d)
            mu[0] = 1.0
            return mu
        mu = np.asarray(self.mean_direction, dtype=float)
        return mu / np.linalg.norm(mu)


def _sample_orientations(spec, n, d, rng):
    if spec.orientation == "uniform":
        v = rng.standard_normal((n, d))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    if spec.orientation != "von-mises":
        raise InvalidInputError(f"unsupported orientation law {spec.orientation!r}")
    mu = spec.mu(d)
    kappa = spec.kappa
    if kappa == 0.0:
        v = rng.standard_normal((n, d))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    if d == 2:
        base = math.atan2(mu[1], mu[0])
        ang = rng.vonmises(base, kappa, size=n)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        # exact inverse-CDF for the cosine against the mean direction
        u = rng.uniform(size=n)
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        xi = rng.standard_normal((n, 3))
        xi -= (xi @ mu)[:, None] * mu
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        return w[:, None] * mu + np.sqrt(np.maximum(1.0 - w**2, 0.0))[:, None] * xi
    raise InvalidInputError(f"unsupported dimension {d}")


def sample_initial(f0_spec, n, seed, d=2, domain=1.0, replica=0):
    """N i.i.d. draws from a catalogued law; deterministic for fixed seed."""
    if n < 1:
        raise InvalidInputError("need at least one particle")
    rng = stream_rng(seed, replica, TAG_INIT)
    if f0_spec.space == "point":
        x = np.full((n, d), f0_spec.x0, dtype=float)
    elif f0_spec.space == "uniform":
        if domain is None:
            raise InvalidInputError("uniform spatial law needs a torus domain")
        x = rng.uniform(0.0, domain, size=(n, d))
    elif f0_spec.space == "gaussian":
        x = f0_spec.x0 + f0_spec.std * rng.standard_normal((n, d))
    else:
        raise InvalidInputError(f"unsupported spatial law {f0_spec.space!r}")
    v = _sample_orientations(f0_spec, n, d, rng)
    return ParticleEnsemble(X=x, V=v)


# ---------------------------------------------------------------------------
# coefficient evaluation along the dynamics


class KineticCoefficientPath:
    """Flux/coefficients of a kinetic solution, linearly interpolated in t.

    The flux is linear in f, so interpolating the per-snapshot flux
    vectors coincides with the flux of the interpolated state.
    """

    def __init__(self, trajectory, coeffs):
        self.trajectory = trajectory
        self.coeffs = coeffs
        self.times = trajectory.times
        self._flux = np.array(
            [np.atleast_2d(flux_field(s, coeffs, s.t))[0] for s in trajectory.states]
        )
        if any(s.spatial is not None for s in trajectory.states):
            raise InvalidInputError(
                "auxiliary coupling supports the space-homogeneous preset"
            )

    def flux(self, t):
        ts = self.times
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            from .errors import SnapshotRangeError

            raise SnapshotRangeError(
                f"t = {t} outside kinetic solve range [{ts[0]}, {ts[-1]}]"
            )
        t = min(max(t, ts[0]), ts[-1])
        idx = int(np.searchsorted(ts, t))
        if idx < len(ts) and abs(ts[idx] - t) <= 1e-12:
            return self._flux[idx]
        w = (t - ts[idx - 1]) / (ts[idx] - ts[idx - 1])
        return (1.0 - w) * self._flux[idx - 1] + w * self._flux[idx]


def _empirical_flux_rows(X, V, coeffs, t, measure=None):
    """Per-particle empirical flux J_i; common row when the kernel allows.

    measure optionally freezes the (X*, V*) rows the kernel integrates
    against while (X, V) remain the query points.
    """
    xm, vm = measure if measure is not None else (X, V)
    k = coeffs.kernel
    n = xm.shape[0]
    if k.orientation_only and k.query_independent:
        j = _fsum_rows(k.on_orientations(vm)) / n
        return np.broadcast_to(j, X.shape), True
    rows = np.empty_like(X)
    for i in range(X.shape[0]):
        vals = np.asarray(k.func(t, X[i], xm, V[i], vm), dtype=float)
        rows[i] = _fsum_rows(vals) / n
    return rows, False


def _measure_flux_rows(X, V, path, t):
    j = path.flux(t)
    return np.broadcast_to(j, X.shape), True


def evaluate_coefficients(X, V, coeffs, reg, t, variant, path=None,
                          measure=None):
    """Per-particle (tau, nu, sigma, |J|) along the chosen system variant."""
    if variant == "auxiliary":
        if path is None:
            raise InvalidInputError("auxiliary variant needs a kinetic path")
        j_rows, common = _measure_flux_rows(X, V, path, t)
    else:
        j_rows, common = _empirical_flux_rows(X, V, coeffs, t, measure)
    j_norm = np.linalg.norm(j_rows, axis=1)
    alpha = coeffs.alpha
    if variant == "vicsek-exact":
        if alpha == 0.0 and np.min(j_norm) < reg.eps0:
            bad = int(np.argmin(j_norm))
            raise SingularFluxError(
                f"exact Vicsek dynamics hit the flux floor: |J| = "
                f"{j_norm[bad]:.3e} < eps0 = {reg.eps0} at particle {bad}, "
                f"t = {t:.6g}",
                t=t, particle=bad, flux_norm=float(j_norm[bad]),
            )
        tau = j_rows / (alpha + (1.0 - alpha) * j_norm)[:, None]
    else:
        tau = tau_soft(j_rows, alpha, reg.eps0)
    if common:
        nu = np.full(len(j_norm), coeffs.nu(j_norm[0]))
        sigma = np.full(len(j_norm), coeffs.sigma(j_norm[0]))
    else:
        nu = np.array([coeffs.nu(j) for j in j_norm])
        sigma = np.array([coeffs.sigma(j) for j in j_norm])
    return tau, nu, sigma, j_norm


def _project_rows(V, rows):
    """Row-wise tangent projection rows - (V . rows) V / |V|^2."""
    n2 = np.sum(V * V, axis=1, keepdims=True)
    return rows - (np.sum(V * rows, axis=1, keepdims=True) / n2) * V


def _grad_sigma_rows(X, V, coeffs, reg, t, variant, path, h=1e-5):
    """Tangential central finite difference of sigma in the velocity slot.

    The measure stays frozen at the current ensemble; only the query
    orientation is perturbed.  Zero without computation for
    query-independent kernels (sigma then cannot depend on it).
    """
    if coeffs.kernel.query_independent:
        return np.zeros_like(V)
    n, d = V.shape
    frozen = (X, V)
    grad = np.zeros_like(V)
    for a in range(d):
        e = np.zeros(d)
        e[a] = 1.0
        _, _, s_p, _ = evaluate_coefficients(X, V + h * e, coeffs, reg, t,
                                             variant, path, measure=frozen)
        _, _, s_m, _ = evaluate_coefficients(X, V - h * e, coeffs, reg, t,
                                             variant, path, measure=frozen)
        grad[:, a] = (s_p - s_m) / (2.0 * h)
    return _project_rows(V, grad)


def _wrap_torus(X, domain):
    if domain is None:
        return X
    return np.mod(X, domain)


def _renormalize_rows(V):
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def step_particles(
    ensemble,
    coeffs,
    reg,
    dt,
    dB,
    scheme="stratonovich-heun",
    variant="approximated",
    domain=1.0,
    renormalize=True,
    path=None,
    ito_correction_sign=-1.0,
):
    """Advance the ensemble by one step of the chosen SDE discretization.

    dB holds the Brownian increments for this step, one row per particle
    (already selected by stream id).  The Stratonovich-Heun corrector
    reuses the same increments as the predictor.  The projected-Ito
    scheme carries the sphere drift ito_correction_sign * (d-1) sigma
    V / |V|^2; the default sign is the one conserving E|V|^2.

    Sign convention: coefficient sets declare nu in the kinetic
    divergence convention (alignment means nu(f) < 0), so the velocity
    drift here is -nu P tau, which relaxes headings toward the local
    flux direction for negative friction.
    """
    X, V, t = ensemble.X, ensemble.V, ensemble.t
    d = ensemble.d

    def strat_drift(Xc, Vc, tc):
        tau, nu, sigma, _ = evaluate_coefficients(
            Xc, Vc, coeffs, reg, tc, variant, path
        )
        drift = -nu[:, None] * _project_rows(Vc, tau)
        grad = _grad_sigma_rows(Xc, Vc, coeffs, reg, tc, variant, path)
        return drift + 0.5 * grad, sigma

    if scheme == "stratonovich-heun":
        # Predictor plus iterated midpoint corrector, same dB throughout.
        # At the corrector fixed point the velocity update is exactly
        # tangent to the midpoint, so |V| is a discrete invariant up to
        # the Picard residual (plain endpoint averaging inflates |V| by
        # O(sigma^2 dt^2) per step, which the sphere invariant test
        # rejects over long runs).
        V_new, X_mid = V, X
        for _ in range(MIDPOINT_ITERS):
            V_mid = 0.5 * (V + V_new)
            X_mid = _wrap_torus(X + 0.5 * dt * V_mid, domain)
            b_m, sig_m = strat_drift(X_mid, V_mid, t + 0.5 * dt)
            g_m = np.sqrt(2.0 * sig_m)[:, None] * _project_rows(V_mid, dB)
            V_new = V + dt * b_m + g_m
        X_new = X + 0.5 * dt * (V + V_new)
    elif scheme == "ito-projected":
        tau, nu, sigma, _ = evaluate_coefficients(X, V, coeffs, reg, t, variant, path)
        if variant == "regularized":
            # total-function form: tau1 for the projector, tau2 for V/|V|^2
            t1 = np.stack([tau1(v) for v in V])
            drift = -nu[:, None] * np.einsum("nij,nj->ni", t1, tau)
            noise = np.sqrt(2.0 * sigma)[:, None] * np.einsum(
                "nij,nj->ni", t1, dB
            )
            corr = np.stack([tau2(v) for v in V])
            sphere_drift = ito_correction_sign * (d - 1) * sigma[:, None] * corr
            grad = _grad_sigma_rows(X, V, coeffs, reg, t, variant, path)
            grad = np.einsum("nij,nj->ni", t1, grad)
        else:
            drift = -nu[:, None] * _project_rows(V, tau)
            noise = np.sqrt(2.0 * sigma)[:, None] * _project_rows(V, dB)
            n2 = np.sum(V * V, axis=1, keepdims=True)
            sphere_drift = ito_correction_sign * (d - 1) * sigma[:, None] * V / n2
            # Ito form carries the full P grad sigma (the Stratonovich half
            # plus the conversion half)
            grad = _grad_sigma_rows(X, V, coeffs, reg, t, variant, path)
        V_new = V + dt * (drift + grad + sphere_drift) + noise
        X_new = X + dt * V
    else:
        raise InvalidInputError(f"unknown scheme {scheme!r}")

    if renormalize:
        V_new = _renormalize_rows(V_new)
    return ParticleEnsemble(
        X=_wrap_torus(X_new, domain),
        V=V_new,
        t=t + dt,
        stream_ids=ensemble.stream_ids,
    )


def step_auxiliary(ensemble, path, coeffs, reg, dt, dB, scheme="stratonovich-heun",
                   domain=1.0, renormalize=True):
    """One step of the auxiliary process: same SDE with coefficients from f_t."""
    return step_particles(
        ensemble, coeffs, reg, dt, dB, scheme=scheme, variant="auxiliary",
        domain=domain, renormalize=renormalize, path=path,
    )


# ---------------------------------------------------------------------------
# full runs


@dataclass
class TrajectoryRecord:
    """Snapshots of one particle run."""

    times: np.ndarray
    X: np.ndarray  # (S, N, d)
    V: np.ndarray  # (S, N, d)
    flux_norm: np.ndarray  # (S, N) per-particle |J|
    mean_velocity: np.ndarray  # (S, d)
    min_flux: np.ndarray  # (S,)
    replica: int = 0


def _snapshot_flux(ensemble, coeffs, reg, variant, path, t):
    variant_for_flux = "approximated" if variant == "vicsek-exact" else variant
    _, _, _, j_norm = evaluate_coefficients(
        ensemble.X, ensemble.V, coeffs, reg, t, variant_for_flux, path
    )
    return j_norm


def run_particles(config, coeffs, reg, f0_spec, n, replica=0, path=None):
    """Simulate n particles from a catalogued initial law.

    Returns a TrajectoryRecord; two calls with identical arguments are
    bitwise identical.
    """
    config.check_stability(coeffs)
    ens = sample_initial(
        f0_spec, n, config.seed, d=config.d, domain=config.domain, replica=replica
    )
    n_steps = config.n_steps()
    times, xs, vs, fluxes, means, minflux = [], [], [], [], [], []

    def record(e):
        j = _snapshot_flux(e, coeffs, reg, config.variant, path, e.t)
        times.append(e.t)
        xs.append(e.X.copy())
        vs.append(e.V.copy())
        fluxes.append(j.copy())
        means.append(_fsum_rows(e.V) / e.n)
        minflux.append(float(np.min(j)))

    record(ens)
    for step in range(n_steps):
        dB = brownian_increments(
            config.seed, replica, step, int(np.max(ens.stream_ids)) + 1,
            config.d, config.dt,
        )[ens.stream_ids]
        ens = step_particles(
            ens, coeffs, reg, config.dt, dB,
            scheme=config.scheme, variant=config.variant,
            domain=config.domain, renormalize=config.renormalize, path=path,
        )
        if (step + 1) % config.snapshot_stride == 0 or step == n_steps - 1:
            record(ens)
    return TrajectoryRecord(
        times=np.array(times), X=np.array(xs), V=np.array(vs),
        flux_norm=np.array(fluxes), mean_velocity=np.array(means),
        min_flux=np.array(minflux), replica=replica,
    )
