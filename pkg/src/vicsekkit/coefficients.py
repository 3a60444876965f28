"""Model coefficients, alignment fields, regularizations, and explicit constants.

A model is a speed c, an interpolation parameter alpha in [0, 1], an
interaction kernel K, a friction nu and a viscosity sigma (both allowed
to depend on the local flux norm |J|, which covers the constant and the
flux-dependent families), together with declared bound/Lipschitz
metadata.  The flux J is the kernel-weighted average of orientations;
the alignment field is Psi = J / (alpha + (1 - alpha)|J|), softened to
tau_eps0 below a flux floor eps0.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateInitialFluxError,
    InvalidInputError,
    SingularFluxError,
)
from .sphere import quadrature_s1

#: below this, |J| at alpha = 0 is treated as a genuine degeneracy
SINGULAR_FLUX_TOL = 1e-10


def _fsum_rows(rows):
    """Columnwise exactly-rounded sum of a (n, d) array.

    math.fsum is correctly rounded, so the result does not depend on row
    order; this keeps particle updates exactly permutation-equivariant.
    """
    return np.array([math.fsum(rows[:, k]) for k in range(rows.shape[1])])


@dataclass(frozen=True)
class Kernel:
    """Interaction kernel K(t, x, x*, v, v*) -> R^d.

    func must broadcast over rows of (x*, v*) for a fixed query (x, v).
    The two flags unlock fast paths: orientation_only means K = K(v*)
    (classic Vicsek family), query_independent means K does not depend
    on the query point (x, v).
    """

    func: Callable
    orientation_only: bool = True
    query_independent: bool = True

    def on_orientations(self, v_star):
        """Evaluate K on rows of orientations (orientation_only kernels)."""
        return np.asarray(self.func(0.0, None, None, None, v_star), dtype=float)


@dataclass(frozen=True)
class CoefficientSet:
    """A catalogued Vicsek model with its bound/Lipschitz metadata.

    nu and sigma map the local flux norm |J| to a rate; constants ignore
    the argument.  The declared metadata is what enters the explicit
    constants; it is exact for catalogued kernels and only spot-checked
    numerically.
    """

    name: str
    d: int
    c: float
    alpha: float
    kernel: Kernel
    nu: Callable[[float], float]
    sigma: Callable[[float], float]
    sigma0: float
    sigma_inf: float
    nu_inf: float
    nu_lip: float
    sigma_lip: float
    k_coord_norms: tuple
    k_sup: float
    k_w1inf_query: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.sigma0 <= self.sigma_inf:
            raise InvalidInputError("need 0 < sigma0 <= sigma_inf")

    def validate_sampled(self, rng, n_samples=64, j_max=None):
        """Spot-check the declared bounds on sampled flux norms."""
        j_max = self.k_sup if j_max is None else j_max
        for j in rng.uniform(0.0, j_max, size=n_samples):
            s = self.sigma(j)
            if not self.sigma0 - 1e-12 <= s <= self.sigma_inf + 1e-12:
                raise InvalidInputError(
                    f"sigma({j}) = {s} outside [{self.sigma0}, {self.sigma_inf}]"
                )
            if abs(self.nu(j)) > self.nu_inf + 1e-12:
                raise InvalidInputError(f"|nu({j})| exceeds declared bound")
        return True


@dataclass(frozen=True)
class RegularizationSpec:
    """Floors and cutoffs of the regularized dynamics."""

    eps0: float
    gamma_radius: float = 2.0
    tau12_threshold: float = 0.5

    def __post_init__(self):
        if self.eps0 <= 0.0:
            raise InvalidInputError("eps0 must be positive")


# ---------------------------------------------------------------------------
# alignment fields


def alpha_norm(j, alpha):
    """The interpolated normalizer alpha + (1 - alpha)|j|."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must be in [0, 1], got {alpha}")
    return alpha + (1.0 - alpha) * float(np.linalg.norm(j))


def psi(j, alpha, singular_tol=SINGULAR_FLUX_TOL):
    """The field Psi = j / |j|_alpha; unit-norm when alpha = 0.

    At alpha = 0 a flux below singular_tol is a genuine degeneracy and
    raises SingularFluxError; callers that must stay total route through
    tau_eps0 instead.
    """
    j = np.asarray(j, dtype=float)
    n = float(np.linalg.norm(j))
    if alpha == 0.0 and n < singular_tol:
        raise SingularFluxError(
            f"normalized field undefined: |J| = {n:.3e} < {singular_tol:.1e}",
            flux_norm=n,
        )
    return j / (alpha + (1.0 - alpha) * n)


def tau_soft(j, alpha, eps0):
    """Total Lipschitz surrogate for psi: j / (alpha + (1-alpha) max(|j|, eps0)).

    Agrees with psi formula-for-formula whenever |j| >= eps0.  Supports a
    trailing vector axis for batched evaluation.
    """
    j = np.asarray(j, dtype=float)
    n = np.linalg.norm(j, axis=-1, keepdims=True)
    return j / (alpha + (1.0 - alpha) * np.maximum(n, eps0))


def gamma_clamp(v, radius=2.0):
    """Radial clamp: identity on |v| <= radius, norm capped at radius."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.where(n > radius, radius / np.maximum(n, 1e-300), 1.0)
    return v * scale


def _ramp(r):
    # 0 below 1/4, 1 above 1/2; the Lipschitz switch of tau1/tau2
    return np.clip(4.0 * r - 1.0, 0.0, 1.0)


def tau1(v):
    """Lipschitz bounded extension of the tangent projector P_{v perp}.

    Exactly Id - v (x) v / |v|^2 for |v| >= 1/2, ramped to the zero
    matrix at v = 0.
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    denom = max(n, 0.25) ** 2
    return _ramp(n) * (np.eye(len(v)) - np.outer(v, v) / denom)


def tau2(v):
    """Lipschitz bounded extension of v / |v|^2, exact for |v| >= 1/2."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    return _ramp(n) * v / max(n, 0.25) ** 2


# ---------------------------------------------------------------------------
# flux evaluation


def flux_empirical(ensemble, coeffs, t=0.0, x=None, v=None):
    """Flux of the empirical measure: (1/N) sum_j K(t, x, X^j, v, V^j).

    With K = omega* this is the arithmetic mean of the velocities.  The
    reduction is exactly rounded, hence independent of particle order.
    """
    if ensemble.n == 0:
        raise InvalidInputError("flux of an empty ensemble is undefined")
    k = coeffs.kernel
    if k.orientation_only:
        rows = k.on_orientations(ensemble.V)
    else:
        rows = np.asarray(
            k.func(t, x, ensemble.X, v, ensemble.V), dtype=float
        )
    return _fsum_rows(rows) / ensemble.n


def flux_kinetic(state, coeffs, t=0.0, x=None, omega=None):
    """Flux of a kinetic density at one query point, by grid quadrature."""
    k = coeffs.kernel
    grid = state.grid
    if k.orientation_only:
        kmat = k.on_orientations(grid.omega())  # (n_theta, d)
        if state.spatial is None:
            return (state.f * grid.weights) @ kmat
        mass_theta = (state.f * grid.weights) @ kmat  # (n_x, d)
        return state.spatial.dx * mass_theta.sum(axis=0)
    # generic kernel: quadrature over all nodes against func
    om = grid.omega()
    if state.spatial is None:
        rows = np.asarray(k.func(t, x, None, omega, om), dtype=float)
        return (state.f * grid.weights) @ rows
    j = np.zeros(coeffs.d)
    for ix, xs in enumerate(state.spatial.x):
        rows = np.asarray(k.func(t, x, xs, omega, om), dtype=float)
        j += state.spatial.dx * ((state.f[ix] * grid.weights) @ rows)
    return j


def flux_field(state, coeffs, t=0.0):
    """Flux on every node of a kinetic state; shape (d,) or (n_x, d).

    Only defined for query-independent kernels (the kinetic solver's
    case); a spatially uniform kernel yields one row per x cell, all
    equal.
    """
    k = coeffs.kernel
    if not k.query_independent:
        raise InvalidInputError("flux_field needs a query-independent kernel")
    if k.orientation_only:
        j = flux_kinetic(state, coeffs, t)
        if state.spatial is not None:
            return np.tile(j, (state.spatial.n_x, 1))
        return j
    if state.spatial is None:
        return flux_kinetic(state, coeffs, t)
    # spatially localized kernel K(x - x*, omega*): circular convolution
    grid = state.grid
    om = grid.omega()
    jx = np.zeros((state.spatial.n_x, coeffs.d))
    for ix, xq in enumerate(state.spatial.x):
        rows_t = np.zeros(coeffs.d)
        for jx_, xs in enumerate(state.spatial.x):
            rows = np.asarray(k.func(t, xq, xs, None, om), dtype=float)
            rows_t += state.spatial.dx * ((state.f[jx_] * grid.weights) @ rows)
        jx[ix] = rows_t
    return jx


def flux_at(m, coeffs, t=0.0, x=None, v=None):
    """Evaluate the flux of a measure-like object m at a query point."""
    if hasattr(m, "V"):
        return flux_empirical(m, coeffs, t, x, v)
    if hasattr(m, "grid"):
        return flux_kinetic(m, coeffs, t, x, v)
    raise InvalidInputError(f"cannot evaluate flux of {type(m).__name__}")


def tau_eps0(x, v, m, coeffs, reg, t=0.0):
    """The regularized alignment field tau_eps0 at a query point.

    Equals Psi whenever |J(x, v, m)| >= eps0; the soft normalizer keeps
    it Lipschitz and bounded everywhere (zero at J = 0).
    """
    j = flux_at(m, coeffs, t, x, v)
    return tau_soft(j, coeffs.alpha, reg.eps0)


def tau0(x, v, m, coeffs, reg, t=0.0):
    """tau_eps0 evaluated through the velocity clamp gamma."""
    return tau_eps0(x, gamma_clamp(v, reg.gamma_radius), m, coeffs, reg, t)


# ---------------------------------------------------------------------------
# von Mises distribution on S^1


@dataclass(frozen=True)
class VonMisesParams:
    """exp(kappa omega . mu) / Z on the orientation circle."""

    kappa: float
    mean_direction: np.ndarray
    Z: float

    @classmethod
    def from_grid(cls, grid, kappa, mean_direction=(1.0, 0.0)):
        mu = np.asarray(mean_direction, dtype=float)
        mu = mu / np.linalg.norm(mu)
        z = quadrature_s1(grid, np.exp(kappa * (grid.omega() @ mu)))
        return cls(kappa=kappa, mean_direction=mu, Z=float(z))


def vonmises_density(params, omega):
    """Density value(s) at omega (last axis is the vector axis)."""
    omega = np.asarray(omega, dtype=float)
    return np.exp(params.kappa * (omega @ params.mean_direction)) / params.Z


def vonmises_values(grid, kappa, mean_direction=(1.0, 0.0)):
    """von Mises density sampled on a grid; integrates to 1 by quadrature."""
    params = VonMisesParams.from_grid(grid, kappa, mean_direction)
    return vonmises_density(params, grid.omega())


# ---------------------------------------------------------------------------
# explicit constants of the local well-posedness theory


def existence_horizon(j0, k_inf, m0):
    """First horizon T0 = J0 / (2 K_inf M0)."""
    return j0 / (2.0 * k_inf * m0)


def flux_floor(j0, k_inf, m0, t):
    """The floor c*(T) = J0 - K_inf M0 T."""
    return j0 - k_inf * m0 * t


@dataclass(frozen=True)
class ConstantsReport:
    """The explicit constants controlling the local existence horizon."""

    M0: float
    J0: float
    C1M: float
    C2M: float
    K_inf: float
    sigma0: float
    sigma_lip: float
    psi_lip: float
    l2_f0: float
    p: float
    Cp: float
    C2_pair: float
    T0: float
    T1: float
    note: str = ""

    def cp(self, p):
        """Lp growth rate C_p = C2M + C1M^2 / ((p-1) sigma0); C_inf = C2M."""
        if p == math.inf:
            return self.C2M
        return self.C2M + self.C1M**2 / ((p - 1.0) * self.sigma0)

    def lambda_of(self, t):
        """Contraction bound Lambda(T); zero at T = 0 and nondecreasing."""
        return (
            2.0
            * self.l2_f0**2
            / self.sigma0**2
            * t
            * math.exp(3.0 * self.C2_pair * t)
            * (self.psi_lip * self.sigma0 + 2.0 * self.sigma_lip)
        )

    def c_star(self, t):
        """Flux floor J0 - K_inf M0 t, positive for t < T1 <= T0."""
        return flux_floor(self.J0, self.K_inf, self.M0, t)


def _bisect_lambda(lambda_of, t_cap, target=0.25, tol=1e-12):
    """Largest t <= t_cap with lambda_of(t) <= target (lambda nondecreasing)."""
    if lambda_of(t_cap) <= target:
        return t_cap
    lo, hi = 0.0, t_cap
    while hi - lo > tol * max(t_cap, 1.0):
        mid = 0.5 * (lo + hi)
        if lambda_of(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def constants_report(f0_state, coeffs, p=2.0):
    """Compute every explicit constant for an initial kinetic state.

    J0 is the grid infimum of |J[f0]|_alpha.  The Lipschitz constant of
    the assembled drift field is built from the declared kernel norms;
    the undetermined base constant of that route is replaced by
    C1M / nu_inf, which the note records.
    """
    m0 = f0_state.mass()
    if m0 <= 0.0:
        raise InvalidInputError("initial state must have positive mass")
    jf = np.atleast_2d(flux_field(f0_state, coeffs))
    j_norms = np.linalg.norm(jf, axis=-1)
    j0 = float(np.min(coeffs.alpha + (1.0 - coeffs.alpha) * j_norms))
    if coeffs.alpha == 0.0 and j0 < SINGULAR_FLUX_TOL:
        raise DegenerateInitialFluxError(
            f"alpha = 0 with degenerate initial flux: J0 = {j0:.3e}",
            flux_norm=j0,
        )

    if coeffs.alpha == 1.0:
        b_psi = coeffs.k_sup * m0
        c_alpha = 1.0
    else:
        b_psi = 1.0 / (1.0 - coeffs.alpha)
        c_alpha = 2.0 / (1.0 - coeffs.alpha)
    c1m = coeffs.nu_inf * b_psi
    c2m = c1m + coeffs.nu_inf * c_alpha * m0 * coeffs.k_w1inf_query
    k_inf = (
        1.0 + abs(coeffs.c) + coeffs.sigma_inf + coeffs.sigma_lip + c1m
    ) * math.sqrt(sum(kn**2 for kn in coeffs.k_coord_norms))

    vol = f0_state.volume()
    l_j = 2.0 * coeffs.k_sup * math.sqrt(vol) / (
        coeffs.alpha + (1.0 - coeffs.alpha) * j0 / 2.0
    )
    psi_lip = (coeffs.nu_lip * b_psi + coeffs.nu_inf * l_j) ** 2

    l2_f0 = f0_state.l2_norm()
    cp2 = c2m + c1m**2 / coeffs.sigma0
    c2_pair = 2.0 * cp2  # sum form: both slots at the worst-case bounds
    cp = c2m if p == math.inf else c2m + c1m**2 / ((p - 1.0) * coeffs.sigma0)

    t0 = existence_horizon(j0, k_inf, m0)
    stub = ConstantsReport(
        M0=m0, J0=j0, C1M=c1m, C2M=c2m, K_inf=k_inf,
        sigma0=coeffs.sigma0, sigma_lip=coeffs.sigma_lip, psi_lip=psi_lip,
        l2_f0=l2_f0, p=p, Cp=cp, C2_pair=c2_pair, T0=t0, T1=t0,
    )
    t1 = _bisect_lambda(stub.lambda_of, t0)
    note = (
        "psi_lip uses C1M/nu_inf in place of the base constant Psi_0 of the "
        "drift-field Lipschitz route; contraction constant uses the sum form "
        "C2(a) + C2(b) at worst-case bounds."
    )
    return ConstantsReport(
        M0=m0, J0=j0, C1M=c1m, C2M=c2m, K_inf=k_inf,
        sigma0=coeffs.sigma0, sigma_lip=coeffs.sigma_lip, psi_lip=psi_lip,
        l2_f0=l2_f0, p=p, Cp=cp, C2_pair=c2_pair, T0=t0, T1=t1, note=note,
    )


# ---------------------------------------------------------------------------
# Lipschitz probing


def lipschitz_probe(fn, sampler, n_samples, seed, distance=None, output_norm=None):
    """Empirical Lipschitz constant of fn over sampled input pairs.

    sampler(rng) draws one domain point; distance defaults to the
    Euclidean norm of the (flattened) difference.  Zero-distance pairs
    are skipped.  Deterministic for a fixed seed.
    """
    if n_samples < 2:
        raise InvalidInputError("need at least 2 samples")
    if distance is None:
        distance = lambda a, b: float(
            np.linalg.norm(np.ravel(np.asarray(a) - np.asarray(b)))
        )
    if output_norm is None:
        output_norm = lambda a, b: float(
            np.linalg.norm(np.ravel(np.asarray(a) - np.asarray(b)))
        )
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        a = sampler(rng)
        b = sampler(rng)
        dab = distance(a, b)
        if dab == 0.0:
            continue
        best = max(best, output_norm(fn(a), fn(b)) / dab)
    return best


# ---------------------------------------------------------------------------
# model presets


def _const(value):
    return lambda j_norm, _v=float(value): _v


def _orientation_kernel(shift=None):
    if shift is None:
        return Kernel(func=lambda t, x, xs, v, vs: np.asarray(vs, dtype=float))
    shift = np.asarray(shift, dtype=float)
    return Kernel(func=lambda t, x, xs, v, vs: np.asarray(vs, dtype=float) + shift)

PRESET_NAMES = ("classic-vicsek", "non-normalized", "flux-dependent", "signed-kernel")


def preset(name, d=2, nu_scale=2.0, sigma_value=1.0, c=1.0):
    """Catalogued models.

    classic-vicsek: K = omega*, alpha = 0, constant negative friction,
    constant viscosity.  non-normalized: same with alpha = 1.
    flux-dependent: friction and viscosity functions of |J| (the
    friction-over-flux ratio stays bounded).  signed-kernel: first
    kernel coordinate bounded away from zero.
    """
    if name not in PRESET_NAMES:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    # sup of the coordinate kernel and its first two orientation derivatives
    coord = max(1.0, d - 1.0)
    vol_s1 = 2.0 * np.pi  # homogeneous orientation-circle volume for nu_lip
    if name == "classic-vicsek":
        return CoefficientSet(
            name=name, d=d, c=c, alpha=0.0,
            kernel=_orientation_kernel(),
            nu=_const(-abs(nu_scale)), sigma=_const(sigma_value),
            sigma0=sigma_value, sigma_inf=sigma_value,
            nu_inf=abs(nu_scale), nu_lip=0.0, sigma_lip=0.0,
            k_coord_norms=(coord,) * d, k_sup=1.0, k_w1inf_query=1.0,
        )
    if name == "non-normalized":
        return CoefficientSet(
            name=name, d=d, c=c, alpha=1.0,
            kernel=_orientation_kernel(),
            nu=_const(-abs(nu_scale)), sigma=_const(sigma_value),
            sigma0=sigma_value, sigma_inf=sigma_value,
            nu_inf=abs(nu_scale), nu_lip=0.0, sigma_lip=0.0,
            k_coord_norms=(coord,) * d, k_sup=1.0, k_w1inf_query=1.0,
        )
    if name == "flux-dependent":
        nu_fn = lambda j: -abs(nu_scale) * j / (1.0 + j)
        sigma_fn = lambda j: 0.5 * sigma_value * (1.0 + 1.0 / (1.0 + j))
        return CoefficientSet(
            name=name, d=d, c=c, alpha=0.0,
            kernel=_orientation_kernel(),
            nu=nu_fn, sigma=sigma_fn,
            sigma0=0.5 * sigma_value, sigma_inf=sigma_value,
            nu_inf=abs(nu_scale),
            nu_lip=abs(nu_scale) * math.sqrt(vol_s1),
            sigma_lip=0.5 * sigma_value * math.sqrt(vol_s1),
            k_coord_norms=(coord,) * d, k_sup=1.0, k_w1inf_query=1.0,
        )
    # signed-kernel: K = omega* + 2 e1, so J_1 >= M0 along the flow
    shift = np.zeros(d)
    shift[0] = 2.0
    return CoefficientSet(
        name=name, d=d, c=c, alpha=0.0,
        kernel=_orientation_kernel(shift),
        nu=_const(-abs(nu_scale)), sigma=_const(sigma_value),
        sigma0=sigma_value, sigma_inf=sigma_value,
        nu_inf=abs(nu_scale), nu_lip=0.0, sigma_lip=0.0,
        k_coord_norms=(2.0 + coord,) + (coord,) * (d - 1),
        k_sup=3.0, k_w1inf_query=3.0,
    )


def bump_kernel(radius, period=None):
    """Smooth compactly supported spatial weight times omega*.

    K(x, x*, omega*) = b(|x - x*| / R) omega* with b the standard bump
    exp(1 - 1/(1 - r^2)); finite L2 mass in free space as required.
    With a period, distances are minimum-image on the torus.
    """

    def func(t, x, xs, v, vs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        vs = np.atleast_2d(np.asarray(vs, dtype=float))
        diff = xs - np.asarray(x, dtype=float)
        if period is not None:
            diff = diff - period * np.round(diff / period)
        r = np.linalg.norm(diff, axis=-1) / radius
        w = np.zeros_like(r)
        inside = r < 1.0
        w[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return w[:, None] * vs

    return Kernel(func=func, orientation_only=False, query_independent=False)
