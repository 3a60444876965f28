"""Differential geometry of the unit sphere S^(d-1).

Exact tangential calculus for arbitrary d (projection, coordinate
gradients) plus a discrete calculus on the orientation circle S^1 used by
the d=2 kinetic solver: the circle is parameterized by the angle theta
with omega(theta) = (cos theta, sin theta), so tangential operators reduce
to periodic operators in theta.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, InvalidInputError

#: Validation tolerance for unit vectors; renormalization is the repair.
UNIT_TOL = 1e-12


def unit_vector(x):
    """Return x divided by its Euclidean norm.

    Raises InvalidInputError on a (near-)zero vector, for which no
    direction is defined.
    """
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x)
    if n < 1e-300:
        raise InvalidInputError("cannot normalize a zero vector")
    return x / n


def check_unit(omega, tol=UNIT_TOL):
    """Validate |omega| = 1 within tol, returning omega as an array."""
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > tol:
        raise InvalidInputError(
            f"expected a unit vector, got norm {np.linalg.norm(omega)!r}"
        )
    return omega


def project_tangent(omega, x, tol=1e-8):
    """Orthogonal projection of x onto the tangent space at omega.

    Returns x - (omega . x) omega.  omega must be unit within tol.
    """
    omega = check_unit(omega, tol)
    x = np.asarray(x, dtype=float)
    return x - np.dot(omega, x) * omega


def tangent_projector(v):
    """The matrix Id - v (x) v / |v|^2 for a nonzero vector v."""
    v = np.asarray(v, dtype=float)
    n2 = np.dot(v, v)
    if n2 < 1e-300:
        raise InvalidInputError("tangent projector undefined at v = 0")
    return np.eye(len(v)) - np.outer(v, v) / n2


def tangential_gradient_coordinate(omega, i):
    """Gradient on the sphere of the coordinate function omega -> omega_i.

    Equals the i-th row of the tangent projector: (delta_ij - omega_i
    omega_j)_j.  The index i is 0-based.
    """
    omega = check_unit(omega)
    d = len(omega)
    if not 0 <= i < d:
        raise InvalidInputError(f"coordinate index {i} out of range for d={d}")
    e = np.zeros(d)
    e[i] = 1.0
    return e - omega[i] * omega


@dataclass(frozen=True)
class SphereGridS1:
    """Uniform periodic grid on the orientation circle.

    Nodes theta_k = 2 pi k / n_theta with equal quadrature weights
    2 pi / n_theta (periodic trapezoid rule, exact for trigonometric
    polynomials of degree < n_theta / 2).
    """

    n_theta: int
    theta: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_theta < 4:
            raise InvalidInputError("n_theta must be at least 4")
        theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        w = np.full(self.n_theta, 2.0 * np.pi / self.n_theta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "weights", w)

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.n_theta

    def omega(self):
        """Embedded unit vectors, shape (n_theta, 2)."""
        return np.column_stack([np.cos(self.theta), np.sin(self.theta)])

    def tangent(self):
        """Unit tangent vectors t(theta) = (-sin theta, cos theta)."""
        return np.column_stack([-np.sin(self.theta), np.cos(self.theta)])

    def check_field(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n_theta:
            raise GridMismatchError(
                f"field length {values.shape[-1]} != n_theta {self.n_theta}"
            )
        return values


def quadrature_s1(grid, values):
    """Integral of a (batch of) field(s) over S^1, last axis on the grid."""
    values = grid.check_field(values)
    return values @ grid.weights


def ddtheta(grid, values):
    """Second-order central first derivative in theta, periodic.

    The resulting operator is exactly antisymmetric, so the discrete
    integration-by-parts identity holds to round-off with the uniform
    weights.
    """
    values = grid.check_field(values)
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (
        2.0 * grid.dtheta
    )


def discrete_laplacian_s1(grid, values):
    """Second-order central second derivative in theta, periodic.

    On coordinate fields it reproduces Delta_omega omega_i = -omega_i
    for d=2, up to the scheme's O(dtheta^2) eigenvalue error.
    """
    values = grid.check_field(values)
    return (
        np.roll(values, -1, axis=-1)
        - 2.0 * values
        + np.roll(values, 1, axis=-1)
    ) / grid.dtheta**2
