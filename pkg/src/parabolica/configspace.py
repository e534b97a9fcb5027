"""Configuration space of the Newtonian N-body problem with the mass metric.

A configuration is an ``(N, d)`` array of body positions.  Inner products,
norms and gradients all use the mass scalar product
``x . y = sum_i m_i <r_i, s_i>``, so that ``I(x) = |x|**2`` and the equations
of motion read ``x'' = grad U(x)``.  The gravitational constant is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# relative to the configuration scale
COLLISION_THRESHOLD = 1e-9
COM_TOLERANCE = 1e-10


class CollisionError(ValueError):
    """Operation undefined at a collision (or zero) configuration."""


@dataclass(frozen=True, eq=False)
class MassSystem:
    masses: np.ndarray
    dim: int = 2
    _pairs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if masses.size < 2:
            raise ValueError("need at least two bodies")
        if np.any(~np.isfinite(masses)) or np.any(masses <= 0):
            raise ValueError("masses must be strictly positive")
        if int(self.dim) < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "_pairs", np.triu_indices(masses.size, 1))

    @property
    def n_bodies(self):
        return self.masses.size

    @property
    def shape(self):
        return (self.n_bodies, self.dim)

    @property
    def total_mass(self):
        return float(self.masses.sum())

    # The action solver treats every "potential" through these attributes, so
    # the fixed-centre Kepler comparison can stand in for this class.
    @property
    def weights(self):
        return self.masses

    @cached_property
    def pair_masses(self):
        i, j = self._pairs
        return self.masses[i] * self.masses[j]

    def __eq__(self, other):
        return (
            isinstance(other, MassSystem)
            and self.dim == other.dim
            and np.array_equal(self.masses, other.masses)
        )

    def __hash__(self):
        return hash((self.dim, tuple(self.masses)))

    def __getstate__(self):
        return {"masses": self.masses, "dim": self.dim}

    def __setstate__(self, state):
        object.__setattr__(self, "masses", state["masses"])
        object.__setattr__(self, "dim", state["dim"])
        object.__setattr__(self, "_pairs", np.triu_indices(state["masses"].size, 1))

    def check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != self.shape:
            raise ValueError(f"configuration shape {x.shape} does not match {self.shape}")
        return x

    # -- batched pair geometry ------------------------------------------------

    def _differences(self, y):
        i, j = self._pairs
        return y[..., i, :] - y[..., j, :]

    def separations(self, y):
        """Pairwise distances, shape ``(..., N(N-1)/2)``."""
        return np.linalg.norm(self._differences(self.check(y)), axis=-1)

    def min_separation(self, y):
        return self.separations(y).min(axis=-1)

    def potential_batch(self, y):
        rho = self.separations(y)
        with np.errstate(divide="ignore"):
            return (self.pair_masses / rho).sum(axis=-1)

    def partials_batch(self, y):
        """Euclidean partial derivatives dU/dr_i (not the mass-metric gradient)."""
        y = self.check(y)
        i, j = self._pairs
        diff = self._differences(y)
        rho = np.linalg.norm(diff, axis=-1)
        f = (self.pair_masses / rho**3)[..., None] * diff
        out = np.zeros_like(y)
        # d/dr_a of m_a m_b / |r_a - r_b| = -m_a m_b (r_a - r_b) / rho^3
        for p, (a, b) in enumerate(zip(i, j)):
            out[..., a, :] -= f[..., p, :]
            out[..., b, :] += f[..., p, :]
        return out

    def hessian_batch(self, y):
        """Euclidean Hessian of U, shape ``(..., N*d, N*d)``."""
        y = self.check(y)
        n, d = self.shape
        i, j = self._pairs
        diff = self._differences(y)
        rho = np.linalg.norm(diff, axis=-1)
        eye = np.eye(d)
        outer = diff[..., :, None] * diff[..., None, :]
        block = (3.0 * outer - (rho**2)[..., None, None] * eye) / (rho**5)[..., None, None]
        block = block * self.pair_masses[:, None, None]
        hess = np.zeros(y.shape[:-2] + (n, d, n, d))
        for p, (a, b) in enumerate(zip(i, j)):
            hess[..., a, :, a, :] += block[..., p, :, :]
            hess[..., b, :, b, :] += block[..., p, :, :]
            hess[..., a, :, b, :] -= block[..., p, :, :]
            hess[..., b, :, a, :] -= block[..., p, :, :]
        return hess.reshape(y.shape[:-2] + (n * d, n * d))

    # -- metric ---------------------------------------------------------------

    def dot(self, x, y):
        return float(np.einsum("i,id,id->", self.masses, np.asarray(x, float), np.asarray(y, float)))

    def norm(self, x):
        return float(np.sqrt(max(self.dot(x, x), 0.0)))

    def center_of_mass(self, x):
        x = self.check(x)
        return (self.masses[:, None] * x).sum(axis=-2) / self.total_mass

    def project_com(self, x):
        x = self.check(x)
        return x - self.center_of_mass(x)[..., None, :]

    def random_configuration(self, rng, norm=1.0):
        x = self.project_com(rng.standard_normal(self.shape))
        return x * (norm / self.norm(x))


# ---------------------------------------------------------------------------
# Scalar functions on the configuration space
# ---------------------------------------------------------------------------


def inertia(sys: MassSystem, x) -> float:
    """Moment of inertia about the origin, ``I(x) = |x|**2``."""
    x = sys.check(x)
    return float(np.einsum("i,id,id->", sys.masses, x, x))


def _scale(sys, x):
    return max(sys.norm(x) / np.sqrt(sys.total_mass), np.finfo(float).tiny)


def is_collision(sys: MassSystem, x) -> bool:
    x = sys.check(x)
    return bool(sys.min_separation(x) < COLLISION_THRESHOLD * _scale(sys, x))


def potential(sys: MassSystem, x) -> float:
    """Newtonian potential (the force function), ``inf`` at collisions."""
    x = sys.check(x)
    if is_collision(sys, x):
        return float("inf")
    return float(sys.potential_batch(x))


def normalize(sys: MassSystem, x):
    """Rescale to unit moment of inertia."""
    x = sys.check(x)
    size = sys.norm(x)
    if size == 0.0:
        raise CollisionError("cannot normalize the zero configuration")
    return x / size


def normalized_potential(sys: MassSystem, x) -> float:
    """Scale-invariant potential ``I**0.5 * U``."""
    x = sys.check(x)
    if sys.norm(x) == 0.0 or is_collision(sys, x):
        raise CollisionError("normalized potential undefined at collisions")
    return sys.norm(x) * float(sys.potential_batch(x))


def grad_potential(sys: MassSystem, x):
    """Mass-metric gradient of U; equals the Newtonian acceleration of each body."""
    x = sys.check(x)
    if is_collision(sys, x):
        raise CollisionError("gradient undefined at collisions")
    return sys.partials_batch(x) / sys.masses[:, None]


def grad_normalized_potential(sys: MassSystem, x):
    """Gradient of I**0.5 U restricted to the sphere through ``x``.

    ``x`` is normalized first; the returned vector is tangent to the unit
    sphere at ``normalize(x)``.
    """
    xn = normalize(sys, x)
    g = grad_potential(sys, xn) + float(sys.potential_batch(xn)) * xn
    return g - sys.dot(g, xn) * xn


def angle_between(sys: MassSystem, x1, x2) -> float:
    """Angle for the mass scalar product, in ``[0, pi]``."""
    n1, n2 = sys.norm(x1), sys.norm(x2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("angle undefined for the zero configuration")
    c = sys.dot(x1, x2) / (n1 * n2)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def orbit_angle(sys: MassSystem, x, x0) -> float:
    """Smallest angle between ``x`` and any orthogonal image ``Q x0``."""
    n1, n2 = sys.norm(x), sys.norm(x0)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("angle undefined for the zero configuration")
    cross = np.einsum("i,id,ie->de", sys.masses, np.asarray(x, float), np.asarray(x0, float))
    c = np.linalg.svd(cross, compute_uv=False).sum() / (n1 * n2)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def energy(sys: MassSystem, x, v) -> float:
    """First integral K/2 - U for a state (x, v)."""
    return 0.5 * sys.dot(v, v) - potential(sys, x)


def lagrangian(sys: MassSystem, x, v) -> float:
    return 0.5 * sys.dot(v, v) + potential(sys, x)
