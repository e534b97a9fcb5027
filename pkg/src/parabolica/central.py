"""Minimizing normalized central configurations and the homothetic parabolic motion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configspace import (
    MassSystem,
    grad_normalized_potential,
    normalize,
    normalized_potential,
)
from .parallel import parallel_map


class ConvergenceError(RuntimeError):
    """No restart reached the requested tolerance; carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ParabolicConstants:
    alpha: float
    alpha0: float
    beta0: float
    beta: float


def parabolic_constants(u0) -> ParabolicConstants:
    """Constants of the zero-energy homothetic motion for potential level ``u0``.

    ``alpha`` scales the parabolic arc ``alpha * t**(2/3)``, ``alpha0`` its
    action per ``t**(1/3)``, ``beta0`` the coefficient of ``r**0.5`` in the
    asymptotic action, and ``beta`` the radius reached in unit time by the
    arc of energy ``-u0/beta``.
    """
    u0 = float(u0)
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    alpha = (4.5 * u0) ** (1.0 / 3.0)
    return ParabolicConstants(
        alpha=alpha,
        alpha0=math.sqrt(8.0 * u0 * alpha),
        beta0=math.sqrt(8.0 * u0),
        beta=2.0 * (u0 / math.pi**2) ** (1.0 / 3.0),
    )


@dataclass(frozen=True, eq=False)
class CentralConfig:
    system: MassSystem
    x0: np.ndarray
    u0: float
    residual: float
    restarts: int = 1
    converged_restarts: int = 1

    @property
    def constants(self) -> ParabolicConstants:
        return parabolic_constants(self.u0)

    @property
    def alpha(self):
        return self.constants.alpha

    def to_dict(self):
        c = self.constants
        return {
            "masses": self.system.masses.tolist(),
            "dim": self.system.dim,
            "x0": self.x0.tolist(),
            "u0": self.u0,
            "residual": self.residual,
            "restarts": self.restarts,
            "converged_restarts": self.converged_restarts,
            "alpha": c.alpha,
            "alpha0": c.alpha0,
            "beta0": c.beta0,
            "beta": c.beta,
        }


def canonical_orientation(sys: MassSystem, x):
    """Rotate ``x`` so its principal axes are the coordinate axes.

    Axes are sorted by decreasing second moment; each axis sign is chosen so
    that the mass-weighted third moment is positive (or, when that vanishes,
    so that the first body with a nonzero coordinate sits on the positive side).
    Body labels are never permuted.
    """
    x = sys.project_com(x)
    moment = np.einsum("i,id,ie->de", sys.masses, x, x)
    _, vecs = np.linalg.eigh(moment)
    y = x @ vecs[:, ::-1]
    scale = max(np.abs(y).max(), 1e-300)
    for axis in range(sys.dim):
        col = y[:, axis]
        third = float(np.sum(sys.masses * col**3)) / scale**3
        if abs(third) > 1e-9:
            sign = math.copysign(1.0, third)
        else:
            nz = np.flatnonzero(np.abs(col) > 1e-9 * scale)
            sign = math.copysign(1.0, col[nz[0]]) if nz.size else 1.0
        y[:, axis] *= sign
    y[np.abs(y) < 1e-14 * scale] = 0.0
    return y


def _descend(sys, x, tol, max_iter):
    """Projected gradient descent on the unit sphere with BB steps and backtracking."""
    x = normalize(sys, sys.project_com(x))
    f = normalized_potential(sys, x)
    g = grad_normalized_potential(sys, x)
    gnorm = sys.norm(g)
    step = 0.1 / max(gnorm, 1e-12)
    x_prev = g_prev = None
    for it in range(max_iter):
        if gnorm < tol:
            return x, f, gnorm, True, it
        if x_prev is not None:
            s = x - x_prev
            y = g - g_prev
            sy = sys.dot(s, y)
            if sy > 0:
                step = sys.dot(s, s) / sy
        noise = 1e-14 * abs(f)
        for _ in range(60):
            trial = x - step * g
            try:
                trial = normalize(sys, sys.project_com(trial))
                f_trial = normalized_potential(sys, trial)
            except ValueError:
                step *= 0.5
                continue
            if f_trial <= f - 1e-4 * step * gnorm**2 or (
                gnorm < 1e-5 and f_trial <= f + noise
            ):
                break
            step *= 0.5
        else:
            return x, f, gnorm, False, it
        x_prev, g_prev = x, g
        x, f = trial, f_trial
        g = grad_normalized_potential(sys, x)
        gnorm = sys.norm(g)
    return x, f, gnorm, gnorm < tol, max_iter


def _restart_job(args):
    sys, seed, tol, max_iter = args
    rng = np.random.default_rng(seed)
    x = sys.random_configuration(rng)
    return _descend(sys, x, tol, max_iter)


def find_minimizing_central_configuration(
    sys: MassSystem, restarts=64, tol=1e-10, seed=0, max_iter=20000, jobs=1
) -> CentralConfig:
    """Best local minimum of the normalized potential over random restarts.

    The value found is the best one seen, which for general masses need not be
    the global minimum.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    seeds = np.random.SeedSequence(seed).generate_state(restarts)
    jobs_args = [(sys, int(s), tol, max_iter) for s in seeds]
    results = parallel_map(_restart_job, jobs_args, jobs)

    converged = [(f, canonical_orientation(sys, x), g) for x, f, g, ok, _ in results if ok]
    if not converged:
        x, f, g, _, _ = min(results, key=lambda r: r[1])
        raise ConvergenceError(
            f"no restart reached tangential gradient {tol:g} (best {g:.3e})",
            best=CentralConfig(sys, canonical_orientation(sys, x), f, g, restarts, 0),
        )
    f_best = min(c[0] for c in converged)
    ties = [c for c in converged if c[0] <= f_best * (1 + 1e-12)]
    f, x, _ = min(ties, key=lambda c: tuple(np.round(c[1].ravel(), 8)))
    x = normalize(sys, x)
    residual = sys.norm(grad_normalized_potential(sys, x))
    return CentralConfig(sys, x, normalized_potential(sys, x), residual, restarts, len(converged))


def homothetic_parabolic_gamma0(cc: CentralConfig, t):
    """Zero-energy homothetic motion ``alpha * x0 * t**(2/3)``."""
    t = float(t)
    if t < 0:
        raise ValueError("time must be nonnegative")
    return cc.alpha * cc.x0 * t ** (2.0 / 3.0)


def gamma0_acceleration(cc: CentralConfig, t):
    """Second derivative of the homothetic motion, ``-(2/9) alpha x0 t**(-4/3)``."""
    t = float(t)
    if t <= 0:
        raise ValueError("acceleration needs t > 0")
    return -(2.0 / 9.0) * cc.alpha * cc.x0 * t ** (-4.0 / 3.0)


def gamma0_velocity(cc: CentralConfig, t):
    t = float(t)
    if t <= 0:
        raise ValueError("velocity needs t > 0")
    return (2.0 / 3.0) * cc.alpha * cc.x0 * t ** (-1.0 / 3.0)


def central_config_from(sys: MassSystem, x) -> CentralConfig:
    """Wrap a known configuration (e.g. a closed-form one) without searching."""
    x = normalize(sys, sys.project_com(x))
    residual = sys.norm(grad_normalized_potential(sys, x))
    return CentralConfig(sys, x, normalized_potential(sys, x), residual, 0, 0)
