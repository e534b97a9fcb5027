"""Kepler problem on the half-line, r'' = -u0 / r**2.

Everything here is exact up to floating point: times and actions are
differences of closed-form antiderivatives, and the energy of the unique arc
joining ``a`` to ``b`` in time ``s`` is found by a bracketed root search on
the (monotone) time identity of the relevant branch.

Conventions: the Lagrangian is ``rdot**2 / 2 + u0 / r`` and the energy is
``h = rdot**2 / 2 - u0 / r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "KeplerArc",
    "KeplerSolverError",
    "kepler_integral_E",
    "kepler_integral_F",
    "kepler_integral_H",
    "sbar",
    "solve_energy_h",
    "kepler_action_S",
    "G_of_r",
    "G_prime",
    "G_second",
    "kepler_excess_N",
    "script_G",
    "parabolic_alpha",
]


class KeplerSolverError(RuntimeError):
    """Raised when the energy root search cannot be bracketed or converge."""


# ---------------------------------------------------------------------------
# The three integrals of the half-line problem
# ---------------------------------------------------------------------------


def _check_nonneg(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise ValueError(f"{name} requires a finite nonnegative argument")
    return x


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def kepler_integral_E(x):
    """E(x) = int_0^x sqrt(s / (1 + s)) ds."""
    x = _check_nonneg(x, "E")
    return _scalar_or_array(np.sqrt(x * (1.0 + x)) - np.arcsinh(np.sqrt(x)))


def kepler_integral_F(x):
    """F(x) = int_0^x sqrt((s + 1) / s) ds."""
    x = _check_nonneg(x, "F")
    return _scalar_or_array(np.sqrt(x * (1.0 + x)) + np.arcsinh(np.sqrt(x)))


def kepler_integral_H(x):
    """H(x) = int_0^x sqrt(v / (1 - v)) dv on [0, 1]."""
    x = _check_nonneg(x, "H")
    if np.any(x > 1.0):
        raise ValueError("H is defined on [0, 1]")
    return _scalar_or_array(np.arcsin(np.sqrt(x)) - np.sqrt(x * (1.0 - x)))


# ---------------------------------------------------------------------------
# Scaled primitives
#
#   w(z) = int_0^1 sqrt(q) / sqrt(1 + z q) dq      (time per unit u**1.5)
#   v(z) = int_0^1 sqrt(1 + z q) / sqrt(q) dq      (path integral per unit u**0.5)
#
# for z >= -1.  Power series near z = 0 avoid the cancellation in the closed
# forms and remove the parabolic (h = 0) special case entirely.
# ---------------------------------------------------------------------------

_SERIES_RADIUS = 0.25
_SERIES_TERMS = 40


def _binomial_coefficients(p, n):
    out = [1.0]
    for k in range(1, n):
        out.append(out[-1] * (p - k + 1) / k)
    return out


_W_COEF = [c / (k + 1.5) for k, c in enumerate(_binomial_coefficients(-0.5, _SERIES_TERMS))]
_V_COEF = [c / (k + 0.5) for k, c in enumerate(_binomial_coefficients(0.5, _SERIES_TERMS))]


def _horner(coef, z):
    acc = 0.0
    for c in reversed(coef):
        acc = acc * z + c
    return acc


def _w(z):
    if abs(z) < _SERIES_RADIUS:
        return _horner(_W_COEF, z)
    if z > 0:
        return (math.sqrt(z * (1.0 + z)) - math.asinh(math.sqrt(z))) / z**1.5
    q = min(-z, 1.0)
    return (math.asin(math.sqrt(q)) - math.sqrt(q * (1.0 - q))) / q**1.5


def _v(z):
    if abs(z) < _SERIES_RADIUS:
        return _horner(_V_COEF, z)
    if z > 0:
        return (math.sqrt(z * (1.0 + z)) + math.asinh(math.sqrt(z))) / math.sqrt(z)
    q = min(-z, 1.0)
    return (math.asin(math.sqrt(q)) + math.sqrt(q * (1.0 - q))) / math.sqrt(q)


def _time_to(u, k):
    """int_0^u dr / sqrt(2 (h + u0/r)) times sqrt(2 u0), with k = h / u0."""
    if u == 0.0:
        return 0.0
    return u**1.5 * _w(k * u)


def _path_to(u, k):
    """int_0^u sqrt(2 (h + u0/r)) dr divided by sqrt(2 u0)."""
    if u == 0.0:
        return 0.0
    return math.sqrt(u) * _v(k * u)


def _monotone_time(h, a, b, u0):
    k = h / u0
    return (_time_to(b, k) - _time_to(a, k)) / math.sqrt(2.0 * u0)


def _return_time(h, a, b, u0):
    # rise a -> apex, fall apex -> b; requires h < 0.  The apex terms use the
    # exact value w(-1) = pi/2: k * apex rounds off -1 and the closed form
    # is sqrt-sensitive there.
    k = h / u0
    apex = -1.0 / k
    return (math.pi * apex**1.5 - _time_to(a, k) - _time_to(b, k)) / math.sqrt(2.0 * u0)


def _monotone_path(h, a, b, u0):
    k = h / u0
    return math.sqrt(2.0 * u0) * (_path_to(b, k) - _path_to(a, k))


def _return_path(h, a, b, u0):
    k = h / u0
    apex = -1.0 / k
    return math.sqrt(2.0 * u0) * (math.pi * math.sqrt(apex) - _path_to(a, k) - _path_to(b, k))


# ---------------------------------------------------------------------------
# Boundary-value problem
# ---------------------------------------------------------------------------


def _validate(a, b, s, u0):
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    if a < 0 or b < 0:
        raise ValueError("radii must be nonnegative")
    if a > b:
        raise ValueError(f"need a <= b, got a={a!r}, b={b!r}")
    if s is not None and not s > 0:
        raise ValueError("transfer time must be positive")


def sbar(a, b, u0):
    """Time taken by the energy ``-u0/b`` solution to go from ``a`` to ``b``.

    Arcs with ``s <= sbar(a, b)`` are monotone, longer ones overshoot ``b``.
    """
    a, b, u0 = float(a), float(b), float(u0)
    _validate(a, b, None, u0)
    if a == b:
        return 0.0
    return b**1.5 / math.sqrt(2.0 * u0) * (0.5 * math.pi - kepler_integral_H(a / b))


@dataclass(frozen=True)
class KeplerArc:
    """The unique solution joining ``a`` to ``b`` in time ``s``."""

    a: float
    b: float
    s: float
    u0: float
    h: float
    monotone: bool
    apex: float | None
    action: float
    residual: float

    @property
    def time_identity(self):
        return self.s + self.residual


def _root(f, lo, hi, scale):
    try:
        root, info = brentq(
            f, lo, hi, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps,
            maxiter=200, full_output=True, disp=False,
        )
    except ValueError as exc:  # sign change lost
        raise KeplerSolverError(f"energy root not bracketed on [{lo}, {hi}]") from exc
    if not info.converged:
        raise KeplerSolverError(f"energy root search did not converge: {info.flag}")
    return root


def solve_energy_h(a, b, s, u0) -> KeplerArc:
    """Solve the two-point problem r(0)=a, r(s)=b on the half-line."""
    a, b, s, u0 = float(a), float(b), float(s), float(u0)
    _validate(a, b, s, u0)

    if b == 0.0:
        # 0 -> apex -> 0: 2 * apex**1.5 * (pi/2) / sqrt(2 u0) = s
        apex = (s * math.sqrt(2.0 * u0) / math.pi) ** (2.0 / 3.0)
        h = -u0 / apex
        action = _return_path(h, 0.0, 0.0, u0) - h * s
        return KeplerArc(a, b, s, u0, h, False, apex, action, 0.0)

    s_turn = sbar(a, b, u0)
    h_min = -u0 / b
    if s <= s_turn:
        def f(h):
            return _monotone_time(h, a, b, u0) - s
        h_hi = (b - a) ** 2 / (2.0 * s * s) * (1.0 + 1e-9) + 1e-300
        if f(h_min) <= 0.0:
            h = h_min
        else:
            h = _root(f, h_min, h_hi, u0 / b + h_hi)
        residual = f(h)
        action = _monotone_path(h, a, b, u0) - h * s
        return KeplerArc(a, b, s, u0, h, True, None, action, residual)

    def g(h):
        return _return_time(h, a, b, u0) - s

    apex = 2.0 * b
    while g(-u0 / apex) < 0.0:
        apex *= 2.0
        if apex > 1e300:
            raise KeplerSolverError("could not bracket the overshooting arc")
    h = _root(g, h_min, -u0 / apex, u0 / b)
    residual = g(h)
    action = _return_path(h, a, b, u0) - h * s
    return KeplerArc(a, b, s, u0, h, False, -u0 / h, action, residual)


def kepler_action_S(a, b, s, u0) -> float:
    """Minimal action S(a, b; s); the arguments may come in either order."""
    lo, hi = (a, b) if a <= b else (b, a)
    return solve_energy_h(lo, hi, s, u0).action


def parabolic_alpha(u0):
    return (4.5 * u0) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# G(r) = S(0, r; 1) - beta0 sqrt(r)
# ---------------------------------------------------------------------------


def G_of_r(r, u0) -> float:
    if r <= 0:
        raise ValueError("G is defined for r > 0")
    return kepler_action_S(0.0, r, 1.0, u0) - math.sqrt(8.0 * u0 * r)


def G_prime(r, u0) -> float:
    """Closed-form derivative: the terminal momentum minus sqrt(2 u0 / r)."""
    arc = solve_energy_h(0.0, r, 1.0, u0)
    momentum = math.sqrt(max(2.0 * (arc.h + u0 / r), 0.0))
    if not arc.monotone:
        momentum = -momentum
    return momentum - math.sqrt(2.0 * u0 / r)


def G_second(r, u0, step=1e-4) -> float:
    """Central second difference of G."""
    return (G_of_r(r + step, u0) - 2.0 * G_of_r(r, u0) + G_of_r(r - step, u0)) / step**2


# ---------------------------------------------------------------------------
# Excess of a broken 1D transfer over the direct one
# ---------------------------------------------------------------------------


def kepler_excess_N(r, rprime, tau, T, t, u0) -> float:
    """S(0, r; T + tau) + S(r, r'; t - T) - S(0, r'; t - tau)."""
    if not 0.0 <= tau < T < t:
        raise ValueError(f"need 0 <= tau < T < t, got {tau}, {T}, {t}")
    return (
        kepler_action_S(0.0, r, T + tau, u0)
        + kepler_action_S(r, rprime, t - T, u0)
        - kepler_action_S(0.0, rprime, t - tau, u0)
    )


def script_G(r, s, u0) -> float:
    """Excess of going through radius ``r`` at time 1 before reaching alpha s^(2/3)."""
    return kepler_excess_N(r, parabolic_alpha(u0) * s ** (2.0 / 3.0), 0.0, 1.0, s, u0)
