"""Fixed-centre Kepler comparison, excess functions and localization checks.

The comparison Lagrangian is ``|v|**2 / 2 + u0 / |x|`` on the same
configuration space (mass metric).  Its minimal action between two points is
that of the direct Keplerian arc, which by Lambert's theorem depends only on
the sum of the radii, the chord and the time; it is evaluated through the
collinear arc with the same two quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .action import SolverConfig, best_minimizer, richardson_slack
from .central import CentralConfig, homothetic_parabolic_gamma0, parabolic_constants
from .configspace import MassSystem
from .kepler1d import G_of_r, kepler_action_S, script_G
from .parallel import parallel_map


class KeplerComparison:
    """Potential ``u0 / |x|`` with the mass metric given by ``weights``.

    Implements the same batched interface as MassSystem so the action
    solver can minimize the comparison functional.
    """

    def __init__(self, u0, weights=(1.0,), dim=2):
        self.u0 = float(u0)
        if not self.u0 > 0:
            raise ValueError("u0 must be positive")
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        self.dim = int(dim)

    @classmethod
    def for_system(cls, sys: MassSystem, u0):
        return cls(u0, sys.masses, sys.dim)

    @property
    def shape(self):
        return (self.weights.size, self.dim)

    def check(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-2:] != self.shape:
            raise ValueError(f"configuration shape {y.shape} does not match {self.shape}")
        return y

    def _rho(self, y):
        return np.sqrt(np.einsum("i,...id,...id->...", self.weights, y, y))

    def norm(self, x):
        return float(self._rho(self.check(x)))

    def min_separation(self, y):
        # distance to the only singular point, in the same units as positions
        return self._rho(self.check(y)) / math.sqrt(self.weights.sum())

    def potential_batch(self, y):
        with np.errstate(divide="ignore"):
            return self.u0 / self._rho(self.check(y))

    def partials_batch(self, y):
        y = self.check(y)
        rho = self._rho(y)
        return -self.u0 * self.weights[:, None] * y / (rho**3)[..., None, None]

    def hessian_batch(self, y):
        y = self.check(y)
        n = y.shape[-2] * y.shape[-1]
        rho = self._rho(y)[..., None, None]
        wy = (self.weights[:, None] * y).reshape(y.shape[:-2] + (n,))
        wdiag = np.repeat(self.weights, self.dim)
        outer = wy[..., :, None] * wy[..., None, :]
        return self.u0 * (3.0 * outer / rho**5 - np.diag(wdiag) / rho**3)


# ---------------------------------------------------------------------------
# Lambert reduction
# ---------------------------------------------------------------------------


def _mass_norm(weights, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(np.linalg.norm(x))
    return float(np.sqrt(np.einsum("i,id,id->", weights, x, x)))


def lambert_collinear_reduction(x1, x2, weights=None):
    """Radii (d1, d2) of the collinear arc with the same chord and radius sum."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if weights is None:
        weights = np.ones(x1.shape[0]) if x1.ndim == 2 else None
    r1, r2 = _mass_norm(weights, x1), _mass_norm(weights, x2)
    if r1 == 0.0 or r2 == 0.0:
        raise ValueError("Lambert reduction needs two nonzero configurations")
    c = _mass_norm(weights, x1 - x2)
    c = min(c, r1 + r2)
    d1 = max(0.5 * (r1 + r2 - c), 0.0)
    d2 = 0.5 * (r1 + r2 + c)
    return d1, d2


def kepler_central_action_A0(x1, x2, s, u0, weights=None):
    """Minimal comparison action between ``x1`` and ``x2`` in time ``s``."""
    if not s > 0:
        raise ValueError("transfer time must be positive")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if weights is None and x1.ndim == 2:
        weights = np.ones(x1.shape[0])
    r1, r2 = _mass_norm(weights, x1), _mass_norm(weights, x2)
    if r1 == 0.0 and r2 == 0.0:
        raise ValueError("endpoints cannot both be the origin")
    if r1 == 0.0 or r2 == 0.0:
        return kepler_action_S(r1, r2, s, u0)
    d1, d2 = lambert_collinear_reduction(x1, x2, weights)
    return kepler_action_S(d1, d2, s, u0)


def polar_angle_variation(path):
    """Total variation of the polar angle of a planar single-point path."""
    xy = path.nodes[:, 0, :]
    if xy.shape[1] != 2:
        raise ValueError("polar angle needs a planar path")
    phi = np.unwrap(np.arctan2(xy[:, 1], xy[:, 0]))
    return float(np.abs(np.diff(phi)).sum())


# ---------------------------------------------------------------------------
# Excess functions
# ---------------------------------------------------------------------------


def excess_F0(cc: CentralConfig, x, s) -> float:
    """Comparison excess of passing through ``x`` at time 1 on the way to gamma0(s)."""
    s = float(s)
    if not s > 1:
        raise ValueError("s must exceed 1")
    sys = cc.system
    x = sys.check(x)
    r = sys.norm(x)
    if r == 0.0:
        raise ValueError("x must be nonzero")
    c = cc.constants
    g0 = homothetic_parabolic_gamma0(cc, s)
    middle = kepler_central_action_A0(x, g0, s - 1.0, cc.u0, sys.masses)
    return kepler_action_S(0.0, r, 1.0, cc.u0) + middle - c.alpha0 * s ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class ExcessReport:
    x: np.ndarray
    s: float
    F_val: float
    F0_val: float
    scriptG_val: float
    chain_ok: bool
    slack: float = 0.0
    first_action: float = float("nan")
    middle_action: float = float("nan")
    converged: bool = True
    min_separation: float = float("nan")
    margins: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "x": np.asarray(self.x).tolist(),
            "s": self.s,
            "F": self.F_val,
            "F0": self.F0_val,
            "scriptG": self.scriptG_val,
            "chain_ok": self.chain_ok,
            "slack": self.slack,
            "first_action": self.first_action,
            "middle_action": self.middle_action,
            "converged": self.converged,
            "min_separation": self.min_separation,
            "margins": self.margins,
        }


def excess_F(sys: MassSystem, cc: CentralConfig, x, s, solver_cfg: SolverConfig | None = None,
             chain_slack=None) -> ExcessReport:
    """N-body excess through ``x`` with the two free actions minimized numerically.

    The subtracted term is the exact homothetic value alpha0 s^(1/3).  The
    slack for the chain test is the Richardson estimate of the
    discretization error of both minimizers plus ``chain_slack`` (default:
    10 x solver tolerance).
    """
    s = float(s)
    if not s > 1:
        raise ValueError("s must exceed 1")
    cfg = solver_cfg or SolverConfig()
    x = sys.project_com(sys.check(x))
    zero = np.zeros(sys.shape)
    g0 = homothetic_parabolic_gamma0(cc, s)
    first = best_minimizer(sys, zero, x, 1.0, cfg)
    middle = best_minimizer(sys, x, g0, s - 1.0, cfg, grid="log")
    c = cc.constants
    F = first.action + middle.action - c.alpha0 * s ** (1.0 / 3.0)
    F0 = excess_F0(cc, x, s)
    Gs = script_G(sys.norm(x), s, cc.u0)
    extra = 10 * cfg.tol if chain_slack is None else chain_slack
    slack = richardson_slack(sys, first.path) + richardson_slack(sys, middle.path) + extra
    exact_slack = 1e-9 * max(1.0, abs(F0))
    margins = {"F_minus_F0": F - F0, "F0_minus_G": F0 - Gs, "G": Gs}
    ok = F >= F0 - slack and F0 >= Gs - exact_slack and Gs >= -exact_slack
    converged = first.converged and middle.converged
    return ExcessReport(
        x, s, F, F0, Gs, bool(ok and converged), slack, first.action, middle.action,
        converged, min(first.min_separation, middle.min_separation), margins,
    )


# ---------------------------------------------------------------------------
# Sampled localization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSpec:
    n_radial: int = 1000
    n_angular: int = 1000
    n_ball: int = 1000
    r_max_factor: float = 3.0
    seed: int = 0
    c1_safety: float = 0.9
    c2_factor: float = 1.1


@dataclass(frozen=True)
class LocalizationConstants:
    C1: float
    delta_bar: float
    eps_bar1: float
    C2: float
    C2_threshold: float
    G2_alpha: float


def localization_constants(u0, spec: SampleSpec = SampleSpec()) -> LocalizationConstants:
    """Numerical C1, delta_bar, eps_bar1 and C2 for the quadratic and angular bounds.

    C1 is a fraction of G''(alpha)/2; delta_bar is the largest half-width
    (found by scanning) on which G(r) >= C1 (r - alpha)^2 and which stays to
    the right of beta.
    """
    c = parabolic_constants(u0)
    g2 = 5.0 * math.sqrt(u0) / (math.sqrt(2.0) * c.alpha**1.5)
    C1 = spec.c1_safety * g2 / 2.0
    delta_bar = 0.0
    cap = c.alpha - c.beta
    for d in np.linspace(cap / 200, cap * (1 - 1e-9), 200):
        if all(G_of_r(r, u0) >= C1 * (r - c.alpha) ** 2 for r in (c.alpha - d, c.alpha + d)):
            delta_bar = float(d)
        else:
            break
    eps_bar1 = min(C1 * delta_bar**2 / 2.0, 1.0)
    threshold = 5.0 + 16.0 * math.sqrt(2.0) / (c.beta0 * math.sqrt(c.alpha))
    return LocalizationConstants(C1, delta_bar, eps_bar1, spec.c2_factor * threshold, threshold, g2)


def localization_radii(eps, u0, consts: LocalizationConstants):
    c = parabolic_constants(u0)
    d1 = math.sqrt(2.0 * eps / consts.C1)
    d2 = math.sqrt(consts.C2 * eps)
    ball = math.sqrt(2 * c.alpha * (c.alpha + d1) * (1 - math.cos(min(d2, math.pi))) + d1 * d1)
    mu = (1.0 - math.sqrt((1.0 + math.cos(min(d2, math.pi))) / 2.0 + eps)) / eps - (consts.C2 - 4) / 8
    return d1, d2, ball, mu


def _unit_orthogonal(sys, x0, rng):
    u = sys.project_com(rng.standard_normal(sys.shape))
    u = u - sys.dot(u, x0) * x0
    return u / sys.norm(u)


def _f0_job(args):
    cc, x, s = args
    return excess_F0(cc, x, s)


def verify_localization(cc: CentralConfig, eps_list, s_list, sample_spec: SampleSpec = SampleSpec(),
                        jobs=1):
    """Sampled check of the three localization statements for each (eps, s).

    (i) radii with scriptG(r, s) <= eps lie within delta1 of alpha;
    (ii) configurations within delta1 in norm but more than delta2 off the
    ray of x0 have F0 > eps; (iii) configurations with F0 <= eps lie in
    the ball of radius delta around alpha x0.  Entries whose eps is beyond
    the admissible range are reported without a pass/fail verdict.
    """
    sys = cc.system
    u0 = cc.u0
    c = cc.constants
    consts = localization_constants(u0, sample_spec)
    entries = []
    total_violations = 0
    for eps in eps_list:
        eps = float(eps)
        d1, d2, ball, mu = localization_radii(eps, u0, consts)
        reasons = []
        if not 0 < eps <= consts.eps_bar1:
            reasons.append(f"eps above eps_bar1={consts.eps_bar1:.6g}")
        if not d1 < c.alpha / 2:
            reasons.append("delta1 >= alpha/2")
        if not abs(mu) < 0.125:
            reasons.append(f"|mu(eps)|={abs(mu):.3g} >= 1/8")
        if d2 >= math.pi:
            reasons.append("delta2 >= pi")
        for s in s_list:
            s = float(s)
            rng = np.random.default_rng([sample_spec.seed, len(entries)])
            entry = {
                "eps": eps, "s": s, "delta1": d1, "delta2": d2, "delta": ball, "mu": mu,
                "within_hypotheses": not reasons, "hypothesis_notes": reasons,
            }
            # (i) radial
            r_grid = np.unique(np.concatenate([
                np.linspace(c.alpha * 1e-3, sample_spec.r_max_factor * c.alpha, sample_spec.n_radial),
                [c.alpha],
            ]))
            g_vals = np.array(parallel_map(_script_g_job, [(r, s, u0) for r in r_grid], jobs))
            inside = g_vals <= eps
            outside = np.abs(r_grid - c.alpha) > d1
            v_radial = [float(r) for r in r_grid[inside & outside]]
            entry["radial"] = {
                "r": r_grid.tolist(), "scriptG": g_vals.tolist(),
                "n_below_eps": int(inside.sum()),
                "min_scriptG_outside": float(g_vals[outside].min()) if outside.any() else None,
                "violations": v_radial,
            }
            # (ii) off-angle shell
            rs = rng.uniform(c.alpha - d1, c.alpha + d1, sample_spec.n_angular)
            th = rng.uniform(min(d2, math.pi), math.pi, sample_spec.n_angular)
            th = np.clip(th, np.nextafter(min(d2, math.pi), 4), math.pi)
            xs = [r * (math.cos(t) * cc.x0 + math.sin(t) * _unit_orthogonal(sys, cc.x0, rng))
                  for r, t in zip(rs, th)]
            f0 = np.array(parallel_map(_f0_job, [(cc, x, s) for x in xs], jobs))
            v_ang = [{"r": float(r), "angle": float(t), "F0": float(v)}
                     for r, t, v in zip(rs, th, f0) if not v > eps]
            entry["angular"] = {
                "n": len(xs), "min_F0": float(f0.min()) if len(f0) else None,
                "min_margin": float(f0.min() - eps) if len(f0) else None,
                "violations": v_ang,
            }
            # (iii) ball containment for sampled sublevel points
            rb = rng.uniform(max(c.alpha - 3 * d1, 1e-9), c.alpha + 3 * d1, sample_spec.n_ball)
            tb = rng.uniform(0.0, min(3 * d2, math.pi), sample_spec.n_ball)
            xb = [r * (math.cos(t) * cc.x0 + math.sin(t) * _unit_orthogonal(sys, cc.x0, rng))
                  for r, t in zip(rb, tb)]
            fb = np.array(parallel_map(_f0_job, [(cc, x, s) for x in xb], jobs))
            dist = np.array([sys.norm(x - c.alpha * cc.x0) for x in xb])
            sub = fb <= eps
            v_ball = [{"distance": float(dd), "F0": float(v)}
                      for dd, v in zip(dist, fb) if v <= eps and dd > ball]
            entry["ball"] = {
                "n": len(xb), "n_below_eps": int(sub.sum()),
                "max_distance_below_eps": float(dist[sub].max()) if sub.any() else None,
                "violations": v_ball,
            }
            n_v = len(v_radial) + len(v_ang) + len(v_ball)
            entry["n_violations"] = n_v
            entry["verdict"] = ("pass" if n_v == 0 else "fail") if not reasons else "outside_hypotheses"
            if not reasons:
                total_violations += n_v
            entries.append(entry)
    return {
        "u0": u0,
        "constants": {
            "alpha": c.alpha, "beta": c.beta, "beta0": c.beta0, "alpha0": c.alpha0,
            "G2_alpha": consts.G2_alpha, "C1": consts.C1, "delta_bar": consts.delta_bar,
            "eps_bar1": consts.eps_bar1, "C2": consts.C2, "C2_threshold": consts.C2_threshold,
        },
        "entries": entries,
        "total_violations": total_violations,
    }


def _script_g_job(args):
    r, s, u0 = args
    return script_G(r, s, u0)


def random_direction_configuration(sys, x0, r, angle, rng):
    """Configuration of norm ``r`` at the given mass-metric angle from ``x0``."""
    x0 = x0 / sys.norm(x0)
    x = r * (math.cos(angle) * x0 + math.sin(angle) * _unit_orthogonal(sys, x0, rng))
    return x
