"""Parabolic motions from a fixed configuration as limits of fixed-horizon minimizers.

For an increasing horizon sequence t_n, each gamma_n minimizes the action
from ``x_i`` to gamma0(t_n) in time t_n.  Restricted to windows [0, T] with
t_n >= sbar T the family is Cauchy, and the last member stands in for the
limit motion, whose asymptotics are then measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .action import (
    DiscretePath,
    GridSpec,
    InitSpec,
    MinimizeReport,
    SolverConfig,
    _action_terms,
    interpolate_cubic23,
    minimize_fixed_endpoints,
)
from .central import CentralConfig, homothetic_parabolic_gamma0
from .configspace import (
    MassSystem,
    angle_between,
    grad_normalized_potential,
    normalize,
    normalized_potential,
    orbit_angle,
)

DIAGNOSTIC_COLUMNS = (
    "t", "r_over_t23", "angle", "angle_orbit", "I_over_t43",
    "speed", "energy", "Utilde", "gradUtilde",
)


def default_t_seq(t1=1.0, count=9):
    """Geometric horizons t1 * 2**n for n = 0 .. count-1."""
    return [t1 * 2.0**n for n in range(count)]


def _extend_along_gamma0(cc, path: DiscretePath, t_new, times_new):
    extra = times_new[times_new > path.times[-1]]
    if extra.size == 0 or extra[-1] < t_new:
        extra = np.append(extra, t_new)
    tail = np.stack([homothetic_parabolic_gamma0(cc, t) for t in extra])
    return DiscretePath(np.concatenate([path.times, extra]), np.concatenate([path.nodes, tail]))


def minimizer_sequence(sys: MassSystem, cc: CentralConfig, x_i, t_seq, solver_cfg=None,
                       warm_start=True, grid="log"):
    """Minimizers from ``x_i`` to gamma0(t_n) in time t_n, one report per horizon.

    With warm starts each problem is initialized with the previous minimizer
    continued along gamma0; the first horizon (and any horizon after a
    failure) uses the configured initial guesses.
    """
    cfg = solver_cfg or SolverConfig()
    x_i = sys.project_com(sys.check(x_i))
    if sys.norm(x_i) == 0.0:
        raise ValueError("x_i must be nonzero")
    t_seq = [float(t) for t in t_seq]
    if any(b <= a for a, b in zip(t_seq, t_seq[1:])) or t_seq[0] <= 0:
        raise ValueError("t_seq must be positive and strictly increasing")
    spec = GridSpec(cfg.nodes, grid)
    reports = []
    prev = None
    for t in t_seq:
        end = homothetic_parabolic_gamma0(cc, t)
        times = spec.times(t)
        inits = []
        if warm_start and prev is not None and prev.converged:
            inits.append(InitSpec("path", path=_extend_along_gamma0(cc, prev.path, t, times)))
        else:
            inits += [InitSpec(k, starts=cfg.starts, jitter=cfg.jitter, seed=cfg.seed)
                      for k in cfg.inits]
        best = None
        for init in inits:
            rep = minimize_fixed_endpoints(sys, x_i, end, t, spec, init, cfg.tol, cfg.max_iter)
            if best is None or (rep.converged, -rep.action) > (best.converged, -best.action):
                best = rep
        reports.append(best)
        prev = best
    return reports


@dataclass(frozen=True, eq=False)
class LimitExtraction:
    limit: DiscretePath
    table: list
    warnings: list
    windows: list
    limit_window: float


def _window_grid(T, n=400):
    return GridSpec(n, "log").times(T)


def _sup_mass_norm(sys, a, b):
    diff = a - b
    return float(np.sqrt(np.einsum("i,kid,kid->k", sys.masses, diff, diff)).max())


def extract_limit_path(sys: MassSystem, reports, windows, sbar=4.0, grid_points=400):
    """Cauchy table of consecutive minimizers on each admissible window.

    Only horizons with t_n >= sbar * T enter the table of window T, and a
    window needs two such horizons to be tabulated.  The last successful
    report, restricted to [0, t_K / sbar], is returned as the numerical limit.
    """
    ok = [r for r in reports if r.converged]
    if len(ok) < 2:
        raise ValueError("need at least two successful minimizers")
    table = []
    warnings = []
    used_windows = []
    for T in sorted(float(w) for w in windows):
        members = [r for r in ok if r.path.times[-1] >= sbar * T * (1 - 1e-12)]
        if len(members) < 2:
            warnings.append(f"window {T:g} not tabulated: fewer than two horizons >= {sbar:g} T")
            continue
        used_windows.append(T)
        grid = _window_grid(T, grid_points)
        curves = [interpolate_cubic23(r.path, grid) for r in members]
        diffs = []
        for k in range(1, len(members)):
            d = _sup_mass_norm(sys, curves[k], curves[k - 1])
            diffs.append(d)
            table.append({
                "window": T,
                "t_prev": float(members[k - 1].path.times[-1]),
                "t_next": float(members[k].path.times[-1]),
                "sup_diff": d,
            })
        if any(b > a for a, b in zip(diffs, diffs[1:])):
            warnings.append(f"window {T:g}: consecutive differences not decreasing")
    last = ok[-1].path
    T_max = last.times[-1] / sbar
    limit = last.restrict(last.times[0], T_max)
    return LimitExtraction(limit, table, warnings, used_windows, T_max)


def _node_velocities(path: DiscretePath):
    """Second-order velocities at interior nodes of a nonuniform grid."""
    t, X = path.times, path.nodes
    h0 = (t[1:-1] - t[:-2])[:, None, None]
    h1 = (t[2:] - t[1:-1])[:, None, None]
    return (h0**2 * X[2:] - h1**2 * X[:-2] - (h0**2 - h1**2) * X[1:-1]) / (h0 * h1 * (h0 + h1))


def parabolic_diagnostics(sys: MassSystem, cc: CentralConfig, limit: DiscretePath, t_min=0.0):
    """Per-node asymptotic diagnostics; returns a list of dict rows."""
    t = limit.times[1:-1]
    X = limit.nodes[1:-1]
    V = _node_velocities(limit)
    rows = []
    for tk, x, v in zip(t, X, V):
        if tk <= t_min or tk <= 0:
            continue
        r = sys.norm(x)
        xn = normalize(sys, x)
        speed = sys.norm(v)
        rows.append({
            "t": float(tk),
            "r_over_t23": r / tk ** (2.0 / 3.0),
            "angle": angle_between(sys, x, cc.x0),
            "angle_orbit": orbit_angle(sys, x, cc.x0),
            "I_over_t43": r * r / tk ** (4.0 / 3.0),
            "speed": speed,
            "energy": 0.5 * speed**2 - float(sys.potential_batch(x)),
            "Utilde": normalized_potential(sys, xn),
            "gradUtilde": sys.norm(grad_normalized_potential(sys, xn)),
        })
    return rows


# ---------------------------------------------------------------------------
# Trend summaries
# ---------------------------------------------------------------------------


def decade_medians(rows, column, t_end=None, decades=3, absolute=True):
    """Medians of ``column`` over [t_end/10^(k+1), t_end/10^k], latest decade first."""
    t = np.array([r["t"] for r in rows])
    v = np.array([r[column] for r in rows])
    if absolute:
        v = np.abs(v)
    t_end = t.max() if t_end is None else t_end
    out = []
    for k in range(decades):
        hi, lo = t_end / 10.0**k, t_end / 10.0 ** (k + 1)
        sel = (t > lo) & (t <= hi)
        out.append({"lo": lo, "hi": hi, "median": float(np.median(v[sel])) if sel.any() else None,
                    "count": int(sel.sum())})
    return out


def cumulative_action(sys, path: DiscretePath):
    """A_L restricted to [t_0, t_k] for every node k."""
    kin, pot = _action_terms(sys, path.times, path.nodes)
    return np.concatenate([[0.0], np.cumsum(kin + pot)])


def action_growth_exponent(sys, path: DiscretePath, T_lo, T_hi, samples=20):
    """Least-squares slope of log A_L(gamma|[0,T]) against log T."""
    A = cumulative_action(sys, path)
    Ts = np.geomspace(T_lo, T_hi, samples)
    vals = np.interp(Ts, path.times, A)
    slope, intercept = np.polyfit(np.log(Ts), np.log(vals), 1)
    return float(slope), float(math.exp(intercept)), Ts.tolist(), vals.tolist()


def window_growth_bounds(sys, reports, T_bar, sbar=4.0):
    """sup over T in [T_bar, t_n/sbar] of |gamma_n(T)| / T^(2/3), per horizon."""
    out = []
    for r in reports:
        if not r.converged:
            continue
        t_n = r.path.times[-1]
        hi = t_n / sbar
        if hi < T_bar:
            continue
        sel = (r.path.times >= T_bar) & (r.path.times <= hi)
        ts = r.path.times[sel]
        if ts.size == 0:
            continue
        norms = np.sqrt(np.einsum("i,kid,kid->k", sys.masses, r.path.nodes[sel], r.path.nodes[sel]))
        out.append({"t_n": float(t_n), "sup_ratio": float((norms / ts ** (2.0 / 3.0)).max())})
    return out


@dataclass(frozen=True, eq=False)
class ParabolicRun:
    x_i: np.ndarray
    cc: CentralConfig
    t_seq: list
    windows: list
    reports: list
    extraction: LimitExtraction
    diagnostics: list
    sbar: float
    solver: SolverConfig
    summary: dict = field(default_factory=dict)

    @property
    def limit(self):
        return self.extraction.limit


def run_parabolic(sys, cc, x_i, t_seq=None, sbar=4.0, solver_cfg=None, windows=None):
    """Full construction: minimizing sequence, limit extraction and diagnostics."""
    cfg = solver_cfg or SolverConfig()
    t_seq = list(t_seq or default_t_seq())
    if windows is None:
        windows = [t / sbar for t in t_seq if t / sbar >= 1.0]
    reports = minimizer_sequence(sys, cc, x_i, t_seq, cfg)
    extraction = extract_limit_path(sys, reports, windows, sbar)
    rows = parabolic_diagnostics(sys, cc, extraction.limit)
    T = extraction.limit_window
    c = cc.constants
    summary = {
        "window": T,
        "final": rows[-1] if rows else None,
        "r_over_t23_decades": decade_medians(
            [dict(r, dev=r["r_over_t23"] - c.alpha) for r in rows], "dev", T),
        "angle_orbit_decades": decade_medians(rows, "angle_orbit", T),
        "energy_decades": decade_medians(rows, "energy", T),
        "converged": [bool(r.converged) for r in reports],
        "actions": [float(r.action) for r in reports],
        "min_separation": min(float(r.min_separation) for r in reports),
    }
    if T > 1.0:
        summary["action_growth"] = action_growth_exponent(sys, extraction.limit, 1.0, T)[0]
    return ParabolicRun(np.asarray(x_i), cc, t_seq, extraction.windows, reports, extraction,
                        rows, sbar, cfg, summary)
