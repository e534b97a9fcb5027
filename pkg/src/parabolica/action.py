"""Discretized Lagrangian action and fixed-endpoint minimization.

A path is stored as node configurations on a strictly increasing time grid and
is treated as piecewise linear.  Per segment the kinetic term is exact and the
potential term uses two-point Gauss quadrature, so the discrete action is a
smooth function of the nodes with an exact gradient and a block-tridiagonal
Hessian.  Minimization is a damped Newton iteration on the interior nodes.

Any object exposing ``shape``, ``weights``, ``check``, ``potential_batch``,
``partials_batch``, ``hessian_batch`` and ``min_separation`` can play the
potential; :class:`parabolica.configspace.MassSystem` is the main one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, solveh_banded

from .kepler1d import kepler_action_S
from .parallel import parallel_map

_G1 = 0.5 - 0.5 / math.sqrt(3.0)
_G2 = 0.5 + 0.5 / math.sqrt(3.0)

DEFAULT_NODES = 1000
DEFAULT_TOL = 1e-8
REJECT_SEPARATION = 1e-7


class SolverFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscretePath:
    times: np.ndarray
    nodes: np.ndarray
    fixed: tuple = (True, True)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two time nodes")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if nodes.ndim != 3 or nodes.shape[0] != times.size:
            raise ValueError(f"nodes shape {nodes.shape} does not match {times.size} times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_nodes(self):
        return self.times.size

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @property
    def start(self):
        return self.nodes[0]

    @property
    def end(self):
        return self.nodes[-1]

    def at(self, t):
        """Piecewise-linear evaluation at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        flat = self.nodes.reshape(self.n_nodes, -1)
        out = np.stack([np.interp(t, self.times, flat[:, k]) for k in range(flat.shape[1])], axis=-1)
        return out.reshape(t.shape + self.nodes.shape[1:])

    def resample(self, times, kind="linear"):
        times = np.asarray(times, dtype=float)
        if kind == "linear":
            nodes = self.at(times)
        elif kind == "cubic23":
            nodes = interpolate_cubic23(self, times)
        else:
            raise ValueError(f"unknown interpolation {kind!r}")
        return DiscretePath(times, nodes, self.fixed)

    def restrict(self, a, b):
        """Sub-path on [a, b]; the endpoints are interpolated if not nodes."""
        if not self.times[0] <= a < b <= self.times[-1]:
            raise ValueError("window outside the path")
        inner = self.times[(self.times > a) & (self.times < b)]
        return self.resample(np.concatenate([[a], inner, [b]]))

    def with_nodes(self, nodes):
        return replace(self, nodes=nodes)


def interpolate_cubic23(path: DiscretePath, times):
    """Cubic spline in the variable ``u = t**(2/3)``, suited to t^(2/3) growth."""
    if path.times[0] < 0:
        raise ValueError("t^(2/3) interpolation needs nonnegative times")
    u = path.times ** (2.0 / 3.0)
    spline = CubicSpline(u, path.nodes, axis=0)
    return spline(np.asarray(times, dtype=float) ** (2.0 / 3.0))


def rescale_path(path: DiscretePath, lam) -> DiscretePath:
    """The homothety-invariant rescaling t -> lam t, x -> lam**(2/3) x."""
    lam = float(lam)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if lam == 1.0:
        return path
    return DiscretePath(path.times * lam, path.nodes * lam ** (2.0 / 3.0), path.fixed)


# ---------------------------------------------------------------------------
# Grids and initial guesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """``kind`` is uniform, graded (clustering at a zero endpoint), log or auto.

    Graded grids put node k at ``T (k/M)**grading``.  For an arc leaving
    the origin like t^(2/3) the first segment contributes an action error of
    order M**(-grading/3), so grading 3/2 only gives O(M**-0.5) while the
    default 4 gives O(M**-4/3) with the bulk of the grid still O(M**-2).
    """

    nodes: int = DEFAULT_NODES
    kind: str = "auto"
    grading: float = 4.0

    def times(self, T, start_at_origin=False, end_at_origin=False, t0=0.0):
        M = int(self.nodes)
        if M < 2:
            raise ValueError("grid needs at least 2 segments")
        k = np.arange(M + 1) / M
        kind = self.kind
        if kind == "auto":
            kind = "graded" if (start_at_origin or end_at_origin) else "uniform"
        if kind == "uniform":
            u = k
        elif kind == "graded":
            g = self.grading
            if start_at_origin and end_at_origin:
                u = 0.5 * np.where(k <= 0.5, (2 * k) ** g, 2.0 - (2 - 2 * k) ** g)
            elif end_at_origin:
                u = 1.0 - (1.0 - k) ** g
            else:
                u = k**g
        elif kind == "log":
            # spacing proportional to (t + 1)
            u = np.expm1(k * math.log1p(T)) / T
        else:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        u[0], u[-1] = 0.0, 1.0
        return t0 + T * u


@dataclass(frozen=True)
class InitSpec:
    """Initial guess: linear, power (t^(2/3) profile), testpath, or an explicit path."""

    kind: str = "linear"
    path: DiscretePath | None = None
    starts: int = 1
    jitter: float = 0.0
    seed: int = 0
    x0_prime: np.ndarray | None = None


def _initial_nodes(sys, x_start, x_end, times, init: InitSpec):
    T = times[-1] - times[0]
    s = (times - times[0]) / T
    if init.kind == "linear":
        return x_start + s[:, None, None] * (x_end - x_start)
    if init.kind == "power":
        # t^(2/3) profile leaving the start (or arriving at the end)
        if np.linalg.norm(x_start) <= np.linalg.norm(x_end):
            p = s ** (2.0 / 3.0)
        else:
            p = 1.0 - (1.0 - s) ** (2.0 / 3.0)
        return x_start + p[:, None, None] * (x_end - x_start)
    if init.kind == "path":
        if init.path is None:
            raise ValueError("init kind 'path' needs a path")
        p = init.path
        if abs(p.times[0] - times[0]) > 1e-12 * T or abs(p.times[-1] - times[-1]) > 1e-9 * T:
            raise ValueError("initial path does not span the requested interval")
        nodes = p.at(times)
        nodes[0], nodes[-1] = x_start, x_end
        return nodes
    if init.kind == "testpath":
        R = max(_wnorm(sys, x_start), _wnorm(sys, x_end))
        x0p = init.x0_prime
        if x0p is None:
            x0p = _default_x0_prime(sys, x_start, x_end)
        tp = build_test_path(sys, x_start, x_end, R, T, x0p, evaluate=False)
        nodes = DiscretePath(tp.path.times + times[0], tp.path.nodes).at(times)
        nodes[0], nodes[-1] = x_start, x_end
        return nodes
    raise ValueError(f"unknown init kind {init.kind!r}")


def _wnorm(sys, x):
    return float(np.sqrt(np.einsum("i,id,id->", sys.weights, x, x)))


def _default_x0_prime(sys, x_start, x_end):
    for x in (x_end, x_start):
        n = _wnorm(sys, x)
        if n > 0 and sys.min_separation(x) > 1e-3 * n / math.sqrt(sys.weights.sum()):
            return x / n
    rng = np.random.default_rng(0)
    x = sys.random_configuration(rng)
    return x / _wnorm(sys, x)


def _jitter(sys, nodes, times, amplitude, rng):
    if amplitude <= 0:
        return nodes
    T = times[-1] - times[0]
    env = np.sin(math.pi * (times - times[0]) / T)
    scale = max(np.abs(nodes).max(), 1e-12)
    noise = rng.standard_normal((3,) + nodes.shape[1:])
    bumps = np.stack([np.sin((k + 1) * math.pi * (times - times[0]) / T) for k in range(3)])
    pert = np.einsum("kt,knd->tnd", bumps, noise) * env[:, None, None]
    if hasattr(sys, "project_com"):
        pert = sys.project_com(pert)
    return nodes + amplitude * scale * pert


# ---------------------------------------------------------------------------
# Action, gradient, Hessian
# ---------------------------------------------------------------------------


def _gauss_points(X):
    dX = np.diff(X, axis=0)
    return X[:-1] + _G1 * dX, X[:-1] + _G2 * dX, dX


def path_min_separation(sys, nodes):
    """Smallest pair separation over interior nodes and quadrature points.

    Endpoints are excluded: a path may legitimately start at total collision.
    """
    g1, g2, _ = _gauss_points(nodes)
    seps = [sys.min_separation(g1).min(), sys.min_separation(g2).min()]
    if nodes.shape[0] > 2:
        seps.append(sys.min_separation(nodes[1:-1]).min())
    return float(min(seps))


def _action_terms(sys, times, X):
    dt = np.diff(times)
    g1, g2, dX = _gauss_points(X)
    w = sys.weights
    kin = 0.5 * np.einsum("i,kid,kid->k", w, dX, dX) / dt
    with np.errstate(divide="ignore", invalid="ignore"):
        pot = 0.5 * dt * (sys.potential_batch(g1) + sys.potential_batch(g2))
    return kin, pot


def discrete_action(sys, path: DiscretePath) -> float:
    """Composite action; ``inf`` if a quadrature point sits at a collision."""
    X = sys.check(path.nodes)
    kin, pot = _action_terms(sys, path.times, X)
    total = float(kin.sum() + pot.sum())
    return total if np.isfinite(total) else float("inf")


def _full_gradient(sys, times, X):
    dt = np.diff(times)
    g1, g2, dX = _gauss_points(X)
    w = sys.weights[None, :, None]
    v = w * dX / dt[:, None, None]
    c = (0.5 * dt)[:, None, None]
    p1, p2 = sys.partials_batch(g1), sys.partials_batch(g2)
    grad = np.zeros_like(X)
    grad[:-1] += -v + c * ((1 - _G1) * p1 + (1 - _G2) * p2)
    grad[1:] += v + c * (_G1 * p1 + _G2 * p2)
    return grad


def action_gradient(sys, path: DiscretePath):
    """Euclidean gradient with respect to the nodes; zero on fixed endpoints."""
    X = sys.check(path.nodes)
    if path_min_separation(sys, X) == 0.0:
        raise ValueError("gradient undefined: collision on the path")
    grad = _full_gradient(sys, path.times, X)
    if path.fixed[0]:
        grad[0] = 0.0
    if path.fixed[-1]:
        grad[-1] = 0.0
    return grad


def _hessian_blocks(sys, times, X):
    """Diagonal and super-diagonal blocks over all nodes."""
    dt = np.diff(times)
    g1, g2, _ = _gauss_points(X)
    n = X.shape[1] * X.shape[2]
    h1, h2 = sys.hessian_batch(g1), sys.hessian_batch(g2)
    c = (0.5 * dt)[:, None, None]
    wdiag = np.repeat(sys.weights, X.shape[2])
    kin = (wdiag[None, :] / dt[:, None])[:, :, None] * np.eye(n)[None]
    M = dt.size
    diag = np.zeros((M + 1, n, n))
    diag[:-1] += kin + c * ((1 - _G1) ** 2 * h1 + (1 - _G2) ** 2 * h2)
    diag[1:] += kin + c * (_G1**2 * h1 + _G2**2 * h2)
    off = -kin + c * (_G1 * (1 - _G1) * h1 + _G2 * (1 - _G2) * h2)
    return diag, off


def _kinetic_blocks(sys, times, X):
    dt = np.diff(times)
    n = X.shape[1] * X.shape[2]
    wdiag = np.repeat(sys.weights, X.shape[2])
    kin = (wdiag[None, :] / dt[:, None])[:, :, None] * np.eye(n)[None]
    diag = np.zeros((dt.size + 1, n, n))
    diag[:-1] += kin
    diag[1:] += kin
    return diag, -kin


def _pack_banded(diag, off):
    """Upper banded storage of a symmetric block-tridiagonal matrix."""
    m, n, _ = diag.shape
    u = 2 * n - 1
    ab = np.zeros((u + 1, m * n))
    P, Q = np.triu_indices(n)
    cols = np.arange(m)[:, None] * n + Q[None, :]
    ab[(u + P - Q)[None, :], cols] = diag[:, P, Q]
    if m > 1:
        P, Q = np.indices((n, n)).reshape(2, -1)
        cols = np.arange(1, m)[:, None] * n + Q[None, :]
        ab[(u + P - Q - n)[None, :], cols] = off[:, P, Q]
    return ab


def action_hessian_banded(sys, path: DiscretePath):
    """Hessian with respect to the interior nodes in upper banded storage."""
    diag, off = _hessian_blocks(sys, path.times, sys.check(path.nodes))
    return _pack_banded(diag[1:-1], off[1:-1])


# ---------------------------------------------------------------------------
# Minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinimizeReport:
    path: DiscretePath
    action: float
    grad_norm: float
    iterations: int
    min_separation: float
    converged: bool
    message: str = ""
    starts: int = 1
    start_actions: tuple = field(default=())

    def to_dict(self):
        return {
            "action": self.action,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "min_separation": self.min_separation,
            "converged": self.converged,
            "message": self.message,
            "starts": self.starts,
            "start_actions": list(self.start_actions),
            "nodes": int(self.path.n_nodes),
            "T": self.path.duration,
        }


def _scale_of(sys, X):
    return max(float(np.sqrt(np.einsum("i,kid,kid->k", sys.weights, X, X).max()
                             / sys.weights.sum())), 1e-300)


def newton_minimize(sys, path: DiscretePath, tol=DEFAULT_TOL, max_iter=500):
    """Damped Newton on the interior nodes, damping by the kinetic metric.

    The stopping test uses the gradient measured in the dual kinetic norm
    ``sqrt(g^T K^{-1} g)``, which does not depend on the grid size.
    """
    times = path.times
    X = sys.check(path.nodes).copy()
    shape = X.shape
    n = shape[1] * shape[2]
    if times.size < 3:
        a = discrete_action(sys, path)
        return MinimizeReport(path, a, 0.0, 0, path_min_separation(sys, X), True, "no free nodes")

    kd, ko = _kinetic_blocks(sys, times, X)
    k_ab = _pack_banded(kd[1:-1], ko[1:-1])
    k_chol = cholesky_banded(k_ab)

    def evaluate(Y):
        kin, pot = _action_terms(sys, times, Y)
        return float(kin.sum() + pot.sum())

    def dual_norm(g):
        return float(math.sqrt(max(g @ cho_solve_banded((k_chol, False), g), 0.0)))

    scale = _scale_of(sys, X)
    sep0 = path_min_separation(sys, X)
    if not sep0 > 0:
        raise ValueError("initial path passes through a collision")
    floor = min(REJECT_SEPARATION * scale, 0.5 * sep0)
    f = evaluate(X)
    mu = 0.0
    message = "iteration budget exhausted"
    gnorm = float("inf")
    it = 0
    for it in range(max_iter + 1):
        g = _full_gradient(sys, times, X)[1:-1].reshape(-1)
        gnorm = dual_norm(g)
        if gnorm < tol:
            message = "converged"
            break
        if it == max_iter:
            break
        diag, off = _hessian_blocks(sys, times, X)
        h_ab = _pack_banded(diag[1:-1], off[1:-1])
        accepted = False
        for _ in range(60):
            try:
                p = solveh_banded(h_ab + mu * k_ab, -g, check_finite=False)
            except LinAlgError:
                mu = max(4.0 * mu, 1e-4)
                continue
            gp = float(g @ p)
            if not np.isfinite(gp) or gp >= 0:
                mu = max(4.0 * mu, 1e-4)
                continue
            trial = X.copy()
            trial[1:-1] += p.reshape((-1,) + shape[1:])
            if path_min_separation(sys, trial) < floor:
                mu = max(4.0 * mu, 1e-4)
                continue
            f_trial = evaluate(trial)
            # model: g.p + p^T H p / 2, with p^T H p = -g.p - mu p^T K p
            pkp = _banded_quad(k_ab, p)
            pred = 0.5 * gp - 0.5 * mu * pkp
            if not np.isfinite(f_trial):
                mu = max(4.0 * mu, 1e-4)
                continue
            noise = 1e-13 * abs(f)
            if -pred < 10 * noise:
                ok = f_trial <= f + noise
                rho = 1.0
            else:
                rho = (f_trial - f) / pred
                ok = rho > 1e-4
            if ok:
                X, f = trial, f_trial
                if rho > 0.75:
                    mu = mu / 4.0 if mu > 1e-8 else 0.0
                elif rho < 0.25:
                    mu = max(2.0 * mu, 1e-4)
                accepted = True
                break
            mu = max(4.0 * mu, 1e-4)
        if not accepted:
            message = "line search failed"
            break
    X[1:-1] = _project(sys, X[1:-1])
    out = path.with_nodes(X)
    return MinimizeReport(
        out, evaluate(X), gnorm, it, path_min_separation(sys, X), gnorm < tol, message
    )


def _banded_quad(ab, p):
    """p^T A p for A in upper banded storage."""
    u = ab.shape[0] - 1
    total = float(ab[u] @ (p * p))
    for k in range(1, u + 1):
        total += 2.0 * float(ab[u - k, k:] @ (p[:-k] * p[k:]))
    return total


def _project(sys, X):
    return sys.project_com(X) if hasattr(sys, "project_com") else X


def _start_job(args):
    sys, x_start, x_end, times, init, tol, max_iter, k = args
    nodes = _initial_nodes(sys, x_start, x_end, times, init)
    if k > 0:
        rng = np.random.default_rng([init.seed, k])
        nodes = _jitter(sys, nodes, times, init.jitter, rng)
    nodes[0], nodes[-1] = x_start, x_end
    try:
        return newton_minimize(sys, DiscretePath(times, nodes), tol, max_iter)
    except ValueError as exc:
        return exc


def minimize_fixed_endpoints(
    sys, x_start, x_end, T, grid_spec: GridSpec | None = None,
    init_spec: InitSpec | None = None, tol=DEFAULT_TOL, max_iter=500, jobs=1,
    raise_on_failure=False,
) -> MinimizeReport:
    """Numerical minimal action between two configurations in time ``T``.

    Every start (the initial guess plus jittered copies) is minimized and the
    least action among converged runs is reported.
    """
    T = float(T)
    if not T > 0:
        raise ValueError("T must be positive")
    grid_spec = grid_spec or GridSpec()
    init_spec = init_spec or InitSpec()
    x_start = _project(sys, sys.check(x_start).astype(float))
    x_end = _project(sys, sys.check(x_end).astype(float))
    scale = max(_wnorm(sys, x_start), _wnorm(sys, x_end))
    times = grid_spec.times(
        T,
        start_at_origin=_wnorm(sys, x_start) <= 1e-12 * scale,
        end_at_origin=_wnorm(sys, x_end) <= 1e-12 * scale,
    )
    args = [(sys, x_start, x_end, times, init_spec, tol, max_iter, k)
            for k in range(max(1, init_spec.starts))]
    results = parallel_map(_start_job, args, jobs)
    reports = [r for r in results if isinstance(r, MinimizeReport)]
    actions = tuple(r.action for r in reports)
    good = [r for r in reports if r.converged]
    pool = good or reports
    if not pool:
        msg = "; ".join(str(r) for r in results)
        if raise_on_failure:
            raise SolverFailure(f"all starts failed: {msg}")
        path = DiscretePath(times, _initial_nodes(sys, x_start, x_end, times, init_spec))
        return MinimizeReport(path, float("inf"), float("inf"), 0, 0.0, False,
                              f"all starts failed: {msg}", len(results), actions)
    best = min(pool, key=lambda r: r.action)
    best = replace(best, starts=len(results), start_actions=actions)
    if raise_on_failure and not best.converged:
        raise SolverFailure(best.message, best)
    return best


# ---------------------------------------------------------------------------
# Diagnostics along a path
# ---------------------------------------------------------------------------


def segment_energy(sys, path: DiscretePath):
    """Energy K/2 - U at segment midpoints using difference-quotient velocities."""
    X = sys.check(path.nodes)
    dt = np.diff(path.times)
    v = np.diff(X, axis=0) / dt[:, None, None]
    mid = 0.5 * (X[1:] + X[:-1])
    kin = 0.5 * np.einsum("i,kid,kid->k", sys.weights, v, v)
    return 0.5 * (path.times[1:] + path.times[:-1]), kin - sys.potential_batch(mid)


def energy_error_bound(sys, path: DiscretePath):
    """Per-segment a priori size of the midpoint energy error.

    Combines the midpoint-vs-trajectory offset (dt^2/8 |a|^2) and the
    difference-quotient velocity error (dt^2/24 |v| |da/dt|, doubled).
    """
    X = sys.check(path.nodes)
    dt = np.diff(path.times)
    v = np.diff(X, axis=0) / dt[:, None, None]
    mid = 0.5 * (X[1:] + X[:-1])
    w = sys.weights
    acc = sys.partials_batch(mid) / w[None, :, None]
    hess = sys.hessian_batch(mid)
    jerk = (hess @ v.reshape(v.shape[0], -1, 1)).reshape(v.shape) / w[None, :, None]

    def norm(y):
        return np.sqrt(np.einsum("i,kid,kid->k", w, y, y))

    return dt**2 * (norm(acc) ** 2 / 8.0 + norm(v) * norm(jerk) / 12.0)


def equation_residual(sys, path: DiscretePath):
    """Max mass-norm mismatch between the nodal second difference and grad U."""
    X = sys.check(path.nodes)
    t = path.times
    h0, h1 = t[1:-1] - t[:-2], t[2:] - t[1:-1]
    acc = 2.0 * ((X[2:] - X[1:-1]) / h1[:, None, None] - (X[1:-1] - X[:-2]) / h0[:, None, None])
    acc /= (h0 + h1)[:, None, None]
    grad = sys.partials_batch(X[1:-1]) / sys.weights[None, :, None]
    diff = acc - grad
    return np.sqrt(np.einsum("i,kid,kid->k", sys.weights, diff, diff))


# ---------------------------------------------------------------------------
# Explicit finite-action path between two configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestPath:
    __test__ = False  # not a pytest class

    path: DiscretePath
    action: float
    bound: float
    C1: float
    C2: float
    h_values: tuple

    @property
    def ok(self):
        return self.action <= self.bound

    @property
    def margin(self):
        return self.bound - self.action


def _homotopy_profile(lams, half, per_piece):
    """Times and homotopy parameters of one half of the explicit path.

    Returns arrays (t, lam) on [0, half] with nodes clustered at every point
    where the profile has a t^(2/3) singularity.
    """
    mu = np.concatenate([[0.0], lams, [1.0]])
    gaps = np.diff(mu)
    weights = gaps**1.5
    tau = half * weights / weights.sum()
    sigma = np.concatenate([[0.0], np.cumsum(tau)])
    w = np.linspace(0.0, 1.0, per_piece + 1)
    ts, ls = [np.array([0.0])], [np.array([0.0])]
    h = lams.size
    for i in range(h + 1):
        if tau[i] <= 0:
            continue
        if i == 0:
            # rises to mu_1 with the singularity at the right end
            t = sigma[1] - tau[0] * w[::-1] ** 3
            lam = mu[1] * (1.0 - ((tau[0] - (t - sigma[0])) / tau[0]).clip(0) ** (2 / 3))
        elif i == h:
            t = sigma[h] + tau[h] * w**3
            lam = mu[h] + (1.0 - mu[h]) * ((t - sigma[h]) / tau[h]) ** (2 / 3)
        else:
            t_up = sigma[i] + 0.5 * tau[i] * w**3
            lam_up = mu[i] + ((t_up - sigma[i]) / (0.5 * tau[i])) ** (2 / 3) * 0.5 * gaps[i]
            t_dn = sigma[i + 1] - 0.5 * tau[i] * w[::-1] ** 3
            lam_dn = mu[i + 1] - ((sigma[i + 1] - t_dn) / (0.5 * tau[i])).clip(0) ** (2 / 3) * 0.5 * gaps[i]
            t = np.concatenate([t_up, t_dn[1:]])
            lam = np.concatenate([lam_up, lam_dn[1:]])
        ts.append(t[1:])
        ls.append(lam[1:])
    t = np.concatenate(ts)
    lam = np.concatenate(ls)
    keep = np.concatenate([[True], np.diff(t) > 1e-14 * half])
    t, lam = t[keep], lam[keep]
    t[-1], lam[-1] = half, 1.0
    return t, lam


def homotopy_coefficients(sys, x, R, x0_prime):
    """Distinct sorted values of r_ij / (R c_ij + r_ij)."""
    i, j = np.triu_indices(sys.n_bodies, 1)
    r = np.linalg.norm(x[i] - x[j], axis=-1)
    c = np.linalg.norm(x0_prime[i] - x0_prime[j], axis=-1)
    lam = r / (R * c + r)
    lam = np.sort(lam)
    distinct = [lam[0]]
    for v in lam[1:]:
        if v - distinct[-1] > 1e-12:
            distinct.append(v)
    return np.array(distinct)


def build_test_path(sys, x, x_prime, R, T, x0_prime, per_piece=200, evaluate=True) -> TestPath:
    """Explicit path from ``x`` to ``x_prime`` through ``R x0_prime`` with a certified bound.

    Each half is the straight homotopy towards ``R x0_prime`` run with a
    piecewise t^(2/3) profile whose breakpoints are the parameters where some
    pair could collide.  The bound is C1 R^2 / T + C2 T / R with
    C1 = (32/3) (h + 1)**0.5, C2 = 6 U(x0') (h + 1), h = N(N-1)/2.
    """
    x = sys.project_com(sys.check(x))
    x_prime = sys.project_com(sys.check(x_prime))
    x0_prime = sys.check(x0_prime)
    R, T = float(R), float(T)
    if not (R > 0 and T > 0):
        raise ValueError("R and T must be positive")
    slack = 1e-12 * R
    if sys.norm(x) > R + slack or sys.norm(x_prime) > R + slack:
        raise ValueError("configurations must satisfy |x| <= R")
    if abs(sys.norm(x0_prime) - 1.0) > 1e-9:
        raise ValueError("x0_prime must be normalized")
    if sys.min_separation(x0_prime) <= 0:
        raise ValueError("x0_prime must be collision-free")

    half = 0.5 * T
    target = R * x0_prime
    pieces = []
    hs = []
    for endpoint in (x, x_prime):
        lams = homotopy_coefficients(sys, endpoint, R, x0_prime)
        hs.append(int(lams.size))
        t, lam = _homotopy_profile(lams, half, per_piece)
        nodes = (1.0 - lam)[:, None, None] * endpoint + lam[:, None, None] * target
        pieces.append((t, nodes))
    (t1, n1), (t2, n2) = pieces
    times = np.concatenate([t1, T - t2[::-1][1:]])
    nodes = np.concatenate([n1, n2[::-1][1:]])
    path = DiscretePath(times, nodes)

    hmax = sys.n_bodies * (sys.n_bodies - 1) // 2
    C1 = 32.0 / 3.0 * math.sqrt(hmax + 1)
    C2 = 6.0 * float(sys.potential_batch(x0_prime)) * (hmax + 1)
    bound = C1 * R * R / T + C2 * T / R
    action = discrete_action(sys, path) if evaluate else float("nan")
    return TestPath(path, action, bound, C1, C2, tuple(hs))


# ---------------------------------------------------------------------------
# Lower bound by the radial Kepler problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SundmanCheck:
    ok: bool
    margin: float
    slack: float
    action: float
    kepler_action: float


def richardson_slack(sys, path: DiscretePath):
    """Discretization error estimate: action change when every other node is dropped.

    The raw difference is used (no Richardson division) because arcs leaving
    a total collision converge at less than second order.
    """
    coarse_idx = np.arange(0, path.n_nodes, 2)
    if coarse_idx[-1] != path.n_nodes - 1:
        coarse_idx = np.append(coarse_idx, path.n_nodes - 1)
    coarse = DiscretePath(path.times[coarse_idx], path.nodes[coarse_idx])
    return abs(discrete_action(sys, coarse) - discrete_action(sys, path))


def sundman_lower_bound_check(sys, cc, report: MinimizeReport) -> SundmanCheck:
    """Check action >= S(|x_start|, |x_end|; T) up to discretization slack."""
    if not report.converged:
        raise ValueError("lower bound check needs a converged report")
    path = report.path
    a, b = sys.norm(path.start), sys.norm(path.end)
    S = kepler_action_S(a, b, path.duration, cc.u0)
    slack = richardson_slack(sys, path) + 1e-12 * abs(S)
    margin = report.action - S
    return SundmanCheck(margin >= -slack, margin, slack, report.action, S)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def path_to_csv(path: DiscretePath, comments=()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    d = path.nodes.shape[2]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "body"] + [f"x{k + 1}" for k in range(d)])
    for t, X in zip(path.times, path.nodes):
        for b, r in enumerate(X):
            w.writerow([f"{t:.17g}", b] + [f"{c:.17g}" for c in r])
    return buf.getvalue()


def path_from_csv(text: str) -> DiscretePath:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["t", "body"]:
        raise ValueError("path CSV must start with columns t, body")
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    n_bodies = int(data[:, 1].max()) + 1
    d = data.shape[1] - 2
    if data.shape[0] % n_bodies:
        raise ValueError("ragged path CSV")
    data = data.reshape(-1, n_bodies, d + 2)
    return DiscretePath(data[:, 0, 0], data[:, :, 2:])


# ---------------------------------------------------------------------------
# Convenience wrapper used by the excess and construction modules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    nodes: int = DEFAULT_NODES
    tol: float = DEFAULT_TOL
    max_iter: int = 500
    inits: tuple = ("linear", "power")
    starts: int = 1
    jitter: float = 0.0
    seed: int = 0
    grid: str = "auto"

    def to_dict(self):
        return {
            "nodes": self.nodes, "tol": self.tol, "max_iter": self.max_iter,
            "inits": list(self.inits), "starts": self.starts, "jitter": self.jitter,
            "seed": self.seed, "grid": self.grid,
        }


def best_minimizer(sys, x_start, x_end, T, cfg: SolverConfig, grid=None, jobs=1,
                   extra_paths=()) -> MinimizeReport:
    """Least-action converged report over the configured initial guesses."""
    grid = GridSpec(cfg.nodes, grid or cfg.grid)
    inits = [InitSpec(kind, starts=cfg.starts, jitter=cfg.jitter, seed=cfg.seed)
             for kind in cfg.inits]
    inits += [InitSpec("path", path=p) for p in extra_paths]
    reports = [
        minimize_fixed_endpoints(sys, x_start, x_end, T, grid, init, cfg.tol, cfg.max_iter, jobs)
        for init in inits
    ]
    good = [r for r in reports if r.converged]
    best = min(good or reports, key=lambda r: r.action)
    actions = tuple(a for r in reports for a in r.start_actions)
    return replace(best, starts=len(actions), start_actions=actions)
