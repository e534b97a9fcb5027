"""The ten acceptance criteria at their stated tolerances and runtime budgets.

Each test records a one-line PASS/FAIL summary (printed at the end of the run).
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import record_acceptance
from parabolica.action import (
    DiscretePath,
    GridSpec,
    SolverConfig,
    action_gradient,
    best_minimizer,
    build_test_path,
    discrete_action,
    energy_error_bound,
    minimize_fixed_endpoints,
    segment_energy,
)
from parabolica.central import find_minimizing_central_configuration, parabolic_constants
from parabolica.configspace import MassSystem, normalize
from parabolica.kepler1d import G_of_r, G_second, kepler_action_S, solve_energy_h
from parabolica.lambert import (
    KeplerComparison,
    SampleSpec,
    excess_F,
    excess_F0,
    kepler_central_action_A0,
    polar_angle_variation,
    random_direction_configuration,
    verify_localization,
)
from parabolica.parabolic import default_t_seq, run_parabolic

pytestmark = pytest.mark.slow


def test_kepler_oracle_exactness():
    t0 = time.perf_counter()
    errs = {"h_alpha": 0.0, "h_beta": 0.0, "S_rel": 0.0, "G_alpha": 0.0, "G2_rel": 0.0}
    for u0 in (1.0, 3.0):
        c = parabolic_constants(u0)
        errs["h_alpha"] = max(errs["h_alpha"], abs(solve_energy_h(0.0, c.alpha, 1.0, u0).h))
        errs["h_beta"] = max(errs["h_beta"], abs(solve_energy_h(0.0, c.beta, 1.0, u0).h + u0 / c.beta))
        for s in (1.0, 8.0, 27.0):
            S = kepler_action_S(0.0, c.alpha * s ** (2 / 3), s, u0)
            ref = c.alpha0 * s ** (1 / 3)
            errs["S_rel"] = max(errs["S_rel"], abs(S - ref) / ref)
        errs["G_alpha"] = max(errs["G_alpha"], abs(G_of_r(c.alpha, u0)))
        g2 = 5 * math.sqrt(u0) / (math.sqrt(2) * c.alpha**1.5)
        errs["G2_rel"] = max(errs["G2_rel"], abs(G_second(c.alpha, u0) - g2) / g2)
    elapsed = time.perf_counter() - t0
    ok = (errs["h_alpha"] < 1e-10 and errs["h_beta"] < 1e-10 and errs["S_rel"] < 1e-8
          and errs["G_alpha"] < 1e-8 and errs["G2_rel"] < 1e-4 and elapsed < 1.0)
    detail = ", ".join(f"{k}={v:.2e}" for k, v in errs.items()) + f", {elapsed:.2f}s"
    assert record_acceptance(1, "Kepler oracle exactness", ok, detail)


def test_scaling_laws(three_equal):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    lam = 8.0
    k = lam ** (2 / 3)
    s_err = 0.0
    for _ in range(20):
        a, b = np.sort(rng.uniform(0.0, 3.0, 2))
        s, u0 = rng.uniform(0.1, 4.0), rng.uniform(0.5, 3.0)
        base = kepler_action_S(a, b, s, u0)
        s_err = max(s_err, abs(kepler_action_S(k * a, k * b, lam * s, u0) / (lam ** (1 / 3) * base) - 1))
    ratios = []
    for _ in range(3):
        x, y = three_equal.random_configuration(rng), three_equal.random_configuration(rng)
        r1 = minimize_fixed_endpoints(three_equal, x, y, 1.0, GridSpec(1000))
        r8 = minimize_fixed_endpoints(three_equal, k * x, k * y, lam, GridSpec(1000))
        assert r1.converged and r8.converged
        ratios.append(r8.action / r1.action)
    a_err = max(abs(r / lam ** (1 / 3) - 1) for r in ratios)
    elapsed = time.perf_counter() - t0
    ok = s_err < 1e-3 and a_err < 1e-3 and elapsed < 60
    detail = f"S rel err {s_err:.2e}, action ratio rel err {a_err:.2e}, {elapsed:.1f}s"
    assert record_acceptance(2, "scaling laws", ok, detail)


def _integrate_radial(a, v0, s, u0):
    def rhs(t, y):
        r, v, _ = y
        return [v, -u0 / r**2, 0.5 * v * v + u0 / r]

    def near_collision(t, y):
        return y[0] - 0.05

    near_collision.terminal = True
    sol = solve_ivp(rhs, (0.0, s), [a, v0, 0.0], method="DOP853", rtol=1e-13, atol=1e-14,
                    events=near_collision)
    if sol.status != 0:
        return None
    return sol.y[0, -1], sol.y[2, -1]


def test_ode_vs_formula_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, arcs = 0.0, 0
    while arcs < 20:
        u0 = rng.uniform(0.5, 3.0)
        a = rng.uniform(0.2, 2.0)
        v0 = rng.uniform(-1.5, 3.0)
        s = rng.uniform(0.1, 2.0)
        res = _integrate_radial(a, v0, s, u0)
        if res is None:
            continue
        b, action = res
        worst = max(worst, abs(kepler_action_S(a, b, s, u0) - action) / action)
        arcs += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 10
    assert record_acceptance(3, "ODE vs closed-form action", ok,
                             f"max rel err {worst:.2e} on {arcs} arcs, {elapsed:.1f}s")


def test_sundman_lambert_chain(three_equal, cc3):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    c = cc3.constants
    ray = max(abs(excess_F0(cc3, c.alpha * cc3.x0, s)) for s in (10.0, 100.0))
    failures, unconverged, worst = 0, 0, math.inf
    for _ in range(100):
        r = c.alpha * rng.uniform(0.5, 1.5)
        ang = rng.uniform(0.0, 1.2)
        s = math.exp(rng.uniform(math.log(2.0), math.log(100.0)))
        x = random_direction_configuration(three_equal, cc3.x0, r, ang, rng)
        rep = excess_F(three_equal, cc3, x, s)
        unconverged += not rep.converged
        failures += not rep.chain_ok
        worst = min(worst, rep.F_val - rep.F0_val + rep.slack)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and ray < 1e-7 and elapsed < 600
    detail = (f"{failures} chain failures ({unconverged} unconverged) on 100 samples, "
              f"min F-F0+slack {worst:.2e}, |F0(alpha x0)| {ray:.1e}, {elapsed:.0f}s")
    assert record_acceptance(4, "Sundman/Lambert chain", ok, detail)


def test_lambert_cross_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst, worst_angle, all_conv = 0.0, 0.0, True
    for _ in range(10):
        u0 = rng.uniform(0.5, 3.0)
        kc = KeplerComparison(u0)
        r1, r2 = rng.uniform(0.5, 2.0, 2)
        th = rng.uniform(0.2, 2.8)
        s = rng.uniform(0.5, 3.0)
        x1 = np.array([[r1, 0.0]])
        x2 = np.array([[r2 * math.cos(th), r2 * math.sin(th)]])
        rep = best_minimizer(kc, x1, x2, s, SolverConfig(nodes=2000))
        all_conv &= rep.converged
        A0 = kepler_central_action_A0(x1[0], x2[0], s, u0)
        worst = max(worst, abs(rep.action / A0 - 1))
        worst_angle = max(worst_angle, polar_angle_variation(rep.path))
    elapsed = time.perf_counter() - t0
    ok = all_conv and worst < 1e-3 and worst_angle <= math.pi + 0.05 and elapsed < 300
    detail = f"max rel err {worst:.2e}, max angular variation {worst_angle:.3f}, {elapsed:.1f}s"
    assert record_acceptance(5, "Lambert reduction vs minimization", ok, detail)


def test_test_path_certificate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    violations, worst = 0, math.inf
    for N in (3, 4):
        s = MassSystem(np.ones(N), 2)
        x0p = find_minimizing_central_configuration(s, restarts=16, seed=0).x0
        for _ in range(50):
            R, T = rng.uniform(0.5, 4.0), rng.uniform(0.2, 5.0)
            x = s.random_configuration(rng, norm=R * rng.uniform(0.05, 1.0))
            y = s.random_configuration(rng, norm=R * rng.uniform(0.05, 1.0))
            tp = build_test_path(s, x, y, R, T, x0p)
            violations += not tp.ok
            worst = min(worst, tp.bound / tp.action)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    detail = f"{violations} violations on 2x50 instances, min bound/action {worst:.2f}, {elapsed:.1f}s"
    assert record_acceptance(6, "explicit path certificate", ok, detail)


def test_localization_sampled(cc3):
    t0 = time.perf_counter()
    rep = verify_localization(cc3, [1e-3], [1e3], SampleSpec())
    e = rep["entries"][0]
    elapsed = time.perf_counter() - t0
    ok = e["verdict"] == "pass" and rep["total_violations"] == 0 and elapsed < 600
    detail = (f"verdict {e['verdict']}, {rep['total_violations']} violations, "
              f"delta1={e['delta1']:.4f}, delta2={e['delta2']:.4f}, "
              f"min F0 off-angle {e['angular']['min_F0']:.3e}, {elapsed:.1f}s")
    assert record_acceptance(7, "localization (sampled)", ok, detail)


def test_exact_two_body_construction(two_equal, cc2):
    t0 = time.perf_counter()
    c = cc2.constants
    run = run_parabolic(two_equal, cc2, c.alpha * cc2.x0, default_t_seq(count=11))
    rows = run.diagnostics
    # starting on the ray at alpha x0, the limit is r(t) = alpha (1 + t)^(2/3)
    r_err = max(abs(r["r_over_t23"] - c.alpha * ((1 + r["t"]) / r["t"]) ** (2 / 3)) for r in rows)
    ang = max(r["angle"] for r in rows)
    en = max(abs(r["energy"]) for r in rows)
    elapsed = time.perf_counter() - t0
    ok = all(run.summary["converged"]) and r_err < 1e-3 and ang < 1e-3 and en < 1e-3 and elapsed < 300
    detail = (f"max |r/t^(2/3) - closed form| {r_err:.2e}, max angle {ang:.1e}, "
              f"max |energy| {en:.2e}, window [0, {run.extraction.limit_window:g}], {elapsed:.1f}s")
    assert record_acceptance(8, "exact two-body construction", ok, detail)


def test_generic_three_body_construction(three_equal, cc3):
    t0 = time.perf_counter()
    c = cc3.constants
    # pre-committed generic start: seed 0, unit norm
    x_i = three_equal.random_configuration(np.random.default_rng(0))
    run = run_parabolic(three_equal, cc3, x_i)
    S = run.summary
    r_dev = S["r_over_t23_decades"][0]["median"]
    orbit = S["angle_orbit_decades"][0]["median"]
    energy = [d["median"] for d in S["energy_decades"]]
    decreasing = all(a < b for a, b in zip(energy, energy[1:]))
    growth = S["action_growth"]
    elapsed = time.perf_counter() - t0
    ok = (all(S["converged"]) and r_dev < 0.05 * c.alpha and orbit < 0.1 and decreasing
          and 0.25 <= growth <= 0.45 and elapsed < 1800)
    detail = (f"r dev {r_dev:.4f} (< {0.05 * c.alpha:.4f}), orbit angle {orbit:.4f}, "
              f"|H| decade medians (latest first) {', '.join(f'{e:.3e}' for e in energy)}, "
              f"growth exponent {growth:.3f}, {elapsed:.1f}s")
    assert record_acceptance(9, "generic three-body construction", ok, detail)


def test_gradient_and_conservation_hygiene():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    s = MassSystem((1.0, 2.0, 3.0), 2)
    n = 16
    t = np.sort(rng.uniform(0, 2, n))
    t[0], t[-1] = 0.0, 2.0
    X = np.stack([s.random_configuration(rng) for _ in range(n)])
    p = DiscretePath(t, X)
    g = action_gradient(s, p)
    h = 1e-6
    fd = np.zeros_like(X)
    for k in range(1, n - 1):
        for idx in np.ndindex(X.shape[1:]):
            e = np.zeros_like(X)
            e[(k,) + idx] = h
            fd[(k,) + idx] = (discrete_action(s, p.with_nodes(X + e))
                              - discrete_action(s, p.with_nodes(X - e))) / (2 * h)
    g_err = float(np.abs(fd - g).max())
    ratio = 0.0
    for _ in range(5):
        x, y = s.random_configuration(rng), s.random_configuration(rng)
        rep = minimize_fixed_endpoints(s, x, y, rng.uniform(0.5, 2.0), GridSpec(1000))
        assert rep.converged
        _, E = segment_energy(s, rep.path)
        ratio = max(ratio, (E.max() - E.min()) / energy_error_bound(s, rep.path).max())
    elapsed = time.perf_counter() - t0
    ok = g_err < 1e-6 and ratio < 5 and elapsed < 60
    detail = f"gradient FD max abs {g_err:.2e}, energy drift / grid bound {ratio:.2f}, {elapsed:.1f}s"
    assert record_acceptance(10, "gradient and conservation hygiene", ok, detail)
