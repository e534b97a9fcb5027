"""Command-line entry point: ``parabolica <subcommand> [options]``.

Options may also come from an INI file (``--config``) with a ``[common]``
section and one section per subcommand; command-line flags win.
Exit status: 0 success, 1 solver failure, 2 verification violations,
64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .action import (
    GridSpec,
    InitSpec,
    SolverConfig,
    build_test_path,
    minimize_fixed_endpoints,
    path_to_csv,
    sundman_lower_bound_check,
)
from .central import ConvergenceError, find_minimizing_central_configuration, parabolic_constants
from .configspace import MassSystem, normalize
from .kepler1d import G_of_r, G_prime, solve_energy_h
from .lambert import SampleSpec, excess_F, random_direction_configuration, verify_localization
from .outputs import canonical_json, csv_text, manifest_hash, write_json, write_text
from .parabolic import DIAGNOSTIC_COLUMNS, default_t_seq, run_parabolic
from .parallel import resolve_jobs

log = logging.getLogger("parabolica")

EXIT_OK, EXIT_SOLVER, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Option tables: name -> (converter, default)
# ---------------------------------------------------------------------------


def _floats(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _masses(text):
    vals = _floats(text)
    if len(vals) < 2:
        raise ValueError("need at least two masses")
    if any(not (m > 0 and math.isfinite(m)) for m in vals):
        raise ValueError("masses must be positive")
    return vals


def _config_arg(text):
    """Bodies separated by ';', coordinates by ','; or the word 'random'."""
    if text is None or str(text).strip() == "random":
        return "random"
    rows = [_floats(b) for b in str(text).split(";") if b.strip()]
    return np.array(rows, dtype=float)


def _grid(text):
    lo, hi, n = str(text).split(":")
    n = int(n)
    if n < 1:
        raise ValueError("grid count must be positive")
    return (float(lo), float(hi), n)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


COMMON = {
    "masses": (_masses, "1,1,1"),
    "dim": (_positive_int, 2),
    "seed": (_nonneg_int, 0),
    "jobs": (_positive_int, None),
    "out": (str, "out"),
    "nodes": (_positive_int, 1000),
    "tol": (_positive, 1e-8),
    "restarts": (_positive_int, 64),
    "cc_tol": (_positive, 1e-10),
}

SPECIFIC = {
    "central": {},
    "kepler": {
        "u0": (_positive, None),
        "table": (str, "S"),
        "a": (float, 0.0),
        "b_grid": (_grid, "0.1:5:50"),
        "s": (_positive, 1.0),
    },
    "minimize": {
        "x_start": (_config_arg, "random"),
        "x_end": (_config_arg, "random"),
        "T": (_positive, 1.0),
        "init": (str, "linear"),
        "starts": (_positive_int, 1),
        "jitter": (float, 0.0),
    },
    "testpath": {
        "instances": (_positive_int, 50),
        "R": (_positive, None),
        "T": (_positive, None),
    },
    "excess": {
        "s_list": (_floats, "10,50"),
        "samples": (_positive_int, 10),
        "angle_max": (_positive, 1.0),
    },
    "verify": {
        "eps": (_floats, "1e-3"),
        "s": (_floats, "1000"),
        "samples": (_positive_int, 1000),
    },
    "parabolic": {
        "x_i": (_config_arg, "random"),
        "t1": (_positive, 1.0),
        "count": (_positive_int, 9),
        "sbar": (_positive, 4.0),
    },
}

HELP = {
    "masses": "comma-separated positive masses",
    "dim": "spatial dimension",
    "seed": "random seed (outputs are deterministic given the seed)",
    "jobs": "worker processes (falls back to $PARABOLICA_JOBS, then 1)",
    "out": "output directory",
    "nodes": "time-grid segments per minimization",
    "tol": "gradient tolerance of the action minimizer",
    "restarts": "random restarts of the central-configuration search",
    "cc_tol": "tangential gradient tolerance of the central-configuration search",
    "u0": "potential level (default: from the minimizing central configuration)",
    "table": "S, h or G",
    "a": "start radius",
    "b_grid": "end radii as lo:hi:count",
    "s": "transfer time(s)",
    "x_start": "start configuration 'x,y;x,y;...' or 'random'",
    "x_end": "end configuration or 'random'",
    "T": "duration",
    "init": "initial guess: linear, power or testpath",
    "starts": "jittered restarts per initial guess",
    "jitter": "relative jitter amplitude",
    "instances": "random instances to certify",
    "R": "radius bound (default: random per instance)",
    "s_list": "comma-separated s values",
    "samples": "samples per grid",
    "angle_max": "largest angle from x0 sampled (rad)",
    "eps": "comma-separated epsilon values",
    "x_i": "initial configuration or 'random'",
    "t1": "first horizon",
    "count": "number of doubling horizons",
    "sbar": "window-to-horizon ratio",
}


@dataclass
class RunConfig:
    subcommand: str
    values: dict
    provenance: dict = field(default_factory=dict)
    config_file: str | None = None

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def manifest(self):
        vals = {}
        for k, v in sorted(self.values.items()):
            if k in ("jobs", "out"):
                continue
            vals[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return {"tool": "parabolica", "version": __version__, "subcommand": self.subcommand,
                "config": vals}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="parabolica", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, opts in SPECIFIC.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with [common] and [%s] sections" % name)
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in list(COMMON) + list(opts):
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, default=None, help=HELP.get(key))
    return p


def _convert(key, raw, table):
    conv, _ = table[key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{key}: {exc}") from exc


def parse_config(argv=None) -> RunConfig:
    """Merge defaults, config file and flags (flags win) into a validated RunConfig."""
    args = build_parser().parse_args(argv)
    name = args.subcommand
    table = dict(COMMON, **SPECIFIC[name])
    values, prov = {}, {}
    for key, (_, default) in table.items():
        values[key] = None if default is None else _convert(key, default, table)
        prov[key] = "default"
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config: file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise UsageError(f"config: {exc}") from exc
        for section in cp.sections():
            if section != "common" and section not in SPECIFIC:
                raise UsageError(f"config: unknown section [{section}]")
        for section in ("common", name):
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                key = key.replace("-", "_")
                if key not in table:
                    raise UsageError(f"{key}: unknown key in section [{section}]")
                values[key] = _convert(key, raw, table)
                prov[key] = f"file:{section}"
    for key in table:
        raw = getattr(args, key, None)
        if raw is not None:
            if prov[key].startswith("file"):
                log.info("%s: flag value overrides %s", key, prov[key])
            values[key] = _convert(key, raw, table)
            prov[key] = "flag"
    if name == "kepler" and values["table"] not in ("S", "h", "G"):
        raise UsageError("table: must be S, h or G")
    if name == "minimize" and values["init"] not in ("linear", "power", "testpath"):
        raise UsageError("init: must be linear, power or testpath")
    if name == "parabolic" and not values["sbar"] > 1:
        raise UsageError("sbar: must exceed 1")
    try:
        values["jobs"] = resolve_jobs(values["jobs"])
    except ValueError as exc:
        raise UsageError(f"jobs: {exc}") from exc
    for key, origin in sorted(prov.items()):
        log.debug("config %s = %r (%s)", key, values[key], origin)
    return RunConfig(name, values, prov, args.config)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _system(cfg):
    return MassSystem(cfg.masses, cfg.dim)


def _central(cfg, sys_):
    return find_minimizing_central_configuration(
        sys_, restarts=cfg.restarts, tol=cfg.cc_tol, seed=cfg.seed, jobs=cfg.jobs)


def _configuration(sys_, value, rng, label):
    if isinstance(value, str):
        return sys_.random_configuration(rng)
    if value.shape != sys_.shape:
        raise UsageError(f"{label}: expected {sys_.shape[0]} bodies of dimension {sys_.shape[1]}")
    return sys_.project_com(value)


def _solver(cfg):
    return SolverConfig(nodes=cfg.nodes, tol=cfg.tol, seed=cfg.seed)


def cmd_central(cfg, out, sha):
    cc = _central(cfg, _system(cfg))
    write_json(out / "central.json", cc.to_dict(), sha)
    log.info("U0 = %.15g (residual %.2e)", cc.u0, cc.residual)
    return EXIT_OK


def cmd_kepler(cfg, out, sha):
    u0 = cfg.u0
    if u0 is None:
        u0 = _central(cfg, _system(cfg)).u0
    c = parabolic_constants(u0)
    lo, hi, n = cfg.b_grid
    a, s = cfg.a, cfg.s
    if cfg.table == "G":
        header = ["tag", "r", "G", "Gprime"]
        rows = [["grid", r, G_of_r(r, u0), G_prime(r, u0)] for r in np.linspace(lo, hi, n)]
        rows.append(["alpha", c.alpha, G_of_r(c.alpha, u0), G_prime(c.alpha, u0)])
    else:
        header = ["tag", "a", "b", "s", "h", "S", "monotone", "G"]
        rows = []
        radii = [("grid", b) for b in np.linspace(lo, hi, n)]
        if a == 0.0 and s == 1.0:
            radii.append(("alpha", c.alpha))
        for tag, b in radii:
            arc = solve_energy_h(min(a, b), max(a, b), s, u0)
            g = arc.action - c.beta0 * math.sqrt(b) if (a == 0.0 and s == 1.0) else float("nan")
            rows.append([tag, a, b, s, arc.h, arc.action, int(arc.monotone), g])
        if cfg.table == "h":
            header = ["tag", "a", "b", "s", "h", "monotone"]
            rows = [[r[0], r[1], r[2], r[3], r[4], r[6]] for r in rows]
    comments = [f"u0 {u0:.17g}", f"alpha {c.alpha:.17g}"]
    write_text(out / f"kepler_{cfg.table}.csv", csv_text(header, rows, sha, comments))
    return EXIT_OK


def cmd_minimize(cfg, out, sha):
    sys_ = _system(cfg)
    rng = np.random.default_rng(cfg.seed)
    xa = _configuration(sys_, cfg.x_start, rng, "x_start")
    xb = _configuration(sys_, cfg.x_end, rng, "x_end")
    init = InitSpec(cfg.init, starts=cfg.starts, jitter=cfg.jitter, seed=cfg.seed)
    rep = minimize_fixed_endpoints(sys_, xa, xb, cfg.T, GridSpec(cfg.nodes), init, cfg.tol,
                                   jobs=cfg.jobs)
    write_text(out / "path.csv", path_to_csv(rep.path, [f"manifest_sha256 {sha}"]))
    body = rep.to_dict()
    if rep.converged:
        try:
            cc = _central(cfg, sys_)
            chk = sundman_lower_bound_check(sys_, cc, rep)
            body["radial_lower_bound"] = {"ok": chk.ok, "margin": chk.margin, "slack": chk.slack,
                                          "kepler_action": chk.kepler_action}
        except ConvergenceError as exc:
            body["radial_lower_bound"] = {"error": str(exc)}
    write_json(out / "report.json", body, sha)
    return EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_testpath(cfg, out, sha):
    sys_ = _system(cfg)
    rng = np.random.default_rng(cfg.seed)
    cc = _central(cfg, sys_)
    results, bad = [], 0
    for k in range(cfg.instances):
        R = cfg.R if cfg.R is not None else float(rng.uniform(0.5, 4.0))
        T = cfg.T if cfg.T is not None else float(rng.uniform(0.2, 5.0))
        x = sys_.random_configuration(rng, norm=R * rng.uniform(0.05, 1.0))
        xp = sys_.random_configuration(rng, norm=R * rng.uniform(0.05, 1.0))
        tp = build_test_path(sys_, x, xp, R, T, cc.x0)
        bad += not tp.ok
        results.append({"R": R, "T": T, "action": tp.action, "bound": tp.bound, "C1": tp.C1,
                        "C2": tp.C2, "ok": tp.ok, "h": list(tp.h_values)})
    body = {"instances": results, "violations": bad}
    write_json(out / "testpath.json", body, sha)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_excess(cfg, out, sha):
    sys_ = _system(cfg)
    rng = np.random.default_rng(cfg.seed)
    cc = _central(cfg, sys_)
    c = cc.constants
    reports, bad, failed = [], 0, 0
    for s in cfg.s_list:
        if not s > 1:
            raise UsageError("s_list: values must exceed 1")
        for _ in range(cfg.samples):
            r = c.alpha * rng.uniform(0.5, 1.5)
            ang = rng.uniform(0.0, cfg.angle_max)
            x = random_direction_configuration(sys_, cc.x0, r, ang, rng)
            rep = excess_F(sys_, cc, x, s, _solver(cfg))
            failed += not rep.converged
            bad += not rep.chain_ok
            reports.append(dict(rep.to_dict(), angle=ang, r=r))
    write_json(out / "excess.json", {"reports": reports, "violations": bad,
                                     "solver_failures": failed}, sha)
    if failed:
        return EXIT_SOLVER
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_verify(cfg, out, sha):
    sys_ = _system(cfg)
    cc = _central(cfg, sys_)
    spec = SampleSpec(n_radial=cfg.samples, n_angular=cfg.samples, n_ball=cfg.samples,
                      seed=cfg.seed)
    rep = verify_localization(cc, cfg.eps, cfg.s, spec, jobs=cfg.jobs)
    write_json(out / "verify.json", rep, sha)
    for e in rep["entries"]:
        log.info("eps=%g s=%g: %s (%d violations)", e["eps"], e["s"], e["verdict"],
                 e["n_violations"])
    return EXIT_VIOLATION if rep["total_violations"] else EXIT_OK


def cmd_parabolic(cfg, out, sha):
    sys_ = _system(cfg)
    rng = np.random.default_rng(cfg.seed)
    cc = _central(cfg, sys_)
    x_i = _configuration(sys_, cfg.x_i, rng, "x_i")
    if isinstance(cfg.x_i, str):
        x_i = normalize(sys_, x_i)
    t_seq = default_t_seq(cfg.t1, cfg.count)
    run = run_parabolic(sys_, cc, x_i, t_seq, cfg.sbar, _solver(cfg))
    for t, rep in zip(t_seq, run.reports):
        write_text(out / "paths" / f"path_t{t:g}.csv",
                   path_to_csv(rep.path, [f"manifest_sha256 {sha}", f"horizon {t:.17g}"]))
    rows = [[r[k] for k in DIAGNOSTIC_COLUMNS] for r in run.diagnostics]
    write_text(out / "diagnostics.csv", csv_text(DIAGNOSTIC_COLUMNS, rows, sha))
    body = {
        "x_i": x_i, "central": cc.to_dict(), "t_seq": t_seq, "sbar": cfg.sbar,
        "reports": [r.to_dict() for r in run.reports],
        "cauchy_table": run.extraction.table, "warnings": run.extraction.warnings,
        "limit_window": run.extraction.limit_window, "summary": run.summary,
    }
    write_json(out / "report.json", body, sha)
    return EXIT_OK if all(r.converged for r in run.reports) else EXIT_SOLVER


COMMANDS = {
    "central": cmd_central, "kepler": cmd_kepler, "minimize": cmd_minimize,
    "testpath": cmd_testpath, "excess": cmd_excess, "verify": cmd_verify,
    "parabolic": cmd_parabolic,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = cfg.manifest()
    sha = manifest_hash(manifest)
    write_text(out / "manifest.json", canonical_json(dict(manifest, manifest_sha256=sha)))
    try:
        return COMMANDS[cfg.subcommand](cfg, out, sha)
    except ConvergenceError as exc:
        log.error("central configuration search failed: %s", exc)
        return EXIT_SOLVER


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if argv is None:
            argv = sys.argv[1:]
        if "-v" in argv or "--verbose" in argv:
            logging.getLogger().setLevel(logging.DEBUG)
        cfg = parse_config(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"parabolica: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
