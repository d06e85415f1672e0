"""Command-line front end.

Exit codes: 0 success, 1 ``--strict`` violation, 2 configuration error (no
output written), 3 eigensolver failure, 4 existence hypotheses not met.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    RunConfig,
    build_admissible,
    build_cost,
    build_optimizer,
    build_potential,
    build_setting,
    load_config,
    parse_config,
    resolve,
)
from .costs import check_hypotheses
from .errors import ConfigError, NoBoundState, NotApplicable, SolverError, SpoError
from .grid import build_domain, build_hamiltonian, random_bump
from .inequalities import CONSTANTS_ENV, ConstantsRegistry, clr_ratio, keller_ratio, lt_ratio
from .io import (
    dumps_json,
    save_potential,
    write_dict_rows,
    write_eigenvectors,
    write_json,
    write_spectrum_csv,
)
from .optimize import (
    Objective,
    anneal_chains,
    brute_force,
    config_hash,
    multistart_descent,
    weak_convergence_probe,
)
from .oracles import square_well_box_ground_state
from .spectrum import cluster_multiplicities, negative_eigenpairs, phi_map

EXIT_OK, EXIT_STRICT, EXIT_CONFIG, EXIT_SOLVER, EXIT_HYPOTHESES = 0, 1, 2, 3, 4
DEFAULT_OUT = "spo-output"


# ----------------------------------------------------------------------------
# shared plumbing
# ----------------------------------------------------------------------------

def _load(args) -> RunConfig:
    raw = load_config(args.config) if args.config else parse_config({})
    out = args.out or raw.output or DEFAULT_OUT
    return resolve(raw, seed=args.seed, output=str(out))


def _registry() -> ConstantsRegistry:
    try:
        return ConstantsRegistry.from_environment()
    except (OSError, SpoError, KeyError, ValueError) as exc:
        raise ConfigError(f"{CONSTANTS_ENV}={os.environ.get(CONSTANTS_ENV)}: {exc}") from exc


def _spectrum(cfg: RunConfig, V, with_vectors: bool = True):
    sp = cfg.spectrum
    return negative_eigenpairs(build_hamiltonian(V, V.domain), sp.tau_neg, sp.k_max, sp.eps_mult, with_vectors)


def _ratios(V, s, p: float, q: float, registry: ConstantsRegistry) -> dict:
    mu = cluster_multiplicities(s)
    out = {"LT": lt_ratio(V, mu, p, registry).to_dict()}
    try:
        out["Keller"] = keller_ratio(V, s, p, registry).to_dict()
    except NoBoundState:
        out["Keller"] = {"ratio": 0.0, "exponent": p, "d": V.domain.d, "note": "no bound state below tau_neg"}
    try:
        out["CLR"] = clr_ratio(V, s, q, registry).to_dict()
    except NotApplicable:
        out["CLR"] = {"status": "not applicable, d<3", "d": V.domain.d}
    return out


def _exceeded(ratios: dict, slack: float = 0.0) -> list[str]:
    names = []
    for name, r in ratios.items():
        c = r.get("constant")
        if c is not None and r["ratio"] > c * (1 + slack):
            names.append(name)
    return names


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = _load(args)
    dom, K = build_setting(cfg)
    V = build_potential(cfg, dom, K)
    registry = _registry()
    s = _spectrum(cfg, V)
    ratios = _ratios(V, s, cfg.ratios.p, cfg.ratios.q, registry)
    phi = phi_map(s, cfg.spectrum.phi_N)
    mu = cluster_multiplicities(s)

    out = _prepare_out(cfg)
    write_json(out / "config.json", cfg.model_dump())
    save_potential(V, out / "potential.csv")
    write_spectrum_csv(out / "spectrum.csv", s)
    if cfg.spectrum.write_eigenvectors and len(s):
        write_eigenvectors(out / "eigenvectors.f8", s)
    write_json(out / "ratios.json", ratios)
    write_json(out / "phi.json", {
        "N": phi.N, "values": [float(v) for v in phi.values], "truncated": bool(s.truncated),
        "measure": {"locations": [float(x) for x in mu.locations], "weights": [int(w) for w in mu.weights]},
    })
    lam1 = f"{s.eigenvalues[0]:.10g}" if len(s) else "none"
    print(f"solve: {len(s)} negative eigenvalue(s) below tau_neg={cfg.spectrum.tau_neg:.6g}; lambda1={lam1}; out={out}")
    bad = _exceeded(ratios)
    if args.strict and bad:
        print(f"strict: ratio above registry constant for {', '.join(bad)}", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


# ----------------------------------------------------------------------------
# optimize
# ----------------------------------------------------------------------------

def _run_optimizer(cfg: RunConfig, spec, aset, dom, ocfg, V_start):
    method = ocfg.method
    if method == "projected-descent":
        V0 = None if cfg.potential.family == "zero" else aset.project(V_start)
        records = multistart_descent(spec, aset, dom, ocfg, V0)
    elif method == "annealing":
        records = anneal_chains(spec, aset, dom, ocfg, range(ocfg.seed, ocfg.seed + cfg.optimizer.chains))
    else:
        records = [brute_force(spec, aset, ocfg.cells, dom, ocfg)]
    best = min(range(len(records)), key=lambda i: (records[i].best_objective, i))
    return records, best


def cmd_optimize(args) -> int:
    cfg = _load(args)
    dom, K = build_setting(cfg)
    spec = build_cost(cfg)
    aset = build_admissible(cfg, K)
    V_start = build_potential(cfg, dom, K)
    ocfg = build_optimizer(cfg, threads=args.threads)
    registry = _registry()

    report = check_hypotheses(spec, constants=registry, bounded_set=aset.bounded)
    if not report.passed:
        print("hypothesis check failed:", file=sys.stderr)
        print(dumps_json(report.to_dict()), file=sys.stderr, end="")
        if not args.force:
            return EXIT_HYPOTHESES
        print("--force given; running anyway", file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)

    resolved = cfg.model_dump()
    # the output location does not change the run, so it stays out of the hash
    digest = config_hash({k: v for k, v in resolved.items() if k != "output"})
    records, ibest = _run_optimizer(cfg, spec, aset, dom, ocfg, V_start)
    rec = records[ibest]
    s = rec.best_spectrum if rec.best_spectrum is not None else Objective.from_config(spec, ocfg).spectrum(rec.best)

    rows = []
    for r_i, r in enumerate(records):
        for row in r.trace:
            rows.append({"run": r_i, "seed": r.seed, **row})
    manifest = {
        "version": __version__,
        "config_hash": digest,
        "seed": cfg.seed,
        "method": ocfg.method,
        "best_run": ibest,
        "best_objective": rec.best_objective,
        "status": rec.status,
        "hypotheses": report.to_dict(),
        "forced": bool(args.force and not report.passed),
        "feasibility": aset.max_residual(rec.best),
        "n_neg": len(s),
        "runs": [{k: v for k, v in r.summary().items() if k not in ("wall_time", "config_hash")} for r in records],
        "files": ["config.json", "trace.csv", "best_potential.csv", "best_potential.csv.json", "spectrum.csv",
                  "manifest.json"],
    }
    out = _prepare_out(cfg)
    write_json(out / "config.json", resolved)
    write_dict_rows(out / "trace.csv", rows)
    save_potential(rec.best, out / "best_potential.csv")
    write_spectrum_csv(out / "spectrum.csv", s)
    write_json(out / "manifest.json", manifest)
    wall = sum(r.wall_time for r in records)
    print(f"optimize: method={ocfg.method} runs={len(records)} best_objective={rec.best_objective:.12g} "
          f"status={rec.status} n_neg={len(s)} wall={wall:.2f}s out={out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------------

def cmd_verify(args) -> int:
    cfg = _load(args)
    if cfg.verify is None:
        cfg = resolve(cfg.model_copy(update={"verify": parse_config({"verify": {}}).verify}))
    vb = cfg.verify
    dom, K = build_setting(cfg)
    registry = _registry()
    if vb.count < 1:
        raise ConfigError("[verify] count must be >= 1")
    for p in vb.p:
        if not p > dom.d / 2:
            raise ConfigError(f"[verify] exponent p={p} must exceed d/2")
    hyp = None
    if cfg.cost is not None:
        spec = build_cost(cfg)
        aset = build_admissible(cfg, K)
        hyp = check_hypotheses(spec, constants=registry, bounded_set=aset.bounded).to_dict()

    rows, exceed, order_violations = [], [], []
    for i in range(vb.count):
        seed = vb.seed + i
        V = random_bump(dom, K, seed, vb.max_bumps, tuple(vb.depth_range), tuple(vb.width_range))
        s = _spectrum(cfg, V, with_vectors=False)
        for p in vb.p:
            r = _ratios(V, s, p, max(dom.d / 2, cfg.ratios.q), registry)
            row = {"seed": seed, "p": p, "n_neg": len(s),
                   "lambda1": float(s.eigenvalues[0]) if len(s) else 0.0,
                   "lt_ratio": r["LT"]["ratio"], "lt_constant": r["LT"].get("constant"),
                   "keller_ratio": r["Keller"]["ratio"], "keller_constant": r["Keller"].get("constant")}
            if dom.d >= 3:
                row["clr_ratio"] = r["CLR"]["ratio"]
            rows.append(row)
            for name in _exceeded(r, vb.slack):
                exceed.append({"seed": seed, "p": p, "inequality": name, "ratio": r[name]["ratio"],
                               "constant": r[name]["constant"]})
            if row["keller_ratio"] > row["lt_ratio"]:
                order_violations.append({"seed": seed, "p": p})
    findings = {
        "count": vb.count,
        "slack": vb.slack,
        "exceedances": exceed,
        "keller_above_lt": order_violations,
        "max_ratios": {
            f"{p:g}": {name: max(row[f"{name}_ratio"] for row in rows if row["p"] == p)
                       for name in ("lt", "keller") + (("clr",) if dom.d >= 3 else ())}
            for p in vb.p
        },
        "hypotheses": hyp,
        "rows": rows,
    }
    out = _prepare_out(cfg)
    write_json(out / "config.json", cfg.model_dump())
    write_json(out / "findings.json", findings)
    print(f"verify: {vb.count} potentials, {len(exceed)} exceedance(s) at slack {vb.slack:g}, "
          f"{len(order_violations)} Keller>LT case(s); out={out}")
    violated = bool(exceed or order_violations or (hyp is not None and not hyp["passed"]))
    if args.strict and violated:
        print("strict: findings contain violations", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


# ----------------------------------------------------------------------------
# converge
# ----------------------------------------------------------------------------

def _lambda1(cfg: RunConfig, V) -> float:
    s = _spectrum(cfg, V, with_vectors=False)
    return float(s.eigenvalues[0]) if len(s) else math.nan


def _oracle(cfg: RunConfig, R: float) -> float | None:
    pb = cfg.potential
    K = cfg.support
    if cfg.domain.d != 1 or pb.family != "square-well":
        return None
    if K.lower[0] == -K.upper[0] and pb.half_width <= K.upper[0]:
        return square_well_box_ground_state(pb.depth, pb.half_width, R)
    return None


def cmd_converge(args) -> int:
    cfg = _load(args)
    if cfg.converge is None:
        cfg = resolve(cfg.model_copy(update={"converge": parse_config({"converge": {}}).converge}))
    cb = cfg.converge
    if cfg.potential.family in ("file", "table", "zero"):
        raise ConfigError(f"[potential] family {cfg.potential.family!r} cannot be rebuilt on other grids")
    dom0, K = build_setting(cfg)
    d = cfg.domain.d

    def potential_on(R: float, n: int):
        try:
            dom = build_domain(d, R, n)
        except SpoError as exc:
            raise ConfigError(f"[converge] {exc}") from exc
        return build_potential(cfg, dom, K)

    rows = []
    oracle = _oracle(cfg, cfg.domain.R)
    prev = None
    for i, n in enumerate(sorted(cb.refine_n)):
        V = potential_on(cfg.domain.R, n)
        lam = _lambda1(cfg, V)
        row = {"study": "refine", "R": cfg.domain.R, "n": n, "dx": V.domain.dx, "lambda1": lam}
        if oracle is not None:
            row["oracle"] = oracle
            row["error"] = abs(lam - oracle)
            if prev is not None:
                row["observed_order"] = math.log(prev["error"] / row["error"]) / math.log(prev["dx"] / row["dx"])
        elif i >= 2:
            d1 = abs(rows[-2]["lambda1"] - rows[-1]["lambda1"])
            d2 = abs(rows[-1]["lambda1"] - lam)
            row["observed_order"] = math.log(d1 / d2) / math.log(rows[-1]["dx"] / row["dx"])
        rows.append(row)
        prev = row

    dx = dom0.dx
    last = None
    for R in sorted(cb.box_R):
        n = int(round(2 * R / dx)) - 1
        lam = _lambda1(cfg, potential_on(R, n))
        row = {"study": "box", "R": R, "n": n, "dx": 2 * R / (n + 1), "lambda1": lam}
        if last is not None:
            row["change"] = abs(lam - last)
        rows.append(row)
        last = lam

    V = build_potential(cfg, dom0, K)
    try:
        probe = weak_convergence_probe(V, cb.frequencies, cfg.spectrum.tau_neg, cb.amplitude, cfg.spectrum.k_max)
    except SpoError as exc:
        raise ConfigError(f"[converge] {exc}") from exc
    base = _lambda1(cfg, V)
    for prow in probe:
        rows.append({"study": "weak", "R": cfg.domain.R, "n": cfg.domain.n, "dx": dom0.dx,
                     "lambda1": base, **prow})

    out = _prepare_out(cfg)
    write_json(out / "config.json", cfg.model_dump())
    write_dict_rows(out / "convergence.csv", rows)
    orders = [r["observed_order"] for r in rows if "observed_order" in r]
    tail = f"{orders[-1]:.3f}" if orders else "n/a"
    print(f"converge: {len(rows)} rows; last observed order {tail}; out={out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

COMMANDS = {"solve": cmd_solve, "optimize": cmd_optimize, "verify": cmd_verify, "converge": cmd_converge}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", metavar="PATH", default=dflt(os.environ.get("SPO_CONFIG")),
                   help="TOML run configuration")
    p.add_argument("--out", metavar="DIR", default=dflt(None), help=f"output directory (default: {DEFAULT_OUT})")
    p.add_argument("--seed", type=int, default=dflt(None), help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=dflt(1), help="worker threads for independent runs")
    p.add_argument("--force", action="store_true", default=dflt(False), help="run despite failed hypotheses")
    p.add_argument("--strict", action="store_true", default=dflt(False), help="non-zero exit on ratio violations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spo", description="Spectral optimisation of Schroedinger potentials.")
    parser.add_argument("--version", action="version", version=f"spo {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "negative spectrum, inequality ratios and Phi sequence of one potential",
        "optimize": "minimise a spectral cost over an admissible set",
        "verify": "randomised inequality-ratio sweep and hypothesis checks",
        "converge": "grid refinement, box growth and weak-convergence probe",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        _add_globals(sp, suppress=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        res = "" if exc.residuals is None else f" (residuals: {np.asarray(exc.residuals).tolist()})"
        print(f"solver error: {exc}{res}", file=sys.stderr)
        return EXIT_SOLVER
    except SpoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
