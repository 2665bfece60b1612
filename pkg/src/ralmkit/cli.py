"""Command-line front end: solve, certify, rate and gradcheck.

Runs are described by a single JSON config with three blocks::

    {
      "schema_version": 1,
      "problem": {"kind": "cm", "n": 4, "r": 2, "mu": 0.8, "len": 2.0},
      "solver":  {"rho0": 1.0, "gamma": 4.0, "criterion": "b", ...},
      "output":  {"log": "run.csv", "plot": "run.svg", "seed": 0}
    }

Exit codes: 0 success/converged, 1 error, 2 iteration budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import bench, certify, geometry, lagrangian, newton, ralm
from .bench import ParseError

log = logging.getLogger("ralmkit.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAXITER = 2

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    pass


def _setup_logging() -> None:
    level = os.environ.get("RALMKIT_LOG_LEVEL", "error").lower()
    if level not in _LOG_LEVELS:
        level = "error"
    logging.basicConfig(level=_LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "problem" not in cfg:
        raise ConfigError("missing 'problem' block")
    version = cfg.get("schema_version", 1)
    if version != 1:
        raise ConfigError(f"unsupported schema_version {version}")
    return cfg


def build_problem(cfg: dict, seed: Optional[int]):
    """Instantiate (problem, X0, y0) from the config's problem block."""
    block = cfg["problem"]
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError("'problem' block must contain a 'kind'")
    kind = block["kind"]
    out_seed = seed if seed is not None else cfg.get("output", {}).get("seed", 0)
    if kind == "cm":
        try:
            n, r = int(block["n"]), int(block["r"])
            mu, length = float(block["mu"]), float(block["len"])
        except KeyError as exc:
            raise ConfigError(f"'problem' block missing field {exc}") from None
        P = bench.build_cm(n, r, mu, length)
        X0 = bench.cm_initial_point(n, r, out_seed)
        y0 = np.zeros((n, r))
        return P, X0, y0
    if kind == "rmc":
        r = int(block.get("r", 0))
        if r < 1:
            raise ConfigError("'problem' block needs a positive rank 'r'")
        mu = float(block.get("mu", 1.0))
        if "data" in block:
            path = block["data"]
            if path.endswith((".mtx", ".mm")):
                A, omega = bench.load_coordinate(path)
            else:
                A = bench.load_dense(path, "csv")
                omega = np.ones_like(A, dtype=bool)
        else:
            try:
                m, n = int(block["m"]), int(block["n"])
                density = float(block["density"])
                magnitude = float(block["magnitude"])
            except KeyError as exc:
                raise ConfigError(f"'problem' block missing field {exc}") from None
            rng = np.random.default_rng(out_seed)
            U, _ = np.linalg.qr(rng.standard_normal((m, r)))
            V, _ = np.linalg.qr(rng.standard_normal((n, r)))
            s = np.sort(rng.uniform(1.0, 3.0, r))[::-1]
            A = (U * s) @ V.T + bench.rmc_random_outliers(
                m, n, density, magnitude, out_seed + 1
            )
            omega = np.ones((m, n), dtype=bool)
        P = bench.build_rmc(A, omega, r, mu)
        X0 = P.manifold.point_from_ambient(A)
        y0 = np.zeros_like(A)
        return P, X0, y0
    raise ConfigError(f"unknown problem kind {kind!r}")


def build_solver_config(cfg: dict) -> ralm.RalmConfig:
    block = dict(cfg.get("solver", {}))
    newton_block = block.pop("newton", {})
    try:
        ncfg = newton.NewtonConfig(**newton_block)
        return ralm.RalmConfig(newton=ncfg, **block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'solver' block: {exc}") from None


def write_svg(path: str, residuals, width: int = 640, height: int = 400) -> None:
    """Log-scale polyline plot of a residual history."""
    vals = [max(v, 1e-300) for v in residuals]
    logs = [math.log10(v) for v in vals]
    lo, hi = min(logs), max(logs)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    mL, mR, mT, mB = 60, 20, 20, 40
    W, Hh = width - mL - mR, height - mT - mB
    pts = []
    for k, lv in enumerate(logs):
        x = mL + (W * k / max(len(logs) - 1, 1))
        yy = mT + Hh * (hi - lv) / (hi - lo)
        pts.append(f"{x:.2f},{yy:.2f}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{mL}" y1="{mT}" x2="{mL}" y2="{height - mB}" stroke="black"/>',
        f'<line x1="{mL}" y1="{height - mB}" x2="{width - mR}" y2="{height - mB}" stroke="black"/>',
        f'<polyline points="{" ".join(pts)}" fill="none" stroke="steelblue" stroke-width="1.5"/>',
        f'<text x="{mL}" y="{mT - 5}" font-size="12">log10 KKT residual '
        f"[{lo:.2f}, {hi:.2f}], {len(logs)} iterations</text>",
        f'<text x="{width // 2}" y="{height - 10}" font-size="12">outer iteration</text>',
        "</svg>",
    ]
    bench.atomic_write(path, "\n".join(parts) + "\n")


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    P, X0, y0 = build_problem(cfg, args.seed)
    scfg = build_solver_config(cfg)
    result = ralm.ralm_solve(P, scfg, X0, y0)
    out = cfg.get("output", {})
    log_path = args.log or out.get("log")
    if log_path:
        bench.save_log(log_path, result.records)
    plot_path = out.get("plot")
    if plot_path:
        try:
            write_svg(plot_path, [rec.kkt_residual for rec in result.records])
        except OSError as exc:  # plotting must never change the exit code
            log.error("plot not written: %s", exc)
    final = result.records[-1]
    print(
        json.dumps(
            {
                "converged": result.converged,
                "outer_iterations": final.k,
                "kkt_residual": final.kkt_residual,
                "rho_final": final.rho,
            }
        )
    )
    return EXIT_OK if result.converged else EXIT_MAXITER


def _load_point(P, path: str):
    M = bench.load_dense(path, "csv")
    manifold = P.manifold
    if isinstance(manifold, geometry.Stiefel):
        return manifold.point(M)
    if isinstance(manifold, geometry.FixedRank):
        return manifold.point_from_ambient(M)
    return manifold.point(M)


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    P, _, _ = build_problem(cfg, args.seed)
    try:
        X = _load_point(P, args.point)
    except geometry.GeometryError as exc:
        print(f"point invariant violation: {exc}", file=sys.stderr)
        return EXIT_ERROR
    y = bench.load_dense(args.multiplier, "csv")
    residual = lagrangian.kkt_residual(P, X, y)
    rho = float(cfg.get("certify", {}).get("rho", 10.0))
    stat_tol = float(cfg.get("certify", {}).get("stationarity_tol", 1e-6))
    report = {
        "stationarity_residual": residual,
        "cone_dim": None,
        "mssosc_min_eig": None,
        "mssosc_verdict": None,
        "genhess_min_eig": None,
        "genhess_verdict": None,
        "rho": rho,
    }
    if residual <= stat_tol:
        cone = certify.critical_cone_basis(P, X, y)
        msc = certify.mssosc_certificate(P, X, y)
        gh = certify.genhess_min_eig(P, rho, X, y, enumerate_elements=True)
        report.update(
            {
                "cone_dim": cone.dim,
                "mssosc_min_eig": None if math.isinf(msc.min_eig) else msc.min_eig,
                "mssosc_verdict": msc.verdict + ("-degenerate" if msc.degenerate else ""),
                "genhess_min_eig": gh.min_eig,
                "genhess_verdict": gh.verdict,
            }
        )
    else:
        report["note"] = f"pair is not stationary to {stat_tol:g}; cone fields omitted"
    print(json.dumps(report))
    return EXIT_OK


def cmd_rate(args) -> int:
    records = bench.load_log(args.log)
    residuals = [rec.kkt_residual for rec in records]
    rate, quality = certify.fit_linear_rate(residuals, args.tail)
    print(json.dumps({"rate": rate, "fit_quality": quality, "points": len(residuals)}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    P, X0, _ = build_problem(cfg, args.seed)
    from .oracles import gradient_check, hessian_check

    seed = args.seed if args.seed is not None else cfg.get("output", {}).get("seed", 0)
    gerr = gradient_check(P, samples=args.samples, seed=seed)
    herr = hessian_check(P, samples=args.samples, seed=seed)
    print(json.dumps({"grad_max_rel_err": gerr, "hess_max_rel_err": herr}))
    return EXIT_OK if gerr <= 1e-5 and herr <= 1e-3 else EXIT_ERROR


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ralmkit",
        description="Augmented-Lagrangian solver and certificates for nonsmooth manifold problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the solver end to end")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--log", default=None, help="override the output log path")
    p_solve.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_solve.set_defaults(func=cmd_solve)

    p_cert = sub.add_parser("certify", help="second-order certificates at a given pair")
    p_cert.add_argument("--config", required=True)
    p_cert.add_argument("--point", required=True)
    p_cert.add_argument("--multiplier", required=True)
    p_cert.add_argument("--seed", type=int, default=None)
    p_cert.set_defaults(func=cmd_certify)

    p_rate = sub.add_parser("rate", help="fit a geometric rate to a residual log")
    p_rate.add_argument("--log", required=True)
    p_rate.add_argument("--tail", type=float, default=0.5)
    p_rate.set_defaults(func=cmd_rate)

    p_gc = sub.add_parser("gradcheck", help="finite-difference derivative checks")
    p_gc.add_argument("--config", required=True)
    p_gc.add_argument("--samples", type=int, default=5)
    p_gc.add_argument("--seed", type=int, default=None)
    p_gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, bench.BenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (geometry.GeometryError, lagrangian.LagrangianError, certify.CertifyError,
            ralm.RalmError, newton.NewtonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
