"""Command-line entry point.

Every subcommand reads JSON, writes JSON (or CSV for connection samples)
and maps module errors to exit codes through their ``exit_code`` attribute.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bethe_gl2, bethe_gln, cl_limit, connection, qoper
from .errors import InputError, NotSingularError, QOperError, ResonanceError
from .numkernel import DEFAULT_TOL, LATTICE_WINDOW, ToleranceConfig, complex_from_json, complex_to_json

EXIT_APPARENT = 0
EXIT_NOT_APPARENT = 1
EXIT_INCONCLUSIVE = 2
EXIT_INPUT = 64

_VERDICT_EXIT = {
    qoper.APPARENT: EXIT_APPARENT,
    qoper.NOT_APPARENT: EXIT_NOT_APPARENT,
    qoper.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


@dataclass
class RunConfig:
    seed: int = 0
    tolerances: ToleranceConfig = field(default_factory=lambda: DEFAULT_TOL)
    window: int = LATTICE_WINDOW
    output_dir: Path | None = None
    format: str = "json"

    def __post_init__(self):
        if self.window < 1:
            raise InputError("window must be at least 1")
        if self.format not in ("json", "csv"):
            raise InputError("format must be json or csv")

    @classmethod
    def from_args(cls, args):
        tol = DEFAULT_TOL if args.tol is None else ToleranceConfig(zero_tol=args.tol)
        out = None if args.out is None else Path(args.out)
        return cls(args.seed, tol, args.window, out, args.format or "json")


def worker_count():
    """Thread cap from ``QOPER_THREADS`` (default 1)."""
    raw = os.environ.get("QOPER_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise InputError(f"QOPER_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(n, os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# I/O helpers


def to_plain(v):
    """Recursively convert complex numbers and numpy objects to JSON-ready values."""
    if isinstance(v, (complex, np.complexfloating)):
        return complex_to_json(v)
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [to_plain(w) for w in v.tolist()]
    if isinstance(v, dict):
        return {str(k): to_plain(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_plain(w) for w in v]
    return v


def dump_json(obj):
    return json.dumps(to_plain(obj), indent=2, sort_keys=True) + "\n"


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def parse_point(text):
    """A complex number from ``"1"``, ``"1+2j"`` or ``"[1, 2]"``."""
    text = text.strip()
    try:
        if text.startswith("["):
            return complex_from_json(json.loads(text))
        return complex(text.replace(" ", ""))
    except (ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse point {text!r}") from exc


def emit(text, cfg, name):
    if cfg.output_dir is None:
        sys.stdout.write(text)
        return
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / name).write_text(text)


# ---------------------------------------------------------------------------
# check-apparent


def _infer_r(L, s, cfg):
    """Exponent ``r`` with ``a_n(q^-r s) = 0``, the farthest such zero on the orbit."""
    zeros = qoper.orbit_zeros(L.a(L.order), s, L.q, cfg.window, cfg.tolerances.zero_tol)
    neg = [-j for j in zeros if j < 0]
    return max(neg) if neg else None


def _infer_t(L, s, cfg):
    zeros = qoper.orbit_zeros(L.a(0), s, L.q, cfg.window, cfg.tolerances.zero_tol)
    t = 0
    while -(t + 1) in zeros:
        t += 1
    return t


def check_apparent(L, s, method, cfg, r=None, t=None):
    tol, window = cfg.tolerances, cfg.window
    if method == "auto":
        method = "delta" if L.order == 2 else "brute"
    if method == "brute":
        return qoper.brute_force_apparent(L, s, tol, window)
    if method == "special":
        return qoper.is_apparent_special(L, s, tol, window)
    if r is None:
        r = _infer_r(L, s, cfg)
    if r is None:
        if not qoper.orbit_zeros(L.a(0), s, L.q, window, tol.zero_tol):
            raise NotSingularError(f"{s} is not a singularity")
        return qoper.SingularityReport(s, qoper.INCONCLUSIVE, {"reason": "no zero of the last coefficient below s"}, (0, 0), method)
    if method == "delta":
        return qoper.is_apparent_2nd(L, s, r, tol, window)
    if method == "nth":
        return qoper.is_apparent_nth(L, s, r, _infer_t(L, s, cfg) if t is None else t, tol, window)
    raise InputError(f"unknown method {method!r}")


def cmd_check_apparent(args, cfg):
    L = qoper.ScalarQOper.from_json(load_json(args.oper_file))
    s = parse_point(args.point)
    try:
        rep = check_apparent(L, s, args.method, cfg, args.r, args.t)
    except NotSingularError as exc:
        raise NotSingularError(f"not a singularity: {exc}") from exc
    emit(dump_json(rep.to_json()), cfg, "apparent.json")
    return _VERDICT_EXIT[rep.classification]


# ---------------------------------------------------------------------------
# connection


def _read_points(path):
    data = load_json(path)
    if isinstance(data, dict):
        data = data.get("points")
    if not isinstance(data, list):
        raise InputError("points file must hold a list of complex numbers or {'points': [...]}")
    return [complex_from_json(z) for z in data]


def connection_report(system, pts, order=connection.DEFAULT_ORDER):
    """Samples of ``M`` and ``Mhat`` plus the ellipticity deviation ``max |M(qx) - M(x)|``."""
    samples, dev = [], []
    for x in pts:
        smp = connection.connection_matrix(system, x, order)
        shifted = connection.connection_matrix(system, system.q * x, order)
        samples.append(smp)
        dev.append(float(np.max(np.abs(shifted.M_val - smp.M_val))))
    return samples, dev


def cmd_connection(args, cfg):
    data = load_json(args.system_file)
    if not isinstance(data, dict):
        raise InputError("system file must hold a JSON object")
    system = connection.system_from_json(data)
    check = connection.check_regular_nonresonant(system, cfg.window, cfg.tolerances)
    if not check["ok"]:
        raise ResonanceError("; ".join(check["problems"]))
    pts = _read_points(args.points_file)
    samples, dev = connection_report(system, pts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(connection.csv_header(system.dim))
    for smp in samples:
        w.writerow([repr(float(v)) for v in smp.csv_row()])
    summary = {
        "dim": system.dim,
        "points": len(pts),
        "ellipticity_max_deviation": max(dev) if dev else 0.0,
        "S_plus": check["S_plus"],
        "S_minus": check["S_minus"],
    }
    if data.get("kind") == "hypergeometric":
        p = connection.HyperGeoBParams.from_json(data)
        fit = connection.fit_theta_constants(system, p, seed=cfg.seed)
        block = {
            "fit_residual": fit["fit_residual"],
            "mrel1_residual": fit["mrel1_residual"],
            "mrel2_residual": fit["mrel2_residual"],
            "m_fit": fit["m"],
        }
        if p.N == 0:
            top = connection.m_top(p)
            block["m_top"] = top
            block["m_top_rel_err"] = float(np.max(np.abs(fit["m"] - top)) / np.max(np.abs(top)))
        summary["theta_fit"] = block
    if cfg.output_dir is None:
        sys.stdout.write(buf.getvalue())
        sys.stderr.write(dump_json(summary))
    else:
        emit(buf.getvalue(), cfg, "connection.csv")
        emit(dump_json(summary), cfg, "summary.json")
    return 0


# ---------------------------------------------------------------------------
# count-opers


def cmd_count_opers(args, cfg):
    params = bethe_gl2.ToroidalParams.from_json(load_json(args.params_file))
    res = bethe_gl2.count_relaxed_opers(
        args.l0,
        params,
        strategy=args.strategy,
        starts=args.starts,
        seed=cfg.seed,
        tol=1e-8,
        cluster_tol=cfg.tolerances.cluster_tol,
        workers=worker_count(),
    )
    out = res.to_json()
    out["l0"] = args.l0
    out["seed"] = cfg.seed
    out["residuals"] = [sol["residual_norms"] for sol in out["solutions"]]
    emit(dump_json(out), cfg, "count.json")
    return 0


# ---------------------------------------------------------------------------
# gl_n


def gln_report(data, action, cfg):
    if action == "count":
        try:
            return bethe_gln.counting_report(int(data["n"]), int(data["l0"]), [int(d) for d in data["degF"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"count needs n, l0, degF: {exc}") from exc
    gd = bethe_gln.GlnBetheData.from_json(data)
    op = bethe_gln.assemble_gln_oper(gd)
    if action == "assemble":
        return {
            "oper": op.L.to_json(),
            "clearing_residuals": op.clearing_residuals,
            "product_identity_residual": bethe_gln.product_identity_residual(gd, op),
        }
    if action == "apparent":
        rows = bethe_gln.gln_apparent_check(op, gd, cfg.tolerances, min(cfg.window, 20))
        return {"points": rows, "all_apparent": all(r["apparent"] for r in rows)}
    if action == "bae0":
        rewritten, raw = bethe_gln.bae0_rewrite_residual(op, gd)
        z = max(cfg.tolerances.zero_tol, 1e-9)
        rw_ok = bool(np.all(np.abs(rewritten) <= z))
        raw_ok = bool(np.all(np.abs(raw) <= z))
        return {"rewritten": rewritten, "raw": raw, "rewritten_vanishes": rw_ok, "raw_vanishes": raw_ok, "agree": rw_ok == raw_ok}
    raise InputError(f"unknown gln action {action!r}")


def cmd_gln(args, cfg):
    emit(dump_json(gln_report(load_json(args.data_file), args.action, cfg)), cfg, f"gln_{args.action}.json")
    return 0


# ---------------------------------------------------------------------------
# limit and lambda


def limit_report(fam):
    chk = cl_limit.delta_limit_check(fam)
    N = cl_limit.n_matrix(fam)
    return {
        "r": fam.r,
        "extrapolated": chk["extrapolated"],
        "target": chk["target"],
        "rel_err": chk["rel_err"],
        "scaled_err": chk["scaled_err"],
        "scaled_extrapolated": abs(chk["extrapolated"]) / chk["hadamard"],
        "values": chk["values"],
        "frobenius_holomorphic": cl_limit.frobenius_oracle(fam.alpha, fam.beta, fam.gamma, fam.s, fam.r),
        "N_scale": float(np.abs(N).max()),
        "hadamard": chk["hadamard"],
    }


def cmd_limit(args, cfg):
    fam = cl_limit.LimitFamily.from_json(load_json(args.family_file))
    emit(dump_json(limit_report(fam)), cfg, "limit.json")
    return 0


def lambda_report(u):
    rows = bethe_gl2.lambda_oper_check(u)
    return {"roots": rows, "agree": all(r["lambda_vanishes"] == r["unfold0_holds"] for r in rows)}


def cmd_lambda(args, cfg):
    u = bethe_gl2.UnfoldedData.from_json(load_json(args.unfolded_file))
    emit(dump_json(lambda_report(u)), cfg, "lambda.json")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    common.add_argument("--tol", type=float, default=None, help="relative zero tolerance")
    common.add_argument("--window", type=int, default=LATTICE_WINDOW, help="bound of q^Z exponent scans")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    p = argparse.ArgumentParser(prog="qopers", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-apparent", parents=[common], help="classify a singular point of a scalar operator")
    c.add_argument("oper_file")
    c.add_argument("point")
    c.add_argument("--method", choices=("auto", "delta", "nth", "special", "brute"), default="auto")
    c.add_argument("--r", type=int, default=None, help="orbit length (inferred from the last coefficient)")
    c.add_argument("--t", type=int, default=None, help="number of extra zeros of a_0 (inferred)")
    c.set_defaults(func=cmd_check_apparent)

    c = sub.add_parser("connection", parents=[common], help="connection matrix samples as CSV")
    c.add_argument("system_file")
    c.add_argument("points_file")
    c.set_defaults(func=cmd_connection)

    c = sub.add_parser("count-opers", parents=[common], help="count relaxed Verma opers")
    c.add_argument("params_file")
    c.add_argument("l0", type=int)
    c.add_argument("--starts", type=int, default=500, help="multistart budget for l0 >= 2")
    c.add_argument("--method", dest="strategy", choices=("interpolate", "multistart"), default=None)
    c.set_defaults(func=cmd_count_opers)

    c = sub.add_parser("gln", parents=[common], help="gl_n Miura oper checks")
    c.add_argument("data_file")
    c.add_argument("action", choices=("assemble", "apparent", "bae0", "count"))
    c.set_defaults(func=cmd_gln)

    c = sub.add_parser("limit", parents=[common], help="classical limit of Delta_r")
    c.add_argument("family_file")
    c.set_defaults(func=cmd_limit)

    c = sub.add_parser("lambda", parents=[common], help="lambda-oper verdicts on unfolded data")
    c.add_argument("unfolded_file")
    c.set_defaults(func=cmd_lambda)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else 0
    try:
        cfg = RunConfig.from_args(args)
        return args.func(args, cfg)
    except QOperError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
