"""Acceptance criteria 1-9, one PASS/FAIL line each."""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from _gen import integer_a_oper, random_oper, random_q, random_regular_2x2, random_second_order, unit
from qopers import cli
from qopers.bethe_gl2 import (
    ToroidalParams,
    a1_endpoint_formulas,
    lambda_oper_check,
    oper_from_roots,
    p0ss_residual,
    random_unfolded_instance,
    relaxed_full_residual,
    solve_bethe,
)
from qopers.bethe_gln import (
    GlnBetheData,
    apparent_points,
    assemble_gln_oper,
    bae0_rewrite_residual,
    counting_report,
    solve_colors,
)
from qopers.cl_limit import LimitFamily, delta_limit_check, force_nolog, frobenius_oracle, n_matrix
from qopers.connection import (
    HyperGeoBParams,
    RegularSystem,
    build_appendixB_system,
    check_regular_nonresonant,
    connection_matrix,
    fit_theta_constants,
    m_top,
    verify_apparent_regularity,
)
from qopers.qoper import APPARENT, a_product, apply_oper, brute_force_apparent, companion, delta_r_at, is_apparent_2nd, t_km


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


def test_criterion_1_relaxed_count(tmp_path, capsys):
    counts, worst_res, worst_time = [], 0.0, 0.0
    for seed in range(20):
        P = ToroidalParams.random(np.random.default_rng(seed))
        f = tmp_path / f"p{seed}.json"
        f.write_text(cli.dump_json(P.to_json(seed=seed)))
        t0 = time.perf_counter()
        code = cli.main(["count-opers", str(f), "1", "--seed", str(seed), "--out", str(tmp_path)])
        worst_time = max(worst_time, time.perf_counter() - t0)
        out = json.loads((tmp_path / "count.json").read_text())
        counts.append(out["count"] if code == 0 else None)
        for sol in out["solutions"]:
            full = relaxed_full_residual([complex(*z) for z in sol["s"]], [complex(*z) for z in sol["a1_free"]], P)
            worst_res = max(worst_res, float(np.abs(full).max()))
    ok = all(c == 4 for c in counts) and worst_res < 1e-8 and worst_time < 10
    report(capsys, 1, ok, f"counts {counts}, max residual {worst_res:.1e}, max time {worst_time:.2f}s")


def test_criterion_2_criterion_vs_oracle(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for i in range(100):
        r = 1 + i % 3
        L, s = random_second_order(rng, r, apparent=bool(rng.integers(2)))
        if is_apparent_2nd(L, s, r).classification != brute_force_apparent(L, s).classification:
            bad += 1
    dt = time.perf_counter() - t0
    report(capsys, 2, bad == 0 and dt < 30, f"{bad} disagreements in 100 instances, {dt:.2f}s")


def test_criterion_3_product_entries(capsys):
    rng = np.random.default_rng(3)
    worst = 0.0
    for op in range(20):
        n = 1 + op % 4
        L = random_oper(rng, n)
        A, q = companion(L), L.q
        for m in range(6):
            pts = []
            while len(pts) < 10:
                x = complex(unit(rng, 0.5, 1.5))
                if all(abs(L.a(0)(q ** (-j) * x)) > 1e-3 * L.a(0).eval_scale(q ** (-j) * x) for j in range(m + n + 2)):
                    pts.append(x)
            for x in pts:
                P = a_product(A, m, x)
                scale = max(1.0, np.abs(P).max())
                for j in range(1, n + 1):
                    for k in range(1, n + 1):
                        val = (-1) ** (k - 1) * t_km(L, m + 1 - j, k)(q ** (1 - j) * x)
                        worst = max(worst, abs(P[j - 1, k - 1] - val) / scale)
    report(capsys, 3, worst < 1e-9, f"max relative entry mismatch {worst:.1e}")


def test_criterion_4_connection(capsys):
    rng = np.random.default_rng(4)
    ell = 0.0
    for _ in range(5):
        q = random_q(rng)
        sys = random_regular_2x2(rng, q)
        assert check_regular_nonresonant(sys)["ok"]
        for _ in range(10):
            x = complex(unit(rng, 0.5, 2.0))
            ell = max(ell, float(np.abs(connection_matrix(sys, q * x).M_val - connection_matrix(sys, x).M_val).max()))
    Q = 0.5 + 0.1j
    ident = 0.0
    for a in (2, -1, 3):
        sys = RegularSystem.from_oper(integer_a_oper(Q, a))
        for _ in range(10):
            ident = max(ident, abs(connection_matrix(sys, complex(unit(rng, 0.3, 3.0))).M_val[0, 0] - 1))
    pole = 0.0
    cases = [(integer_a_oper(Q, 2), [1.0, Q**-2])]
    for i in range(6):
        r = 1 + i % 2
        L, s = random_second_order(rng, r, apparent=True, q=Q)
        assert is_apparent_2nd(L, s, r).classification == APPARENT
        cases.append((L, [s, Q ** (-r) * s]))
    for L, pts in cases:
        sys = RegularSystem.from_oper(L)
        for pt in pts:
            rep = verify_apparent_regularity(sys, pt)
            pole = max(pole, rep.pole_coeff)
    ok = ell <= 1e-8 and ident <= 1e-8 and pole < 1e-6
    report(capsys, 4, ok, f"ellipticity {ell:.1e}, |M-1| {ident:.1e}, max pole coefficient {pole:.1e}")


def test_criterion_5_hypergeometric(capsys):
    Q = 0.5 + 0.1j
    p0 = HyperGeoBParams(Q, 1.3 + 0.2j, 0.7 + 0.1j, -1.9 + 0.4j, 2.1 - 0.3j, 0.4 + 0.9j)
    p1 = HyperGeoBParams(Q, 1.3 + 0.2j, 0.7 + 0.1j, -1.9 + 0.4j, 2.1 - 0.3j, 0.4 + 0.9j, (0.9 - 0.6j,))
    t0 = time.perf_counter()
    fits = [fit_theta_constants(build_appendixB_system(p), p) for p in (p0, p1)]
    top = m_top(p0)
    top_err = float(np.abs(fits[0]["m"] - top).max() / np.abs(top).max())
    dt = time.perf_counter() - t0
    fit = max(f["fit_residual"] for f in fits)
    rel = max(max(f["mrel1_residual"], f["mrel2_residual"]) for f in fits)
    ok = fit < 1e-6 and rel < 1e-8 and top_err < 1e-7 and dt < 60
    report(capsys, 5, ok, f"fit {fit:.1e}, relations {rel:.1e}, m_top {top_err:.1e}, {dt:.2f}s")


def test_criterion_6_classical_limit(capsys):
    worst = {}
    for r in range(4):
        worst[r] = max(delta_limit_check(LimitFamily.random(r, np.random.default_rng(600 + 10 * r + k)))["rel_err"] for k in range(10))
    bad = 0
    for k in range(100):
        r = k % 4
        base = LimitFamily.random(r, np.random.default_rng(700 + k))
        F = force_nolog(base) if k % 2 else base
        zero = abs(np.linalg.det(n_matrix(F))) < 1e-10 * float(np.prod(np.linalg.norm(n_matrix(base), axis=1)))
        if frobenius_oracle(F.alpha, F.beta, F.gamma, F.s, r) != zero:
            bad += 1
    ok = max(worst.values()) < 1e-4 and bad == 0
    detail = ", ".join(f"r={r} {v:.1e}" for r, v in worst.items())
    report(capsys, 6, ok, f"max rel_err {detail}; {bad} oracle disagreements in 100")


def test_criterion_7_lambda(capsys):
    rng = np.random.default_rng(7)
    bad, rows = 0, 0
    for i in range(200):
        u = random_unfolded_instance(rng, 1 + i % 2, 1 + (i // 2) % 2, satisfied=bool(i % 3))
        for row in lambda_oper_check(u):
            rows += 1
            bad += row["lambda_vanishes"] != row["unfold0_holds"]
    report(capsys, 7, bad == 0, f"{bad} disagreements over {rows} roots in 200 instances")


def test_criterion_8_rank_n(capsys):
    rng = np.random.default_rng(8)
    D = solve_colors(GlnBetheData.random(3, [1, 1, 1], rng), range(1, 3), rng)
    D = solve_colors(D, range(3), rng)
    op = assemble_gln_oper(D)
    clear = max(op.clearing_residuals)
    brute = all(
        brute_force_apparent(op.L, z).classification == APPARENT for pts in apparent_points(D) for z in pts["app1"] + pts["app2"]
    )
    probes = [D]
    for seed in range(3):
        g = np.random.default_rng(80 + seed)
        probes.append(solve_colors(GlnBetheData.random(3, [1, 1, 1], g), range(1, 3), g))
    iff = True
    for probe in probes:
        rw, raw = bae0_rewrite_residual(assemble_gln_oper(probe), probe)
        iff &= bool(np.all(np.abs(rw) < 1e-8)) == bool(np.all(np.abs(raw) < 1e-8))
    counting = all(
        counting_report(n, l0, degF)["match"] == (degF == [0] * (n - 2) + [1])
        for n in range(2, 7)
        for l0 in range(5)
        for degF in ([0] * (n - 2) + [1], [0] * (n - 1), [1] + [0] * (n - 2), [1] * (n - 1))
    )
    ok = clear < 1e-8 and brute and iff and counting
    report(capsys, 8, ok, f"clearing {clear:.1e}, brute apparent {brute}, rewrite iff raw {iff}, counting {counting}")


def test_criterion_9_verma_oper(capsys):
    worst = {"clear": 0.0, "kill": 0.0, "delta": 0.0, "forms": 0.0}
    for seed in range(5):
        P = ToroidalParams.random(np.random.default_rng(900 + seed))
        cfg = solve_bethe(P, 1, 1, np.random.default_rng(seed), for_oper=True)
        L, rem = oper_from_roots(cfg, P)
        y1 = cfg.y1()
        worst["clear"] = max(worst["clear"], rem)
        worst["kill"] = max(worst["kill"], apply_oper(L, y1).norm() / (max(a.norm() for a in L.coeffs) * y1.norm()))
        for s in cfg.s:
            for z in (P.q1 * s, P.q3 * s):
                v, sc = delta_r_at(L, 1, z)
                worst["delta"] = max(worst["delta"], abs(v) / sc)
        forms = p0ss_residual(cfg, P, L)
        worst["forms"] = max(worst["forms"], max(float(np.abs(v).max()) for v in forms.values()))
    ok = worst["clear"] < 1e-9 and worst["kill"] < 1e-9 and worst["delta"] < 1e-8 and worst["forms"] < 1e-8
    report(capsys, 9, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
