from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qopers.bethe_gln import (
    GlnBetheData,
    apparent_points,
    apply_miura,
    assemble_gln_oper,
    bae0_rewrite_residual,
    bottom_coefficient,
    counting_report,
    elimination_audit,
    gln_apparent_check,
    interior_residuals,
    miura_factors,
    miura_t,
    miura_t_values,
    product_identity_residual,
    raw_bae0_residual,
    recursion_audit,
    solve_colors,
    top_coefficient,
)
from qopers.errors import BetheViolationError, InputError
from qopers.numkernel import Polynomial
from qopers.qoper import APPARENT, NOT_APPARENT, ScalarQOper, apply_oper, brute_force_apparent, is_apparent_2nd


def solved(n, seed, l=None):
    rng = np.random.default_rng(seed)
    D = GlnBetheData.random(n, l or [1] * n, rng)
    return solve_colors(D, range(n), rng)


def interior_only(n, seed):
    rng = np.random.default_rng(seed)
    D = GlnBetheData.random(n, [1] * n, rng)
    return solve_colors(D, range(1, n), rng)


class TestData:
    def test_validation(self):
        rng = np.random.default_rng(0)
        D = GlnBetheData.random(3, [1, 1, 1], rng)
        with pytest.raises(InputError):
            GlnBetheData(1, D.q, D.d, D.p[:1], D.F[:1], D.G[:1], D.roots[:1])
        with pytest.raises(InputError):
            GlnBetheData(3, D.q, D.d, D.p, [Polynomial([1, 2])] * 3, D.G, D.roots)

    def test_json_round_trip(self):
        D = solved(3, 1)
        E = GlnBetheData.from_json(D.to_json())
        assert E.roots == D.roots and E.p == D.p
        with pytest.raises(InputError):
            GlnBetheData.from_json({"n": 3})


class TestMiura:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_recursion(self, n):
        rng = np.random.default_rng(n)
        D = GlnBetheData.random(n, [1] * n, rng)
        assert recursion_audit(D) < 1e-10

    def test_factors_finite_at_ends(self):
        D = GlnBetheData.random(3, [1, 1, 1], np.random.default_rng(2))
        for b in miura_factors(D):
            assert b.num(0) != 0 and b.den(0) != 0
            assert b.num.degree == b.den.degree

    def test_extreme_t(self):
        D = GlnBetheData.random(3, [1, 1, 1], np.random.default_rng(3))
        b = miura_factors(D)
        x = 0.7 + 0.4j
        assert abs(miura_t(D, 0)(x) - 1) < 1e-14
        single = b[2](x) * b[1](x) * b[0](x)
        assert abs(miura_t(D, 3)(x) - single) <= 1e-12 * abs(single)
        with pytest.raises(InputError):
            miura_t(D, 4)

    def test_t_matches_expansion(self):
        # (s - b_n)...(s - b_1) acting on f equals sum_k (-1)^k t_k s^{n-k} f
        D = GlnBetheData.random(3, [1, 1, 1], np.random.default_rng(4))
        b = miura_factors(D)
        q2 = D.q2
        f = lambda z: np.exp(0.3 * z) + z**2
        x = 0.9 - 0.2j
        lhs = apply_miura(b, q2, f, x)
        rhs = sum((-1) ** k * miura_t_values(b, q2, k, np.array([x]))[0] * f(q2 ** (3 - k) * x) for k in range(4))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))

    def test_size_guard(self):
        D = GlnBetheData.random(7, [0] * 7, np.random.default_rng(5))
        with pytest.raises(InputError):
            miura_t(D, 1)


class TestAssembly:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_solved_instance_clears(self, n):
        D = solved(n, 10 + n)
        assert np.abs(interior_residuals(D)).max() < 1e-10
        op = assemble_gln_oper(D)
        assert max(op.clearing_residuals) < 1e-8
        assert product_identity_residual(D, op) < 1e-10
        assert op.L.coeffs[0] == top_coefficient(D)
        assert op.L.coeffs[-1] == bottom_coefficient(D)
        # the rightmost Miura factor kills y_1
        y1 = D.y(1)
        assert apply_oper(op.L, y1).norm() <= 1e-8 * max(a.norm() for a in op.L.coeffs) * y1.norm()

    def test_clears_with_more_roots(self):
        D = solved(3, 20, l=[1, 2, 1])
        assert max(assemble_gln_oper(D).clearing_residuals) < 1e-8

    def test_violation_names_color(self):
        D = solved(3, 21)
        roots = [list(r) for r in D.roots]
        roots[2][0] *= 1.01
        # a color-2 root enters its own equation and that of color 1
        with pytest.raises(BetheViolationError, match=r"colors \[1, 2\]"):
            assemble_gln_oper(D.with_roots(roots))


class TestApparent:
    def test_points_layout(self):
        D = solved(3, 30)
        pts = apparent_points(D)
        assert len(pts) == 1 and len(pts[0]["app1"]) == 3 and len(pts[0]["app2"]) == 2

    @pytest.mark.parametrize("n", [2, 3])
    def test_solved_apparent(self, n):
        D = solved(n, 31 + n)
        op = assemble_gln_oper(D)
        rows = gln_apparent_check(op, D)
        assert all(r["apparent"] for r in rows)

    def test_all_app1_points_confirmed(self):
        D = solved(3, 35)
        op = assemble_gln_oper(D)
        for pts in apparent_points(D):
            for z in pts["app1"][:1] + pts["app2"][:1]:
                assert brute_force_apparent(op.L, z).classification == APPARENT

    def test_rank_two_second_order_criterion(self):
        D = solved(2, 36)
        L = assemble_gln_oper(D).L
        s = D.roots[0][0]
        assert is_apparent_2nd(L, s / (D.q3 * D.q2), 1).classification == APPARENT
        assert is_apparent_2nd(L, D.q3 * s, 1).classification == APPARENT

    def test_perturbed_a1_not_apparent(self):
        D = solved(3, 37)
        L = assemble_gln_oper(D).L
        c = list(L.coeffs)
        c[1] = c[1] + Polynomial([0.05 * c[1].norm()])
        bad = ScalarQOper(L.q, tuple(c))
        z = D.roots[0][0] / (D.q3 * D.q2)
        assert brute_force_apparent(bad, z).classification == NOT_APPARENT


class TestBae0:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_full_solution(self, n):
        D = solved(n, 40 + n)
        op = assemble_gln_oper(D)
        assert elimination_audit(op, D) < 1e-10
        rewritten, raw = bae0_rewrite_residual(op, D)
        assert np.abs(rewritten).max() < 1e-8 and np.abs(raw).max() < 1e-8

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_interior_only(self, n):
        D = interior_only(n, 50 + n)
        op = assemble_gln_oper(D)
        assert elimination_audit(op, D) < 1e-10
        rewritten, raw = bae0_rewrite_residual(op, D)
        assert np.abs(raw).min() > 1e-3
        assert np.allclose(rewritten, raw, rtol=1e-8)
        assert np.allclose(raw, raw_bae0_residual(D))


class TestCounting:
    def test_example(self):
        assert counting_report(3, 1, [0, 1]) == {"unknowns": 7, "equations": 7, "match": True}

    @pytest.mark.parametrize("n", range(2, 7))
    @pytest.mark.parametrize("l0", range(0, 5))
    def test_balanced_weights(self, n, l0):
        assert counting_report(n, l0, [0] * (n - 2) + [1])["match"]

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 4), st.data())
    def test_match_iff_weighted_degree_one(self, n, l0, data):
        degF = data.draw(st.lists(st.integers(0, 2), min_size=n - 1, max_size=n - 1))
        weighted = sum((n - j) * degF[j - 1] for j in range(1, n))
        assert counting_report(n, l0, degF)["match"] == (weighted == 1)

    def test_length_checked(self):
        with pytest.raises(InputError):
            counting_report(3, 1, [1])
