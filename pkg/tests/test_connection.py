from __future__ import annotations

import numpy as np
import pytest

from _gen import integer_a_oper, random_q, random_regular_2x2, random_second_order, unit
from qopers.connection import (
    HyperGeoBParams,
    RegularSystem,
    ResonanceError,
    build_appendixB_system,
    canonical_series,
    check_regular_nonresonant,
    connection_matrix,
    continue_and_eval,
    csv_header,
    det_Yprime0_closed_form,
    fit_theta_constants,
    m_top,
    pole_confinement_probe,
    system_from_json,
    verify_apparent_regularity,
)
from qopers.numkernel import Polynomial, QSpecialContext, RationalFunction
from qopers.qoper import ScalarQOper, is_apparent_2nd

Q = 0.5 + 0.1j


def constant_system(q, C):
    return RegularSystem(q, [[RationalFunction(c) for c in row] for row in C])


def hyper_n0():
    return HyperGeoBParams(Q, 1.3 + 0.2j, 0.7 + 0.1j, -1.9 + 0.4j, 2.1 - 0.3j, 0.4 + 0.9j)


def hyper_n1():
    return HyperGeoBParams(Q, 1.3 + 0.2j, 0.7 + 0.1j, -1.9 + 0.4j, 2.1 - 0.3j, 0.4 + 0.9j, (0.9 - 0.6j,))


class TestNonResonance:
    def test_diagonal_passes(self):
        assert check_regular_nonresonant(constant_system(0.5, [[2, 0], [0, 3]]))["ok"]

    def test_resonant_fails(self):
        c = 1.3
        rep = check_regular_nonresonant(constant_system(0.5, [[c, 0], [0, c * 0.5]]))
        assert not rep["ok"]

    def test_singular_sets_hypergeometric(self):
        p = hyper_n1()
        sys = build_appendixB_system(p)
        rep = check_regular_nonresonant(sys)
        splus = rep["S_plus"]
        for z in (p.xi, *p.p_roots):
            assert min(abs(z - w) for w in splus) < 1e-8
        a2_roots = sys.oper.coeffs[2].roots()
        for z in rep["S_minus"]:
            assert min(abs(z - w) for w in a2_roots) < 1e-6


class TestSeries:
    def test_constant_system(self):
        sol = canonical_series(constant_system(Q, [[2, 1], [0, 3]]), "zero", 10)
        for Y in sol.coeff_mats[1:]:
            assert np.abs(Y).max() < 1e-14

    def test_integer_example_closed_form(self):
        a = 0.37
        sys = RegularSystem.from_oper(integer_a_oper(Q, a))
        sol = canonical_series(sys, "zero", 20)
        # q-binomial theorem: (x; q)_inf / (q^a x; q)_inf = sum_k (q^-a; q)_k / (q; q)_k (q^a x)^k
        coeff = []
        for k in range(12):
            num = np.prod([1 - Q ** (-a) * Q**j for j in range(k)])
            den = np.prod([1 - Q ** (j + 1) for j in range(k)])
            coeff.append(num / den * Q ** (a * k))
        for k in range(12):
            assert abs(sol.coeff_mats[k][0, 0] - coeff[k]) < 1e-10

    def test_integer_example_polynomial(self):
        sys = RegularSystem.from_oper(integer_a_oper(Q, 2))
        sol = canonical_series(sys, "zero")
        for x in (0.3 + 0.2j, 3.0 - 1.0j):
            assert abs(continue_and_eval(sys, sol, x)[0, 0] - (x - 1) * (Q * x - 1)) < 1e-9

    def test_defect_of_equation(self):
        rng = np.random.default_rng(0)
        sys = random_regular_2x2(rng, Q)
        sol = canonical_series(sys, "zero", 30)
        A0 = sys.A0
        for r in (1e-2, 2e-2, 4e-2):
            x = r * np.exp(0.3j)
            defect = np.linalg.norm(sol(Q * x) @ A0 - sys(x) @ sol(x))
            assert defect < 1e-12

    def test_functional_equation(self):
        rng = np.random.default_rng(1)
        sys = random_regular_2x2(rng, Q)
        ser = canonical_series(sys, "zero")
        for x in (0.4 + 0.3j, 2.7 - 0.5j):
            lhs = continue_and_eval(sys, ser, Q * x)
            rhs = sys(x) @ continue_and_eval(sys, ser, x) @ np.linalg.inv(sys.A0)
            assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(lhs).max()


class TestConnection:
    @pytest.mark.parametrize("a", [2, -1, 3])
    def test_integer_example_identity(self, a):
        sys = RegularSystem.from_oper(integer_a_oper(Q, a))
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = complex(unit(rng, 0.3, 3.0))
            assert abs(connection_matrix(sys, x).M_val[0, 0] - 1) < 1e-8

    def test_constant_system_identity(self):
        sys = constant_system(Q, [[2, 1], [0.5, 3]])
        M = connection_matrix(sys, 0.7 + 0.2j).M_val
        assert np.allclose(M, np.eye(2), atol=1e-12)

    def test_ellipticity_random_systems(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            q = random_q(rng)
            sys = random_regular_2x2(rng, q)
            assert check_regular_nonresonant(sys)["ok"]
            for _ in range(10):
                x = complex(unit(rng, 0.5, 2.0))
                M1 = connection_matrix(sys, x).M_val
                M2 = connection_matrix(sys, q * x).M_val
                assert np.abs(M1 - M2).max() <= 1e-8 * max(1.0, np.abs(M1).max())

    def test_csv(self):
        assert csv_header(1) == ["x_re", "x_im", "M11_re", "M11_im", "Mhat11_re", "Mhat11_im"]
        sys = RegularSystem.from_oper(integer_a_oper(Q, 2))
        row = connection_matrix(sys, 0.3).csv_row()
        assert len(row) == len(csv_header(1))

    def test_system_json(self):
        rng = np.random.default_rng(4)
        sys = random_regular_2x2(rng, Q)
        back = system_from_json(sys.to_json())
        x = 0.8 - 0.1j
        assert np.allclose(back(x), sys(x))
        p = hyper_n0()
        assert system_from_json(p.to_json()).dim == 2


class TestRegularity:
    def _tq_oper(self):
        rng = np.random.default_rng(5)
        L, s = random_second_order(rng, 1, apparent=True, q=Q)
        return L, s

    def test_apparent_is_regular(self):
        L, s = self._tq_oper()
        assert is_apparent_2nd(L, s, 1).apparent
        sys = RegularSystem.from_oper(L)
        for pt in (s, s / Q):
            rep = verify_apparent_regularity(sys, pt)
            assert rep.regular and rep.pole_coeff < 1e-6

    def test_perturbed_not_regular(self):
        L, s = self._tq_oper()
        a0, a1, a2 = L.coeffs
        sys = RegularSystem.from_oper(ScalarQOper(Q, (a0, a1 + Polynomial([0.3]), a2)))
        rep = verify_apparent_regularity(sys, s)
        assert not rep.regular and max(rep.pole_coeff, rep.inverse_pole_coeff) > 1e-2

    def test_integer_example_regular(self):
        sys = RegularSystem.from_oper(integer_a_oper(Q, 2))
        assert verify_apparent_regularity(sys, 1.0).regular

    def test_pole_confinement(self):
        L, s = self._tq_oper()
        a0, a1, a2 = L.coeffs
        sys = RegularSystem.from_oper(ScalarQOper(Q, (a0, a1 + Polynomial([0.3]), a2)))
        rep = pole_confinement_probe(sys, grid=12)
        assert all(d < 0.2 for _, d in rep["flagged"])


class TestHypergeometric:
    def test_top_system_shape(self):
        p = hyper_n0()
        sys = build_appendixB_system(p)
        assert np.allclose(sorted(np.linalg.eigvals(sys.A0), key=abs), sorted([p.rho1, p.rho2], key=abs))
        assert np.allclose(sorted(np.linalg.eigvals(sys.Ainf), key=abs), sorted([p.kappa1, p.kappa2], key=abs))
        x = 0.6 + 0.9j
        Atop = (x * p.Cinf() @ np.diag([p.kappa1, p.kappa2]) @ np.linalg.inv(p.Cinf()) - p.xi * p.C0() @ np.diag([p.rho1, p.rho2]) @ np.linalg.inv(p.C0())) / (x - p.xi)
        assert np.allclose(sys(x), Atop)

    def test_m_top(self):
        p = hyper_n0()
        fit = fit_theta_constants(build_appendixB_system(p), p)
        assert fit["fit_residual"] < 1e-6
        top = m_top(p)
        assert np.abs(fit["m"] - top).max() <= 1e-7 * np.abs(top).max()

    def test_apparent_instance(self):
        p = hyper_n1()
        sys = build_appendixB_system(p)
        assert is_apparent_2nd(sys.oper, p.p_roots[0], 1).apparent
        fit = fit_theta_constants(sys, p)
        assert fit["fit_residual"] < 1e-6
        assert fit["mrel1_residual"] < 1e-8 and fit["mrel2_residual"] < 1e-8

    def test_gauge_ratio_rank_one(self):
        p0, p1 = hyper_n0(), hyper_n1()
        m0 = fit_theta_constants(build_appendixB_system(p0), p0)["m"]
        m1 = fit_theta_constants(build_appendixB_system(p1), p1)["m"]
        r = m1 / m0
        assert abs(r[0, 0] * r[1, 1] / (r[0, 1] * r[1, 0]) - 1) < 1e-6

    def test_det_closed_form(self):
        p = hyper_n1()
        sys = build_appendixB_system(p)
        ctx = QSpecialContext.for_q(p.q)
        for x in (0.8 + 0.5j, -1.7 + 0.3j):
            Y0 = continue_and_eval(sys, canonical_series(sys, "zero"), x) @ p.C0()
            lhs = np.linalg.det(Y0) * ctx.e(p.rho1, x) * ctx.e(p.rho2, x)
            rhs = det_Yprime0_closed_form(p, x)
            assert abs(lhs - rhs) <= 1e-7 * abs(rhs)

    def test_resonant_parameters_rejected(self):
        p = HyperGeoBParams(Q, 1.3, 0.7, 0.7 * Q**2, 2.1, 0.4)
        with pytest.raises(ResonanceError):
            p.validate()

    def test_json_round_trip(self):
        p = hyper_n1()
        back = HyperGeoBParams.from_json(p.to_json())
        assert back == p
