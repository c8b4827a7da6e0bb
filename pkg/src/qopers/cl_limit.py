"""The ``q -> 1`` limit of second order opers with an apparent pair.

With ``q = exp(-eps)`` an operator ``a_0 s^2 - a_1 s + a_2`` satisfying

    a_0 - a_2 = O(eps),    a_0 + a_2 - a_1 = O(eps^2)

tends to ``alpha (x d)^2 - beta x d + gamma``. The apparent-pair determinant
then behaves like ``eps^{2r+2} det(-N)``, where ``N`` encodes the no-log
condition of the limit equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import HypothesisError, InputError, QOperError
from .numkernel import Polynomial, complex_from_json, complex_to_json, series_inv, series_mul
from .qoper import ScalarQOper, _check_zero_pattern

MP_DPS = 60


class StructureError(QOperError):
    exit_code = 65


@dataclass
class LimitFamily:
    """Limit data ``(alpha, beta, gamma)`` at an apparent pair ``(s, q^{-r} s)``.

    The finite-``eps`` operator is

        a_0 = alpha,  a_2 = (x - e^{r eps} s)(f + eps h),  a_1 = a_0 + a_2 - eps^2 gamma,

    with ``f = alpha / (x - s)`` and ``h = (r s f - beta) / (x - s)``.
    """

    r: int
    s: complex
    alpha: Polynomial
    beta: Polynomial
    gamma: Polynomial

    def __post_init__(self):
        if self.r < 0:
            raise InputError("r must be non-negative")
        self.s = complex(self.s)
        self.alpha = Polynomial.coerce(self.alpha)
        self.beta = Polynomial.coerce(self.beta)
        self.gamma = Polynomial.coerce(self.gamma)

    def check(self, tol=1e-9):
        """Problems with the regular-singularity conditions at ``s``."""
        s, a, b = self.s, self.alpha, self.beta
        da = a.deriv()(s)
        scale = a.eval_scale(s) + abs(s) * a.deriv().eval_scale(s)
        problems = []
        if abs(a(s)) > tol * scale:
            problems.append("alpha(s) != 0")
        if abs(da) <= tol * max(a.deriv().eval_scale(s), 1e-300):
            problems.append("alpha'(s) = 0")
        if abs(b(s) - self.r * s * da) > tol * (b.eval_scale(s) + self.r * abs(s) * abs(da)):
            problems.append("beta(s) != r s alpha'(s)")
        return problems

    def _parts(self):
        problems = self.check()
        if problems:
            raise HypothesisError("; ".join(problems))
        lin = Polynomial([-self.s, 1.0])
        f, _ = self.alpha.divmod(lin)
        h, _ = (f * (self.r * self.s) - self.beta).divmod(lin)
        return f, h

    def oper_at(self, eps):
        """Double-precision operator at ``q = e^{-eps}``."""
        f, h = self._parts()
        a0 = self.alpha
        a2 = Polynomial([-np.exp(self.r * eps) * self.s, 1.0]) * (f + h * eps)
        a1 = a0 + a2 - self.gamma * eps**2
        return ScalarQOper(np.exp(-eps), (a0, a1, a2))

    def eps_expansion(self, order):
        """``[A_{i,k}]``: the operator coefficients as polynomials in ``eps`` up to ``eps^order``."""
        f, h = self._parts()
        r, s = self.r, self.s
        a0 = [self.alpha] + [Polynomial([0.0])] * order
        a2 = []
        for k in range(order + 1):
            # e^{r eps} s contributes -(r^k / k!) s at order k
            term = Polynomial([-(r**k) / math.factorial(k) * s]) * f
            if k >= 1:
                term = term + Polynomial([-(r ** (k - 1)) / math.factorial(k - 1) * s]) * h
            if k == 0:
                term = term + Polynomial([0.0, 1.0]) * f
            if k == 1:
                term = term + Polynomial([0.0, 1.0]) * h
            a2.append(term)
        a1 = [a0[k] + a2[k] - (self.gamma if k == 2 else Polynomial([0.0])) for k in range(order + 1)]
        return [a0, a1, a2]

    def to_json(self):
        return {
            "r": self.r,
            "s": complex_to_json(self.s),
            "alpha": self.alpha.to_json(),
            "beta": self.beta.to_json(),
            "gamma": self.gamma.to_json(),
        }

    @classmethod
    def from_json(cls, d):
        try:
            return cls(
                int(d["r"]),
                complex_from_json(d["s"]),
                Polynomial.from_json(d["alpha"]),
                Polynomial.from_json(d["beta"]),
                Polynomial.from_json(d["gamma"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed family: {exc}") from exc

    @classmethod
    def random(cls, r, rng, extra_degree=2):
        """A family satisfying the regular-singularity conditions at a random ``s``."""

        def c(size=None):
            return rng.standard_normal(size) + 1j * rng.standard_normal(size)

        s = c() / 2 + 1.0
        lin = Polynomial([-s, 1.0])
        alpha = lin * Polynomial(c(extra_degree))
        da = alpha.deriv()(s)
        beta = Polynomial([r * s * da]) + lin * Polynomial(c(extra_degree))
        gamma = Polynomial(c(extra_degree + 1))
        return cls(r, s, alpha, beta, gamma)


def limit_coefficients(expansion, tol=1e-12):
    """``(alpha, beta, gamma)`` read off a finite ``eps``-expansion ``[A_{i,k}]``.

    ``expansion[i][k]`` is the coefficient polynomial of ``eps^k`` in ``a_i``.
    """
    A = [[Polynomial.coerce(p) for p in row] for row in expansion]
    if len(A) != 3:
        raise InputError("need expansions of a_0, a_1, a_2")
    z = Polynomial([0.0])

    def get(i, k):
        return A[i][k] if k < len(A[i]) else z

    def small(p, ref):
        return p.norm() <= tol * max(ref, 1.0)

    ref = max(get(i, 0).norm() for i in range(3))
    if not small(get(0, 0) - get(2, 0), ref):
        raise StructureError("a_0 - a_2 is not O(eps)")
    if not (small(get(0, 0) + get(2, 0) - get(1, 0), ref) and small(get(0, 1) + get(2, 1) - get(1, 1), ref)):
        raise StructureError("a_0 + a_2 - a_1 is not O(eps^2)")
    return get(0, 0), get(0, 1) - get(2, 1), get(0, 2) + get(2, 2) - get(1, 2)


def limit_coefficients_numeric(fam, x_points, eps0=1e-2, levels=4):
    """Richardson estimates of ``alpha, beta, gamma`` at points, from finite-``eps`` operators."""
    x_points = np.asarray(x_points, dtype=complex)
    out = []
    for k, combo in enumerate(
        (
            lambda L: L.a(0),
            lambda L: L.a(0) - L.a(2),
            lambda L: L.a(0) + L.a(2) - L.a(1),
        )
    ):
        vals = []
        for lev in range(levels):
            eps = eps0 * 2.0 ** (-lev)
            L = fam.oper_at(eps)
            vals.append(combo(L)(x_points) / eps**k)
        out.append(richardson(vals))
    return tuple(out)


def richardson(values, ratio=2.0):
    """Extrapolate ``values[k] = F(h / ratio^k)`` with error ``c_1 h + c_2 h^2 + ...``."""
    table = [np.asarray(v) for v in values]
    for p in range(1, len(table)):
        f = ratio**p
        table = [(f * table[k + 1] - table[k]) / (f - 1) for k in range(len(table) - 1)]
    return table[0]


def _taylor(p, s, terms):
    coeffs, _ = p.taylor(s, terms)
    out = np.zeros(terms, dtype=complex)
    out[: len(coeffs)] = coeffs[:terms]
    return out


def n_matrix(fam):
    """``N_{ij} = j(j-1) alpha_{i+2-j} - j beta_{i+1-j} + gamma_{i-j}``, ``0 <= i, j <= r``."""
    r, s = fam.r, fam.s
    X = Polynomial([0.0, 1.0])
    terms = r + 3
    al = _taylor(X * X * fam.alpha, s, terms)
    be = _taylor(X * (fam.beta - fam.alpha), s, terms)
    ga = _taylor(fam.gamma, s, terms)

    def at(c, k):
        return c[k] if 0 <= k < len(c) else 0.0

    N = np.zeros((r + 1, r + 1), dtype=complex)
    for i in range(r + 1):
        for j in range(r + 1):
            N[i, j] = j * (j - 1) * at(al, i + 2 - j) - j * at(be, i + 1 - j) + at(ga, i - j)
    return N


def superdiagonal_audit(fam):
    """Largest mismatch of ``N_{i,i+1} = (i+1)(i-r) alpha_1`` over ``0 <= i <= r``."""
    r, s = fam.r, fam.s
    X = Polynomial([0.0, 1.0])
    al = _taylor(X * X * fam.alpha, s, r + 4)
    be = _taylor(X * (fam.beta - fam.alpha), s, r + 4)
    worst = 0.0
    for i in range(r + 1):
        j = i + 1
        entry = j * (j - 1) * al[1] - j * be[0]
        worst = max(worst, abs(entry - (i + 1) * (i - r) * al[1]))
    return worst


def frobenius_oracle(alpha, beta, gamma, s, r, tol=1e-8):
    """Is there a holomorphic solution ``sum c_j (x - s)^j`` with ``c_0 = 1``?

    Rows ``0..r-1`` of the local recursion fix ``c_1..c_r`` through the
    superdiagonal; row ``r`` is the consistency condition.
    """
    fam = LimitFamily(r, s, alpha, beta, gamma)
    N = n_matrix(fam)
    X = Polynomial([0.0, 1.0])
    al1 = _taylor(X * X * fam.alpha, fam.s, 2)[1]
    c = np.zeros(r + 1, dtype=complex)
    c[0] = 1.0
    for i in range(r):
        sup = (i + 1) * (i - r) * al1
        if abs(sup) < 1e-14 * max(np.abs(N).max(), 1e-300):
            raise StructureError(f"superdiagonal entry {i} vanishes")
        c[i + 1] = -(N[i, : i + 1] @ c[: i + 1]) / sup
    res = N[r, :] @ c
    # gamma bounds the row-r entries before cancellation; needed when that row is itself ~0
    scale = np.abs(N[r, :]) @ np.abs(c) + fam.gamma.eval_scale(fam.s)
    return bool(abs(res) <= tol * scale)


def force_nolog(fam):
    """The family with ``gamma`` shifted by ``delta (x - s)^r`` so that ``det N = 0``."""
    N = n_matrix(fam)
    r = fam.r
    E = np.zeros_like(N)
    E[r, 0] = 1.0
    d0 = np.linalg.det(N)
    d1 = np.linalg.det(N + E) - d0
    delta = -d0 / d1
    bump = Polynomial.from_roots([fam.s] * r) * delta
    return LimitFamily(r, fam.s, fam.alpha, fam.beta, fam.gamma + bump)


def _mp_poly(p):
    return [mpmath.mpc(c.real, c.imag) for c in p.coef]


def _mp_eval(coef, x):
    out = mpmath.mpc(0)
    for c in reversed(coef):
        out = out * x + c
    return out


def delta_r_mp(fam, eps, dps=MP_DPS):
    """``Delta_r(s)`` of the finite-``eps`` operator in extended precision."""
    f, h = fam._parts()
    with mpmath.workdps(dps):
        eps = mpmath.mpf(eps)
        s = mpmath.mpc(fam.s.real, fam.s.imag)
        fc, hc, ga = (_mp_poly(p) for p in (f, h, fam.gamma))
        qinv = mpmath.exp(eps)
        e_rs = mpmath.exp(fam.r * eps) * s

        # alpha = (x - s) f keeps the vanishing at s exact
        def a0(x):
            return (x - s) * _mp_eval(fc, x)

        def a2(x):
            return (x - e_rs) * (_mp_eval(fc, x) + eps * _mp_eval(hc, x))

        def a1(x):
            return a0(x) + a2(x) - eps**2 * _mp_eval(ga, x)

        v2, v1 = mpmath.mpc(0), mpmath.mpc(1)
        for m in range(fam.r + 1):
            y = qinv**m * s
            z = qinv ** (m - 1) * s
            v2, v1 = v1, a1(y) * v1 - a0(y) * a2(z) * v2
        return complex(v1 / eps ** (2 * fam.r + 2))


def delta_limit_check(fam, eps_seq=None, window=20, dps=MP_DPS):
    """Richardson limit of ``eps^{-2r-2} Delta_r(s)`` against ``det(-N)``."""
    if eps_seq is None:
        eps_seq = [1e-2 * 2.0 ** (-k) for k in range(3)]
    eps_seq = list(eps_seq)
    if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise InputError("eps sequence must decrease")
    ratio = eps_seq[0] / eps_seq[1] if len(eps_seq) > 1 else 2.0
    vals = []
    for eps in eps_seq:
        L = fam.oper_at(eps)
        a0, _, a2 = L.coeffs
        problems = _check_zero_pattern(a0, fam.s, L.q, {0}, window, 1e-9, "a_0")
        problems += _check_zero_pattern(a2, fam.s, L.q, {-fam.r}, window, 1e-9, "a_2")
        if problems:
            raise HypothesisError(f"eps={eps}: " + "; ".join(problems))
        vals.append(delta_r_mp(fam, eps, dps))
    extrap = complex(richardson(vals, ratio))
    N = n_matrix(fam)
    target = complex(np.linalg.det(-N))
    # Hadamard bound: the size det N would have without cancellation
    hadamard = max(float(np.prod(np.linalg.norm(N, axis=1))), 1e-300)
    scale = max(abs(target), hadamard * 1e-12)
    err = abs(extrap - target)
    return {
        "extrapolated": extrap,
        "target": target,
        "rel_err": err / scale,
        "scaled_err": err / hadamard,
        "hadamard": hadamard,
        "values": vals,
    }


# ---------------------------------------------------------------------------
# normal form


@dataclass
class NormalFormPotential:
    """Laurent data of ``V`` at ``s`` beyond the fixed double pole ``(r/2)(r/2 + 1)``."""

    V_coeffs: list
    r: int
    leading: complex = None

    def __post_init__(self):
        self.V_coeffs = [complex(v) for v in self.V_coeffs]
        if self.leading is None:
            self.leading = (self.r / 2) * (self.r / 2 + 1)


def normal_form(fam):
    """Classical reduction ``a y'' + b y' + c y`` to ``y'' - V y`` with ``V = B' + B^2 - c/a``, ``B = b / 2a``."""
    r, s = fam.r, fam.s
    X = Polynomial([0.0, 1.0])
    a = X * X * fam.alpha
    b = X * (fam.alpha - fam.beta)
    c = fam.gamma
    terms = r + 4
    at = _taylor(a, s, terms + 1)
    if abs(at[0]) > 1e-9 * np.abs(at).max():
        raise HypothesisError("a does not vanish at s")
    ahat = at[1:]  # a / (x - s)
    binv = series_inv(list(ahat), terms)
    Bh = np.array(series_mul(list(_taylor(b, s, terms) / 2), binv, terms))  # u B
    C = np.array(series_mul(list(_taylor(c, s, terms)), binv, terms))  # u c / a
    k = np.arange(terms)
    w = (k - 1) * Bh + np.array(series_mul(list(Bh), list(Bh), terms))
    w[1:] -= C[:-1]
    return NormalFormPotential(list(w[1 : r + 2]), r, w[0])


def nolog_matrix(pot, r=None):
    """The ``(r+1) x (r+1)`` banded matrix with ``V_{i-j+1}`` on and below the diagonal."""
    r = pot.r if r is None else r
    if r < 1:
        raise InputError("r must be at least 1")
    V = pot.V_coeffs
    if len(V) < r + 1:
        raise InputError(f"need V_1..V_{r + 1}")
    M = np.zeros((r + 1, r + 1), dtype=complex)
    for i in range(r + 1):
        for j in range(i + 1):
            M[i, j] = V[i - j]
        if i < r:
            M[i, i + 1] = (i + 1) * (r - i)
    return M


def nolog_det(pot, r=None):
    return complex(np.linalg.det(nolog_matrix(pot, r)))
