"""Scalar q-difference operators and criteria for apparent singularities.

An operator of order ``n`` is

    L = a_0(x) s^n - a_1(x) s^(n-1) + ... + (-1)^n a_n(x),   (s f)(x) = f(q x),

and ``L y = 0`` is equivalent to the first order system ``Y(qx) = A(x) Y(x)``
with ``A`` the companion matrix whose first row is
``(t_1, -t_2, ..., (-1)^(n-1) t_n)``, ``t_k = a_k / a_0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError, InputError, NotSingularError, PoleError
from .numkernel import (
    DEFAULT_TOL,
    LATTICE_WINDOW,
    Polynomial,
    RationalFunction,
    complex_from_json,
    complex_to_json,
    series_mul,
)

APPARENT = "apparent"
NOT_APPARENT = "not-apparent"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ScalarQOper:
    """``sum_k (-1)^k a_k(x) s^(n-k)`` with ``s`` the ``q``-shift."""

    q: complex
    coeffs: tuple

    def __post_init__(self):
        q = complex(self.q)
        if not (0 < abs(q) < 1):
            raise InputError(f"need 0 < |q| < 1, got {abs(q)}")
        coeffs = tuple(Polynomial.coerce(a) if not isinstance(a, Polynomial) else a for a in self.coeffs)
        if len(coeffs) < 2:
            raise InputError("an operator needs at least a_0 and a_1")
        if coeffs[0].is_zero() or coeffs[-1].is_zero():
            raise InputError("a_0 and a_n must not vanish identically")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self):
        return len(self.coeffs) - 1

    def a(self, k):
        if 0 <= k <= self.order:
            return self.coeffs[k]
        return Polynomial([0.0])

    def t(self, k):
        """``t_k = a_k / a_0`` (zero outside ``0..n``)."""
        return RationalFunction(self.a(k), self.coeffs[0])

    def to_json(self):
        return {
            "q": complex_to_json(self.q),
            "order": self.order,
            "coeffs": [a.to_json() for a in self.coeffs],
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            q = complex_from_json(data["q"])
            coeffs = [Polynomial.from_json(c) for c in data["coeffs"]]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed operator: {exc}") from exc
        if "order" in data and int(data["order"]) != len(coeffs) - 1:
            raise InputError("'order' does not match the number of coefficients")
        return cls(q, tuple(coeffs))


@dataclass(frozen=True)
class CompanionSystem:
    """Companion matrix ``A(x)`` of a scalar operator."""

    oper: ScalarQOper

    @property
    def q(self):
        return self.oper.q

    @property
    def dim(self):
        return self.oper.order

    @property
    def entries(self):
        n = self.dim
        zero = RationalFunction(0.0)
        rows = [[zero] * n for _ in range(n)]
        rows[0] = [(-1) ** (k - 1) * self.oper.t(k) for k in range(1, n + 1)]
        for i in range(1, n):
            rows[i] = [RationalFunction(1.0) if j == i - 1 else zero for j in range(n)]
        return rows

    def __call__(self, x, tol=DEFAULT_TOL.zero_tol):
        a = self.oper.coeffs
        x = complex(x)
        a0 = a[0](x)
        if abs(a0) <= tol * a[0].eval_scale(x):
            raise PoleError(f"companion matrix has a pole at {x}")
        n = self.dim
        A = np.zeros((n, n), dtype=complex)
        for k in range(1, n + 1):
            A[0, k - 1] = (-1) ** (k - 1) * a[k](x) / a0
        for i in range(1, n):
            A[i, i - 1] = 1.0
        return A

    def det(self, x):
        return self.oper.t(self.dim)(x)


def companion(L):
    return CompanionSystem(L)


def a_product(A, m, x):
    """``A(x) A(q^-1 x) ... A(q^-m x)``."""
    if m < 0:
        raise InputError("m must be non-negative")
    out = np.eye(A.dim, dtype=complex)
    for j in range(m + 1):
        try:
            out = out @ A(A.q ** (-j) * complex(x))
        except PoleError as exc:
            raise PoleError(f"pole at shift index {j}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# minors t_k^(m)


def _minor_numerators(L, m):
    """Numerators ``T_k`` (k = 1..n) of ``t_k^(m)`` over ``prod_{j=0}^m a_0(q^-j x)``."""
    n = L.order
    q = L.q
    T = [L.a(k) for k in range(1, n + 1)]
    den = L.a(0)
    for mm in range(1, m + 1):
        a_sh = [L.a(k).scale_arg(q ** (-mm)) for k in range(n + 1)]
        new = []
        for k in range(1, n + 1):
            nxt = T[k] if k < n else Polynomial([0.0])
            new.append(T[0] * a_sh[k] - nxt * a_sh[0])
        T = new
        den = den * a_sh[0]
    return T, den


def t_km(L, m, k):
    """The minor ``t_k^(m)`` as a rational function with denominator ``prod_{j=0}^m a_0(q^-j x)``."""
    n = L.order
    if k < 1 or k > n:
        return RationalFunction(0.0)
    if m < 0:
        return RationalFunction((-1.0) ** (k - 1) if k + m == 0 else 0.0)
    T, den = _minor_numerators(L, m)
    return RationalFunction(T[k - 1], den)


def t_km_all(L, m):
    """All ``t_k^(m)`` for ``k = 1..n`` sharing one denominator."""
    if m < 0:
        return [t_km(L, m, k) for k in range(1, L.order + 1)]
    T, den = _minor_numerators(L, m)
    return [RationalFunction(Tk, den) for Tk in T]


# ---------------------------------------------------------------------------
# second order: tridiagonal determinant


def _require_order2(L):
    if L.order != 2:
        raise InputError("the tridiagonal determinant is defined for second order operators")


def delta_r(L, r):
    """``Delta_r``, the tridiagonal determinant built from ``a_0, a_1, a_2`` along ``q^-i x``."""
    _require_order2(L)
    if r < 0:
        raise InputError("r must be non-negative")
    q = L.q
    a0, a1, a2 = L.coeffs
    prev2, prev1 = Polynomial([0.0]), Polynomial([1.0])
    for m in range(r + 1):
        cur = a1.scale_arg(q ** (-m)) * prev1 - a0.scale_arg(q ** (-m)) * a2.scale_arg(q ** (-m + 1)) * prev2
        prev2, prev1 = prev1, cur
    return prev1


def delta_r_at(L, r, x):
    """Value of ``Delta_r(x)`` and a matching roundoff scale, by the three-term recurrence."""
    _require_order2(L)
    q = L.q
    a0, a1, a2 = L.coeffs
    x = complex(x)
    v2, v1 = 0j, 1 + 0j
    s2, s1 = 0.0, 1.0
    for m in range(r + 1):
        y = q ** (-m) * x
        z = q ** (-m + 1) * x
        c1, c1s = a1(y), a1.eval_scale(y)
        c0 = a0(y) * a2(z)
        c0s = a0.eval_scale(y) * a2.eval_scale(z)
        v = c1 * v1 - c0 * v2
        sc = c1s * s1 + c0s * s2
        v2, v1, s2, s1 = v1, v, s1, sc
    return v1, s1


def delta_dense(L, r, x):
    """Dense ``(r+1) x (r+1)`` determinant; used as an independent check."""
    _require_order2(L)
    q = L.q
    a0, a1, a2 = L.coeffs
    M = np.zeros((r + 1, r + 1), dtype=complex)
    for i in range(r + 1):
        y = q ** (-i) * complex(x)
        if i > 0:
            M[i, i - 1] = a0(y)
        M[i, i] = a1(y)
        if i < r:
            M[i, i + 1] = a2(y)
    return complex(np.linalg.det(M))


# ---------------------------------------------------------------------------
# reports and hypothesis checks


@dataclass
class SingularityReport:
    point: complex
    classification: str
    witness: dict = field(default_factory=dict)
    window: tuple = (0, 0)
    criterion: str = ""

    @property
    def apparent(self):
        return self.classification == APPARENT

    def to_json(self):
        def clean(v):
            if isinstance(v, complex):
                return complex_to_json(v)
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.complexfloating):
                return complex_to_json(complex(v))
            if isinstance(v, dict):
                return {k: clean(w) for k, w in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(w) for w in v]
            return v

        return {
            "point": complex_to_json(self.point),
            "classification": self.classification,
            "criterion": self.criterion,
            "window": list(self.window),
            "witness": clean(self.witness),
        }


def orbit_zeros(p, s, q, window=LATTICE_WINDOW, tol=DEFAULT_TOL.zero_tol):
    """``{j: order}`` for the zeros of ``p`` among ``q^j s``, ``|j| <= window``."""
    js = np.arange(-window, window + 1)
    pts = complex(s) * complex(q) ** js.astype(float)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.abs(p(pts))
        scale = p.eval_scale(pts)
    out = {}
    for j, z, v, sc in zip(js, pts, vals, scale):
        # far orbit points overflow; no zero can sit there
        if np.isfinite(sc) and np.isfinite(v) and v <= tol * sc:
            out[int(j)] = p.vanishing_order(z, tol)
    return out


def _check_zero_pattern(p, s, q, expected, window, tol, name):
    """Compare the orbit zeros of ``p`` with the expected set of simple zeros.

    Returns a list of human-readable problems (empty when the pattern fits).
    Exponents are with respect to ``q^j s``.
    """
    found = orbit_zeros(p, s, q, window, tol)
    problems = []
    for j in sorted(expected):
        if found.get(j, 0) != 1:
            problems.append(f"{name} should have a simple zero at q^{j} s (order {found.get(j, 0)})")
    for j, o in sorted(found.items()):
        if j not in expected:
            problems.append(f"{name} has an extra zero of order {o} at q^{j} s")
    return problems


def is_apparent_2nd(L, s, r, tol=DEFAULT_TOL, window=LATTICE_WINDOW):
    """Second order criterion: ``s`` and ``q^-r s`` are apparent iff ``Delta_r(s) = 0``."""
    _require_order2(L)
    if r < 1:
        raise InputError("r must be at least 1")
    q, s = L.q, complex(s)
    a0, _, a2 = L.coeffs
    z = tol.zero_tol
    if a0.vanishing_order(s, z) == 0 and a2.vanishing_order(q ** (-r) * s, z) == 0:
        raise NotSingularError(f"{s} is not a zero of a_0 and q^-{r} s is not a zero of a_2")
    problems = _check_zero_pattern(a0, s, q, {0}, window, z, "a_0")
    problems += _check_zero_pattern(a2, s, q, {-r}, window, z, "a_2")
    if problems:
        return SingularityReport(s, INCONCLUSIVE, {"hypotheses": problems}, (0, r), "second-order")
    val, scale = delta_r_at(L, r, s)
    rel = abs(val) / scale if scale > 0 else 0.0
    verdict = APPARENT if rel <= z else NOT_APPARENT
    return SingularityReport(
        s, verdict, {"delta": complex(val), "relative": rel}, (0, r), "second-order"
    )


def is_apparent_nth(L, s, r, t, tol=DEFAULT_TOL, window=LATTICE_WINDOW):
    """Order-``n`` criterion through holomorphy of the minors ``t_k^(r+1-j)(q^(1-j) x)`` at ``s``."""
    if not (0 <= t < r):
        raise InputError("need 0 <= t < r")
    q, s = L.q, complex(s)
    n = L.order
    z = tol.zero_tol
    problems = _check_zero_pattern(L.a(0), s, q, {-j for j in range(t + 1)}, window, z, "a_0")
    problems += _check_zero_pattern(L.a(n), s, q, {-j for j in range(r - t, r + 1)}, window, z, f"a_{n}")
    if problems:
        if not orbit_zeros(L.a(0), s, q, window, z) and not orbit_zeros(L.a(n), s, q, window, z):
            raise NotSingularError(f"no zero of a_0 or a_{n} on the q-orbit of {s}")
        return SingularityReport(s, INCONCLUSIVE, {"hypotheses": problems}, (0, r), "n-th-order")
    failures = []
    for j in range(1, t + 2):
        for k, tk in enumerate(t_km_all(L, r + 1 - j), start=1):
            f = tk.scale_arg(q ** (1 - j))
            o = f.order_at(s, z)
            if o < 0:
                failures.append({"j": j, "k": k, "order": o})
    verdict = APPARENT if not failures else NOT_APPARENT
    return SingularityReport(s, verdict, {"failures": failures}, (0, r), "n-th-order")


def is_apparent_special(L, s, tol=DEFAULT_TOL, window=LATTICE_WINDOW):
    """Sufficient criterion for the points ``q^-j s`` (``0 <= j <= n-1``) of an order-``n`` operator.

    Returns ``apparent`` or ``inconclusive``; the criterion is one-sided.
    """
    q, s = L.q, complex(s)
    n = L.order
    if n < 2:
        raise InputError("needs order at least 2")
    z = tol.zero_tol
    a = L.coeffs
    problems = _check_zero_pattern(a[0], s, q, {-j for j in range(n - 1)}, window, z, "a_0")
    problems += _check_zero_pattern(a[n], s, q, {-j for j in range(1, n)}, window, z, f"a_{n}")
    if problems:
        if not orbit_zeros(a[0], s, q, window, z) and not orbit_zeros(a[n], s, q, window, z):
            raise NotSingularError(f"no zero of a_0 or a_{n} on the q-orbit of {s}")
        return SingularityReport(s, INCONCLUSIVE, {"hypotheses": problems}, (0, n - 1), "special")
    failed = []
    # (i) t_k holomorphic at q^-j s away from j = n-k, n-k-1
    for k in range(1, n):
        for j in range(n - 1):
            if j in (n - k, n - k - 1):
                continue
            pt = q ** (-j) * s
            if a[k].vanishing_order(pt, z) < a[0].vanishing_order(pt, z):
                failed.append(f"(i) t_{k} has a pole at q^-{j} s")
    # (ii) t_k(q^(1-n) s) = 0 for 2 <= k <= n-1
    pt = q ** (1 - n) * s
    for k in range(2, n):
        if a[k].vanishing_order(pt, z) < 1:
            failed.append(f"(ii) t_{k}(q^{1 - n} s) != 0")
    # (iii) t_k(q^(k+1-n) x) t_1(q^(1-n) x) - t_{k+1}(q^(k+1-n) x) holomorphic at s
    c1 = q ** (1 - n)
    for k in range(1, n):
        ck = q ** (k + 1 - n)
        num = a[k].scale_arg(ck) * a[1].scale_arg(c1) - L.a(k + 1).scale_arg(ck) * a[0].scale_arg(c1)
        den = a[0].scale_arg(ck) * a[0].scale_arg(c1)
        if RationalFunction(num, den).order_at(s, z) < 0:
            failed.append(f"(iii) 2x2 determinant for k={k} has a pole at s")
    verdict = APPARENT if not failed else INCONCLUSIVE
    return SingularityReport(s, verdict, {"failed": failed}, (0, n - 1), "special")


# ---------------------------------------------------------------------------
# brute force from the definition


def _taylor_shifted(p, center, c, terms):
    """Taylor data of ``u -> p(c (s + u))`` at ``u = 0`` where ``center = c s``."""
    coef, scale = p.taylor(center, terms)
    pw = complex(c) ** np.arange(len(coef))
    out = np.zeros(terms, dtype=complex)
    sc = np.zeros(terms)
    out[: len(coef)] = coef * pw
    sc[: len(coef)] = scale * np.abs(pw)
    return out, sc


def brute_force_apparent(L, s, tol=DEFAULT_TOL, window=LATTICE_WINDOW):
    """Decide regularity of ``A(q^N x) ... A(q^-N' x)`` at ``x = s`` from the definition.

    Each companion factor is written as a polynomial matrix over ``a_0(q^j x)``;
    the polynomial product is expanded in Taylor series at ``s`` (with a running
    bound on the magnitude of the contributing terms) and compared, entry by
    entry, with the total vanishing order of the denominator.
    """
    q, s = L.q, complex(s)
    n = L.order
    z = tol.zero_tol
    a = L.coeffs
    z0 = orbit_zeros(a[0], s, q, window, z)
    zn = orbit_zeros(a[n], s, q, window, z)
    js = set(z0) | set(zn)
    if not js:
        raise NotSingularError(f"{s} is not on the q-orbit of a singular point")
    if max(abs(j) for j in js) >= window:
        return SingularityReport(s, INCONCLUSIVE, {"reason": "window exhausted"}, (window, window), "definition")
    N = max(max(js), 0)
    Np = max(-min(js), 0)
    den_order = sum(z0.values())
    det_order = sum(zn.values()) - den_order
    terms = den_order + 1
    P = [[np.zeros(terms, dtype=complex) for _ in range(n)] for _ in range(n)]
    B = [[np.zeros(terms) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        P[i][i][0] = 1.0
        B[i][i][0] = 1.0
    for j in range(N, -Np - 1, -1):
        c = q**j
        ser = [_taylor_shifted(a[k], c * s, c, terms) for k in range(n + 1)]
        F = [[(np.zeros(terms, dtype=complex), np.zeros(terms)) for _ in range(n)] for _ in range(n)]
        for k in range(1, n + 1):
            v, sc = ser[k]
            F[0][k - 1] = ((-1) ** (k - 1) * v, sc)
        for i in range(1, n):
            F[i][i - 1] = ser[0]
        newP = [[np.zeros(terms, dtype=complex) for _ in range(n)] for _ in range(n)]
        newB = [[np.zeros(terms) for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for col in range(n):
                for l in range(n):
                    fv, fs = F[l][col]
                    if not fs.any():
                        continue
                    newP[i][col] += series_mul(P[i][l], fv, terms)
                    newB[i][col] += series_mul(B[i][l], fs, terms)
        P, B = newP, newB
    bad = []
    for i in range(n):
        for col in range(n):
            first = next((k for k in range(terms) if abs(P[i][col][k]) > z * B[i][col][k]), math.inf)
            if first < den_order:
                bad.append({"entry": (i + 1, col + 1), "order": first - den_order})
    witness = {"denominator_order": den_order, "det_order": det_order, "poles": bad}
    ok = not bad and det_order == 0
    return SingularityReport(s, APPARENT if ok else NOT_APPARENT, witness, (N, Np), "definition")


def apply_oper(L, y):
    """``sum_k (-1)^k a_k(x) y(q^(n-k) x)`` as a polynomial."""
    n = L.order
    out = Polynomial([0.0])
    for k, ak in enumerate(L.coeffs):
        out = out + (-1) ** k * ak * y.scale_arg(L.q ** (n - k))
    return out


def tq_oper(q, a0, a2, y):
    """Second order operator with prescribed ``a_0, a_2`` annihilating the polynomial ``y``.

    ``a_1 = (a_0 y(q^2 x) + a_2 y(x)) / y(q x)``; the returned remainder of this
    division vanishes exactly when the roots of ``y`` satisfy the associated
    Bethe equations.
    """
    num = a0 * y.scale_arg(q * q) + a2 * y
    a1, rem = num.divmod(y.scale_arg(q))
    return ScalarQOper(q, (a0, a1, a2)), rem
