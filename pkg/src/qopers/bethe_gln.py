"""Rank-``n`` Miura q-opers built from toroidal gl_n Bethe roots.

Colors are ``0..n-1`` (cyclic); color ``n`` is identified with color ``0``.
All coefficients are taken with respect to the shift ``x -> q_2 x``,
``q_1 = d / q``, ``q_2 = q^2``, ``q_3 = 1 / (q d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import BetheViolationError, ConvergenceError, GenericityError, InputError
from .numkernel import DEFAULT_TOL, Polynomial, RationalFunction, complex_from_json, complex_to_json
from .qoper import APPARENT, ScalarQOper, brute_force_apparent, is_apparent_nth, is_apparent_special
from .solvers import newton

MAX_RANK = 6


def _prod(xs):
    out = 1 + 0j
    for x in xs:
        out *= x
    return out


@dataclass
class GlnBetheData:
    """Twists, normalized weights ``Psi~_nu = G_nu / F_nu`` and roots per color."""

    n: int
    q: complex
    d: complex
    p: list
    F: list
    G: list
    roots: list

    def __post_init__(self):
        if self.n < 2:
            raise InputError("rank must be at least 2")
        for name in ("p", "F", "G", "roots"):
            if len(getattr(self, name)) != self.n:
                raise InputError(f"{name} needs one entry per color")
        self.q = complex(self.q)
        self.d = complex(self.d)
        self.p = [complex(x) for x in self.p]
        self.F = [Polynomial.coerce(f) for f in self.F]
        self.G = [Polynomial.coerce(g) for g in self.G]
        self.roots = [[complex(z) for z in r] for r in self.roots]
        for f in self.F:
            if abs(f.lead - 1) > 1e-12:
                raise InputError("F polynomials must be monic")

    @property
    def q1(self):
        return self.d / self.q

    @property
    def q2(self):
        return self.q * self.q

    @property
    def q3(self):
        return 1.0 / (self.q * self.d)

    @property
    def l(self):
        return [len(r) for r in self.roots]

    def y(self, nu):
        return Polynomial.from_roots(self.roots[nu % self.n])

    def psi_tilde(self, nu):
        nu %= self.n
        return RationalFunction(self.G[nu], self.F[nu])

    def psi_prefactor(self, nu):
        """``p_nu q_2^{-l_nu + (l_{nu-1} + l_{nu+1})/2}`` with ``q_2^{1/2} = q``."""
        l, n = self.l, self.n
        return self.p[nu % n] * self.q ** (-2 * l[nu % n] + l[(nu - 1) % n] + l[(nu + 1) % n])

    def psi(self, nu):
        """Un-normalized weight ``Psi_nu``."""
        t = self.psi_tilde(nu)
        return RationalFunction(t.num * self.psi_prefactor(nu), t.den)

    def with_roots(self, roots):
        return GlnBetheData(self.n, self.q, self.d, self.p, self.F, self.G, roots)

    def to_json(self):
        return {
            "n": self.n,
            "q": complex_to_json(self.q),
            "d": complex_to_json(self.d),
            "p": [complex_to_json(x) for x in self.p],
            "F": [f.to_json() for f in self.F],
            "G": [g.to_json() for g in self.G],
            "roots": [[complex_to_json(z) for z in r] for r in self.roots],
        }

    @classmethod
    def from_json(cls, d):
        try:
            return cls(
                int(d["n"]),
                complex_from_json(d["q"]),
                complex_from_json(d["d"]),
                [complex_from_json(x) for x in d["p"]],
                [Polynomial.from_json(f) for f in d["F"]],
                [Polynomial.from_json(g) for g in d["G"]],
                [[complex_from_json(z) for z in r] for r in d["roots"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed gl_n data: {exc}") from exc

    @classmethod
    def random(cls, n, l, rng, degF=None, q_range=(0.3, 0.7)):
        """Generic data with random roots (not solving any Bethe equation)."""

        def unit(lo, hi, size=None):
            return rng.uniform(lo, hi, size) * np.exp(2j * np.pi * rng.uniform(size=size))

        if degF is None:
            degF = [1] * n
        F = [Polynomial.from_roots(list(unit(0.5, 2.0, k))) for k in degF]
        G = [Polynomial.from_roots(list(unit(0.5, 2.0, k)), lead=unit(0.5, 2.0)) for k in degF]
        roots = [list(unit(0.5, 2.0, k)) for k in l]
        return cls(n, unit(*q_range), unit(0.8, 1.25), list(unit(0.5, 2.0, n)), F, G, roots)


# ---------------------------------------------------------------------------
# Miura factors and the coefficients t_k


def _shifted(p, c):
    return p.scale_arg(c)


def miura_factor(data, i):
    """``b_i`` for ``1 <= i <= n`` from the explicit product formula (``y_n = y_0``)."""
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    if not 1 <= i <= n:
        raise InputError("factor index out of range")
    if i == 1:
        # the general formula carries a cancelling y_0 pair here
        y1 = data.y(1)
        return RationalFunction(y1.scale_arg(q2), y1)
    num = Polynomial([1.0])
    den = Polynomial([1.0])
    for nu in range(1, i):
        c = q1 ** (nu - 1) * q2 ** (i - 1)
        num = num * _shifted(data.G[nu], c)
        den = den * _shifted(data.F[nu], c)
    ya, yb, y0 = data.y(i - 1), data.y(i), data.y(0)
    num = num * _shifted(ya, q3 ** (-i + 2)) * _shifted(yb, q3 ** (-i + 1) * q2) * _shifted(y0, q3 * q2**i)
    den = den * _shifted(ya, q3 ** (-i + 2) * q2) * _shifted(yb, q3 ** (-i + 1)) * _shifted(y0, q3 * q2 ** (i - 1))
    return RationalFunction(num, den)


def miura_factors(data):
    return [miura_factor(data, i) for i in range(1, data.n + 1)]


def recursion_rhs(data, i, x):
    """Right side of ``b_{i+1}(q_2^{-1} x) / b_i(x)``."""
    q1, q2, q3 = data.q1, data.q2, data.q3
    ym, yi, yp = data.y(i - 1), data.y(i), data.y(i + 1)
    c = q3 ** (-i + 1)
    return (
        data.psi_tilde(i)(c * x)
        * ym(c / q1 * x)
        / ym(q3 ** (-i + 2) * x)
        * yi(c / q2 * x)
        / yi(c * q2 * x)
        * yp(q3 ** (-i) * x)
        / yp(c * q1 * x)
    )


def recursion_audit(data, b=None, samples=10, seed=0):
    """Largest relative mismatch of the ratio recursion at random points."""
    if b is None:
        b = miura_factors(data)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in rng.uniform(0.5, 2.0, samples) * np.exp(2j * np.pi * rng.uniform(size=samples)):
        for i in range(1, data.n):
            lhs = b[i](x / data.q2) / b[i - 1](x)
            rhs = recursion_rhs(data, i, x)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst


def _t_terms(n, k):
    """Subsets and shift exponents: ``b_{i_p}`` is evaluated at ``q_2^{n - i_p - k + p} x``."""
    out = []
    for sub in combinations(range(1, n + 1), k):
        out.append([(i, n - i - k + p) for p, i in enumerate(sub, start=1)])
    return out


def miura_t_values(b, q2, k, x):
    """``t_k(x)`` evaluated numerically from a list of factor callables."""
    n = len(b)
    if n > MAX_RANK:
        raise InputError(f"subset enumeration is capped at n = {MAX_RANK}")
    x = np.asarray(x, dtype=complex)
    total = np.zeros_like(x)
    for term in _t_terms(n, k):
        val = np.ones_like(x)
        for i, e in term:
            z = q2**e * x
            val = val * (b[i - 1].num(z) / b[i - 1].den(z))
        total = total + val
    return total


def miura_t(data, k, b=None):
    """``t_k`` as an unreduced rational function (subset sum)."""
    n = data.n
    if n > MAX_RANK:
        raise InputError(f"subset enumeration is capped at n = {MAX_RANK}")
    if not 0 <= k <= n:
        raise InputError("k must lie in 0..n")
    if b is None:
        b = miura_factors(data)
    out = None
    for term in _t_terms(n, k):
        val = RationalFunction(Polynomial([1.0]), Polynomial([1.0]))
        for i, e in term:
            val = val * b[i - 1].scale_arg(data.q2**e)
        out = val if out is None else out + val
    return out if out is not None else RationalFunction(Polynomial([1.0]), Polynomial([1.0]))


def apply_miura(b, q2, f, x):
    """``((s - b_n) ... (s - b_1) f)(x)`` by iterated application."""

    def step(g, bi):
        return lambda z: g(q2 * z) - bi(z) * g(z)

    g = f
    for bi in b:
        g = step(g, bi)
    return g(x)


# ---------------------------------------------------------------------------
# coefficients of the cleared operator


def top_coefficient(data):
    """``a_0`` as the displayed product."""
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    y0 = data.y(0)
    out = Polynomial([1.0])
    for nu in range(1, n):
        for i in range(nu + 1, n + 1):
            out = out * data.F[nu].scale_arg(q1 ** (nu - 1) * q2 ** (i - 1))
    for j in range(1, n):
        out = out * y0.scale_arg(q3 * q2**j)
    return out * y0.scale_arg(q3 ** (-n + 1))


def bottom_coefficient(data):
    """``a_n`` as the displayed product."""
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    y0 = data.y(0)
    out = Polynomial([1.0])
    for nu in range(1, n):
        for i in range(nu + 1, n + 1):
            out = out * data.G[nu].scale_arg(q1 ** (nu - 1) * q2 ** (i - 1))
    for j in range(1, n):
        out = out * y0.scale_arg(q3 * q2 ** (j + 1))
    return out * y0.scale_arg(q3 ** (-n + 1) * q2)


def _interpolate_at(f, degree, radius, N):
    j = np.arange(N)
    phase = np.exp(2j * np.pi * (j + 0.5) / N)
    c = np.fft.fft(f(radius * phase)) / N
    coeff = c / (radius**j * np.exp(1j * np.pi * j / N))
    tail = np.linalg.norm(c[degree + 1 :]) / max(np.linalg.norm(c), 1e-300)
    return coeff[: degree + 1], np.abs(c[: degree + 1]).max(), float(tail)


def _interpolate(f, degree, radii):
    """Coefficients of ``f`` from FFTs on several circles.

    Coefficient ``k`` is taken from the circle where its roundoff error,
    about ``eps max_j |c_j| r^j / r^k``, is smallest. The tail is the
    largest relative mass beyond ``degree`` seen on any circle; it vanishes
    only for a polynomial of that degree.
    """
    N = 32
    while N < 2 * (degree + 1):
        N *= 2
    k = np.arange(degree + 1)
    best = np.zeros(degree + 1, dtype=complex)
    err = np.full(degree + 1, np.inf)
    tail = 0.0
    for r in radii:
        coeff, big, t = _interpolate_at(f, degree, r, N)
        e = big / r**k
        better = e < err
        best[better] = coeff[better]
        err[better] = e[better]
        tail = max(tail, t)
    return Polynomial(best), tail


def _radii(a0, count=7):
    mags = np.abs(a0.roots()) if a0.degree > 0 else np.array([1.0])
    mags = mags[mags > 0]
    lo, hi = (mags.min() / 2, mags.max() * 2) if mags.size else (0.5, 2.0)
    # circles avoid the exact root moduli by a small stagger
    return list(np.geomspace(lo, hi, count) * 1.0137)


@dataclass
class MiuraOper:
    b: list
    L: ScalarQOper
    clearing_residuals: list = field(default_factory=list)


def interior_residuals(data):
    """Normalized residuals of the equations of colors ``1..n-1`` (in color order)."""
    return np.concatenate([color_residuals(data, nu) for nu in range(1, data.n)])


def color_residuals(data, nu):
    """``LHS / (-Psi_nu) - 1`` for every root of color ``nu``."""
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    yn, ym, yp = data.y(nu), data.y(nu - 1), data.y(nu + 1)
    pref = data.psi_prefactor(nu)
    psi = data.psi(nu)
    out = []
    for s in data.roots[nu % n]:
        den = yn(s / q2) * ym(s / q1) * yp(s / q3)
        if abs(den) < 1e-14 or abs(psi.num(s)) < 1e-14 or abs(psi.den(s)) < 1e-14:
            raise GenericityError(f"degenerate factor in the color-{nu} equation")
        lhs = pref * yn(q2 * s) * ym(q3 * s) * yp(q1 * s) / den
        out.append(lhs / (-psi(s)) - 1.0)
    return np.array(out, dtype=complex)


def assemble_gln_oper(data, tol=1e-8):
    """Clear ``a_k = a_0 t_k`` to polynomials by interpolation on circles.

    The recorded residual per ``k`` is the relative coefficient mass beyond
    ``deg a_0``; above ``tol`` a :class:`BetheViolationError` names the
    colors whose equations fail.
    """
    b = miura_factors(data)
    a0 = top_coefficient(data)
    an = bottom_coefficient(data)
    deg = a0.degree
    radii = _radii(a0)
    coeffs = [a0]
    res = [0.0]
    for k in range(1, data.n):
        ak, tail = _interpolate(lambda x: a0(x) * miura_t_values(b, data.q2, k, x), deg, radii)
        coeffs.append(ak)
        res.append(tail)
    coeffs.append(an)
    res.append(0.0)
    if max(res) > tol:
        bad = [nu for nu in range(1, data.n) if np.max(np.abs(color_residuals(data, nu)), initial=0.0) > tol]
        raise BetheViolationError(f"coefficients do not clear to polynomials (colors {bad}, remainder {max(res):.2e})")
    return MiuraOper(b, ScalarQOper(data.q2, tuple(coeffs)), res)


def product_identity_residual(data, op=None):
    """``a_0 t_n - a_n`` relative to ``a_n`` at a few points."""
    if op is None:
        op = assemble_gln_oper(data)
    rng = np.random.default_rng(1)
    x = rng.uniform(0.5, 2.0, 6) * np.exp(2j * np.pi * rng.uniform(size=6))
    a0, an = op.L.coeffs[0], op.L.coeffs[-1]
    tn = miura_t_values(op.b, data.q2, data.n, x)
    return float(np.max(np.abs(a0(x) * tn - an(x)) / np.abs(an(x))))


# ---------------------------------------------------------------------------
# apparent points and the color-0 rewrite


def apparent_points(data):
    """Orbit points expected apparent for every color-0 root, grouped per root."""
    n, q2, q3 = data.n, data.q2, data.q3
    out = []
    for s0 in data.roots[0]:
        app1 = [q3 ** (-1) * q2 ** (-j) * s0 for j in range(1, n + 1)]
        app2 = [q3 ** (n - 1) * s0, q3 ** (n - 1) * q2 ** (-1) * s0]
        out.append({"s0": s0, "app1": app1, "app2": app2})
    return out


def gln_apparent_check(op, data, tol=DEFAULT_TOL, window=20, brute=True):
    """Criterion verdicts at both families of points, optionally re-confirmed by brute force."""
    L = op.L
    n, q2, q3 = data.n, data.q2, data.q3
    report = []
    for s0 in data.roots[0]:
        s1 = q3 ** (-1) * q2 ** (-1) * s0
        r1 = is_apparent_special(L, s1, tol, window)
        s2 = q3 ** (n - 1) * s0
        r2 = is_apparent_nth(L, s2, 1, 0, tol, window)
        entry = {"s0": s0, "app1": r1.classification, "app2": r2.classification}
        if brute:
            entry["app1_brute"] = brute_force_apparent(L, s1, tol, window).classification
            entry["app2_brute"] = brute_force_apparent(L, s2, tol, window).classification
        entry["apparent"] = all(v == APPARENT for k, v in entry.items() if k.startswith("app"))
        report.append(entry)
    return report


def raw_bae0_residual(data):
    """Residuals of the color-0 equations written with ``Psi~_0``."""
    return color_residuals(data, 0)


def elimination_audit(op, data):
    """Mismatch of the two identities used to eliminate ``y_1`` and ``y_{n-1}``."""
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    y1, yl, y0 = data.y(1), data.y(n - 1), data.y(0)
    worst = 0.0
    for s in data.roots[0]:
        t1 = miura_t_values(op.b, q2, 1, np.array([q3 ** (-1) * q2 ** (-n) * s]))[0]
        e1 = y1(s / q3) / y1(q1 * s)
        tl = miura_t_values(op.b, q2, n - 1, np.array([q3 ** (n - 1) * q2 ** (-1) * s]))[0]
        w = _prod(data.psi_tilde(j)(q1 ** (-n + j) * q2 ** (-n + k) * s) for j in range(1, n) for k in range(j + 1, n))
        el = w * yl(s / q1) / yl(q3 * s) * y0(q1 ** (-n) * q2 ** (-1) * s) / y0(q3**n * q2 * s)
        worst = max(worst, abs(t1 - e1) / abs(e1), abs(tl - el) / abs(el))
    return worst


def bae0_rewrite_residual(op, data):
    """Residuals of the color-0 equation with ``y_1, y_{n-1}`` eliminated through ``a_1, a_{n-1}``.

    Returns ``(rewritten, raw)``.
    """
    n, q1, q2, q3 = data.n, data.q1, data.q2, data.q3
    a = op.L.coeffs
    y0 = data.y(0)
    out = []
    for s in data.roots[0]:
        z1 = q3 ** (-1) * q2 ** (-n) * s
        z2 = q3 ** (n - 1) * q2 ** (-1) * s
        d1, d2 = a[1](z1), a[n - 1](z2)
        if abs(d1) < 1e-14 * a[1].eval_scale(z1) or abs(d2) < 1e-14 * a[n - 1].eval_scale(z2):
            raise GenericityError("a_1 or a_{n-1} vanishes at an evaluation point")
        lhs = a[0](z1) / d1 * a[0](z2) / d2 * y0(q2 * s) / y0(s / q2) * y0(q1 ** (-n) * q2 ** (-1) * s) / y0(q3**n * q2 * s)
        rhs = -data.psi_tilde(0)(s) / _prod(data.psi_tilde(j)(q3 ** (n - j) * q2 ** (k - j) * s) for j in range(1, n) for k in range(j + 1, n))
        out.append(lhs / rhs - 1.0)
    return np.array(out, dtype=complex), raw_bae0_residual(data)


# ---------------------------------------------------------------------------
# solving and counting


def solve_colors(data, colors, rng, starts=200, tol=1e-13):
    """Damped multi-start Newton for the roots of the given colors, others fixed."""
    colors = sorted(set(colors))
    sizes = [data.l[c] for c in colors]

    def unpack(z):
        roots = [list(r) for r in data.roots]
        pos = 0
        for c, m in zip(colors, sizes):
            roots[c] = list(z[pos : pos + m])
            pos += m
        return data.with_roots(roots)

    def f(z):
        d = unpack(z)
        return np.concatenate([color_residuals(d, c) for c in colors])

    total = sum(sizes)
    for _ in range(starts):
        z0 = rng.uniform(0.5, 2.0, total) * np.exp(2j * np.pi * rng.uniform(size=total))
        try:
            z = newton(f, z0, tol=tol, max_iter=80)
        except (ConvergenceError, GenericityError, ZeroDivisionError, FloatingPointError):
            continue
        d = unpack(z)
        if roots_generic(d):
            return d
    raise ConvergenceError("no non-degenerate solution found")


def roots_generic(data, rel=1e-6, window=6):
    """Distinct nonzero roots, no two on a common ``q_2^Z`` orbit."""
    allr = [z for r in data.roots for z in r]
    if any(abs(z) < 1e-8 for z in allr):
        return False
    for i, a in enumerate(allr):
        for b in allr[i + 1 :]:
            for k in range(-window, window + 1):
                if abs(a - data.q2**k * b) < rel * abs(a):
                    return False
    return True


def counting_report(n, l0, degF):
    """Unknown and equation counts for the rank-``n`` apparent-point system."""
    degF = list(degF)
    if len(degF) != n - 1:
        raise InputError("degF needs n - 1 entries")
    unknowns = (n - 1) * (n * l0 + sum((n - j) * degF[j - 1] for j in range(1, n)) - 1) + l0
    equations = n * (n - 1) * l0 + l0
    return {"unknowns": unknowns, "equations": equations, "match": unknowns == equations}
