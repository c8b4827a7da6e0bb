"""Numerical kernel: polynomials, rational functions, q-special functions.

All arithmetic is complex double precision. Polynomials store coefficients
lowest degree first. Tolerances are relative to an *evaluation scale*
``sum_k |c_k| |x|^k`` so that a test of the form ``p(x) == 0`` means the same
thing whether ``|x|`` is tiny or huge.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, PoleError, RootFindingError, SingularMatrixError

_EPS = np.finfo(float).eps
LATTICE_WINDOW = 50


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds.

    ``zero_tol`` decides when a value counts as zero relative to its scale,
    ``cluster_tol`` is the relative radius under which two roots/points are
    identified, and ``series_tol`` bounds truncation errors of infinite
    products and power series.
    """

    zero_tol: float = 1e-9
    cluster_tol: float = 1e-4
    series_tol: float = 1e-15

    def __post_init__(self):
        if not (0 < self.zero_tol <= self.cluster_tol):
            raise InputError("need 0 < zero_tol <= cluster_tol")
        if self.series_tol <= 0:
            raise InputError("series_tol must be positive")


DEFAULT_TOL = ToleranceConfig()


def close(a, b, rel):
    """Relative closeness of two complex numbers (scale ``max(1, |a|, |b|)``)."""
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


class Polynomial:
    """Dense univariate polynomial with complex coefficients.

    >>> p = Polynomial([1, 0, 1])     # 1 + x^2
    >>> p(1j)
    0j
    """

    __slots__ = ("coef",)

    def __init__(self, coef):
        c = np.atleast_1d(np.asarray(coef, dtype=complex)).ravel().copy()
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)
        c.setflags(write=False)
        self.coef = c

    # -- constructors -------------------------------------------------
    @classmethod
    def const(cls, c):
        return cls([c])

    @classmethod
    def monomial(cls, k, c=1.0):
        coef = np.zeros(k + 1, dtype=complex)
        coef[k] = c
        return cls(coef)

    @classmethod
    def from_roots(cls, roots, lead=1.0):
        coef = np.array([lead], dtype=complex)
        for r in roots:
            coef = np.convolve(coef, [-complex(r), 1.0])
        return cls(coef)

    @classmethod
    def coerce(cls, other):
        if isinstance(other, Polynomial):
            return other
        return cls([other])

    # -- basic properties ---------------------------------------------
    @property
    def degree(self):
        """Degree, with ``-1`` for the zero polynomial."""
        return -1 if self.is_zero() else len(self.coef) - 1

    @property
    def lead(self):
        return complex(self.coef[-1])

    def is_zero(self):
        return len(self.coef) == 1 and self.coef[0] == 0

    @property
    def coeffs(self):
        """Coefficient list, lowest degree first; empty for the zero polynomial."""
        return [] if self.is_zero() else list(self.coef)

    def norm(self):
        return float(np.max(np.abs(self.coef)))

    def eval_scale(self, x):
        """``sum |c_k| |x|^k``: the natural magnitude for residuals at ``x``."""
        return np.polynomial.polynomial.polyval(np.abs(x), np.abs(self.coef))

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coef)

    def __repr__(self):
        return f"Polynomial({np.array2string(self.coef, precision=6)})"

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self.coef, other.coef)

    __hash__ = None

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, RationalFunction):
            return NotImplemented
        other = Polynomial.coerce(other)
        n = max(len(self.coef), len(other.coef))
        out = np.zeros(n, dtype=complex)
        out[: len(self.coef)] += self.coef
        out[: len(other.coef)] += other.coef
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coef)

    def __sub__(self, other):
        if isinstance(other, RationalFunction):
            return NotImplemented
        return self + (-Polynomial.coerce(other))

    def __rsub__(self, other):
        return Polynomial.coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, RationalFunction):
            return NotImplemented
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coef, other.coef))
        return Polynomial(self.coef * complex(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Polynomial, RationalFunction)):
            return RationalFunction(self) / other
        return Polynomial(self.coef / complex(other))

    def __pow__(self, k):
        out = Polynomial.const(1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def scale_arg(self, c):
        """Return ``x -> p(c x)``."""
        c = complex(c)
        return Polynomial(self.coef * c ** np.arange(len(self.coef)))

    def deriv(self):
        if len(self.coef) == 1:
            return Polynomial([0.0])
        return Polynomial(self.coef[1:] * np.arange(1, len(self.coef)))

    def divmod(self, other):
        """Long division ``self = quot * other + rem`` with ``deg rem < deg other``."""
        other = Polynomial.coerce(other)
        if other.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        num = self.coef.copy()
        den = other.coef
        dn = len(den) - 1
        if len(num) - 1 < dn:
            return Polynomial([0.0]), Polynomial(num)
        quot = np.zeros(len(num) - dn, dtype=complex)
        for k in range(len(quot) - 1, -1, -1):
            quot[k] = num[k + dn] / den[-1]
            num[k : k + dn + 1] -= quot[k] * den
        return Polynomial(quot), Polynomial(num[:dn] if dn > 0 else [0.0])

    def taylor(self, s, terms=None):
        """Taylor coefficients of ``u -> p(s + u)`` and their absolute scales.

        Returns ``(c, scale)`` where ``scale[k] = sum_j binom(j, k)|p_j||s|^(j-k)``
        bounds the magnitude of the terms that produced ``c[k]``.
        """
        n = len(self.coef)
        terms = n if terms is None else min(terms, n)
        c = np.zeros(terms, dtype=complex)
        scale = np.zeros(terms)
        work = self.coef[::-1].copy()
        awork = np.abs(work)
        s = complex(s)
        a_s = abs(s)
        for k in range(terms):
            m = n - k
            for i in range(1, m):
                work[i] += s * work[i - 1]
                awork[i] += a_s * awork[i - 1]
            c[k] = work[m - 1]
            scale[k] = awork[m - 1]
        return c, scale

    def vanishing_order(self, s, tol=DEFAULT_TOL.zero_tol):
        """Multiplicity of ``s`` as a root (``math.inf`` for the zero polynomial)."""
        if self.is_zero():
            return math.inf
        c, scale = self.taylor(s)
        for k in range(len(c)):
            if abs(c[k]) > tol * scale[k]:
                return k
        return len(c) - 1

    def roots(self, tol=DEFAULT_TOL):
        return poly_roots(self, tol)

    # -- serialization --------------------------------------------------
    def to_json(self):
        return [complex_to_json(z) for z in self.coeffs]

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, list):
            raise InputError("polynomial must be a list of [re, im] pairs")
        return cls([complex_from_json(z) for z in data] or [0.0])


def complex_from_json(z):
    if isinstance(z, (int, float)):
        return complex(z)
    if isinstance(z, (list, tuple)) and len(z) == 2:
        return complex(float(z[0]), float(z[1]))
    raise InputError(f"cannot read complex number from {z!r}")


def complex_to_json(z):
    z = complex(z)
    return [float(z.real), float(z.imag)]


# ---------------------------------------------------------------------------
# free-function interface


def poly_eval(p, x):
    return p(x)


def poly_scale_arg(p, c):
    return p.scale_arg(c)


def poly_from_roots(roots, lead=1.0):
    return Polynomial.from_roots(roots, lead)


def vanishing_order(p, s, tol=DEFAULT_TOL.zero_tol):
    return p.vanishing_order(s, tol)


def poly_roots(p, tol=DEFAULT_TOL, max_iter=200):
    """All roots of ``p`` by Aberth-Ehrlich iteration plus Newton polishing.

    Raises :class:`RootFindingError` (with the last iterate attached) when
    the iteration fails to reach a relative residual of ``tol.zero_tol``.
    """
    coef = np.asarray(p.coef)
    n = len(coef) - 1
    if p.is_zero():
        raise InputError("the zero polynomial has no finite root set")
    if n == 0:
        return np.zeros(0, dtype=complex)
    # exact zeros at the origin are split off
    low = int(np.flatnonzero(coef)[0])
    coef = coef[low:]
    m = len(coef) - 1
    zeros = np.zeros(low, dtype=complex)
    if m == 0:
        return zeros
    a = coef / coef[-1]
    if m == 1:
        return np.concatenate([zeros, [-a[0]]])
    da = a[1:] * np.arange(1, m + 1)
    radius = abs(a[0]) ** (1.0 / m)
    z = radius * np.exp(1j * (2 * np.pi * np.arange(m) / m + 0.4))
    absa = np.abs(a)
    polyval = np.polynomial.polynomial.polyval

    def rel_residual(z):
        return np.abs(polyval(z, a)) / np.maximum(polyval(np.abs(z), absa), 1e-300)

    done = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        pz = polyval(z, a)
        dpz = polyval(z, da)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        ssum = inv.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = pz / dpz
            corr = w / (1.0 - w * ssum)
        corr = np.where(np.isfinite(corr), corr, 1e-3 * max(radius, 1.0))
        corr[done] = 0.0
        z = z - corr
        done = done | (rel_residual(z) <= 8 * _EPS) | (np.abs(corr) <= 4 * _EPS * np.maximum(1.0, np.abs(z)))
        if done.all():
            break
    if not (rel_residual(z) <= tol.zero_tol).all():
        raise RootFindingError("Aberth iteration did not converge", partial=z)
    for _ in range(3):
        pz = polyval(z, a)
        dpz = polyval(z, da)
        ok = np.abs(dpz) > 0
        step = np.where(ok, pz / np.where(ok, dpz, 1.0), 0.0)
        trial = z - step
        better = rel_residual(trial) < rel_residual(z)
        z = np.where(better, trial, z)
    return np.concatenate([zeros, z])


# ---------------------------------------------------------------------------
# power series helpers


def series_mul(a, b, terms):
    return np.convolve(a[:terms], b[:terms])[:terms]


def series_inv(b, terms):
    """Reciprocal of a power series with nonzero constant term."""
    b = np.asarray(b, dtype=complex)
    if b[0] == 0:
        raise PoleError("series with vanishing constant term has no reciprocal")
    out = np.zeros(terms, dtype=complex)
    out[0] = 1.0 / b[0]
    for k in range(1, terms):
        lim = min(k, len(b) - 1)
        acc = 0j
        for j in range(1, lim + 1):
            acc += b[j] * out[k - j]
        out[k] = -acc / b[0]
    return out


def _padded(c, terms):
    out = np.zeros(terms, dtype=complex)
    c = np.asarray(c, dtype=complex)[:terms]
    out[: len(c)] = c
    return out


class RationalFunction:
    """Quotient ``num / den`` of polynomials (no gcd reduction).

    Orders at a point are computed as ``ord(num) - ord(den)`` so exact
    cancellations between unreduced factors are handled correctly.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=1.0):
        self.num = Polynomial.coerce(num) if not isinstance(num, Polynomial) else num
        self.den = Polynomial.coerce(den) if not isinstance(den, Polynomial) else den
        if self.den.is_zero():
            raise PoleError("rational function with zero denominator")

    @classmethod
    def coerce(cls, other):
        if isinstance(other, RationalFunction):
            return other
        return cls(Polynomial.coerce(other))

    def __repr__(self):
        return f"RationalFunction({self.num!r} / {self.den!r})"

    # -- evaluation -----------------------------------------------------
    def __call__(self, x, tol=DEFAULT_TOL.zero_tol):
        x = complex(x)
        d = self.den(x)
        if abs(d) <= 1e-12 * self.den.eval_scale(x):
            return self._limit(x, tol)
        return self.num(x) / d

    def _limit(self, x, tol):
        on = self.num.vanishing_order(x, tol)
        od = self.den.vanishing_order(x, tol)
        if on < od:
            raise PoleError(f"pole at {x}")
        if on > od:
            return 0j
        cn, _ = self.num.taylor(x, od + 1)
        cd, _ = self.den.taylor(x, od + 1)
        return cn[od] / cd[od]

    def eval_array(self, xs):
        xs = np.asarray(xs, dtype=complex)
        return self.num(xs) / self.den(xs)

    def order_at(self, s, tol=DEFAULT_TOL.zero_tol):
        return self.num.vanishing_order(s, tol) - self.den.vanishing_order(s, tol)

    def holomorphic_at(self, s, tol=DEFAULT_TOL.zero_tol):
        return self.order_at(s, tol) >= 0

    def value_at_infinity(self):
        dn, dd = self.num.degree, self.den.degree
        if dn > dd:
            raise PoleError("pole at infinity")
        if dn < dd:
            return 0j
        return self.num.lead / self.den.lead

    def taylor_at_zero(self, terms):
        """Coefficients of the expansion at ``x = 0``."""
        return series_mul(_padded(self.num.coef, terms), series_inv(_padded(self.den.coef, terms), terms), terms)

    def taylor_at_infinity(self, terms):
        """Coefficients of the expansion in ``u = 1/x`` at ``x = infinity``."""
        d = max(self.num.degree, self.den.degree)
        if self.num.degree > self.den.degree:
            raise PoleError("pole at infinity")
        n_rev = _padded(self.num.coef, d + 1)[::-1]
        d_rev = _padded(self.den.coef, d + 1)[::-1]
        return series_mul(_padded(n_rev, terms), series_inv(_padded(d_rev, terms), terms), terms)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        o = RationalFunction.coerce(other)
        if o.den == self.den:
            return RationalFunction(self.num + o.num, self.den)
        return RationalFunction(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den)

    def __sub__(self, other):
        return self + (-RationalFunction.coerce(other))

    def __rsub__(self, other):
        return RationalFunction.coerce(other) - self

    def __mul__(self, other):
        o = RationalFunction.coerce(other)
        return RationalFunction(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = RationalFunction.coerce(other)
        if o.num.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFunction(self.num * o.den, self.den * o.num)

    def __rtruediv__(self, other):
        return RationalFunction.coerce(other) / self

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            return RationalFunction(self.den ** (-k), self.num ** (-k))
        return RationalFunction(self.num**k, self.den**k)

    def scale_arg(self, c):
        return RationalFunction(self.num.scale_arg(c), self.den.scale_arg(c))

    def to_json(self):
        return {"num": self.num.to_json(), "den": self.den.to_json()}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, dict):
            return cls(Polynomial.from_json(data["num"]), Polynomial.from_json(data.get("den", [[1, 0]])))
        return cls(Polynomial.from_json(data))


def rat_eval(r, x):
    return r(x)


def rat_holomorphic_at(r, s, tol=DEFAULT_TOL.zero_tol):
    return r.holomorphic_at(s, tol)


# ---------------------------------------------------------------------------
# q-special functions


def _check_q(q):
    q = complex(q)
    if not (0 < abs(q) < 1):
        raise InputError(f"need 0 < |q| < 1, got |q| = {abs(q)}")
    return q


def default_truncation(q, series_tol=DEFAULT_TOL.series_tol):
    q = _check_q(q)
    return min(int(math.ceil(math.log(series_tol) / math.log(abs(q)))), 10000)


@dataclass(frozen=True)
class QSpecialContext:
    """Base ``q`` together with the truncation length of infinite products."""

    q: complex
    truncation_order: int

    @classmethod
    def for_q(cls, q, series_tol=DEFAULT_TOL.series_tol):
        return cls(_check_q(q), default_truncation(q, series_tol))

    def qpoch(self, a):
        return qpochhammer_inf(a, self.q, self.truncation_order)

    def theta(self, x):
        return theta_q(x, self.q, self.truncation_order)

    def e(self, c, x):
        return e_scalar(c, x, self.q, self.truncation_order)


def qpochhammer_inf(a, q, truncation=None):
    """``(a; q)_inf = prod_{k >= 0} (1 - a q^k)``.

    The number of factors is the context truncation plus however many are
    needed to bring ``|a q^k|`` below one, so large ``|a|`` stays accurate.
    """
    q = _check_q(q)
    T = default_truncation(q) if truncation is None else int(truncation)
    a = complex(a)
    extra = 0
    if abs(a) > 1:
        extra = int(math.ceil(math.log(abs(a)) / -math.log(abs(q))))
    k = np.arange(T + extra)
    return complex(np.prod(1.0 - a * q**k))


def theta_q(x, q, truncation=None):
    """Jacobi theta function ``(x; q)_inf (q/x; q)_inf (q; q)_inf``."""
    x = complex(x)
    if x == 0:
        raise PoleError("theta_q has an essential singularity at 0")
    return qpochhammer_inf(x, q, truncation) * qpochhammer_inf(q / x, q, truncation) * qpochhammer_inf(q, q, truncation)


def e_scalar(c, x, q, truncation=None):
    """``e_c(x) = theta(x) / theta(c x)``, which satisfies ``e_c(q x) = c e_c(x)``."""
    num = theta_q(x, q, truncation)
    den = theta_q(complex(c) * complex(x), q, truncation)
    if abs(den) <= 1e-14 * max(1.0, abs(num)):
        raise PoleError(f"e_c has a pole at x = {x}")
    return num / den


def q_lattice_exponent(z, q, window=LATTICE_WINDOW, rel=1e-9):
    """Return ``k`` with ``z = q^k`` (``|k| <= window``), or ``None``."""
    z = complex(z)
    q = complex(q)
    if z == 0:
        return None
    est = math.log(abs(z)) / math.log(abs(q))
    for k in sorted(range(int(math.floor(est)) - 1, int(math.ceil(est)) + 2), key=lambda k: abs(k - est)):
        if abs(k) <= window and abs(z - q**k) <= rel * max(abs(z), abs(q**k)):
            return k
    return None


def same_q_orbit(a, b, q, window=LATTICE_WINDOW, rel=1e-9):
    """``k`` with ``a = q^k b`` or ``None``."""
    if b == 0 or a == 0:
        return 0 if a == b else None
    return q_lattice_exponent(complex(a) / complex(b), q, window, rel)


# ---------------------------------------------------------------------------
# dense linear algebra (thin wrappers over LAPACK with explicit checks)


def dense_solve(A, b, cond_max=1e14):
    A = np.asarray(A, dtype=complex)
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularMatrixError(f"matrix is numerically singular (cond = {cond:.3e})")
    return np.linalg.solve(A, np.asarray(b, dtype=complex))


def dense_det(A):
    return complex(np.linalg.det(np.asarray(A, dtype=complex)))


def eig2(C):
    """Closed-form eigen-decomposition of a 2x2 matrix.

    Returns ``(values, G)`` with ``C = G diag(values) G^{-1}``; columns of
    ``G`` follow :func:`normalize_columns`.
    """
    C = np.asarray(C, dtype=complex)
    if C.shape != (2, 2):
        raise InputError("eig2 expects a 2x2 matrix")
    tr = C[0, 0] + C[1, 1]
    det = C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0]
    disc = cmath.sqrt(tr * tr / 4 - det)
    vals = np.array([tr / 2 + disc, tr / 2 - disc])
    if abs(vals[0]) < abs(vals[1]):
        vals = vals[::-1]
    vals[1] = det / vals[0] if vals[0] != 0 else vals[1]
    G = np.zeros((2, 2), dtype=complex)
    for j, lam in enumerate(vals):
        v1 = np.array([C[0, 1], lam - C[0, 0]])
        v2 = np.array([lam - C[1, 1], C[1, 0]])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        if np.linalg.norm(v) == 0:
            v = np.eye(2)[j]
        G[:, j] = v
    return vals, normalize_columns(G)


def normalize_columns(G):
    """Unit 2-norm columns whose first nonzero entry is real and positive."""
    G = np.array(G, dtype=complex)
    for j in range(G.shape[1]):
        col = G[:, j] / np.linalg.norm(G[:, j])
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            ph = col[idx[0]] / abs(col[idx[0]])
            col = col / ph
        G[:, j] = col
    return G


def eig_normalized(C):
    """Eigenvalues and normalized eigenvector matrix of a square matrix."""
    C = np.asarray(C, dtype=complex)
    if C.shape == (2, 2):
        return eig2(C)
    vals, G = np.linalg.eig(C)
    return vals, normalize_columns(G)
