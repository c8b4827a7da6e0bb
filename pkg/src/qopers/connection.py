"""Birkhoff connection data of regular singular q-difference systems.

For ``Y(qx) = A(x) Y(x)`` with ``A`` holomorphic and invertible at ``0`` and
``infinity`` there are unique solutions

    Y_0(x)   = Yhat_0(x) e_{A_0}(x),     Yhat_0(0)   = I,
    Y_inf(x) = Yhat_inf(x) e_{A_inf}(x), Yhat_inf(inf) = I,

and the connection matrix ``M = Y_0^{-1} Y_inf`` is q-elliptic. Its central
part ``Mhat = Yhat_0^{-1} Yhat_inf`` is regular at apparent singularities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InputError, PoleError, QOperError, ResonanceError, SingularMatrixError
from .numkernel import (
    DEFAULT_TOL,
    LATTICE_WINDOW,
    Polynomial,
    QSpecialContext,
    RationalFunction,
    complex_from_json,
    complex_to_json,
    eig_normalized,
    q_lattice_exponent,
    same_q_orbit,
)
from .qoper import ScalarQOper, delta_r_at

DEFAULT_ORDER = 60


class SemiSimplicityError(ResonanceError):
    """``A_0`` or ``A_inf`` is not diagonalizable (numerically)."""


class GeometryError(QOperError):
    exit_code = 68


def det_rational(entries):
    """Determinant of a small matrix of rational functions by permutation expansion."""
    n = len(entries)
    total = RationalFunction(0.0)
    for perm in itertools.permutations(range(n)):
        sign = 1
        for i in range(n):
            for j in range(i + 1, n):
                if perm[i] > perm[j]:
                    sign = -sign
        term = RationalFunction(float(sign))
        for i in range(n):
            term = term * entries[i][perm[i]]
        total = total + term
    return total


@dataclass
class RegularSystem:
    """``Y(qx) = A(x) Y(x)`` with ``A`` given entrywise by rational functions."""

    q: complex
    A: list
    oper: ScalarQOper | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.q = complex(self.q)
        if not (0 < abs(self.q) < 1):
            raise InputError("need 0 < |q| < 1")
        n = len(self.A)
        if n == 0 or any(len(row) != n for row in self.A):
            raise InputError("A must be a non-empty square matrix")
        self.A = [[RationalFunction.coerce(e) for e in row] for row in self.A]

    @classmethod
    def from_oper(cls, L):
        n = L.order
        zero = RationalFunction(0.0)
        rows = [[(-1) ** (k - 1) * L.t(k) for k in range(1, n + 1)]]
        for i in range(1, n):
            rows.append([RationalFunction(1.0) if j == i - 1 else zero for j in range(n)])
        return cls(L.q, rows, oper=L)

    @property
    def dim(self):
        return len(self.A)

    @property
    def A0(self):
        return np.array([[e(0.0) for e in row] for row in self.A], dtype=complex)

    @property
    def Ainf(self):
        return np.array([[e.value_at_infinity() for e in row] for row in self.A], dtype=complex)

    def __call__(self, x):
        x = complex(x)
        if self.oper is not None:
            a = self.oper.coeffs
            a0 = a[0](x)
            if abs(a0) <= 1e-13 * a[0].eval_scale(x):
                raise PoleError(f"A has a pole at {x}")
            n = self.dim
            M = np.zeros((n, n), dtype=complex)
            for k in range(1, n + 1):
                M[0, k - 1] = (-1) ** (k - 1) * a[k](x) / a0
            M[np.arange(1, n), np.arange(n - 1)] = 1.0
            return M
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i, row in enumerate(self.A):
            for j, e in enumerate(row):
                d = e.den(x)
                if abs(d) <= 1e-13 * e.den.eval_scale(x):
                    raise PoleError(f"A has a pole at {x}")
                out[i, j] = e.num(x) / d
        return out

    def det(self):
        if "det" not in self._cache:
            if self.oper is not None:
                self._cache["det"] = self.oper.t(self.oper.order)
            else:
                self._cache["det"] = det_rational(self.A)
        return self._cache["det"]

    def singular_sets(self, tol=DEFAULT_TOL):
        """``(S_plus, S_minus)``: poles of ``A`` and of ``A^{-1}`` away from 0."""
        if "sing" in self._cache:
            return self._cache["sing"]
        z = tol.zero_tol
        cands = []
        for row in self.A:
            for e in row:
                if e.den.degree > 0:
                    cands.extend(e.den.roots(tol))
        splus = _dedup([c for c in cands if abs(c) > 1e-12 and any(e.order_at(c, z) < 0 for row in self.A for e in row)], tol)
        d = self.det()
        minus = d.num.roots(tol) if d.num.degree > 0 else []
        sminus = _dedup([c for c in minus if abs(c) > 1e-12 and d.order_at(c, z) > 0], tol)
        self._cache["sing"] = (splus, sminus)
        return splus, sminus

    def to_json(self):
        return {"kind": "matrix", "q": complex_to_json(self.q), "A": [[e.to_json() for e in row] for row in self.A]}


def _dedup(points, tol):
    out = []
    for p in points:
        if all(abs(p - o) > tol.cluster_tol * max(1.0, abs(p)) for o in out):
            out.append(complex(p))
    return out


def system_from_json(data):
    """Read a system description: a scalar operator, an explicit matrix, or a hypergeometric family."""
    kind = data.get("kind")
    if kind is None:
        kind = "scalar" if "coeffs" in data else "matrix"
    if kind == "scalar":
        return RegularSystem.from_oper(ScalarQOper.from_json(data))
    if kind == "matrix":
        try:
            A = [[RationalFunction.from_json(e) for e in row] for row in data["A"]]
            return RegularSystem(complex_from_json(data["q"]), A)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed system: {exc}") from exc
    if kind == "hypergeometric":
        return build_appendixB_system(HyperGeoBParams.from_json(data))
    raise InputError(f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# regularity and non-resonance


def _window_ratio_hits(vals, q, window):
    """Pairs ``(i, j, k)`` with ``lambda_i = q^k lambda_j``, ``i < j``."""
    hits = []
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            k = q_lattice_exponent(vals[i] / vals[j], q, window, rel=1e-9)
            if k is not None:
                hits.append((i, j, k))
    return hits


def check_regular_nonresonant(sys, window=LATTICE_WINDOW, tol=DEFAULT_TOL):
    """Invertibility and strong non-resonance of ``A_0``, ``A_inf`` plus the sets ``S_+-``."""
    report = {"ok": True, "problems": []}
    for name, get in (("A0", lambda: sys.A0), ("Ainf", lambda: sys.Ainf)):
        try:
            C = get()
        except PoleError as exc:
            report["ok"] = False
            report["problems"].append(f"{name}: A is not holomorphic ({exc})")
            continue
        vals = np.linalg.eigvals(C)
        report[name + "_eigenvalues"] = [complex(v) for v in vals]
        if np.min(np.abs(vals)) <= 1e-12 * max(1.0, np.max(np.abs(vals))):
            report["ok"] = False
            report["problems"].append(f"{name} is not invertible")
            continue
        hits = _window_ratio_hits(vals, sys.q, window)
        if hits:
            report["ok"] = False
            report["problems"].append(f"{name} eigenvalue ratios in q^Z: {hits}")
    try:
        splus, sminus = sys.singular_sets(tol)
    except QOperError as exc:  # pragma: no cover - defensive
        splus, sminus = [], []
        report["problems"].append(str(exc))
    report["S_plus"] = splus
    report["S_minus"] = sminus
    return report


# ---------------------------------------------------------------------------
# canonical series


@dataclass
class SeriesSolution:
    base: str
    order: int
    coeff_mats: list
    conv_radius_est: float
    residuals: list = field(default_factory=list)

    def __call__(self, x):
        """Evaluate the truncated series (in ``x`` at zero, ``1/x`` at infinity)."""
        u = complex(x) if self.base == "zero" else 1.0 / complex(x)
        out = np.zeros_like(self.coeff_mats[0])
        for Y in reversed(self.coeff_mats):
            out = out * u + Y
        return out


def _expansion(sys, base, terms):
    n = sys.dim
    mats = np.zeros((terms, n, n), dtype=complex)
    for i, row in enumerate(sys.A):
        for j, e in enumerate(row):
            mats[:, i, j] = e.taylor_at_zero(terms) if base == "zero" else e.taylor_at_infinity(terms)
    return mats


def _root_test_radius(mats):
    M = len(mats) - 1
    vals = []
    for j in range(max(1, M // 2), M + 1):
        nrm = np.linalg.norm(mats[j])
        if nrm > 0:
            vals.append(nrm ** (1.0 / j))
    if not vals:
        return math.inf
    return 1.0 / max(vals)


def canonical_series(sys, base="zero", M=DEFAULT_ORDER, cond_max=1e12):
    """Coefficients of ``Yhat_0`` (``base='zero'``) or ``Yhat_inf`` (``base='infinity'``)."""
    if base not in ("zero", "infinity"):
        raise InputError("base must be 'zero' or 'infinity'")
    key = ("series", base, M)
    if key in sys._cache:
        return sys._cache[key]
    n = sys.dim
    q = sys.q
    Ak = _expansion(sys, base, M + 1)
    C = Ak[0]
    eye = np.eye(n)
    Y = [np.eye(n, dtype=complex)]
    residuals = []
    for j in range(1, M + 1):
        rhs = sum(Ak[k] @ Y[j - k] for k in range(1, j + 1))
        qj = q**j if base == "zero" else q ** (-j)
        # vec(q^j Y C - C Y) = (q^j C^T kron I - I kron C) vec(Y), column-major vec
        op = qj * np.kron(C.T, eye) - np.kron(eye, C)
        cond = np.linalg.cond(op)
        if not np.isfinite(cond) or cond > cond_max:
            raise ResonanceError(f"order {j}: Sylvester operator is near singular (cond {cond:.2e})")
        vecY = np.linalg.solve(op, rhs.reshape(-1, order="F"))
        Yj = vecY.reshape((n, n), order="F")
        res = np.linalg.norm(qj * Yj @ C - C @ Yj - rhs) / max(1.0, np.linalg.norm(rhs))
        residuals.append(float(res))
        Y.append(Yj)
    splus, sminus = sys.singular_sets()
    if base == "zero":
        geo = min((abs(s) for s in sminus), default=math.inf)
    else:
        geo = abs(q) * max((abs(s) for s in splus), default=0.0)
        geo = 1.0 / geo if geo > 0 else math.inf
    root = _root_test_radius(Y)
    radius = min(geo, root) if math.isfinite(geo) else root
    if radius == math.inf:
        radius = 1e300
    sol = SeriesSolution(base, M, Y, float(radius), residuals)
    sys._cache[key] = sol
    return sol


def continue_and_eval(sys, series, x):
    """Evaluate ``Yhat_0`` or ``Yhat_inf`` at ``x`` through the functional equation."""
    q = sys.q
    x = complex(x)
    if x == 0:
        raise PoleError("x = 0")
    R = series.conv_radius_est
    if series.base == "zero":
        m = 0
        if abs(x) > R / 2:
            m = int(math.ceil(math.log(abs(x) / (R / 2)) / -math.log(abs(q))))
        u = q**m * x
        Y = series(u)
        A0 = series_base_matrix(sys, "zero")
        for _ in range(m):
            u = u / q
            try:
                Au = sys(u)
                Y = np.linalg.solve(Au, Y @ A0)
            except (PoleError, np.linalg.LinAlgError) as exc:
                raise PoleError(f"continuation hits a singular point near {u}") from exc
        return Y
    # at infinity, radius is measured in 1/x
    m = 0
    if abs(1.0 / x) > R / 2:
        m = int(math.ceil(math.log(abs(1.0 / x) / (R / 2)) / -math.log(abs(q))))
    u = x / q**m
    Y = series(u)
    Ainv = np.linalg.inv(series_base_matrix(sys, "infinity"))
    for _ in range(m):
        try:
            Y = sys(u) @ Y @ Ainv
        except PoleError as exc:
            raise PoleError(f"continuation hits a pole of A at {u}") from exc
        u = u * q
    return Y


def series_base_matrix(sys, base):
    key = ("base", base)
    if key not in sys._cache:
        sys._cache[key] = sys.A0 if base == "zero" else sys.Ainf
    return sys._cache[key]


# ---------------------------------------------------------------------------
# connection matrices


@dataclass
class ConnectionSample:
    x: complex
    M_val: np.ndarray
    Mhat_val: np.ndarray

    def csv_row(self):
        vals = [self.x.real, self.x.imag]
        for Z in (self.M_val, self.Mhat_val):
            for z in Z.reshape(-1):
                vals.extend([z.real, z.imag])
        return vals


def csv_header(n):
    cols = ["x_re", "x_im"]
    for name in ("M", "Mhat"):
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                cols += [f"{name}{i}{j}_re", f"{name}{i}{j}_im"]
    return cols


def _eigen(sys, base, cond_max=1e10):
    key = ("eig", base)
    if key not in sys._cache:
        C = series_base_matrix(sys, base)
        vals, G = eig_normalized(C)
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > cond_max:
            raise SemiSimplicityError(f"{'A0' if base == 'zero' else 'Ainf'} is not semisimple (cond {cond:.2e})")
        sys._cache[key] = (vals, G, np.linalg.inv(G))
    return sys._cache[key]


def e_matrix(sys, base, x):
    """``e_C(x) = G diag(e_{c_i}(x)) G^{-1}`` for ``C = A_0`` or ``A_inf``."""
    vals, G, Ginv = _eigen(sys, base)
    ctx = QSpecialContext.for_q(sys.q)
    d = np.array([ctx.e(c, x) for c in vals])
    return (G * d) @ Ginv


def central_part(sys, x, M=DEFAULT_ORDER):
    """``Mhat(x) = Yhat_0(x)^{-1} Yhat_inf(x)``."""
    Y0 = continue_and_eval(sys, canonical_series(sys, "zero", M), x)
    Yinf = continue_and_eval(sys, canonical_series(sys, "infinity", M), x)
    try:
        return np.linalg.solve(Y0, Yinf)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Yhat_0 is singular at {x}") from exc


def connection_matrix(sys, x, M=DEFAULT_ORDER):
    x = complex(x)
    Mhat = central_part(sys, x, M)
    E0 = e_matrix(sys, "zero", x)
    Einf = e_matrix(sys, "infinity", x)
    Mval = np.linalg.solve(E0, Mhat @ Einf)
    return ConnectionSample(x, Mval, Mhat)


# ---------------------------------------------------------------------------
# regularity at apparent singularities


@dataclass
class RegularityReport:
    point: complex
    regular: bool
    pole_coeff: float
    inverse_pole_coeff: float
    scale: float

    def __bool__(self):
        return self.regular


def _orbit_points(points, q, window):
    ks = np.arange(-window, window + 1)
    return np.concatenate([complex(p) * q**ks for p in points]) if points else np.zeros(0, dtype=complex)


def verify_apparent_regularity(sys, s, samples=16, radius=0.01, M=DEFAULT_ORDER, window=LATTICE_WINDOW, threshold=1e-6):
    """Fit the ``1/(x - s)`` coefficient of ``Mhat`` and ``Mhat^{-1}`` on a small circle.

    The trapezoidal rule on the circle ``|x - s| = radius |s|`` returns the
    residue of any function meromorphic in a neighbourhood, so a nonzero
    value measures the pole. Returns a :class:`RegularityReport`.
    """
    s = complex(s)
    rho = radius * abs(s)
    splus, sminus = sys.singular_sets()
    others = _orbit_points(splus + sminus, sys.q, window)
    dist = np.abs(others - s)
    near = others[(dist > 1e-6 * abs(s)) & (dist < 3 * rho)]
    if near.size:
        raise GeometryError(f"sampling circle around {s} is too close to singular point {near[0]}")
    pts = s + rho * np.exp(2j * np.pi * (np.arange(samples) + 0.5) / samples)
    vals = np.array([central_part(sys, x, M) for x in pts])
    inv = np.array([np.linalg.inv(V) for V in vals])
    w = (pts - s)[:, None, None]
    c = np.mean(vals * w, axis=0)
    ci = np.mean(inv * w, axis=0)
    scale = float(np.mean([np.linalg.norm(V) for V in vals]) * rho)
    iscale = float(np.mean([np.linalg.norm(V) for V in inv]) * rho)
    pc = float(np.linalg.norm(c) / scale)
    pci = float(np.linalg.norm(ci) / iscale)
    return RegularityReport(s, pc < threshold and pci < threshold, pc, pci, scale)


def pole_confinement_probe(sys, grid=40, r_inner=None, M=DEFAULT_ORDER, window=LATTICE_WINDOW, factor=1e3):
    """Sample ``Mhat^{+-1}`` on a polar grid covering one fundamental annulus.

    Returns the points where either norm exceeds ``factor`` times its median
    together with their distance (relative to ``|x|``) to the orbits
    ``q^Z S_+-`` of the intermediate singularities.
    """
    q = sys.q
    splus, sminus = sys.singular_sets()
    orbit = _orbit_points(splus + sminus, q, window)
    if r_inner is None:
        r_inner = min((abs(s) for s in splus + sminus), default=1.0)
    radii = r_inner * abs(q) ** (-(np.arange(grid) + 0.5) / grid)
    angles = 2 * np.pi * (np.arange(grid) + 0.25) / grid
    pts = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
    norms, inorms = [], []
    for x in pts:
        V = central_part(sys, x, M)
        norms.append(np.linalg.norm(V))
        inorms.append(np.linalg.norm(np.linalg.inv(V)))
    norms, inorms = np.array(norms), np.array(inorms)
    flagged = (norms > factor * np.median(norms)) | (inorms > factor * np.median(inorms))
    out = []
    for x in pts[flagged]:
        d = float(np.min(np.abs(orbit - x)) / abs(x)) if orbit.size else math.inf
        out.append((complex(x), d))
    return {"points": len(pts), "flagged": out, "max_norm": float(norms.max()), "max_inverse_norm": float(inorms.max())}


# ---------------------------------------------------------------------------
# second order family with a q-hypergeometric top part


@dataclass
class HyperGeoBParams:
    """Data of the rank two system with ``a_0 = (x - xi) p(x)``.

    ``a1_mid`` holds the coefficients of ``x^1 .. x^N`` of ``a_1``; if left
    ``None`` they are solved for so that every pair ``s_i, q^-1 s_i`` is
    apparent.
    """

    q: complex
    xi: complex
    rho1: complex
    rho2: complex
    kappa1: complex
    kappa2: complex
    p_roots: tuple = ()
    a1_mid: tuple | None = None

    def __post_init__(self):
        for name in ("q", "xi", "rho1", "rho2", "kappa1", "kappa2"):
            setattr(self, name, complex(getattr(self, name)))
        self.p_roots = tuple(complex(s) for s in self.p_roots)
        if self.a1_mid is not None:
            self.a1_mid = tuple(complex(c) for c in self.a1_mid)

    @property
    def N(self):
        return len(self.p_roots)

    @property
    def eta(self):
        return self.kappa1 * self.kappa2 / (self.rho1 * self.rho2)

    def p(self):
        return Polynomial.from_roots(self.p_roots)

    def K(self):
        N = self.N
        return (
            self.q ** (-N * (N + 1) / 2)
            * (-self.eta / self.xi) ** N
            * self.p()(0.0)
            * (self.kappa1 - self.kappa2)
            / (self.rho1 - self.rho2)
        )

    def C0(self):
        return np.array([[self.rho1, self.rho2], [1.0, 1.0]], dtype=complex)

    def Cinf(self):
        return np.array([[self.kappa1, self.kappa2], [1.0, 1.0]], dtype=complex)

    def validate(self, window=LATTICE_WINDOW):
        q = self.q
        bad = []
        if same_q_orbit(self.rho1, self.rho2, q, window) is not None:
            bad.append("rho1/rho2 in q^Z")
        if same_q_orbit(self.kappa1, self.kappa2, q, window) is not None:
            bad.append("kappa1/kappa2 in q^Z")
        for r in (self.rho1, self.rho2):
            for k in (self.kappa1, self.kappa2):
                if same_q_orbit(r, k, q, window) is not None:
                    bad.append("rho_i/kappa_j in q^Z")
        for i, a in enumerate(self.p_roots):
            for b in self.p_roots[i + 1 :]:
                if same_q_orbit(a, b, q, window) is not None:
                    bad.append("s_i/s_j in q^Z")
        if bad:
            raise ResonanceError("; ".join(sorted(set(bad))))

    def to_json(self):
        d = {
            "kind": "hypergeometric",
            "q": complex_to_json(self.q),
            "xi": complex_to_json(self.xi),
            "rho": [complex_to_json(self.rho1), complex_to_json(self.rho2)],
            "kappa": [complex_to_json(self.kappa1), complex_to_json(self.kappa2)],
            "p_roots": [complex_to_json(s) for s in self.p_roots],
        }
        if self.a1_mid is not None:
            d["a1_mid"] = [complex_to_json(c) for c in self.a1_mid]
        return d

    @classmethod
    def from_json(cls, d):
        try:
            mid = d.get("a1_mid")
            return cls(
                complex_from_json(d["q"]),
                complex_from_json(d["xi"]),
                *[complex_from_json(z) for z in d["rho"]],
                *[complex_from_json(z) for z in d["kappa"]],
                tuple(complex_from_json(z) for z in d.get("p_roots", [])),
                None if mid is None else tuple(complex_from_json(z) for z in mid),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed hypergeometric parameters: {exc}") from exc


def hypergeometric_oper(p, a1_mid):
    """Scalar operator of the family for given middle coefficients of ``a_1``."""
    q, N = p.q, p.N
    P = p.p()
    a0 = Polynomial([-p.xi, 1.0]) * P
    coef = np.zeros(N + 2, dtype=complex)
    coef[0] = -p.xi * (p.rho1 + p.rho2) * P(0.0)
    coef[N + 1] = p.kappa1 + p.kappa2
    coef[1 : N + 1] = a1_mid
    a1 = Polynomial(coef)
    a2 = Polynomial([-p.xi * p.rho1 * p.rho2, p.kappa1 * p.kappa2 * q ** (-N)]) * P.scale_arg(q)
    return ScalarQOper(q, (a0, a1, a2))


def solve_a1_mid(p, max_iter=60, tries=20, seed=0):
    """Newton for the middle coefficients making every ``Delta_1(s_i)`` vanish.

    Starts from the middle coefficients of ``((kappa1+kappa2) x - xi (rho1+rho2)) p(x)``
    and, failing that, from seeded perturbations of it.
    """
    N = p.N
    if N == 0:
        return ()
    base = (Polynomial([-p.xi * (p.rho1 + p.rho2), p.kappa1 + p.kappa2]) * p.p()).coef[1 : N + 1]
    rng = np.random.default_rng(seed)

    def residual(c):
        L = hypergeometric_oper(p, c)
        out = np.zeros(N, dtype=complex)
        for i, s in enumerate(p.p_roots):
            v, sc = delta_r_at(L, 1, s)
            out[i] = v / sc
        return out

    from .solvers import newton

    scale = max(1.0, np.max(np.abs(base)))
    for attempt in range(tries):
        start = base if attempt == 0 else base + scale * 0.3 * (rng.normal(size=N) + 1j * rng.normal(size=N))
        try:
            sol = newton(residual, start, max_iter=max_iter, tol=1e-15)
        except ConvergenceError:
            continue
        if np.max(np.abs(residual(sol))) < 1e-13:
            return tuple(sol)
    raise ConvergenceError("could not solve the apparent-singularity conditions for a_1")


def build_appendixB_system(p):
    p.validate()
    if p.a1_mid is None:
        p.a1_mid = solve_a1_mid(p)
    if len(p.a1_mid) != p.N:
        raise InputError("a1_mid must have one entry per root of p")
    return RegularSystem.from_oper(hypergeometric_oper(p, np.array(p.a1_mid)))


def det_Yprime0_closed_form(p, x):
    """Closed form of ``det Y'_0(x)`` for the hypergeometric family."""
    ctx = QSpecialContext.for_q(p.q)
    x = complex(x)
    P = p.p()
    val = ctx.e(p.rho1, x) * ctx.e(p.rho2, x) * ctx.qpoch(x / p.xi) / ctx.qpoch(p.eta * p.q ** (-p.N) * x / p.xi)
    return val * P(x) / P(0.0) * (p.rho1 - p.rho2)


def m_top(p):
    """Closed-form connection constants for ``N = 0``."""
    ctx = QSpecialContext.for_q(p.q)
    q = p.q
    rho = (p.rho1, p.rho2)
    kap = (p.kappa1, p.kappa2)
    m = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        ro = rho[1 - i]
        for j in range(2):
            ko = kap[1 - j]
            num = ctx.qpoch(ro / kap[j]) * ctx.qpoch(q * ko / rho[i])
            den = ctx.qpoch(ro / rho[i]) * ctx.qpoch(q * ko / kap[j])
            m[i, j] = num / den * kap[j] / rho[i]
    return m


def theta_factor(p, x):
    """``theta(kappa_j x / (rho_i xi)) / theta(x / xi)`` as a 2x2 array."""
    ctx = QSpecialContext.for_q(p.q)
    rho = (p.rho1, p.rho2)
    kap = (p.kappa1, p.kappa2)
    base = ctx.theta(x / p.xi)
    return np.array([[ctx.theta(kap[j] * x / (rho[i] * p.xi)) / base for j in range(2)] for i in range(2)])


def mhat_prime(sys, p, x, M=DEFAULT_ORDER):
    return np.linalg.solve(p.C0(), central_part(sys, x, M) @ p.Cinf())


def sample_points(p, count, seed=0):
    """Generic sample points away from the singular orbits of the family."""
    rng = np.random.default_rng(seed)
    pts = []
    splus = [p.xi, *p.p_roots]
    ref = float(np.exp(np.mean(np.log([abs(z) for z in splus]))))
    for _ in range(count):
        pts.append(ref * abs(p.q) ** rng.uniform(-0.5, 0.5) * np.exp(2j * np.pi * rng.uniform()))
    return pts


def fit_theta_constants(sys, p, samples=6, seed=0, M=DEFAULT_ORDER):
    """Fit ``m_ij`` in ``Mhat'_ij = m_ij theta(kappa_j x/(rho_i xi)) / theta(x/xi)``."""
    pts = sample_points(p, samples, seed)
    x0 = pts[0]
    m = mhat_prime(sys, p, x0, M) / theta_factor(p, x0)
    fit_err = 0.0
    for x in pts[1:]:
        pred = m * theta_factor(p, x)
        actual = mhat_prime(sys, p, x, M)
        fit_err = max(fit_err, float(np.max(np.abs(pred - actual)) / np.max(np.abs(actual))))
    ctx = QSpecialContext.for_q(p.q)
    th = ctx.theta
    r1, r2, k1, k2 = p.rho1, p.rho2, p.kappa1, p.kappa2
    K = p.K()
    rel1 = K * th(r2 / k1) * th(k2 / r1) / (th(r2 / r1) * th(k2 / k1))
    rel2 = -K * (k2 / r1) * th(r1 / k1) * th(r2 / k2) / (th(r2 / r1) * th(k2 / k1))
    res1 = abs(m[0, 0] * m[1, 1] - rel1) / abs(rel1)
    res2 = abs(m[0, 1] * m[1, 0] - rel2) / abs(rel2)
    return {"m": m, "fit_residual": fit_err, "mrel1_residual": float(res1), "mrel2_residual": float(res2), "K": K}
