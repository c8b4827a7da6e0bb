"""Bethe equations of the toroidal gl_2 algebra and the associated q-opers.

Parameters are stored multiplicatively (``qmu = q^mu``, ``q2nu = q_2^nu``)
so no branch of a complex logarithm is ever chosen. With

    q_1 = d / q,  q_2 = q^2,  q_3 = 1 / (q d),    q_1 q_2 q_3 = 1,

the operators act by the shift ``x -> q_2 x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BetheViolationError, ConvergenceError, GenericityError, InputError, SingularMatrixError
from .numkernel import DEFAULT_TOL, Polynomial, RationalFunction, complex_from_json, complex_to_json
from .qoper import ScalarQOper, _check_zero_pattern, delta_r_at
from .solvers import newton

GENERICITY_WINDOW = 12


def _prod(xs):
    out = 1 + 0j
    for x in xs:
        out *= x
    return out


@dataclass(frozen=True)
class ToroidalParams:
    q: complex
    d: complex
    p0: complex
    p1: complex
    qmu: complex
    q2nu: complex
    check_generic: bool = True

    def __post_init__(self):
        for name in ("q", "d", "p0", "p1", "qmu", "q2nu"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if not (0 < abs(self.q) < 1):
            raise InputError("need 0 < |q| < 1")
        if self.check_generic:
            hit = self.resonance()
            if hit is not None:
                raise GenericityError(f"q1^{hit[0]} q2^{hit[1]} = 1: parameters are not generic")

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
    def lam(self):
        """``q^{lambda_1} = q_3 / q^mu``."""
        return self.q3 / self.qmu

    @property
    def x1(self):
        return 1.0 / (self.q3 * self.qmu)

    @property
    def q2mu_inv(self):
        """``q_2^{-mu} = q^{-2 mu}``."""
        return self.qmu ** (-2)

    def resonance(self, window=GENERICITY_WINDOW, rel=1e-9):
        la, lb = np.log(self.q1), np.log(self.q2)
        for a in range(-window, window + 1):
            for b in range(-window, window + 1):
                if a == 0 and b == 0:
                    continue
                if abs(np.exp(a * la + b * lb) - 1) < rel:
                    return a, b
        return None

    def psi0(self):
        """``Psi_0(z) = q^mu (z - q_3^{-1} q_2^{-mu}) / (z - q_3^{-1})``."""
        qm, q3 = self.qmu, self.q3
        return RationalFunction(Polynomial([-qm / q3 * self.q2mu_inv, qm]), Polynomial([-1.0 / q3, 1.0]))

    def psi1(self):
        """``Psi_1(z) = q_3 q^{-mu} (z - q_3^{-2}) / (z - q_2^{-mu})``."""
        c = self.q3 / self.qmu
        return RationalFunction(Polynomial([-c * self.q3 ** (-2), c]), Polynomial([-self.q2mu_inv, 1.0]))

    def to_json(self, seed=None):
        d = {k: complex_to_json(getattr(self, k)) for k in ("q", "d", "p0", "p1", "qmu", "q2nu")}
        if seed is not None:
            d["seed"] = int(seed)
        return d

    @classmethod
    def from_json(cls, d, check_generic=True):
        try:
            return cls(*(complex_from_json(d[k]) for k in ("q", "d", "p0", "p1", "qmu", "q2nu")), check_generic)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed parameters: {exc}") from exc

    @classmethod
    def random(cls, rng, q_range=(0.3, 0.7)):
        """A generic draw: ``|q|`` uniform in ``q_range``, other parameters of order one."""

        def unit(lo, hi):
            return rng.uniform(lo, hi) * np.exp(2j * np.pi * rng.uniform())

        q = unit(*q_range)
        return cls(q, unit(0.8, 1.25), unit(0.5, 2.0), unit(0.5, 2.0), unit(0.7, 1.4), unit(0.7, 1.4))


@dataclass
class BetheConfig:
    s: tuple = ()
    t: tuple = ()
    psi0: RationalFunction | None = None
    psi1: RationalFunction | None = None

    def __post_init__(self):
        self.s = tuple(complex(z) for z in self.s)
        self.t = tuple(complex(z) for z in self.t)

    @property
    def l0(self):
        return len(self.s)

    @property
    def l1(self):
        return len(self.t)

    def y0(self):
        return Polynomial.from_roots(self.s)

    def y1(self):
        return Polynomial.from_roots(self.t)

    def weights(self, params):
        return (self.psi0 or params.psi0(), self.psi1 or params.psi1())


def _check_nonzero(vals, what, tol=1e-12):
    for v in vals:
        if not np.isfinite(v) or abs(v) < tol:
            raise GenericityError(f"degenerate configuration: {what} vanishes")


def _ratio(y, num_pts, den_pts):
    n = np.array([y(z) for z in num_pts])
    d = np.array([y(z) for z in den_pts])
    return n, d


def bethe_residuals(cfg, params):
    """Normalized residuals ``LHS / (-Psi) - 1`` for every ``s_i`` then every ``t_i``."""
    q1, q2, q3 = params.q1, params.q2, params.q3
    psi0, psi1 = cfg.weights(params)
    y0, y1 = cfg.y0(), cfg.y1()
    l0, l1 = cfg.l0, cfg.l1
    out = []
    for s in cfg.s:
        num = params.p0 * q2 ** (l1 - l0) * y0(q2 * s) * y1(q1 * s) * y1(q3 * s)
        den = y0(s / q2) * y1(s / q1) * y1(s / q3)
        _check_nonzero([den, psi0.den(s), psi0.num(s)], "a factor in the s-equation")
        out.append(num / den / (-psi0(s)) - 1.0)
    for t in cfg.t:
        num = params.p1 * q2 ** (l0 - l1) * y1(q2 * t) * y0(q1 * t) * y0(q3 * t)
        den = y1(t / q2) * y0(t / q1) * y0(t / q3)
        _check_nonzero([den, psi1.den(t), psi1.num(t)], "a factor in the t-equation")
        out.append(num / den / (-psi1(t)) - 1.0)
    return np.array(out, dtype=complex)


def oper_weights(params, l0):
    """Weights under which Bethe roots produce a polynomial ``a_1`` in :func:`oper_from_roots`.

    The ``t``-equations as displayed differ from the clearing condition of
    the operator by ``q_2^{l_0}``; the operator side uses ``q_2^{-l_0} Psi_1``.
    """
    psi1 = params.psi1()
    return params.psi0(), RationalFunction(psi1.num * params.q2 ** (-l0), psi1.den)


def solve_bethe(params, l0, l1, rng, starts=40, tol=1e-13, psi0=None, psi1=None, for_oper=False):
    """Multi-start Newton for a non-degenerate solution of both Bethe families.

    With ``for_oper=True`` the weights of :func:`oper_weights` are used.
    """
    if for_oper:
        psi0, psi1 = oper_weights(params, l0)

    def f(z):
        cfg = BetheConfig(z[:l0], z[l0:], psi0, psi1)
        return bethe_residuals(cfg, params)

    for _ in range(starts):
        z0 = rng.uniform(0.5, 2.0, l0 + l1) * np.exp(2j * np.pi * rng.uniform(size=l0 + l1))
        try:
            z = newton(f, z0, tol=tol, max_iter=80)
        except (ConvergenceError, GenericityError, ZeroDivisionError):
            continue
        cfg = BetheConfig(z[:l0], z[l0:], psi0, psi1)
        if config_is_generic(cfg, params):
            return cfg
    raise ConvergenceError("no non-degenerate Bethe solution found")


def config_is_generic(cfg, params, rel=1e-6, window=4):
    """Roots nonzero, distinct and off each other's ``q_1^a q_2^b`` collision orbits."""
    roots = list(cfg.s) + list(cfg.t)
    if any(abs(z) < 1e-8 for z in roots):
        return False
    shifts = [params.q1**a * params.q2**b for a in range(-2, 3) for b in range(-window, window + 1)]
    for i, a in enumerate(roots):
        for j, b in enumerate(roots):
            for c in shifts:
                if (i != j or abs(c - 1) > 1e-12) and abs(a - c * b) < rel * max(abs(a), 1e-300):
                    return False
    return True


# ---------------------------------------------------------------------------
# q-opers from Bethe roots


def verma_a0_a2(cfg, params):
    """``a_0`` and ``a_2`` in terms of ``y_0`` (the ``q_2^{-1} x`` frame is undone)."""
    q1, q2, q3 = params.q1, params.q2, params.q3
    l0, l1 = cfg.l0, cfg.l1
    s = cfg.s
    lam, x1 = params.lam, params.x1
    P0 = params.p1 * q2 ** (-l0 - l1) * Polynomial.from_roots([lam * x1] + [z / q1 for z in s] + [z / q3 for z in s])
    P2 = q2 ** (-l0) * Polynomial([-x1, lam]) * Polynomial.from_roots([q1 * z for z in s] + [q3 * z for z in s])
    return P0.scale_arg(q2), P2.scale_arg(q2)


def oper_from_roots(cfg, params, tol=1e-8):
    """``L = a_0 (s - b_2)(s - b_1)`` with ``b_1(x) = y_1(q_2 x) / y_1(x)``.

    Returns ``(L, remainder)`` where ``remainder`` is the relative size of the
    remainder left when clearing ``a_1`` to a polynomial; a remainder above
    ``tol`` means the ``t``-equations fail and raises
    :class:`BetheViolationError`.
    """
    q2 = params.q2
    a0, a2 = verma_a0_a2(cfg, params)
    y1 = cfg.y1()
    num = a0 * y1.scale_arg(q2 * q2) + a2 * y1
    a1, rem = num.divmod(y1.scale_arg(q2))
    rel = rem.norm() / num.norm()
    if rel > tol:
        raise BetheViolationError(f"a_1 does not clear to a polynomial (remainder {rel:.2e})")
    return ScalarQOper(q2, (a0, a1, a2)), rel


def a1_endpoint_formulas(cfg, params):
    """Leading and constant coefficients of ``a_1(q_2^{-1} x)`` in closed form."""
    q2 = params.q2
    l0, l1 = cfg.l0, cfg.l1
    lam, x1 = params.lam, params.x1
    p1 = params.p1
    lead = p1 * q2 ** (-l0) + q2 ** (-l0 - l1) * lam
    const = -(p1 * q2 ** (-l1) * lam + q2 ** (-2 * l0)) * x1 * _prod(z * z for z in cfg.s)
    return lead, const


def _rel(lhs, rhs):
    if rhs == 0 or not np.isfinite(rhs):
        raise GenericityError("degenerate evaluation point")
    return lhs / rhs - 1.0


def p0ss_residual(cfg, params, L):
    """Residuals of the four equivalent forms of the eliminated ``s``-equation.

    Keys: ``p0ss`` (ratios ``a_2/a_1`` at ``q_1 s, q_3 s``), ``shifted``
    (ratios ``a_1/a_0`` at ``q_2^{-1} q_1 s, q_2^{-1} q_3 s``), ``q3sq`` and
    ``q1sq`` (the forms with products over ``q_3^2`` and ``q_1^2`` shifts).
    """
    q1, q2, q3 = params.q1, params.q2, params.q3
    p0, p1 = params.p0, params.p1
    l0, l1 = cfg.l0, cfg.l1
    a0, a1, a2 = L.coeffs
    psi0 = cfg.weights(params)[0]
    s_all = cfg.s
    qm2 = params.q2mu_inv
    out = {"p0ss": [], "shifted": [], "q3sq": [], "q1sq": []}
    for s in s_all:
        vals = [a1(q1 * s), a1(q3 * s), a0(q1 * s / q2), a0(q3 * s / q2), a1(q3 * s / q2), a1(q1 * s / q2)]
        _check_nonzero(vals, "a_1 or a_0 at a shifted root")
        lhs = p0 * _prod((q2 * s - z) / (s - q2 * z) for z in s_all)
        rhs = -(q2 ** (-l1)) * psi0(s) * a2(q1 * s) / a1(q1 * s) * a2(q3 * s) / a1(q3 * s)
        out["p0ss"].append(_rel(lhs, rhs))
        rhs = -(q2 ** (-l1)) * psi0(s) * a1(q1 * s / q2) / a0(q1 * s / q2) * a1(q3 * s / q2) / a0(q3 * s / q2)
        out["shifted"].append(_rel(lhs, rhs))
        lhs3 = p0 * p1 * _prod((q3**2 * s - z) / (s - q3**2 * z) for z in s_all)
        rhs3 = -(q1**l0) * q3 ** (-l0 - 1) * a1(q3 * s / q2) / a1(q1 * s)
        out["q3sq"].append(_rel(lhs3, rhs3))
        lhs1 = p0 * p1 * _prod((q1**2 * s - z) / (s - q1**2 * z) for z in s_all)
        R = (s - qm2 / q3) / (s - qm2 / q1) * (s - q1 / q3**2) / (s - 1.0 / q3)
        rhs1 = -(q3 ** (l0 + 1)) * q1 ** (-l0 - 2) * R * a1(q1 * s / q2) / a1(q3 * s)
        out["q1sq"].append(_rel(lhs1, rhs1))
    return {k: np.array(v, dtype=complex) for k, v in out.items()}


def sigma_expand(terms, q):
    """Coefficients ``c_k`` (of ``s^k``) of a product of operators.

    ``terms`` is a list of factors, each a list of polynomials ``[c_0, c_1, ...]``
    meaning ``sum_k c_k(x) s^k``. Composition uses ``s f(x) = f(q x) s``.
    """
    out = [Polynomial([1.0])]
    for fac in terms:
        new = [Polynomial([0.0]) for _ in range(len(out) + len(fac) - 1)]
        for k, ck in enumerate(out):
            for j, fj in enumerate(fac):
                new[k + j] = new[k + j] + ck * fj.scale_arg(q**k)
        out = new
    return out


def _from_sigma(coeffs, q):
    """Order-two operator from ``c_0 + c_1 s + c_2 s^2`` in the signed convention."""
    c0, c1, c2 = coeffs
    return ScalarQOper(q, (c2, -c1, c0))


def top_oper(params):
    """Three-term operator of the ``l_0 = 0`` family, in expanded form."""
    q2, lam, x1, p1 = params.q2, params.lam, params.x1, params.p1
    nu = 1.0 / params.q2nu
    a0 = p1 * q2 * nu * Polynomial([-lam / q2 * x1, 1.0])
    a1 = Polynomial([-(p1 * nu * lam + 1.0) * x1, p1 * q2 + q2 * nu * lam])
    a2 = q2 * Polynomial([-x1 / q2, lam])
    return ScalarQOper(q2, (a0, a1, a2))


def top_oper_factorized(params):
    """Expansion of ``q_2^{1-nu} x (p_1 s - q^lam)(s - q_2^nu) - x_1 (p_1 q_2^{-nu} q^lam s - 1)(s - 1)``."""
    q2, lam, x1, p1, q2nu = params.q2, params.lam, params.x1, params.p1, params.q2nu
    X = Polynomial([0.0, q2 / q2nu])
    c = Polynomial.const
    first = sigma_expand([[X], [c(-lam), c(p1)], [c(-q2nu), c(1.0)]], q2)
    second = sigma_expand([[c(-x1)], [c(-1.0), c(p1 * lam / q2nu)], [c(-1.0), c(1.0)]], q2)
    return _from_sigma([first[k] + second[k] for k in range(3)], q2)


# ---------------------------------------------------------------------------
# relaxed Verma opers


@dataclass
class RelaxedAnsatz:
    params: ToroidalParams
    s: tuple
    a1_free: tuple

    @property
    def l0(self):
        return len(self.s)


def relaxed_a0_a2(params, s):
    q1, q2, q3 = params.q1, params.q2, params.q3
    lam, x1, p1, q2nu = params.lam, params.x1, params.p1, params.q2nu
    l0 = len(s)
    a0 = p1 * q2 / q2nu * Polynomial.from_roots([lam / q2 * x1] + [q1 * z for z in s] + [q3 * z for z in s])
    a2 = q2 ** (l0 + 1) * Polynomial([-x1 / q2, lam]) * Polynomial.from_roots([q1 * z / q2 for z in s] + [q3 * z / q2 for z in s])
    return a0, a2


def relaxed_endpoints(params, s):
    """Pinned leading and constant coefficients of ``a_1``."""
    q2, lam, x1, p1, q2nu = params.q2, params.lam, params.x1, params.p1, params.q2nu
    l0 = len(s)
    lead = p1 * q2 ** (l0 + 1) + q2 / q2nu * lam
    const = -(p1 * q2 ** (-l0) / q2nu * lam + q2 ** (-2 * l0)) * x1 * _prod(z * z for z in s)
    return lead, const


def relaxed_a1(params, s, a1_free):
    l0 = len(s)
    lead, const = relaxed_endpoints(params, s)
    coef = np.zeros(2 * l0 + 2, dtype=complex)
    coef[2 * l0 + 1] = lead
    coef[0] = const
    for j, c in enumerate(a1_free, start=1):
        coef[2 * l0 + 1 - j] = c
    return Polynomial(coef)


def relaxed_assemble(ans):
    a0, a2 = relaxed_a0_a2(ans.params, ans.s)
    return ScalarQOper(ans.params.q2, (a0, relaxed_a1(ans.params, ans.s, ans.a1_free), a2))


def relaxed_rows(s, params, cleared=False):
    """Linear equations ``alpha a_1(u) + beta a_1(v) = 0`` for the free coefficients.

    For each root two equations: the ``q_3^2`` form of the eliminated
    ``s``-equation and the ``q_1^2`` replacement of ``Delta_1(q_3 s) = 0``.
    Returns ``(M, rhs)``. With ``cleared=True`` the rational factor of
    the replacement equation is multiplied out (used for interpolation).
    """
    q1, q2, q3 = params.q1, params.q2, params.q3
    p0, p1 = params.p0, params.p1
    s = [complex(z) for z in s]
    l0 = len(s)
    lead, const = relaxed_endpoints(params, s)
    qm2 = params.q2mu_inv
    powers = 2 * l0 + 1 - np.arange(1, 2 * l0 + 1)

    def row(alpha, u, beta, v):
        coeffs = alpha * u**powers + beta * v**powers
        pinned = alpha * (lead * u ** (2 * l0 + 1) + const) + beta * (lead * v ** (2 * l0 + 1) + const)
        return coeffs, -pinned

    rows, rhs = [], []
    for i, si in enumerate(s):
        E3 = p0 * p1 * _prod((q3**2 * si - z) / (si - q3**2 * z) for z in s)
        c, r = row(E3, q1 * si, q1**l0 * q3 ** (-l0 - 1), q3 * si / q2)
        rows.append(c)
        rhs.append(r)
        E1 = p0 * p1 * _prod((q1**2 * si - z) / (si - q1**2 * z) for z in s)
        D_num = (si - qm2 / q3) * (si - q1 / q3**2)
        D_den = (si - qm2 / q1) * (si - 1.0 / q3)
        beta = q3 ** (l0 + 1) * q1 ** (-l0 - 2)
        if cleared:
            c, r = row(E1 * D_den, q3 * si, beta * D_num, q1 * si / q2)
        else:
            c, r = row(E1, q3 * si, beta * D_num / D_den, q1 * si / q2)
        rows.append(c)
        rhs.append(r)
    return np.array(rows), np.array(rhs)


def relaxed_linear_solve(s, params, cond_max=1e10):
    """Free coefficients of ``a_1`` determined by the linear equations at roots ``s``."""
    if len(s) == 0:
        return np.zeros(0, dtype=complex)
    M, rhs = relaxed_rows(s, params)
    scale = np.max(np.abs(M), axis=1)
    scale[scale == 0] = 1.0
    Ms = M / scale[:, None]
    cond = np.linalg.cond(Ms)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularMatrixError(f"linear system for a_1 is singular (cond {cond:.2e})")
    return np.linalg.solve(Ms, rhs / scale)


def _delta1_rel(L, x):
    v, sc = delta_r_at(L, 1, x)
    return v / sc


def relaxed_oper(s, params):
    a1_free = relaxed_linear_solve(s, params)
    return relaxed_assemble(RelaxedAnsatz(params, tuple(s), tuple(a1_free)))


def relaxed_residual(s, params):
    """``Delta_1(q_1 s_j)`` (relative to its roundoff scale) after the linear solve."""
    L = relaxed_oper(s, params)
    return np.array([_delta1_rel(L, params.q1 * z) for z in s], dtype=complex)


def relaxed_full_residual(s, a1_free, params):
    """Residual of the original system: both ``Delta_1`` conditions and the ``q_3^2`` form."""
    q1, q2, q3 = params.q1, params.q2, params.q3
    p0, p1 = params.p0, params.p1
    s = [complex(z) for z in s]
    l0 = len(s)
    L = relaxed_assemble(RelaxedAnsatz(params, tuple(s), tuple(a1_free)))
    a1 = L.coeffs[1]
    out = []
    for si in s:
        out.append(_delta1_rel(L, q1 * si))
        out.append(_delta1_rel(L, q3 * si))
        E3 = p0 * p1 * _prod((q3**2 * si - z) / (si - q3**2 * z) for z in s)
        t1 = E3 * a1(q1 * si)
        t2 = q1**l0 * q3 ** (-l0 - 1) * a1(q3 * si / q2)
        out.append((t1 + t2) / (abs(t1) + abs(t2)))
    return np.array(out, dtype=complex)


def relaxed_genericity(s, params, L=None, window=GENERICITY_WINDOW):
    """Problems preventing the apparent-pair hypotheses at ``q_1 s_j`` and ``q_3 s_j``."""
    s = [complex(z) for z in s]
    if any(abs(z) < 1e-8 for z in s):
        return ["root too close to 0"]
    if L is None:
        L = relaxed_oper(s, params)
    a0, _, a2 = L.coeffs
    problems = []
    for z in s:
        for c in (params.q1, params.q3):
            pt = c * z
            problems += _check_zero_pattern(a0, pt, L.q, {0}, window, 1e-7, "a_0")
            problems += _check_zero_pattern(a2, pt, L.q, {-1}, window, 1e-7, "a_2")
    for i, a in enumerate(s):
        for b in s[i + 1 :]:
            if abs(a - b) < 1e-6 * abs(a):
                problems.append("repeated root")
    return problems


def _polish_full(s, params):
    """Newton on ``(s, a1_free)`` for the original system, seeded by the linear solve."""
    l0 = len(s)
    a1 = relaxed_linear_solve(s, params)
    z0 = np.concatenate([np.asarray(s, dtype=complex), a1])

    def f(z):
        return relaxed_full_residual(z[:l0], z[l0:], params)

    z = newton(f, z0, tol=1e-14, max_iter=30)
    return z[:l0], z[l0:]


@dataclass
class CountResult:
    count: int
    solutions: list = field(default_factory=list)
    strategy: str = ""
    lower_bound: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "count": self.count,
            "strategy": self.strategy,
            "lower_bound": self.lower_bound,
            "solutions": [
                {
                    "s": [complex_to_json(z) for z in sol["s"]],
                    "a1_free": [complex_to_json(z) for z in sol["a1_free"]],
                    "residual_norms": sol["residual_norm"],
                }
                for sol in self.solutions
            ],
        }


def _canonical_key(s):
    return tuple(sorted((round(z.real, 6), round(z.imag, 6)) for z in s))


def cleared_factor_roots(params):
    """Points where the rational factor of the replacement equation was multiplied out."""
    return [params.q2mu_inv / params.q1, 1.0 / params.q3]


def _certify(s, params, tol, drift=1e-4):
    """Polish a candidate and keep it if it is a non-degenerate solution near the candidate."""
    try:
        s_new, a1 = _polish_full(s, params)
    except (ConvergenceError, SingularMatrixError, GenericityError, ZeroDivisionError, FloatingPointError):
        return None
    if any(abs(a - b) > drift * max(abs(b), 1e-8) for a, b in zip(s_new, s)):
        return None
    res = float(np.max(np.abs(relaxed_full_residual(s_new, a1, params))))
    if res > tol:
        return None
    try:
        relaxed_linear_solve(s_new, params)
    except SingularMatrixError:
        return None
    L = relaxed_assemble(RelaxedAnsatz(params, tuple(s_new), tuple(a1)))
    if relaxed_genericity(s_new, params, L):
        return None
    return {"s": [complex(z) for z in s_new], "a1_free": [complex(z) for z in a1], "residual_norm": res}


def _dedup_solutions(sols, cluster_tol):
    out = []
    for sol in sols:
        key = sorted(sol["s"], key=lambda z: (z.real, z.imag))
        if all(
            max(abs(a - b) / max(1.0, abs(a)) for a, b in zip(key, sorted(o["s"], key=lambda z: (z.real, z.imag)))) > cluster_tol
            for o in out
        ):
            out.append(sol)
    out.sort(key=lambda sol: _canonical_key(sol["s"]))
    return out


def interpolate_numerator(params, radius=1.0, samples=64):
    """Coefficients of ``g(s) = det(M(s))^2 Delta_1(q_1 s)`` for ``l_0 = 1``.

    ``M(s)`` is the cleared (polynomial in ``s``) linear system, so ``g`` is
    polynomial in ``s``. Coefficients come from an FFT on a circle; the
    degree is where they drop to roundoff, and a held-out evaluation check
    guards the fit.
    """

    def g(s):
        M, rhs = relaxed_rows([s], params, cleared=True)
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        a1f = np.linalg.solve(M, rhs)
        L = relaxed_assemble(RelaxedAnsatz(params, (s,), tuple(a1f)))
        a0, a1, a2 = L.coeffs
        q2, z = L.q, params.q1 * s
        return det**2 * (a1(z) * a1(z / q2) - a2(z) * a0(z / q2))

    while True:
        pts = radius * np.exp(2j * np.pi * (np.arange(samples) + 0.5) / samples)
        vals = np.array([g(s) for s in pts])
        # vals_k = sum_j c_j r^j e^{i pi j / N} e^{2 pi i j k / N}
        j = np.arange(samples)
        c = np.fft.fft(vals) / samples
        coeff = c / (radius**j * np.exp(1j * np.pi * j / samples))
        mag = np.abs(c)
        big = np.flatnonzero(mag > 1e-11 * mag.max())
        deg = int(big[-1])
        if deg + 5 <= samples // 2:
            break
        samples *= 2
        if samples > 4096:
            raise ConvergenceError("interpolation degree does not stabilize")
    low = int(big[0])
    poly = Polynomial(np.where(mag[: deg + 1] > 1e-11 * mag.max(), coeff[: deg + 1], 0.0))
    rng = np.random.default_rng(12345)
    check = radius * rng.uniform(0.5, 1.5, 8) * np.exp(2j * np.pi * rng.uniform(size=8))
    err = max(abs(poly(s) - g(s)) / max(abs(g(s)), poly.eval_scale(s) * 1e-300 + 1e-300) for s in check)
    return poly, low, float(err), g


def count_relaxed_opers(l0, params, strategy=None, starts=500, seed=0, tol=1e-8, cluster_tol=DEFAULT_TOL.cluster_tol, workers=1):
    """Number of relaxed Verma opers with ``l_0`` apparent pairs.

    ``interpolate`` (``l_0 = 1``) finds all roots of the cleared univariate
    numerator; ``multistart`` runs Newton from seeded starts and reports a
    lower bound.
    """
    if l0 < 0:
        raise InputError("l0 must be non-negative")
    if l0 == 0:
        L = top_oper(params)
        return CountResult(1, [{"s": [], "a1_free": [], "residual_norm": 0.0}], "trivial", False, {"oper": L})
    if strategy is None:
        strategy = "interpolate" if l0 == 1 else "multistart"
    if strategy == "interpolate":
        if l0 != 1:
            raise InputError("interpolation is only available for l0 = 1")
        poly, low, err, g = interpolate_numerator(params)
        if err > 1e-6:
            raise ConvergenceError(f"interpolation inconsistent (held-out error {err:.2e})")
        reduced = Polynomial(poly.coef[low:])
        roots = reduced.roots() if reduced.degree > 0 else []
        bad = cleared_factor_roots(params)
        cands = []
        for r in roots:
            if abs(r) < 1e-8 or any(abs(r - b) < 1e-6 * abs(b) for b in bad):
                continue
            sol = _certify([r], params, tol)
            if sol is not None:
                cands.append(sol)
        sols = _dedup_solutions(cands, cluster_tol)
        diag = {"degree": poly.degree, "zero_order_at_origin": low, "holdout_error": err, "candidates": len(roots)}
        return CountResult(len(sols), sols, "interpolate", False, diag)
    if strategy != "multistart":
        raise InputError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    start_list = [np.exp(rng.uniform(-3.0, 1.0, l0)) * np.exp(2j * np.pi * rng.uniform(size=l0)) for _ in range(starts)]

    def run(z0):
        try:
            z = newton(lambda z: relaxed_residual(z, params), z0, max_iter=40, tol=1e-12)
        except (ConvergenceError, SingularMatrixError, GenericityError, ZeroDivisionError, FloatingPointError):
            return None
        return _certify(list(z), params, tol)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, start_list))
    else:
        results = [run(z0) for z0 in start_list]
    sols = _dedup_solutions([r for r in results if r is not None], cluster_tol)
    return CountResult(len(sols), sols, "multistart", True, {"starts": starts})


# ---------------------------------------------------------------------------
# unfolded equations and the lambda-oper


@dataclass
class UnfoldedData:
    qsq: complex
    abar: Polynomial
    cbar: Polynomial
    y0: Polynomial
    y1: Polynomial
    p0: complex
    p1: complex
    psi0: RationalFunction
    s: tuple = ()
    t: tuple = ()

    def __post_init__(self):
        self.qsq = complex(self.qsq)
        self.s = tuple(complex(z) for z in self.s)
        self.t = tuple(complex(z) for z in self.t)

    @classmethod
    def from_roots(cls, qsq, abar, cbar, s, t, p0, p1, psi0):
        return cls(qsq, abar, cbar, Polynomial.from_roots(s), Polynomial.from_roots(t), p0, p1, psi0, s, t)

    @property
    def l0(self):
        return len(self.s)

    @property
    def l1(self):
        return len(self.t)

    def psi1(self, x):
        return self.p1 * self.qsq ** (self.l0 - self.l1) * self.cbar(x) / self.abar(x)

    def psi_ratio_at(self, x):
        """``Psi_0(x) Psi_1(x) / (p_0 p_1) = P(qsq x) / P(x)``."""
        return self.psi0(x) * self.psi1(x) / (self.p0 * self.p1)

    def to_json(self):
        return {
            "qsq": complex_to_json(self.qsq),
            "abar": self.abar.to_json(),
            "cbar": self.cbar.to_json(),
            "p0": complex_to_json(self.p0),
            "p1": complex_to_json(self.p1),
            "psi0": self.psi0.to_json(),
            "s": [complex_to_json(z) for z in self.s],
            "t": [complex_to_json(z) for z in self.t],
        }

    @classmethod
    def from_json(cls, d):
        try:
            return cls.from_roots(
                complex_from_json(d["qsq"]),
                Polynomial.from_json(d["abar"]),
                Polynomial.from_json(d["cbar"]),
                [complex_from_json(z) for z in d["s"]],
                [complex_from_json(z) for z in d["t"]],
                complex_from_json(d["p0"]),
                complex_from_json(d["p1"]),
                RationalFunction.from_json(d["psi0"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed unfolded data: {exc}") from exc


def unfold0_lhs(u, si):
    Q = u.qsq
    return u.p0 * _prod((Q * si - z) / (si - Q * z) for z in u.s) * _prod((si / Q - t) / (si - t / Q) for t in u.t)


def unfold1_lhs(u, tj):
    Q = u.qsq
    return u.p1 * _prod((Q * tj - z) / (tj - Q * z) for z in u.t) * _prod((tj / Q - s) / (tj - s / Q) for s in u.s)


def unfolded_residuals(u):
    """Normalized residuals of both unfolded families (``s`` first)."""
    out = []
    for si in u.s:
        w = u.psi0(si)
        _check_nonzero([w], "Psi_0")
        out.append(unfold0_lhs(u, si) / (-w) - 1.0)
    for tj in u.t:
        w = u.psi1(tj)
        _check_nonzero([w], "Psi_1")
        out.append(unfold1_lhs(u, tj) / (-w) - 1.0)
    return np.array(out, dtype=complex)


def lambda_oper_check(u, tol=1e-8, clear_tol=1e-8):
    """Per root ``s_i``: does the ``lambda`` coefficient vanish, and does the ``s``-equation hold?"""
    Q = u.qsq
    a = u.abar * u.y0.scale_arg(1.0 / Q)
    c = u.cbar * u.y0.scale_arg(Q)
    num = a * u.y1.scale_arg(Q) + c * u.y1.scale_arg(1.0 / Q)
    b, rem = num.divmod(u.y1)
    rel = rem.norm() / num.norm()
    if rel > clear_tol:
        raise BetheViolationError(f"b(x) does not clear to a polynomial (remainder {rel:.2e})")
    res0 = unfolded_residuals(u)[: u.l0]
    out = []
    for si, r0 in zip(u.s, res0):
        ratio = 1.0 / u.psi_ratio_at(si)  # P(s) / P(Q s)
        t1 = ratio * c(si) * b(Q * si) * a(si / Q)
        t2 = c(Q * si) * b(si / Q) * a(si)
        lam_zero = abs(t1 + t2) <= tol * (abs(t1) + abs(t2))
        out.append({"s": si, "lambda_vanishes": bool(lam_zero), "unfold0_holds": bool(abs(r0) <= tol), "lambda_rel": float(abs(t1 + t2) / (abs(t1) + abs(t2))), "unfold0_rel": float(abs(r0))})
    return out


def _interpolant(points, values):
    """Lagrange interpolating polynomial through ``(points, values)``."""
    out = Polynomial([0.0])
    for i, (xi, vi) in enumerate(zip(points, values)):
        others = [x for j, x in enumerate(points) if j != i]
        basis = Polynomial.from_roots(others)
        out = out + basis * (vi / basis(xi))
    return out


def random_unfolded_instance(rng, l0=1, l1=1, qsq=None, satisfied=True, perturb=1e-2):
    """An instance satisfying the ``t``-family by construction.

    ``cbar`` is fitted so the ``t``-equations hold; ``Psi_0`` is fitted so the
    ``s``-equations hold. For ``satisfied=False`` the ``s`` roots are then
    moved and only ``cbar`` is refitted, leaving the ``s``-equations violated.
    """

    def unit(lo, hi, size=None):
        return rng.uniform(lo, hi, size) * np.exp(2j * np.pi * rng.uniform(size=size))

    if qsq is None:
        qsq = unit(0.1, 0.5)
    s = list(unit(0.5, 2.0, l0))
    t = list(unit(0.5, 2.0, l1))
    abar = Polynomial([unit(0.5, 2.0), unit(0.5, 2.0)])
    p0, p1 = unit(0.5, 2.0), unit(0.5, 2.0)

    def fit_cbar(s, t):
        u = UnfoldedData.from_roots(qsq, abar, Polynomial([1.0]), s, t, p0, p1, RationalFunction(Polynomial([1.0]), Polynomial([1.0])))
        vals = [-unfold1_lhs(u, tj) * abar(tj) / (p1 * qsq ** (l0 - l1)) for tj in t]
        return _interpolant(t, vals) + Polynomial([unit(0.5, 2.0)]) * Polynomial.from_roots(t)

    cbar = fit_cbar(s, t)
    base = UnfoldedData.from_roots(qsq, abar, cbar, s, t, p0, p1, RationalFunction(Polynomial([1.0]), Polynomial([1.0])))
    vals = [-unfold0_lhs(base, si) for si in s]
    psi0 = _interpolant(s, vals) + Polynomial([unit(0.5, 2.0)]) * Polynomial.from_roots(s)
    psi0 = RationalFunction(psi0, Polynomial([1.0]))
    if not satisfied:
        s = [z * (1 + perturb * unit(0.5, 1.0)) for z in s]
        cbar = fit_cbar(s, t)
    return UnfoldedData.from_roots(qsq, abar, cbar, s, t, p0, p1, psi0)
