"""Damped Newton iteration for square complex systems."""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError


def numeric_jacobian(f, x, fx=None, h=1e-7):
    """Forward-difference Jacobian of a holomorphic map (one complex step per variable)."""
    x = np.asarray(x, dtype=complex)
    fx = f(x) if fx is None else fx
    J = np.zeros((len(fx), len(x)), dtype=complex)
    for k in range(len(x)):
        step = h * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += step
        J[:, k] = (f(xp) - fx) / step
    return J


def newton(f, x0, jac=None, max_iter=50, tol=1e-14, damping=True):
    """Solve ``f(x) = 0`` by Newton's method with backtracking on ``|f|``.

    Returns the final iterate; raises :class:`ConvergenceError` if the
    residual norm does not drop below ``tol`` (or stalls at a singular
    Jacobian).
    """
    x = np.array(x0, dtype=complex)
    fx = f(x)
    nrm = np.linalg.norm(fx)
    for _ in range(max_iter):
        if not np.isfinite(nrm):
            break
        if nrm <= tol:
            return x
        J = jac(x) if jac is not None else numeric_jacobian(f, x, fx)
        try:
            step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while True:
            xn = x + t * step
            try:
                fn = f(xn)
                nn = np.linalg.norm(fn)
            except (ZeroDivisionError, FloatingPointError, ArithmeticError):
                nn = np.inf
            if nn < nrm or not damping or t < 1e-4:
                break
            t *= 0.5
        if not np.isfinite(nn) or (t < 1e-4 and nn >= nrm):
            break
        x, fx, nrm = xn, fn, nn
    if np.isfinite(nrm) and nrm <= tol:
        return x
    raise ConvergenceError(f"Newton did not converge (residual {nrm:.3e})")


def multistart(f, starts, **kw):
    """Run :func:`newton` from every start; returns the converged points in order."""
    out = []
    for x0 in starts:
        try:
            out.append(newton(f, x0, **kw))
        except ConvergenceError:
            continue
    return out
