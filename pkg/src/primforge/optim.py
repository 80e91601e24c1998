"""Bounded Levenberg-Marquardt with a central-difference Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def central_jacobian(fun, x, rel_step=1e-6, project=None):
    """Jacobian of ``fun`` at ``x`` by central differences.

    The step for parameter ``j`` is ``rel_step * max(1, |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(len(x)):
        h = rel_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((fun(xp) - fun(xm)) / (2 * h))
    return np.column_stack(cols)


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def levenberg_marquardt(fun, x0, project=None, max_iters=100, tol=1e-6, rel_step=1e-6,
                        lam0=1e-3, lam_max=1e10, jac=None) -> LMResult:
    """Minimize ``mean(fun(x)**2)``.

    ``project`` maps a trial point back into the feasible set after each step.
    Stops when an accepted step changes the cost by less than ``tol`` relative,
    when the damping saturates (no descent direction left), or at ``max_iters``.
    The cost history only records accepted steps, so it never increases.
    """
    project = project or (lambda v: v)
    jac = jac or (lambda v: central_jacobian(fun, v, rel_step))
    x = project(np.asarray(x0, dtype=float).copy())
    r = fun(x)
    n = max(len(r), 1)
    cost = float(r @ r) / n
    history = [cost]
    lam = lam0
    converged = False
    it = 0
    while it < max_iters:
        if cost == 0.0:
            converged = True
            break
        it += 1
        J = jac(x)
        g = J.T @ r
        H = J.T @ J
        diag = np.diag(H).copy()
        diag[diag <= 0] = 1e-12
        accepted = False
        while lam <= lam_max:
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            x_new = project(x + step)
            r_new = fun(x_new)
            cost_new = float(r_new @ r_new) / n
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged = True
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 3.0, 1e-12)
        if rel < tol:
            converged = True
            break
    return LMResult(x, cost, it, converged, history)
