"""Damped least-squares minimizer for the package's small dense problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: Forward-difference step used for all Jacobians.
FD_STEP = 1e-6


@dataclass
class FitResult:
    x: np.ndarray
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool


def forward_jacobian(fun: Callable, x: np.ndarray, r0: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Forward finite-difference Jacobian of a residual function."""
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        xs = x.copy()
        xs[j] += step
        jac[:, j] = (fun(xs) - r0) / step
    return jac


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    max_iter: int = 100,
    ftol: float = 1e-12,
    gtol: float = 1e-10,
    damping0: float = 1e-3,
    damping_max: float = 1e12,
) -> FitResult:
    """Minimize ``||fun(x)||^2`` by Levenberg-Marquardt.

    Damping scales the diagonal of the normal equations; it grows 10x on a
    rejected step and shrinks 10x on an accepted one. Iterations count
    accepted steps. Terminates converged on a relative cost change below
    ``ftol`` (including a flat region where no candidate can improve the
    cost by more than that) or a gradient infinity-norm below ``gtol``;
    terminates unconverged when damping tops out without an acceptable
    step or after ``max_iter`` accepted steps.

    ``fun`` may return non-finite residuals to veto a candidate point;
    the starting point must evaluate finite.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = float(r @ r)
    initial_cost = cost
    lam = damping0
    iterations = 0
    converged = False
    tiny = np.finfo(float).tiny

    for _ in range(max_iter):
        jac = forward_jacobian(fun, x, r)
        if not np.all(np.isfinite(jac)):
            break
        grad = jac.T @ r
        if np.abs(grad).max() < gtol:
            converged = True
            break
        jtj = jac.T @ jac
        diag = np.diag(np.maximum(np.diag(jtj), 1e-12))

        accepted = False
        while lam <= damping_max:
            try:
                delta = np.linalg.solve(jtj + lam * diag, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = fun(x + delta)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                x = x + delta
                decrease = cost - cost_new
                r, cost = r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                iterations += 1
                accepted = True
                if decrease < ftol * max(cost, tiny):
                    converged = True
                break
            if np.isfinite(cost_new) and cost_new - cost <= ftol * max(cost, tiny):
                # flat to numerical precision: nothing left to gain
                converged = True
                break
            lam *= 10.0
        if converged or not accepted:
            break

    return FitResult(x, initial_cost, cost, iterations, converged)
