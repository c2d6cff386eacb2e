"""Outer flow map and its limit onto the manifold.

``pi_map`` integrates dxi/dt = f(xi) until the drift has died out, giving a
numerical realisation of the projection pi(x); ``pi_jet_fd`` differentiates
it by central differences, which is the brute-force oracle for P and Q used
against the closed-form reduction routes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .core import SdeSystem
from .errors import EvaluationError, NoConvergence, StiffnessError

__all__ = ["FlowResult", "integrate_outer", "pi_map", "pi_jet_fd"]


@dataclass(frozen=True)
class FlowResult:
    endpoint: np.ndarray
    integration_time: float
    residual: float
    step_count: int


def _residual(system: SdeSystem, x: np.ndarray) -> float:
    val = system.f_checked(x)
    return float(np.max(np.abs(val)))


def integrate_outer(system: SdeSystem, x0: np.ndarray, t_end: float,
                    rtol: float = 1e-9, atol: float = 1e-12,
                    t_eval: np.ndarray | None = None):
    """Solve the outer initial value problem dxi/dt = f(xi), xi(0) = x0.

    Returns ``(ts, ys)`` with ``ys`` of shape (len(ts), d), sampled on
    ``t_eval`` when given (dense output of the adaptive 4(5) pair).
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise EvaluationError("non-finite initial point")
    sol = solve_ivp(lambda t, y: system.f(y), (0.0, float(t_end)), x0,
                    method="RK45", rtol=rtol, atol=atol, t_eval=t_eval,
                    dense_output=False)
    if not sol.success:
        raise StiffnessError(f"outer integration failed: {sol.message}")
    return sol.t, sol.y.T


def pi_map(system: SdeSystem, x0: np.ndarray, pi_tol: float = 1e-9,
           t_max: float = 1e4, rtol: float | None = None,
           atol: float | None = None) -> FlowResult:
    """Endpoint of the outer flow started at x0.

    Integrates in doubling time chunks until both the drift residual
    ||f||_inf and the displacement over the last chunk fall below
    ``pi_tol`` (the t -> infinity limit has no finite recipe, so both
    criteria together stand in for it), or raises NoConvergence past
    ``t_max``.
    """
    x = np.asarray(x0, dtype=float).copy()
    if rtol is None:
        rtol = max(min(1e-10, pi_tol * 1e-2), 1e-13)
    if atol is None:
        atol = rtol * 1e-2
    res = _residual(system, x)
    if res <= pi_tol:
        return FlowResult(endpoint=x, integration_time=0.0, residual=res,
                          step_count=0)
    t = 0.0
    chunk = 1.0
    steps = 0
    while t < t_max:
        chunk = min(chunk, t_max - t)
        sol = solve_ivp(lambda s, y: system.f(y), (0.0, chunk), x,
                        method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise StiffnessError(f"flow-map integration failed: {sol.message}")
        x_new = sol.y[:, -1]
        if not np.all(np.isfinite(x_new)):
            raise EvaluationError("flow-map trajectory left the finite domain")
        steps += sol.t.size - 1
        t += chunk
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        res = _residual(system, x)
        if res <= pi_tol and moved <= pi_tol:
            return FlowResult(endpoint=x, integration_time=t, residual=res,
                              step_count=steps)
        chunk *= 2.0
    raise NoConvergence(
        f"flow map did not settle within t_max={t_max:g} (residual {res:g})")


def pi_jet_fd(system: SdeSystem, z: np.ndarray, fd_step: float = 1e-3,
              pi_tol: float = 1e-10, t_max: float = 1e4):
    """Brute-force P and Q: central differences of the flow-map endpoint.

    ``z`` must lie on the manifold.  Returns ``(P_fd, Q_fd)`` with Q
    symmetrized in its trailing indices.  Cost is 1 + 2d + 2d(d-1) flow-map
    evaluations.
    """
    z = np.asarray(z, dtype=float)
    d = z.size
    h = float(fd_step)

    def pi(x):
        return pi_map(system, x, pi_tol=pi_tol, t_max=t_max).endpoint

    pi0 = pi(z)
    plus = np.empty((d, d))
    minus = np.empty((d, d))
    E = np.eye(d) * h
    for j in range(d):
        plus[j] = pi(z + E[j])
        minus[j] = pi(z - E[j])
    P = (plus - minus).T / (2.0 * h)

    Q = np.empty((d, d, d))
    for j in range(d):
        Q[:, j, j] = (plus[j] - 2.0 * pi0 + minus[j]) / (h * h)
    for j in range(d):
        for k in range(j + 1, d):
            val = (pi(z + E[j] + E[k]) - pi(z + E[j] - E[k])
                   - pi(z - E[j] + E[k]) + pi(z - E[j] - E[k])) / (4.0 * h * h)
            Q[:, j, k] = val
            Q[:, k, j] = val
    return P, 0.5 * (Q + Q.swapaxes(1, 2))
