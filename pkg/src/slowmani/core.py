"""Full stochastic model representation and pointwise derivative bundles.

The central object is :class:`SdeSystem`, describing

    dx/dt = f(x) + eps * h(x) + sqrt(mu) * G(x) eta(t)

with a fast outer drift ``f`` whose zero set is an attracting manifold of
equilibria, a slow inner drift ``h`` and a d-by-s noise coupling ``G``.
:func:`eval_jet` packages the value, Jacobian, Hessians and eigen-split of
``f`` at a point, which is all the reduction routines need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    AmbiguousSlowDirection,
    DefectiveJacobian,
    EvaluationError,
    LinAlgError,
)

__all__ = [
    "SdeSystem",
    "Parametrized1D",
    "CoDimOne",
    "General",
    "Unknown",
    "ManifoldSpec",
    "Jet",
    "eval_jet",
    "validate_manifold_point",
    "fd_jacobian",
    "fd_hessians",
    "fd_gradient",
    "fd_hessian_scalar",
    "guarded_sqrt",
    "default_jac_step",
    "default_hess_step",
]

_EPS = float(np.finfo(float).eps)

# Eigenvalues with |Re| below ZERO_TOL_FACTOR * ||J|| count as zero.
ZERO_TOL_FACTOR = 1e-8
# Eigenvector matrices with condition number above this are declared defective.
DEFECTIVE_COND = 1e12
# Imaginary parts above IMAG_TOL (relative) when realifying are an error.
IMAG_TOL = 1e-10


def default_jac_step(z: np.ndarray) -> float:
    """FD step for first derivatives: sqrt(eps) scaled by the point size."""
    return np.sqrt(_EPS) * (1.0 + float(np.linalg.norm(z)))


def default_hess_step(z: np.ndarray) -> float:
    """FD step for second derivatives: cbrt(eps) scaled by the point size."""
    return _EPS ** (1.0 / 3.0) * (1.0 + float(np.linalg.norm(z)))


def guarded_sqrt(arg, rate_floor: float):
    """Square root of a state-dependent rate with a small-negative guard.

    Arguments in ``[-rate_floor, 0)`` are clamped to zero (boundary
    overshoot of a discretized path); anything below ``-rate_floor`` means
    the state has genuinely left the domain.
    """
    a = np.asarray(arg, dtype=float)
    if np.any(a < -rate_floor):
        raise EvaluationError(
            f"rate argument {float(np.min(a)):g} below -rate_floor={-rate_floor:g}"
        )
    return np.sqrt(np.maximum(a, 0.0))


@dataclass(frozen=True)
class SdeSystem:
    """Immutable description of the full model.

    ``f``, ``h`` map states of shape (..., d) to (..., d); ``G`` maps to
    (..., d, s).  All three must broadcast over leading axes so ensembles
    can be stepped in one call.  ``jacobian`` and ``hessian`` are optional
    analytic providers for the derivatives of ``f`` (a (d, d) matrix and a
    (d, d, d) array with ``hessian(x)[i]`` the Hessian of ``f_i``).
    """

    dim: int
    noise_dim: int
    f: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    epsilon: float = 0.0
    mu: float = 0.0
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    rate_floor: float = 0.1
    name: str = ""

    def __post_init__(self):
        if self.dim < 1 or self.noise_dim < 1:
            raise ValueError("dim and noise_dim must be positive")
        if self.epsilon < 0 or self.mu < 0:
            raise ValueError("epsilon and mu must be nonnegative")

    def f_checked(self, x: np.ndarray) -> np.ndarray:
        val = np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(val)):
            raise EvaluationError(f"f evaluated to a non-finite value at {x!r}")
        return val

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Total deterministic drift f + eps*h."""
        return self.f(x) + self.epsilon * self.h(x)


@dataclass(frozen=True)
class Parametrized1D:
    """One-dimensional manifold given as a parameterised curve gamma(z)."""

    gamma: Callable[[float], np.ndarray]
    dgamma: Optional[Callable[[float], np.ndarray]] = None
    d2gamma: Optional[Callable[[float], np.ndarray]] = None


@dataclass(frozen=True)
class CoDimOne:
    """Co-dimension-one manifold via the factorisation f = phi * r.

    ``phi`` is scalar and vanishes on the manifold, ``r`` is the
    non-vanishing fast direction; the contraction rate is
    lambda = grad(phi) . r < 0.
    """

    phi: Callable[[np.ndarray], float]
    r: Callable[[np.ndarray], np.ndarray]
    grad_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac_r: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class General:
    """m-dimensional manifold known only through its dimension."""

    slow_dim: int


@dataclass(frozen=True)
class Unknown:
    """No manifold information; only the flow-map oracle applies."""


ManifoldSpec = Union[Parametrized1D, CoDimOne, General, Unknown]


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], z: np.ndarray,
                step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of a vector field, O(step^2)."""
    z = np.asarray(z, dtype=float)
    h = default_jac_step(z) if step is None else float(step)
    d = z.size
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2.0 * h))
    return np.column_stack(cols)


def fd_hessians(f: Callable[[np.ndarray], np.ndarray], z: np.ndarray,
                step: float | None = None) -> np.ndarray:
    """Central-difference Hessians of each component of a vector field.

    Returns an array of shape (d, d, d) with ``H[i]`` the Hessian of
    ``f_i``, symmetrized exactly in its two trailing indices.
    """
    z = np.asarray(z, dtype=float)
    h = default_hess_step(z) if step is None else float(step)
    d = z.size
    f0 = np.asarray(f(z), dtype=float)
    H = np.zeros((d, d, d))
    I = np.eye(d) * h
    for j in range(d):
        for k in range(j, d):
            if j == k:
                val = (np.asarray(f(z + 2 * I[j])) - 2 * f0
                       + np.asarray(f(z - 2 * I[j]))) / (4.0 * h * h)
            else:
                val = (np.asarray(f(z + I[j] + I[k]))
                       - np.asarray(f(z + I[j] - I[k]))
                       - np.asarray(f(z - I[j] + I[k]))
                       + np.asarray(f(z - I[j] - I[k]))) / (4.0 * h * h)
            H[:, j, k] = val
            H[:, k, j] = val
    return 0.5 * (H + H.swapaxes(1, 2))


def fd_gradient(phi: Callable[[np.ndarray], float], z: np.ndarray,
                step: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    z = np.asarray(z, dtype=float)
    h = default_jac_step(z) if step is None else float(step)
    d = z.size
    g = np.zeros(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        g[j] = (float(phi(z + e)) - float(phi(z - e))) / (2.0 * h)
    return g


def fd_hessian_scalar(phi: Callable[[np.ndarray], float], z: np.ndarray,
                      step: float | None = None) -> np.ndarray:
    """Central-difference Hessian of a scalar function, symmetrized."""
    H = fd_hessians(lambda x: np.array([phi(x)]), z, step)
    return H[0]


@dataclass(frozen=True)
class Jet:
    """Derivative bundle of the outer drift at a point.

    ``eigvals`` and ``W`` hold the (possibly complex) eigen-decomposition
    J = W diag(eigvals) W^-1 with the ``n_slow`` zero-group eigenvalues
    first.  ``pinv`` is the spectral pseudo-inverse: zero on the slow
    eigenvectors, 1/lambda on the fast ones.
    """

    z: np.ndarray
    f_val: np.ndarray
    jac: np.ndarray
    hess: np.ndarray
    eigvals: np.ndarray
    W: np.ndarray
    W_inv: np.ndarray
    n_slow: int
    pinv: np.ndarray
    zero_tol: float

    @property
    def dim(self) -> int:
        return self.z.size

    @property
    def slow_basis(self) -> np.ndarray:
        """Right eigenvectors spanning the tangent (slow) subspace, (d, m)."""
        return self.W[:, : self.n_slow]

    @property
    def left_zero(self) -> np.ndarray:
        """Left zero-eigenvector rows (m, d): rows of W^-1 for the slow group."""
        return self.W_inv[: self.n_slow, :]

    @property
    def fast_eigvals(self) -> np.ndarray:
        return self.eigvals[self.n_slow:]


def _realify(a: np.ndarray, what: str, tol: float = IMAG_TOL) -> np.ndarray:
    if np.iscomplexobj(a):
        scale = max(1.0, float(np.max(np.abs(a))))
        worst = float(np.max(np.abs(a.imag)))
        if worst > tol * scale:
            raise LinAlgError(
                f"{what} has imaginary part {worst:g} (tol {tol * scale:g})")
        return np.ascontiguousarray(a.real)
    return a


def eval_jet(system: SdeSystem, z: np.ndarray, fd_step: float | None = None,
             n_slow: int | None = None) -> Jet:
    """Evaluate f, its Jacobian and Hessians at ``z`` and split the spectrum.

    Analytic providers are used when the system carries them, otherwise
    central finite differences (O(step^2), Hessians symmetrized).  The
    eigenvalues are sorted slow-group first; an eigenvalue is "zero" when
    |Re lambda| <= 1e-8 * ||J||_F.  Passing ``n_slow`` pins the slow count
    (used with a General(m) manifold declaration); in that case the m
    smallest-|Re| eigenvalues are taken as slow and it is an error if the
    (m+1)-th also sits inside the zero threshold.

    Raises
    ------
    EvaluationError
        if f or a derivative evaluates to a non-finite value.
    DefectiveJacobian
        if the eigenvector matrix has condition number > 1e12.
    AmbiguousSlowDirection
        if the zero group cannot be separated as requested.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != system.dim:
        raise ValueError(f"point has dimension {z.size}, expected {system.dim}")
    if not np.all(np.isfinite(z)):
        raise EvaluationError("non-finite evaluation point")
    f_val = system.f_checked(z)

    if system.jacobian is not None:
        J = np.asarray(system.jacobian(z), dtype=float)
    else:
        J = fd_jacobian(system.f, z, fd_step)
    if system.hessian is not None:
        H = np.asarray(system.hessian(z), dtype=float)
        H = 0.5 * (H + H.swapaxes(1, 2))
    else:
        H = fd_hessians(system.f, z, fd_step)
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(H))):
        raise EvaluationError("non-finite derivative evaluation")

    try:
        eigvals, W = np.linalg.eig(J)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise LinAlgError(f"eigendecomposition failed: {exc}") from exc
    condW = np.linalg.cond(W)
    if not np.isfinite(condW) or condW > DEFECTIVE_COND:
        raise DefectiveJacobian(
            f"eigenvector condition number {condW:.3g} exceeds {DEFECTIVE_COND:g}; "
            "Jacobian is numerically defective - use the flow-map oracle route")

    zero_tol = ZERO_TOL_FACTOR * float(np.linalg.norm(J))
    order = np.lexsort((eigvals.imag, eigvals.real, np.abs(eigvals.real)))
    eigvals = eigvals[order]
    W = W[:, order]

    n_zero = int(np.sum(np.abs(eigvals.real) <= zero_tol))
    if n_slow is None:
        m = n_zero
    else:
        m = int(n_slow)
        if not 0 <= m <= z.size:
            raise ValueError("n_slow out of range")
        if n_zero > m:
            raise AmbiguousSlowDirection(
                f"{n_zero} eigenvalues inside the zero threshold but {m} declared slow")

    W_inv = np.linalg.inv(W)
    lam_plus = np.zeros(z.size, dtype=complex)
    if m < z.size:
        lam_fast = eigvals[m:]
        if np.any(np.abs(lam_fast) <= zero_tol):
            raise AmbiguousSlowDirection(
                "a fast eigenvalue sits inside the zero threshold")
        lam_plus[m:] = 1.0 / lam_fast
    pinv = _realify((W * lam_plus) @ W_inv, "pseudo-inverse")

    return Jet(z=z, f_val=f_val, jac=J, hess=H, eigvals=eigvals, W=W,
               W_inv=W_inv, n_slow=m, pinv=pinv, zero_tol=zero_tol)


def validate_manifold_point(system: SdeSystem, z: np.ndarray, tol: float) -> bool:
    """True iff ||f(z)||_inf <= tol."""
    val = system.f_checked(np.asarray(z, dtype=float))
    return bool(np.max(np.abs(val)) <= tol)
