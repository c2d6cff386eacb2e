"""Projection matrix P, curvature tensor Q and noise-induced drift g.

Three routes are implemented, selected by what is known about the manifold:

* ``project_general`` / ``q_general`` - eigen-decomposition of the Jacobian
  plus a restricted Lyapunov solve (any slow dimension m),
* ``build_local_frame_1d`` / ``q_1d`` - explicit second-order perturbation
  formulas for a one-dimensional manifold given as a curve,
* ``reduce_codim1`` - closed forms for a co-dimension-one manifold given
  the factorisation f = phi * r.

All routes produce derivatives of the same flow map, so they agree wherever
more than one applies; the test suite leans on that heavily.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .core import (
    CoDimOne,
    General,
    Jet,
    Parametrized1D,
    SdeSystem,
    _realify,
    default_hess_step,
    eval_jet,
    fd_gradient,
    fd_hessian_scalar,
    fd_jacobian,
)
from .errors import AmbiguousSlowDirection, LinAlgError, SingularFrame, UnstableManifold

__all__ = [
    "ReducedSystem",
    "LocalFrame1D",
    "project_general",
    "lyapunov_solve",
    "q_general",
    "build_local_frame_1d",
    "q_1d",
    "frame_to_full",
    "reduce_codim1",
    "noise_drift",
    "assemble_reduced",
    "reduce_at",
]


@dataclass(frozen=True)
class ReducedSystem:
    """Reduced SDE data at one manifold point.

    ``g`` is the noise-induced drift per unit mu; the assembled reduced
    equation reads

        dz/dt = eps * P h(z) + mu * g(z) + sqrt(mu) * P G(z) eta(t).
    """

    base_point: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    g: np.ndarray
    Ph: np.ndarray
    PG: np.ndarray
    method_tag: str
    epsilon: float
    mu: float

    @property
    def drift(self) -> np.ndarray:
        return self.epsilon * self.Ph + self.mu * self.g

    @property
    def noise(self) -> np.ndarray:
        return np.sqrt(self.mu) * self.PG


@dataclass(frozen=True)
class LocalFrame1D:
    """Local data for the 1-D route at gamma(z_scalar).

    ``v`` is a left zero-eigenvector of the Jacobian (the covector cutting
    out the fast fibre), ``v_prime`` its parameter derivative under the
    unit-norm sign-continued gauge, and ``theta`` the flow-field curvature
    matrix in the same gauge of v.
    """

    z_scalar: float
    gamma: np.ndarray
    dgamma: np.ndarray
    d2gamma: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    theta: np.ndarray


def project_general(jet: Jet) -> np.ndarray:
    """Projection onto the slow subspace along the fast one: P = I - J+ J."""
    m = jet.n_slow
    P = _realify(jet.W[:, :m] @ jet.W_inv[:m, :], "projection matrix")
    if m == 0:
        P = np.zeros((jet.dim, jet.dim))
    return P


def _lyapunov_in_eigenbasis(W: np.ndarray, W_inv: np.ndarray,
                            eigvals: np.ndarray, m: int,
                            H: np.ndarray) -> np.ndarray:
    """Solve J^T X + X J = -H on the fast subspace given J = W L W^-1.

    In the eigenbasis the restricted equation decouples to
    X~_ab = -H~_ab / (lam_a + lam_b) over fast index pairs; slow rows and
    columns are set to zero, which is the unique solution vanishing off the
    fast-fast block (the exponential-integral solution).
    """
    d = W.shape[0]
    Ht = W.T @ H @ W
    lam_sum = eigvals[:, None] + eigvals[None, :]
    Xt = np.zeros((d, d), dtype=complex)
    if m < d:
        denom = lam_sum[m:, m:]
        if np.any(np.abs(denom) < 1e-300):
            raise LinAlgError("singular restricted Lyapunov solve (lam_a + lam_b ~ 0)")
        Xt[m:, m:] = -Ht[m:, m:] / denom
    X = W_inv.T @ Xt @ W_inv
    return X


def lyapunov_solve(J: np.ndarray, H: np.ndarray,
                   P: Optional[np.ndarray] = None) -> np.ndarray:
    """Fast-subspace solution of the Lyapunov equation J^T X + X J = -H.

    The returned X equals the exponential integral
    int_0^inf (e^{sJ} - P)^T H (e^{sJ} - P) ds; it satisfies the Lyapunov
    equation exactly when restricted to the fast subspace (pre/post
    multiplied by I - P) and vanishes on the slow rows and columns in the
    eigenbasis.

    ``P`` identifies the slow subspace; eigenvectors u with ||P u|| > 0.5
    are classified slow.  With ``P=None`` the zero-threshold classification
    of :func:`slowmani.core.eval_jet` is used.
    """
    J = np.asarray(J, dtype=float)
    H = np.asarray(H, dtype=float)
    eigvals, W = np.linalg.eig(J)
    if P is not None:
        scores = np.linalg.norm(np.asarray(P) @ W, axis=0) / np.linalg.norm(W, axis=0)
        slow = scores > 0.5
    else:
        zero_tol = 1e-8 * float(np.linalg.norm(J))
        slow = np.abs(eigvals.real) <= zero_tol
    order = np.argsort(~slow, kind="stable")
    eigvals = eigvals[order]
    W = W[:, order]
    m = int(np.sum(slow))
    W_inv = np.linalg.inv(W)
    X = _lyapunov_in_eigenbasis(W, W_inv, eigvals, m, H)
    X = _realify(X, "Lyapunov solution")
    return 0.5 * (X + X.T)


def q_general(jet: Jet, P: np.ndarray) -> np.ndarray:
    """Curvature tensor by the general m-dimensional procedure.

    Q_ijk = sum_l -J+_il [P^T H_l P]_jk
            + P_il [X_l - J+^T H_l P - P^T H_l J+]_jk

    with X_l the fast-subspace Lyapunov solution for H_l.
    """
    d = jet.dim
    Jp = jet.pinv
    H = jet.hess
    A = np.empty((d, d, d))
    B = np.empty((d, d, d))
    for l in range(d):
        Xl = _realify(
            _lyapunov_in_eigenbasis(jet.W, jet.W_inv, jet.eigvals, jet.n_slow, H[l]),
            "Lyapunov solution")
        A[l] = P.T @ H[l] @ P
        B[l] = Xl - Jp.T @ H[l] @ P - P.T @ H[l] @ Jp
    Q = -np.einsum("il,ljk->ijk", Jp, A) + np.einsum("il,ljk->ijk", P, B)
    return 0.5 * (Q + Q.swapaxes(1, 2))


def _left_zero_vector(jet: Jet) -> np.ndarray:
    if jet.n_slow != 1:
        raise AmbiguousSlowDirection(
            f"1-D route needs a unique zero eigenvalue, found {jet.n_slow}")
    v = _realify(jet.left_zero[0], "left zero-eigenvector")
    return v


def _continued_v(system: SdeSystem, gamma: Callable[[float], np.ndarray],
                 z: float, ref: np.ndarray, fd_step: float | None) -> np.ndarray:
    jet = eval_jet(system, np.asarray(gamma(z), dtype=float), fd_step)
    v = _left_zero_vector(jet)
    v = v / np.linalg.norm(v)
    if float(np.dot(v, ref)) < 0.0:
        v = -v
    return v


def _theta_from_jet(jet: Jet) -> np.ndarray:
    """Flow-field curvature matrix in the gauge v^T w_1 = 1.

    The fast fibre through gamma(z) is, to second order, the stable
    manifold z_1 = z_2^T M z_2 in the eigenbasis coordinates z = W^-1 dx,
    where M solves the fast-block Sylvester equation
    M J_2 + J_2^T M = C_1 with C_1 half the fast-fast Hessian of the first
    eigen-component of the flow field.  Mapping back gives the quadratic
    term of the preimage equation v . dx + dx^T Theta dx = 0.
    """
    d = jet.dim
    W, W_inv = jet.W, jet.W_inv
    # Hessian of [W^-1 f(x0 + W z)]_1 in z-coordinates, fast-fast block.
    Hz1 = np.einsum("l,ljk->jk", W_inv[0], jet.hess)
    C1 = 0.5 * (W.T @ Hz1 @ W)[1:, 1:]
    lam = jet.eigvals[1:]
    denom = lam[:, None] + lam[None, :]
    if np.any(np.abs(denom) < 1e-300):
        raise LinAlgError("singular Sylvester solve for the stable-manifold quadratic")
    M = C1 / denom
    Mt = np.zeros((d, d), dtype=complex)
    Mt[1:, 1:] = M
    theta = _realify(-(W_inv.T @ Mt @ W_inv), "flow curvature matrix")
    return 0.5 * (theta + theta.T)


def build_local_frame_1d(system: SdeSystem, manifold: Parametrized1D,
                         z_scalar: float, fd_step: float | None = None,
                         jet: Optional[Jet] = None) -> LocalFrame1D:
    """Assemble v, v', Theta and the curve derivatives at gamma(z_scalar).

    gamma' and gamma'' come from the manifold's analytic providers when
    present, else central differences of gamma.  v is the left
    zero-eigenvector of the Jacobian, unit-normalized; v' is a central
    difference of the sign-continued eigenvector field along the curve, and
    Theta is rescaled into the same gauge as v.
    """
    z_scalar = float(z_scalar)
    gamma_fn = manifold.gamma
    x0 = np.asarray(gamma_fn(z_scalar), dtype=float)
    if jet is None:
        jet = eval_jet(system, x0, fd_step)

    scale = 1.0 + abs(z_scalar)
    if manifold.dgamma is not None:
        dg = np.asarray(manifold.dgamma(z_scalar), dtype=float)
    else:
        h1 = (np.finfo(float).eps) ** (1.0 / 3.0) * scale
        dg = (np.asarray(gamma_fn(z_scalar + h1), float)
              - np.asarray(gamma_fn(z_scalar - h1), float)) / (2.0 * h1)
    if manifold.d2gamma is not None:
        d2g = np.asarray(manifold.d2gamma(z_scalar), dtype=float)
    else:
        h2 = (np.finfo(float).eps) ** 0.25 * scale
        d2g = (np.asarray(gamma_fn(z_scalar + h2), float)
               - 2.0 * x0 + np.asarray(gamma_fn(z_scalar - h2), float)) / (h2 * h2)

    v_raw = _left_zero_vector(jet)  # gauge: v_raw . w_1 = 1
    c = float(np.linalg.norm(v_raw))
    v = v_raw / c
    sign = 1.0
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0.0:
        sign = -1.0
        v = -v
    theta = sign * _theta_from_jet(jet) / c

    # The eigenvector extraction noise sets the optimal v' step: roughly
    # eps-level with analytic Jacobians, FD-level (~1e-8) without.
    hv = (2e-5 if system.jacobian is not None else 2e-3) * scale
    if fd_step is not None:
        hv = max(hv, float(fd_step))
    v_plus = _continued_v(system, gamma_fn, z_scalar + hv, v, fd_step)
    v_minus = _continued_v(system, gamma_fn, z_scalar - hv, v, fd_step)
    v_prime = (v_plus - v_minus) / (2.0 * hv)

    denom = float(np.dot(v, dg))
    if abs(denom) < 1e-10 * np.linalg.norm(v) * max(np.linalg.norm(dg), 1e-300):
        raise SingularFrame("transversality failure: v . gamma' ~ 0")

    return LocalFrame1D(z_scalar=z_scalar, gamma=x0, dgamma=dg, d2gamma=d2g,
                        v=v, v_prime=v_prime, theta=theta)


def q_1d(frame: LocalFrame1D) -> Tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the chart map by the 1-D formulas.

    P_k = v_k / (v . gamma') and

    Q_jk = (v'_k P_j + v'_j P_k + 2 Theta_jk
            - sum_l (2 v'_l gamma'_l + v_l gamma''_l) P_j P_k) / (v . gamma')

    Both are invariant under any smooth rescaling of v (with Theta and v'
    transformed consistently).
    """
    v, vp, dg, d2g, theta = (frame.v, frame.v_prime, frame.dgamma,
                             frame.d2gamma, frame.theta)
    denom = float(np.dot(v, dg))
    if abs(denom) < 1e-300:
        raise SingularFrame("transversality failure: v . gamma' ~ 0")
    P_row = v / denom
    corr = 2.0 * float(np.dot(vp, dg)) + float(np.dot(v, d2g))
    Q_mat = (np.outer(P_row, vp) + np.outer(vp, P_row) + 2.0 * theta
             - corr * np.outer(P_row, P_row)) / denom
    return P_row, 0.5 * (Q_mat + Q_mat.T)


def frame_to_full(frame: LocalFrame1D, P_row: np.ndarray,
                  Q_mat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lift chart derivatives to the full-dimensional P and Q.

    With pi(x) = gamma(p(x)) one has P = gamma' p_x and
    Q_ijk = gamma''_i p_j p_k + gamma'_i p_jk.
    """
    P = np.outer(frame.dgamma, P_row)
    Q = (frame.d2gamma[:, None, None] * np.outer(P_row, P_row)[None, :, :]
         + frame.dgamma[:, None, None] * Q_mat[None, :, :])
    return P, Q


def reduce_codim1(system: SdeSystem, manifold: CoDimOne,
                  z: np.ndarray, fd_step: float | None = None
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """P and Q on a co-dimension-one manifold from the f = phi * r split.

    On the manifold J = r grad(phi)^T is rank one with sole nonzero
    eigenvalue lambda = grad(phi) . r < 0, the spectral pseudo-inverse is
    J / lambda^2, and

        P = I - r grad(phi)^T / lambda,
        Q_ijk = -( r_i [P^T phi_xx P]_jk + phi_j [P r_x P]_ik
                   + phi_k [P r_x P]_ij ) / lambda
                - phi_j phi_k [P r_x r]_i / lambda^2.
    """
    z = np.asarray(z, dtype=float)
    d = z.size
    r = np.asarray(manifold.r(z), dtype=float)
    if manifold.grad_phi is not None:
        q = np.asarray(manifold.grad_phi(z), dtype=float)
    else:
        q = fd_gradient(manifold.phi, z, fd_step)
    if manifold.jac_r is not None:
        R = np.asarray(manifold.jac_r(z), dtype=float)
    else:
        R = fd_jacobian(manifold.r, z, fd_step)
    if manifold.hess_phi is not None:
        Phi = np.asarray(manifold.hess_phi(z), dtype=float)
        Phi = 0.5 * (Phi + Phi.T)
    else:
        Phi = fd_hessian_scalar(manifold.phi, z,
                                default_hess_step(z) if fd_step is None else fd_step)

    lam = float(q @ r)
    if lam >= 0.0:
        raise UnstableManifold(f"lambda = grad(phi).r = {lam:g} >= 0")

    P = np.eye(d) - np.outer(r, q) / lam
    PRP = P @ R @ P
    PRr = P @ R @ r
    PPhiP = P.T @ Phi @ P
    Q = -(np.einsum("i,jk->ijk", r, PPhiP)
          + np.einsum("j,ik->ijk", q, PRP)
          + np.einsum("k,ij->ijk", q, PRP)) / lam \
        - np.einsum("j,k,i->ijk", q, q, PRr) / (lam * lam)
    return P, 0.5 * (Q + Q.swapaxes(1, 2))


def noise_drift(Q: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Noise-induced drift per unit mu: g_i = 1/2 sum_{s,j,k} G_js G_ks Q_ijk."""
    GGt = np.asarray(G) @ np.asarray(G).T
    return 0.5 * np.einsum("jk,ijk->i", GGt, np.asarray(Q))


def assemble_reduced(system: SdeSystem, P: np.ndarray, Q: np.ndarray,
                     g: np.ndarray, z: np.ndarray,
                     method_tag: str = "general") -> ReducedSystem:
    """Bundle P, Q, g with the projected inner drift and noise at z."""
    z = np.asarray(z, dtype=float)
    Ph = P @ np.asarray(system.h(z), dtype=float)
    PG = P @ np.asarray(system.G(z), dtype=float)
    return ReducedSystem(base_point=z, P=P, Q=Q, g=np.asarray(g, dtype=float),
                         Ph=Ph, PG=PG, method_tag=method_tag,
                         epsilon=system.epsilon, mu=system.mu)


def reduce_at(system: SdeSystem, manifold, z, method: str = "auto",
              fd_step: float | None = None, z_scalar: float | None = None
              ) -> ReducedSystem:
    """One-stop reduction at a manifold point, dispatching on the route.

    ``method`` is one of ``auto``, ``general``, ``one_d``, ``codim1``,
    ``oracle``.  For the 1-D route ``z`` may be omitted and ``z_scalar``
    given instead; for ``auto`` the route follows the manifold variant
    (curve -> one_d, factorisation -> codim1, declared dimension ->
    general, no information -> flow-map oracle).
    """
    from .core import Unknown

    if method == "auto":
        if isinstance(manifold, Parametrized1D):
            method = "one_d"
        elif isinstance(manifold, CoDimOne):
            method = "codim1"
        elif isinstance(manifold, Unknown):
            method = "oracle"
        else:
            method = "general"

    if method == "oracle":
        from .flow import pi_jet_fd

        point = np.asarray(z, dtype=float)
        P, Q = pi_jet_fd(system, point,
                         fd_step=1e-3 if fd_step is None else fd_step)
        g = noise_drift(Q, np.asarray(system.G(point), dtype=float))
        return assemble_reduced(system, P, Q, g, point, method_tag="oracle")

    if method == "one_d":
        if not isinstance(manifold, Parametrized1D):
            raise ValueError("one_d route needs a Parametrized1D manifold")
        if z_scalar is None:
            raise ValueError("one_d route needs the chart coordinate z_scalar")
        frame = build_local_frame_1d(system, manifold, z_scalar, fd_step)
        P_row, Q_mat = q_1d(frame)
        P, Q = frame_to_full(frame, P_row, Q_mat)
        point = frame.gamma
    elif method == "codim1":
        if not isinstance(manifold, CoDimOne):
            raise ValueError("codim1 route needs a CoDimOne manifold")
        point = np.asarray(z, dtype=float)
        P, Q = reduce_codim1(system, manifold, point, fd_step)
    elif method == "general":
        point = np.asarray(z, dtype=float)
        n_slow = manifold.slow_dim if isinstance(manifold, General) else None
        jet = eval_jet(system, point, fd_step, n_slow=n_slow)
        P = project_general(jet)
        Q = q_general(jet, P)
    else:
        raise ValueError(f"unknown reduction method {method!r}")

    g = noise_drift(Q, np.asarray(system.G(point), dtype=float))
    return assemble_reduced(system, P, Q, g, point, method_tag=method)
