import dataclasses

import numpy as np
import numpy.testing as npt
import pytest
import scipy.linalg as sla
from scipy.integrate import quad_vec

from slowmani import (
    Parametrized1D,
    SdeSystem,
    SingularFrame,
    UnstableManifold,
    build_local_frame_1d,
    build_model,
    eval_jet,
    lyapunov_solve,
    noise_drift,
    project_general,
    q_1d,
    q_general,
    reduce_at,
    reduce_codim1,
)
from slowmani.core import CoDimOne
from slowmani.models import reference_reduced
from slowmani.reduction import LocalFrame1D, assemble_reduced, frame_to_full


def _random_stable_plus_kernel(d, m, rng, complex_pairs=True):
    """J = W diag(0_m, stable block) W^-1 with a well-conditioned W."""
    while True:
        W = rng.standard_normal((d, d))
        if np.linalg.cond(W) < 50.0:
            break
    D = np.zeros((d, d))
    i = m
    while i < d:
        if complex_pairs and i + 1 < d and rng.random() < 0.4:
            re, im = -rng.uniform(0.5, 4.0), rng.uniform(0.2, 2.0)
            D[i:i + 2, i:i + 2] = [[re, im], [-im, re]]
            i += 2
        else:
            D[i, i] = -rng.uniform(0.5, 4.0)
            i += 1
    return W @ D @ np.linalg.inv(W)


def _spectral_projector(J):
    eigvals, W = np.linalg.eig(J)
    slow = np.abs(eigvals.real) <= 1e-8 * np.linalg.norm(J)
    order = np.argsort(~slow, kind="stable")
    W = W[:, order]
    m = int(slow.sum())
    Winv = np.linalg.inv(W)
    return np.real(W[:, :m] @ Winv[:m, :]), m


# ---------------------------------------------------------------------------
# project_general
# ---------------------------------------------------------------------------

def test_project_decoupled_axes():
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([np.zeros_like(x[..., 0]),
                                           -x[..., 1]], axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    jet = eval_jet(sys2, np.array([0.3, 0.0]))
    npt.assert_allclose(project_general(jet), np.diag([1.0, 0.0]), atol=1e-13)


def test_project_mm_row(mm):
    jet = eval_jet(mm.sde, mm.chart_point(1.0))
    P = project_general(jet)
    npt.assert_allclose(P[0], [0.8, 0.8], atol=1e-12)


def test_project_lv_closed_form(lv):
    x = np.array([0.25, 0.25])
    P = project_general(eval_jet(lv.sde, x))
    npt.assert_allclose(P, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)


def test_projector_invariants(mm, lv, rng):
    for model, sampler in [
            (mm, lambda: mm.chart_point(rng.uniform(0.1, 3.0))),
            (lv, lambda: lv.project(rng.random(2) + 0.2))]:
        for _ in range(10):
            jet = eval_jet(model.sde, sampler())
            P = project_general(jet)
            assert np.max(np.abs(P @ P - P)) <= 1e-8
            assert np.max(np.abs(jet.jac @ P)) <= 1e-8 * np.linalg.norm(jet.jac)
            sv = np.linalg.svd(P, compute_uv=False)
            assert np.sum(sv > 0.5) == jet.n_slow
            assert np.all(sv[(sv <= 0.5)] < 1e-8)


def test_projector_matches_tangent_frame_form(rng):
    # P equals U (V^T U)^-1 V^T for U any basis of the tangent (kernel)
    # space and V any basis of the orthogonal complement of the fast
    # (range) space, independent of scaling
    for _ in range(10):
        d = int(rng.integers(3, 7))
        m = int(rng.integers(1, d))
        J = _random_stable_plus_kernel(d, m, rng)
        P, m_found = _spectral_projector(J)
        assert m_found == m
        U = sla.null_space(J) @ np.diag(rng.uniform(0.5, 2.0, size=m))
        V = sla.null_space(J.T) @ np.diag(rng.uniform(0.5, 2.0, size=m))
        P_uv = U @ np.linalg.solve(V.T @ U, V.T)
        npt.assert_allclose(P, P_uv, atol=1e-9)


def test_basis_invariance(mm):
    # rescaling eigenvector columns must not change P or Q
    jet = eval_jet(mm.sde, mm.chart_point(0.9))
    P, Q = project_general(jet), q_general(jet, project_general(jet))
    W2 = jet.W * np.array([3.0, -0.5])
    jet2 = dataclasses.replace(jet, W=W2, W_inv=np.linalg.inv(W2))
    P2 = project_general(jet2)
    Q2 = q_general(jet2, P2)
    npt.assert_allclose(P, P2, atol=1e-10)
    npt.assert_allclose(Q, Q2, atol=1e-10)


def test_basis_invariance_permutation():
    # permuting eigenvector columns within the slow group is also inert
    lv3 = build_model("lotka_volterra_wf",
                      dict(b=2.0, d=1.0, c=1.0, K=500, n_species=3))
    x = np.array([0.2, 0.2, 0.1])
    jet = eval_jet(lv3.sde, x)
    assert jet.n_slow == 2
    P, Q = project_general(jet), q_general(jet, project_general(jet))
    perm = np.array([1, 0, 2])
    W2 = jet.W[:, perm] * np.array([-2.0, 0.7, 1.3])
    jet2 = dataclasses.replace(jet, W=W2, W_inv=np.linalg.inv(W2),
                               eigvals=jet.eigvals[perm])
    P2 = project_general(jet2)
    Q2 = q_general(jet2, P2)
    npt.assert_allclose(P, P2, atol=1e-10)
    npt.assert_allclose(Q, Q2, atol=1e-10)


# ---------------------------------------------------------------------------
# lyapunov_solve
# ---------------------------------------------------------------------------

def test_lyapunov_diagonal_example():
    J = -np.eye(2)
    H = np.diag([2.0, 4.0])
    X = lyapunov_solve(J, H, P=np.zeros((2, 2)))
    npt.assert_allclose(X, np.diag([1.0, 2.0]), atol=1e-13)


def test_lyapunov_zero_rhs(rng):
    J = _random_stable_plus_kernel(4, 1, rng)
    P, _ = _spectral_projector(J)
    npt.assert_allclose(lyapunov_solve(J, np.zeros((4, 4)), P),
                        np.zeros((4, 4)), atol=1e-14)


def test_lyapunov_matches_exponential_integral(rng):
    # X must equal int_0^inf (e^{sJ} - P)^T H (e^{sJ} - P) ds
    for _ in range(5):
        d = 3
        J = _random_stable_plus_kernel(d, 1, rng)
        P, _ = _spectral_projector(J)
        H = rng.standard_normal((d, d))
        H = 0.5 * (H + H.T)
        X = lyapunov_solve(J, H, P)
        X_quad, _ = quad_vec(
            lambda s: (sla.expm(s * J) - P).T @ H @ (sla.expm(s * J) - P),
            0.0, np.inf, epsabs=1e-12, epsrel=1e-10)
        npt.assert_allclose(X, X_quad, atol=1e-6)


def test_lyapunov_restricted_residual(rng):
    for _ in range(10):
        d = int(rng.integers(2, 8))
        m = int(rng.integers(0, d))
        J = _random_stable_plus_kernel(d, m, rng)
        P, _ = _spectral_projector(J)
        H = rng.standard_normal((d, d))
        H = 0.5 * (H + H.T)
        X = lyapunov_solve(J, H, P)
        F = np.eye(d) - P
        R = F.T @ (J.T @ X + X @ J + H) @ F
        assert np.max(np.abs(R)) < 1e-10


# ---------------------------------------------------------------------------
# q_general and the flow-consistency identity
# ---------------------------------------------------------------------------

def test_q_zero_for_linear_field():
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([np.zeros_like(x[..., 0]),
                                           -x[..., 1]], axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    jet = eval_jet(sys2, np.array([0.3, 0.0]))
    Q = q_general(jet, project_general(jet))
    npt.assert_allclose(Q, np.zeros((2, 2, 2)), atol=1e-8)


def test_q_mm_value(mm):
    jet = eval_jet(mm.sde, mm.chart_point(1.0))
    Q = q_general(jet, project_general(jet))
    npt.assert_allclose(Q[0], 0.128 * np.ones((2, 2)), atol=1e-12)


def test_q_lv_values(lv):
    jet = eval_jet(lv.sde, np.array([0.25, 0.25]))
    Q = q_general(jet, project_general(jet))
    npt.assert_allclose(Q[0, 0, 0], -2.0, atol=1e-12)
    npt.assert_allclose(Q[0, 1, 1], 2.0, atol=1e-12)
    npt.assert_allclose(Q[0, 0, 1], 0.0, atol=1e-12)


def _flow_consistency_residual(jet, P, Q):
    """max_jk | J Q_.jk + [P^T H_i P]_jk | - the exact-identity residual."""
    HP = np.einsum("mj,imn,nk->ijk", P, jet.hess, P)
    return np.max(np.abs(np.einsum("il,ljk->ijk", jet.jac, Q) + HP))


def test_flow_consistency_and_projected_annihilation(mm, lv, rng):
    for model, sampler in [
            (mm, lambda: mm.chart_point(rng.uniform(0.1, 3.0))),
            (lv, lambda: lv.project(rng.random(2) + 0.2))]:
        for _ in range(5):
            jet = eval_jet(model.sde, sampler())
            P = project_general(jet)
            Q = q_general(jet, P)
            assert _flow_consistency_residual(jet, P, Q) < 1e-6
            # P annihilates the projected Hessian contraction
            HP = np.einsum("mj,imn,nk->ijk", P, jet.hess, P)
            assert np.max(np.abs(np.einsum("il,ljk->jk", P, HP))) < 1e-8
            assert np.max(np.abs(Q - Q.swapaxes(1, 2))) == 0.0


def test_curved_flow_toy_model_all_routes():
    # f = (x2^2, -x2): pi(x) = (x1 + x2^2/2, 0) exactly, so at the origin
    # P = diag(1, 0), Q_1 = [[0,0],[0,1]], Q_2 = 0 and Theta_22 = 1/2.
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([x[..., 1] ** 2, -x[..., 1]], axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    jet = eval_jet(sys2, np.zeros(2))
    P = project_general(jet)
    Q = q_general(jet, P)
    npt.assert_allclose(P, np.diag([1.0, 0.0]), atol=1e-9)
    npt.assert_allclose(Q[0], [[0.0, 0.0], [0.0, 1.0]], atol=1e-7)
    npt.assert_allclose(Q[1], np.zeros((2, 2)), atol=1e-7)

    man = Parametrized1D(gamma=lambda z: np.array([float(z), 0.0]))
    frame = build_local_frame_1d(sys2, man, 0.0)
    npt.assert_allclose(frame.theta, [[0.0, 0.0], [0.0, 0.5]], atol=1e-9)
    P_row, Q_mat = q_1d(frame)
    P1, Q1 = frame_to_full(frame, P_row, Q_mat)
    npt.assert_allclose(P1, P, atol=1e-9)
    npt.assert_allclose(Q1, Q, atol=1e-7)


# ---------------------------------------------------------------------------
# 1-D local frame
# ---------------------------------------------------------------------------

def test_complex_fast_pair_exact_projection():
    # fast plane spirals in (eigenvalues -1 +- 2i); the slow coordinate
    # integrates the squared fast radius, so pi(x) = (x1 + (x2^2 + x3^2)/2,
    # 0, 0) exactly: P = diag(1,0,0), Q_1 = diag(0,1,1), Q_2 = Q_3 = 0
    def f(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([x2 ** 2 + x3 ** 2,
                         -x2 + 2.0 * x3,
                         -2.0 * x2 - x3], axis=-1)

    system = SdeSystem(dim=3, noise_dim=1, f=f,
                       h=lambda x: np.zeros_like(x),
                       G=lambda x: np.zeros(x.shape[:-1] + (3, 1)))
    z = np.array([0.4, 0.0, 0.0])
    P_want = np.diag([1.0, 0.0, 0.0])
    Q_want = np.zeros((3, 3, 3))
    Q_want[0] = np.diag([0.0, 1.0, 1.0])

    jet = eval_jet(system, z)
    assert np.max(np.abs(np.sort(jet.fast_eigvals.imag))) > 1.0
    P = project_general(jet)
    Q = q_general(jet, P)
    npt.assert_allclose(P, P_want, atol=1e-9)
    npt.assert_allclose(Q, Q_want, atol=1e-7)

    man = Parametrized1D(gamma=lambda t: np.array([float(t), 0.0, 0.0]))
    frame = build_local_frame_1d(system, man, 0.4)
    P_row, Q_mat = q_1d(frame)
    P1, Q1 = frame_to_full(frame, P_row, Q_mat)
    npt.assert_allclose(P1, P_want, atol=1e-9)
    npt.assert_allclose(Q1, Q_want, atol=1e-6)

    from slowmani import pi_jet_fd

    P_fd, Q_fd = pi_jet_fd(system, z, fd_step=1e-3, pi_tol=1e-10)
    npt.assert_allclose(P_fd, P_want, atol=1e-5)
    npt.assert_allclose(Q_fd, Q_want, atol=1e-4)


def test_frame_flat_manifold_linear_flow():
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([np.zeros_like(x[..., 0]),
                                           -x[..., 1]], axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    man = Parametrized1D(gamma=lambda z: np.array([float(z), 0.0]))
    frame = build_local_frame_1d(sys2, man, 0.4)
    npt.assert_allclose(np.abs(frame.v), [1.0, 0.0], atol=1e-12)
    npt.assert_allclose(frame.v_prime, [0.0, 0.0], atol=1e-9)
    npt.assert_allclose(frame.theta, np.zeros((2, 2)), atol=1e-12)
    npt.assert_allclose(frame.d2gamma, [0.0, 0.0], atol=1e-7)
    P_row, Q_mat = q_1d(frame)
    npt.assert_allclose(P_row, [1.0, 0.0], atol=1e-12)
    npt.assert_allclose(Q_mat, np.zeros((2, 2)), atol=1e-9)


def test_frame_mm_left_eigenvector(mm):
    # v is proportional to (beta, 1) for every z, so v' = 0 under the
    # unit-norm continuation
    for z in (0.4, 1.0, 2.0):
        frame = build_local_frame_1d(mm.sde, mm.parametrized1d, z)
        v = frame.v / frame.v[1]
        npt.assert_allclose(v, [1.0, 1.0], atol=1e-12)
        npt.assert_allclose(frame.v_prime, [0.0, 0.0], atol=1e-8)


def test_frame_mm_curve_second_derivative():
    model = build_model("michaelis_menten",
                        dict(alpha=1.0, beta=1.0, epsilon=0.01, mu=0.01))
    frame = build_local_frame_1d(model.sde, model.parametrized1d, 1.0)
    npt.assert_allclose(frame.d2gamma, [0.0, -0.25], atol=1e-13)


def test_q1d_matches_closed_form(mm):
    ref_row = lambda z: (z + 1.0) ** 2 / (1.0 + (z + 1.0) ** 2)
    for z in (0.5, 1.0, 1.7):
        frame = build_local_frame_1d(mm.sde, mm.parametrized1d, z)
        P_row, Q_mat = q_1d(frame)
        npt.assert_allclose(P_row, ref_row(z) * np.ones(2), atol=1e-10)
        pref = 2.0 * ((z + 1.0) / (1.0 + (z + 1.0) ** 2)) ** 3
        npt.assert_allclose(Q_mat, pref * np.ones((2, 2)), atol=1e-9)


def test_q1d_gauge_invariance(mm):
    # replacing v by c(z) v (with v', Theta transformed consistently) must
    # leave the outputs unchanged; c(z) = 1 + z^2
    z = 0.8
    frame = build_local_frame_1d(mm.sde, mm.parametrized1d, z)
    P_row, Q_mat = q_1d(frame)
    c = 1.0 + z * z
    cp = 2.0 * z
    frame2 = LocalFrame1D(z_scalar=frame.z_scalar, gamma=frame.gamma,
                          dgamma=frame.dgamma, d2gamma=frame.d2gamma,
                          v=c * frame.v,
                          v_prime=cp * frame.v + c * frame.v_prime,
                          theta=c * frame.theta)
    P2, Q2 = q_1d(frame2)
    npt.assert_allclose(P_row, P2, atol=1e-10)
    npt.assert_allclose(Q_mat, Q2, atol=1e-10)


def test_q1d_random_model_vs_flow_oracle(rng):
    # random quadratic field with a straight-line manifold: the chart route
    # must agree with finite differences of the integrated flow map
    from slowmani import pi_jet_fd

    for _ in range(2):
        while True:
            a = rng.uniform(0.6, 1.4, size=2)
            r0 = rng.uniform(-1.0, 1.0, size=2)
            B = rng.uniform(-0.4, 0.4, size=(2, 2))
            u = rng.random(2) + 0.3
            x_star = u / (a @ u)
            if a @ (r0 + B @ x_star) > 0.5:
                break

        def f(x):
            phi = 1.0 - x @ a
            return phi[..., None] * (r0 + x @ B.T)

        def jac(x):
            return (1.0 - a @ x) * B - np.outer(r0 + B @ x, a)

        system = SdeSystem(dim=2, noise_dim=1, f=f,
                           h=lambda x: np.zeros_like(x),
                           G=lambda x: np.zeros(x.shape[:-1] + (2, 1)),
                           jacobian=jac)
        tau = np.array([-a[1], a[0]]) / np.linalg.norm(a)
        man = Parametrized1D(gamma=lambda t: x_star + t * tau,
                             dgamma=lambda t: tau,
                             d2gamma=lambda t: np.zeros(2))
        frame = build_local_frame_1d(system, man, 0.0)
        P_row, Q_mat = q_1d(frame)
        P, Q = frame_to_full(frame, P_row, Q_mat)
        fd_step = 1e-3
        P_fd, Q_fd = pi_jet_fd(system, x_star, fd_step=fd_step, pi_tol=1e-10)
        assert np.max(np.abs(P - P_fd)) <= 50 * fd_step
        assert np.max(np.abs(Q - Q_fd)) <= 50 * fd_step


def test_frame_transversality_failure():
    # gamma running parallel to the fast direction makes v . gamma' = 0
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([np.zeros_like(x[..., 0]),
                                           -x[..., 1]], axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    bad = Parametrized1D(gamma=lambda z: np.array([0.0, float(z)]),
                         dgamma=lambda z: np.array([0.0, 1.0]),
                         d2gamma=lambda z: np.zeros(2))
    with pytest.raises(SingularFrame):
        build_local_frame_1d(sys2, bad, 0.0)


# ---------------------------------------------------------------------------
# co-dimension one
# ---------------------------------------------------------------------------

def test_codim1_trivial_linear():
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([-x[..., 0], np.zeros_like(x[..., 0])],
                                          axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    man = CoDimOne(phi=lambda x: -x[..., 0],
                   r=lambda x: np.array([1.0, 0.0]))
    P, Q = reduce_codim1(sys2, man, np.array([0.0, 0.7]))
    npt.assert_allclose(P, np.diag([0.0, 1.0]), atol=1e-10)
    npt.assert_allclose(Q, np.zeros((2, 2, 2)), atol=1e-8)


def test_codim1_unstable_detected():
    sys2 = SdeSystem(dim=2, noise_dim=1,
                     f=lambda x: np.stack([x[..., 0], np.zeros_like(x[..., 0])],
                                          axis=-1),
                     h=lambda x: np.zeros_like(x),
                     G=lambda x: np.zeros(x.shape[:-1] + (2, 1)))
    man = CoDimOne(phi=lambda x: x[..., 0], r=lambda x: np.array([1.0, 0.0]))
    with pytest.raises(UnstableManifold):
        reduce_codim1(sys2, man, np.array([0.0, 0.7]))


def test_codim1_lv(lv):
    x = np.array([0.25, 0.25])
    ref = reference_reduced(lv, x)
    P, Q = reduce_codim1(lv.sde, lv.codim_one, x)
    npt.assert_allclose(P, ref.P, atol=1e-12)
    npt.assert_allclose(Q, ref.Q, atol=1e-12)


def test_codim1_curved_level_set_vs_general(rng):
    # quadratic phi: the curvature term of the co-dimension-one formula is
    # exercised against the eigen-decomposition route
    for _ in range(5):
        d = 3
        while True:
            a = rng.uniform(0.5, 1.5, size=d)
            C = rng.uniform(-0.3, 0.3, size=(d, d))
            C = 0.5 * (C + C.T)
            r0 = rng.uniform(-1.0, 1.0, size=d)
            B = rng.uniform(-0.4, 0.4, size=(d, d))
            u = rng.random(d) + 0.3
            # solve phi(t u) = 1 - t a.u - t^2 u.C u = 0 for t > 0
            qa = float(u @ C @ u)
            qb = float(a @ u)
            disc = qb * qb + 4.0 * qa
            if disc <= 0:
                continue
            t = 2.0 / (qb + np.sqrt(disc))  # stable positive root
            x_star = t * u
            grad = -a - 2.0 * (C @ x_star)
            r_at = r0 + B @ x_star
            if grad @ r_at < -0.5:
                break

        def phi(x):
            return 1.0 - x @ a - np.einsum("...i,ij,...j->...", x, C, x)

        def r_fn(x):
            return r0 + x @ B.T

        def f(x):
            return phi(x)[..., None] * r_fn(x)

        system = SdeSystem(dim=d, noise_dim=1, f=f,
                           h=lambda x: np.zeros_like(x),
                           G=lambda x: np.zeros(x.shape[:-1] + (d, 1)))
        man = CoDimOne(phi=phi, r=r_fn,
                       grad_phi=lambda x: -a - 2.0 * (C @ x),
                       jac_r=lambda x: B.copy(),
                       hess_phi=lambda x: -2.0 * C)
        P_c, Q_c = reduce_codim1(system, man, x_star)
        jet = eval_jet(system, x_star)
        P_g = project_general(jet)
        Q_g = q_general(jet, P_g)
        npt.assert_allclose(P_c, P_g, atol=1e-7)
        npt.assert_allclose(Q_c, Q_g, atol=1e-6)


def test_expression_model_end_to_end_reduction(rng):
    # a user model defined purely by expression strings goes through the
    # FD pipeline and still hits the closed forms
    from slowmani.config import load_model_dict
    from slowmani.models import reference_reduced

    mm = build_model("michaelis_menten",
                     dict(alpha=1.0, beta=1.0, epsilon=0.01, mu=0.01))
    system, _ = load_model_dict({
        "dim": 2, "noise_dim": 3, "epsilon": 0.01, "mu": 0.01,
        "f": ["-x1 + (x1 + a)*x2", "b*(x1 - (x1 + a)*x2)"],
        "h": ["0", "-x2"],
        "G": [["-sqrt((1 - x2)*x1)", "sqrt(a*x2)", "0"],
              ["b*sqrt((1 - x2)*x1)", "-b*sqrt(a*x2)", "-sqrt(0.01*b*x2)"]],
        "params": {"a": 1.0, "b": 1.0},
    })
    for z in (0.5, 1.0, 2.0):
        ref = reference_reduced(mm, z)
        red = reduce_at(system, None, mm.chart_point(z), method="general")
        npt.assert_allclose(red.P, ref.P, atol=1e-4)
        npt.assert_allclose(red.Q, ref.Q, atol=1e-4)
        npt.assert_allclose(red.g, ref.g, atol=1e-4)


def test_cross_method_agreement_mm(mm, rng):
    # all three routes compute derivatives of the same flow map
    for z in np.linspace(0.1, 2.5, 20):
        x = mm.chart_point(z)
        red_g = reduce_at(mm.sde, None, x, method="general")
        red_c = reduce_at(mm.sde, mm.codim_one, x, method="codim1")
        red_1 = reduce_at(mm.sde, mm.parametrized1d, None, method="one_d",
                          z_scalar=z)
        npt.assert_allclose(red_g.Q, red_1.Q, atol=1e-8)
        npt.assert_allclose(red_g.Q, red_c.Q, atol=1e-8)
        npt.assert_allclose(red_g.P, red_1.P, atol=1e-9)
        npt.assert_allclose(red_g.P, red_c.P, atol=1e-9)


# ---------------------------------------------------------------------------
# noise drift and assembly
# ---------------------------------------------------------------------------

def test_reduce_at_oracle_route_for_unknown_manifold(mm):
    from slowmani import Unknown

    red = reduce_at(mm.sde, Unknown(), mm.chart_point(1.0), method="auto")
    assert red.method_tag == "oracle"
    ref_P = np.outer([1.0, 0.25], [0.8, 0.8])
    npt.assert_allclose(red.P, ref_P, atol=1e-4)


def test_noise_drift_zero_for_zero_q():
    g = noise_drift(np.zeros((2, 2, 2)), np.ones((2, 3)))
    npt.assert_allclose(g, np.zeros(2))


def test_noise_drift_mm_value(mm):
    jet = eval_jet(mm.sde, mm.chart_point(1.0))
    P = project_general(jet)
    Q = q_general(jet, P)
    g = noise_drift(Q, mm.sde.G(mm.chart_point(1.0)))
    npt.assert_allclose(g[0], 0.032 * 0.01, atol=1e-12)


def test_noise_drift_lv_scaling():
    # near-neutral model: mu * ||g|| must fall like 1/K^2
    sel = dict(eps_sel=[0.5, -0.5], eta_sel=[0.4, -0.4],
               a_sel=[[0.0, 0.3], [-0.3, 0.0]])
    x = np.array([0.3, 0.2])
    norms = []
    for K in (100, 200, 400):
        model = build_model("lotka_volterra_wf",
                            dict(b=2.0, d=1.0, c=1.0, K=K, **sel))
        red = reduce_at(model.sde, model.codim_one, x, method="codim1")
        norms.append(model.sde.mu * np.linalg.norm(red.g))
    slope = np.polyfit(np.log([100, 200, 400]), np.log(norms), 1)[0]
    assert slope <= -1.8


def test_assemble_reduced_mm(mm):
    z = 1.0
    x = mm.chart_point(z)
    red = reduce_at(mm.sde, mm.parametrized1d, None, method="one_d", z_scalar=z)
    # binding/unbinding columns vanish; catalysis column survives with
    # coefficient -0.8 sqrt(eps mu beta z/(z+alpha)) = -0.8 sqrt(5e-5)
    npt.assert_allclose(red.noise[:, :2], np.zeros((2, 2)), atol=1e-12)
    npt.assert_allclose(red.noise[0, 2], -0.8 * np.sqrt(5e-5), atol=1e-12)
    npt.assert_allclose(red.drift, 0.01 * red.Ph + 0.01 * red.g, atol=1e-15)


def test_assemble_zero_noise_zero_drift():
    model = build_model("michaelis_menten",
                        dict(alpha=1.0, beta=1.0, epsilon=0.0, mu=0.0))
    red = reduce_at(model.sde, model.codim_one, model.chart_point(0.8),
                    method="codim1")
    npt.assert_allclose(red.drift, np.zeros(2), atol=1e-15)
    npt.assert_allclose(red.noise, np.zeros((2, 3)), atol=1e-15)
