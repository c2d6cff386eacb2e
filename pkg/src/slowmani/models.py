"""Built-in models with closed-form reference quantities.

Four models ship with the package:

* ``michaelis_menten`` - 2-D enzyme kinetics with a 1-D slow curve; the
  reduced scalar law is known in closed form, including the noise-induced
  drift, so this model doubles as the main oracle for every reduction
  route.
* ``lotka_volterra_wf`` - d-species competition with a co-dimension-one
  simplex manifold whose reduction is the Wright-Fisher diffusion.
* ``stochastic_logistic`` - 1-D birth-death jump process, mostly exercising
  the SSA machinery.
* ``competition_diffusion`` - branching Brownian particles; only the
  mean-square-spread prediction is carried, the lattice field equation is
  out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CoDimOne, Parametrized1D, SdeSystem, Unknown, guarded_sqrt
from .errors import ConfigError, DomainError
from .reduction import ReducedSystem, noise_drift
from .simulate import JumpModel

__all__ = [
    "BuiltinModel",
    "build_model",
    "reference_reduced",
    "BUILTIN_NAMES",
    "competition_delta_prediction",
]

BUILTIN_NAMES = ("michaelis_menten", "lotka_volterra_wf", "stochastic_logistic",
                 "competition_diffusion")


@dataclass(frozen=True)
class BuiltinModel:
    """A named model plus every closed form the test suite leans on."""

    name: str
    params: dict
    sde: Optional[SdeSystem]
    manifold: object
    slow_dim: int
    parametrized1d: Optional[Parametrized1D] = None
    codim_one: Optional[CoDimOne] = None
    jump: Optional[JumpModel] = None
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None
    chart_point: Optional[Callable[[float], np.ndarray]] = None
    extras: dict = field(default_factory=dict)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


# ---------------------------------------------------------------------------
# Michaelis-Menten
# ---------------------------------------------------------------------------

def _mm_build(alpha: float, beta: float, epsilon: float, mu: float,
              rate_floor: float = 0.1, analytic: bool = True) -> BuiltinModel:
    _require(alpha > 0 and beta > 0, "michaelis_menten needs alpha, beta > 0")
    a, b = float(alpha), float(beta)

    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        phi = x1 - (x1 + a) * x2
        return np.stack([-phi, b * phi], axis=-1)

    def h(x):
        x2 = x[..., 1]
        return np.stack([np.zeros_like(x2), -x2], axis=-1)

    def G(x):
        x1, x2 = x[..., 0], x[..., 1]
        s_f = guarded_sqrt((1.0 - x2) * x1, rate_floor)
        s_r = guarded_sqrt(a * x2, rate_floor)
        s_c = guarded_sqrt(epsilon * b * x2, rate_floor)
        zero = np.zeros_like(s_f)
        row1 = np.stack([-s_f, s_r, zero], axis=-1)
        row2 = np.stack([b * s_f, -b * s_r, -s_c], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def jac(x):
        x1, x2 = float(x[0]), float(x[1])
        return np.array([[x2 - 1.0, x1 + a],
                         [b * (1.0 - x2), -b * (x1 + a)]])

    H1 = np.array([[0.0, 1.0], [1.0, 0.0]])

    def hess(x):
        return np.stack([H1, -b * H1])

    sde = SdeSystem(dim=2, noise_dim=3, f=f, h=h, G=G, epsilon=float(epsilon),
                    mu=float(mu), jacobian=jac if analytic else None,
                    hessian=hess if analytic else None,
                    rate_floor=rate_floor, name="michaelis_menten")

    def gamma(z):
        z = np.asarray(z, dtype=float)
        return np.stack([z, z / (z + a)], axis=-1)

    def dgamma(z):
        z = np.asarray(z, dtype=float)
        return np.stack([np.ones_like(z), a / (z + a) ** 2], axis=-1)

    def d2gamma(z):
        z = np.asarray(z, dtype=float)
        return np.stack([np.zeros_like(z), -2.0 * a / (z + a) ** 3], axis=-1)

    curve = Parametrized1D(gamma=gamma,
                           dgamma=dgamma if analytic else None,
                           d2gamma=d2gamma if analytic else None)

    def phi(x):
        return x[..., 0] - (x[..., 0] + a) * x[..., 1]

    r_const = np.array([-1.0, b])

    def r_fn(x):
        return np.broadcast_to(r_const, x.shape[:-1] + (2,)).copy()

    def grad_phi(x):
        return np.array([1.0 - float(x[1]), -(float(x[0]) + a)])

    codim = CoDimOne(
        phi=phi, r=r_fn,
        grad_phi=grad_phi if analytic else None,
        jac_r=(lambda x: np.zeros((2, 2))) if analytic else None,
        hess_phi=(lambda x: np.array([[0.0, -1.0], [-1.0, 0.0]])) if analytic else None,
    )

    def project(x):
        """Closed-form flow projection via the conserved quantity b*x1 + x2."""
        x = np.asarray(x, dtype=float)
        c = np.maximum(b * x[..., 0] + x[..., 1], 0.0)
        B = a * b + 1.0 - c
        z = (-B + np.sqrt(B * B + 4.0 * b * a * c)) / (2.0 * b)
        return np.stack([z, z / (z + a)], axis=-1)

    return BuiltinModel(
        name="michaelis_menten",
        params=dict(alpha=a, beta=b, epsilon=float(epsilon), mu=float(mu)),
        sde=sde, manifold=curve, slow_dim=1, parametrized1d=curve,
        codim_one=codim, project=project, chart_point=lambda z: gamma(float(z)),
        extras=dict(
            conserved=lambda x: b * x[..., 0] + x[..., 1],
            kinetics=dict(k_f=1.0, E0=1.0, k_cat=float(epsilon), S0=b,
                          k_r=a * b,
                          V=(1.0 / (float(mu) * b)) if mu > 0 else np.inf,
                          v_star=float(epsilon), k=a * b),
        ),
    )


class MMReference:
    """Closed-form reduced quantities of the Michaelis-Menten model.

    All methods accept scalar or array chart coordinates z (= x1 on the
    slow curve).  The reduced scalar SDE is

        dz/dt = -eps z(z+a)/D + eps mu a b z (z+a)^2 / D^3
                - ((z+a)^2/D) sqrt(eps mu b z/(z+a)) eta_cat(t),

    with D = a + b (z+a)^2.
    """

    def __init__(self, model: BuiltinModel):
        p = model.params
        self.alpha = p["alpha"]
        self.beta = p["beta"]
        self.epsilon = p["epsilon"]
        self.mu = p["mu"]
        self.model = model

    def _D(self, z):
        a, b = self.alpha, self.beta
        return a + b * (z + a) ** 2

    def _dgamma(self, z):
        a = self.alpha
        z = np.asarray(z, dtype=float)
        return np.stack([np.ones_like(z), a / (z + a) ** 2], axis=-1)

    def _d2gamma(self, z):
        a = self.alpha
        z = np.asarray(z, dtype=float)
        return np.stack([np.zeros_like(z), -2.0 * a / (z + a) ** 3], axis=-1)

    def P_row(self, z):
        a, b = self.alpha, self.beta
        z = np.asarray(z, dtype=float)
        pref = (z + a) ** 2 / self._D(z)
        return np.stack([b * pref, pref], axis=-1)

    def Q_row(self, z):
        a, b = self.alpha, self.beta
        z = np.asarray(z, dtype=float)
        pref = 2.0 * a * ((z + a) / self._D(z)) ** 3
        base = np.array([[b * b, b], [b, 1.0]])
        return pref[..., None, None] * base

    def P(self, z):
        dg = self._dgamma(z)
        return np.einsum("...i,...j->...ij", dg, self.P_row(z))

    def Q(self, z):
        dg = self._dgamma(z)
        d2g = self._d2gamma(z)
        Pr = self.P_row(z)
        return (np.einsum("...i,...jk->...ijk", dg, self.Q_row(z))
                + np.einsum("...i,...j,...k->...ijk", d2g, Pr, Pr))

    def g_row(self, z):
        a, b, eps = self.alpha, self.beta, self.epsilon
        z = np.asarray(z, dtype=float)
        return eps * a * b * z * (z + a) ** 2 / self._D(z) ** 3

    def g(self, z):
        a, b, eps = self.alpha, self.beta, self.epsilon
        z = np.asarray(z, dtype=float)
        u = eps * b * z * (z + a) ** 3 / (2.0 * self._D(z) ** 2)
        dg = self._dgamma(z)
        d2g = self._d2gamma(z)
        return dg * self.g_row(z)[..., None] + d2g * u[..., None]

    def Ph(self, z):
        a = self.alpha
        z = np.asarray(z, dtype=float)
        dg = self._dgamma(z)
        return dg * (-z * (z + a) / self._D(z))[..., None]

    def PG(self, z):
        """Projected noise matrix on the curve: only the catalysis column survives."""
        a, b, eps = self.alpha, self.beta, self.epsilon
        z = np.asarray(z, dtype=float)
        coeff = -((z + a) ** 2 / self._D(z)) * np.sqrt(eps * b * z / (z + a))
        dg = self._dgamma(z)
        col = dg * coeff[..., None]
        out = np.zeros(col.shape[:-1] + (2, 3))
        out[..., :, 2] = col
        return out

    def reduced_drift(self, z):
        """Drift of the closed scalar law (original time units)."""
        a, b, eps, mu = self.alpha, self.beta, self.epsilon, self.mu
        z = np.asarray(z, dtype=float)
        D = self._D(z)
        return -eps * z * (z + a) / D + eps * mu * a * b * z * (z + a) ** 2 / D ** 3

    def reduced_diffusion(self, z):
        """Diffusion coefficient (noise amplitude) of the scalar law."""
        a, b, eps, mu = self.alpha, self.beta, self.epsilon, self.mu
        z = np.asarray(z, dtype=float)
        zc = np.maximum(z, 0.0)
        return -((zc + a) ** 2 / self._D(zc)) * np.sqrt(eps * mu * b * zc / (zc + a))

    def production_law(self, z):
        """Back-transformed drift and squared noise of dP/dt at z.

        Returns (v* S / (k + S), v* S / (V (k + S))) in original units,
        which the Ito change of variables applied to the reduced law must
        reproduce exactly.
        """
        kin = self.model.extras["kinetics"]
        S = kin["S0"] * np.asarray(z, dtype=float)
        drift = kin["v_star"] * S / (kin["k"] + S)
        noise_sq = kin["v_star"] * S / (kin["V"] * (kin["k"] + S))
        return drift, noise_sq


# ---------------------------------------------------------------------------
# Lotka-Volterra / Wright-Fisher
# ---------------------------------------------------------------------------

def _lv_build(b: float, d: float, c: float, K: float, n_species: int = 2,
              eps_sel=None, eta_sel=None, a_sel=None,
              rate_floor: float = 0.1, analytic: bool = True) -> BuiltinModel:
    _require(b > d >= 0, "lotka_volterra_wf needs b > d >= 0")
    _require(0 < c <= 1, "lotka_volterra_wf needs 0 < c <= 1")
    _require(K >= 1, "lotka_volterra_wf needs K >= 1")
    _require(n_species >= 2, "lotka_volterra_wf needs at least 2 species")
    nsp = int(n_species)
    b, d, c, K = float(b), float(d), float(c), float(K)
    eps_sel = np.zeros(nsp) if eps_sel is None else np.asarray(eps_sel, float)
    eta_sel = np.zeros(nsp) if eta_sel is None else np.asarray(eta_sel, float)
    a_sel = np.zeros((nsp, nsp)) if a_sel is None else np.asarray(a_sel, float)
    _require(eps_sel.shape == (nsp,) and eta_sel.shape == (nsp,)
             and a_sel.shape == (nsp, nsp), "selection parameter shapes")
    chi = 1.0 - d / b

    def f(x):
        tot = x.sum(axis=-1, keepdims=True)
        return x * ((b - d) - b * tot)

    A_asym = a_sel - a_sel.T

    def h(x):
        # on-manifold weak-selection drift (authoritative form)
        tot = x.sum(axis=-1, keepdims=True)
        eps_dot = x @ eps_sel
        sel = (d * (eps_sel - eta_sel)
               + c * (eps_sel * tot - eps_dot[..., None])
               + b * (x @ A_asym.T))
        return x * sel

    # per-capita rates at finite K (weak selection)
    b_i = b * (1.0 + eps_sel / K)
    d_i = d + eta_sel / K
    c_ij = c + a_sel / K

    pairs = [(i, j) for i in range(nsp) for j in range(nsp) if i != j]

    def G(x):
        tot = x.sum(axis=-1)
        cols = []
        for i in range(nsp):
            amp = guarded_sqrt(b_i[i] * x[..., i] * (1.0 - tot), rate_floor)
            e = np.zeros(nsp)
            e[i] = 1.0
            cols.append(e * amp[..., None])
        for i in range(nsp):
            amp = guarded_sqrt(d_i[i] * x[..., i], rate_floor)
            e = np.zeros(nsp)
            e[i] = -1.0
            cols.append(e * amp[..., None])
        for i, j in pairs:
            amp = guarded_sqrt(b_i[i] * c_ij[i, j] * x[..., i] * x[..., j],
                               rate_floor)
            e = np.zeros(nsp)
            e[i] = 1.0
            e[j] = -1.0
            cols.append(e * amp[..., None])
        return np.stack(cols, axis=-1)

    def jac(x):
        x = np.asarray(x, dtype=float)
        tot = float(x.sum())
        return np.eye(nsp) * ((b - d) - b * tot) - b * np.outer(x, np.ones(nsp))

    def hess(x):
        H = np.zeros((nsp, nsp, nsp))
        for i in range(nsp):
            H[i, i, :] -= b
            H[i, :, i] -= b
        return H

    s_chan = 2 * nsp + len(pairs)
    sde = SdeSystem(dim=nsp, noise_dim=s_chan, f=f, h=h, G=G,
                    epsilon=1.0 / K, mu=1.0 / K,
                    jacobian=jac if analytic else None,
                    hessian=hess if analytic else None,
                    rate_floor=rate_floor, name="lotka_volterra_wf")

    def phi(x):
        return (b - d) - b * np.asarray(x, dtype=float).sum(axis=-1)

    codim = CoDimOne(
        phi=phi, r=lambda x: np.asarray(x, dtype=float).copy(),
        grad_phi=(lambda x: -b * np.ones(nsp)) if analytic else None,
        jac_r=(lambda x: np.eye(nsp)) if analytic else None,
        hess_phi=(lambda x: np.zeros((nsp, nsp))) if analytic else None,
    )

    def project(x):
        # flow projection chi x / sum(x); boundary overshoot of a
        # discretized path is clamped before renormalizing
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        tot = x.sum(axis=-1, keepdims=True)
        return chi * x / tot

    # exact event rates of the finite-K jump process
    jumps = []
    rate_fns = []
    for i in range(nsp):
        e = np.zeros(nsp, dtype=int)
        e[i] = 1
        jumps.append(e.copy())
    for i in range(nsp):
        e = np.zeros(nsp, dtype=int)
        e[i] = -1
        jumps.append(e.copy())
    for i, j in pairs:
        e = np.zeros(nsp, dtype=int)
        e[i] = 1
        e[j] = -1
        jumps.append(e.copy())

    def rates(x):
        x = np.asarray(x, dtype=float)
        tot = float(x.sum())
        room = max(1.0 - tot, 0.0)
        lam = np.empty(s_chan)
        lam[:nsp] = b_i * x * room
        lam[nsp:2 * nsp] = d_i * x
        for k, (i, j) in enumerate(pairs):
            lam[2 * nsp + k] = b_i[i] * c_ij[i, j] * x[i] * x[j]
        return np.maximum(lam, 0.0)

    jump = JumpModel(scale_n=int(K), jumps=np.array(jumps), rates=rates,
                     name="lotka_volterra_wf")

    N_e = chi * K / (2.0 * (c * (b - d) + d))
    wf_diffusion_coeff = 2.0 * (b * c + d / chi) / K

    def s_coeff(p):
        p = np.asarray(p, dtype=float)
        return (d * (eps_sel - eta_sel)
                + c * chi * (eps_sel * p.sum(axis=-1, keepdims=True)
                             - (p @ eps_sel)[..., None])
                + (b - d) * (p @ A_asym.T))

    return BuiltinModel(
        name="lotka_volterra_wf",
        params=dict(b=b, d=d, c=c, K=K, n_species=nsp),
        sde=sde, manifold=codim, slow_dim=nsp - 1, codim_one=codim,
        jump=jump, project=project,
        extras=dict(chi=chi, N_e=N_e, wf_diffusion_coeff=wf_diffusion_coeff,
                    to_p=lambda x: np.asarray(x, float) / chi,
                    from_p=lambda p: chi * np.asarray(p, float),
                    s_coeff=s_coeff, eps_sel=eps_sel, eta_sel=eta_sel,
                    a_sel=a_sel),
    )


class WFReference:
    """Closed-form P and Q of the Lotka-Volterra model on the simplex."""

    def __init__(self, model: BuiltinModel):
        self.chi = model.extras["chi"]
        self.model = model

    def P(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.eye(d) - np.einsum("...i,j->...ij", x, np.ones(d)) / self.chi

    def Q(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        eye = np.eye(d)
        return -(np.einsum("ij,k->ijk", eye, np.ones(d))
                 + np.einsum("ik,j->ijk", eye, np.ones(d))
                 - 2.0 * np.einsum("...i,j,k->...ijk", x, np.ones(d),
                                   np.ones(d)) / self.chi) / self.chi

    def diffusion_p(self, p):
        """Wright-Fisher covariance rate in frequency coordinates."""
        p = np.asarray(p, dtype=float)
        coeff = self.model.extras["wf_diffusion_coeff"]
        return coeff * (np.diag(p) - np.outer(p, p))


# ---------------------------------------------------------------------------
# Stochastic logistic
# ---------------------------------------------------------------------------

def _logistic_build(beta: float, delta: float, n: int,
                    rate_floor: float = 0.1) -> BuiltinModel:
    _require(beta > 0 and delta >= 0, "stochastic_logistic needs beta > 0, delta >= 0")
    _require(n >= 1, "stochastic_logistic needs n >= 1")
    beta, delta = float(beta), float(delta)

    def f(x):
        x0 = x[..., 0]
        return np.stack([beta * x0 * (1.0 - x0) - delta * x0], axis=-1)

    def h(x):
        return np.zeros_like(x)

    def G(x):
        x0 = x[..., 0]
        up = guarded_sqrt(beta * x0 * (1.0 - x0), rate_floor)
        dn = guarded_sqrt(delta * x0, rate_floor)
        return np.stack([np.stack([up, -dn], axis=-1)], axis=-2)

    sde = SdeSystem(dim=1, noise_dim=2, f=f, h=h, G=G, epsilon=0.0,
                    mu=1.0 / float(n),
                    jacobian=lambda x: np.array(
                        [[beta * (1.0 - 2.0 * float(x[0])) - delta]]),
                    hessian=lambda x: np.full((1, 1, 1), -2.0 * beta),
                    rate_floor=rate_floor, name="stochastic_logistic")

    def rates(x):
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.maximum(np.array([beta * x0 * (1.0 - x0), delta * x0]), 0.0)

    jump = JumpModel(scale_n=int(n), jumps=np.array([[1], [-1]]), rates=rates,
                     name="stochastic_logistic")
    fixed_point = 1.0 - delta / beta if beta > delta else 0.0
    return BuiltinModel(name="stochastic_logistic",
                        params=dict(beta=beta, delta=delta, n=int(n)),
                        sde=sde, manifold=Unknown(), slow_dim=0,
                        jump=jump, extras=dict(fixed_point=fixed_point))


# ---------------------------------------------------------------------------
# Competition-limited diffusion
# ---------------------------------------------------------------------------

def competition_delta_prediction(t, epsilon: float, mu: float):
    """Mean-square pair spread of the competing diffusers: (2 eps/mu)(1 - e^{-2 mu t})."""
    t = np.asarray(t, dtype=float)
    return (2.0 * epsilon / mu) * (-np.expm1(-2.0 * mu * t))


def _competition_build(epsilon: float, mu: float) -> BuiltinModel:
    _require(epsilon > 0 and mu > 0, "competition_diffusion needs epsilon, mu > 0")
    eps, mu = float(epsilon), float(mu)
    return BuiltinModel(
        name="competition_diffusion",
        params=dict(epsilon=eps, mu=mu),
        sde=None, manifold=None, slow_dim=0,
        extras=dict(
            prediction=lambda t: competition_delta_prediction(t, eps, mu),
            n_equilibrium=int(round(1.0 / mu)),
            limit=2.0 * eps / mu,
        ),
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_BUILDERS = {
    "michaelis_menten": _mm_build,
    "lotka_volterra_wf": _lv_build,
    "stochastic_logistic": _logistic_build,
    "competition_diffusion": _competition_build,
}


def build_model(name: str, params: dict | None = None, **kw) -> BuiltinModel:
    """Construct a built-in model by name.

    Unknown names or invalid parameters raise ConfigError.  Keyword
    arguments and the ``params`` dict are merged (kw wins).
    """
    if name not in _BUILDERS:
        raise ConfigError(
            f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    merged = dict(params or {})
    merged.update(kw)
    try:
        return _BUILDERS[name](**merged)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def reference(model: BuiltinModel):
    """Closed-form reference object for a built-in model, or None."""
    if model.name == "michaelis_menten":
        return MMReference(model)
    if model.name == "lotka_volterra_wf":
        return WFReference(model)
    return None


def reference_reduced(model: BuiltinModel, point) -> ReducedSystem:
    """Closed-form (P, Q, g, drift, noise) bundle at a manifold point.

    ``point`` is the chart coordinate z for michaelis_menten (a scalar) or
    a state-space point for lotka_volterra_wf.  Off-manifold points raise
    DomainError.
    """
    if model.name == "michaelis_menten":
        ref = MMReference(model)
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        z = float(pt[0])
        if pt.size == 2:
            a = model.params["alpha"]
            if abs(pt[0] - pt[1] * (pt[0] + a)) > 1e-9 * (1.0 + abs(pt[0])):
                raise DomainError("point is not on the slow curve x1 = x2 (x1 + alpha)")
        if z < 0:
            raise DomainError("michaelis_menten chart coordinate must be >= 0")
        x = model.chart_point(z)
        P, Q, g = ref.P(z), ref.Q(z), ref.g(z)
        return ReducedSystem(base_point=x, P=P, Q=Q, g=g, Ph=ref.Ph(z),
                             PG=ref.PG(z), method_tag="reference",
                             epsilon=model.sde.epsilon, mu=model.sde.mu)
    if model.name == "lotka_volterra_wf":
        x = np.asarray(point, dtype=float)
        chi = model.extras["chi"]
        if abs(x.sum() - chi) > 1e-9 * max(chi, 1.0):
            raise DomainError("point is not on the simplex sum(x) = 1 - d/b")
        ref = WFReference(model)
        P, Q = ref.P(x), ref.Q(x)
        g = noise_drift(Q, np.asarray(model.sde.G(x), dtype=float))
        Ph = P @ np.asarray(model.sde.h(x), dtype=float)
        PG = P @ np.asarray(model.sde.G(x), dtype=float)
        return ReducedSystem(base_point=x, P=P, Q=Q, g=g, Ph=Ph, PG=PG,
                             method_tag="reference",
                             epsilon=model.sde.epsilon, mu=model.sde.mu)
    raise ConfigError(f"no closed-form reference for {model.name}")
