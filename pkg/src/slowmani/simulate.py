"""Stochastic integrators and ensemble statistics.

Every replicate owns a private counter-based RNG stream derived from
``(seed_root, replicate_index)``, so ensembles are bit-reproducible and
replicates could be farmed out to workers without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .core import SdeSystem
from .errors import BlowUpError
from .reduction import ReducedSystem

__all__ = [
    "CSV_HEADER",
    "replicate_rng",
    "TrajectoryEnsemble",
    "JumpModel",
    "simulate_full",
    "simulate_reduced",
    "euler_maruyama_1d",
    "simulate_ssa",
    "ParticleResult",
    "simulate_particles_competition",
    "MomentReport",
    "compare_projected",
]

CSV_HEADER = "# slowmani-csv v1"

_MASK64 = (1 << 64) - 1


def replicate_rng(seed_root: int, index: int) -> np.random.Generator:
    """Disjoint per-replicate stream: Philox keyed by (seed_root, index)."""
    return np.random.Generator(np.random.Philox(key=[seed_root & _MASK64,
                                                     index & _MASK64]))


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Replicate paths on a common time grid.

    ``paths`` has shape (n_rep, n_times, dim).
    """

    times: np.ndarray
    paths: np.ndarray
    seed_root: int
    model_tag: str = ""

    @property
    def n_rep(self) -> int:
        return self.paths.shape[0]

    def mean(self) -> np.ndarray:
        return self.paths.mean(axis=0)

    def var(self) -> np.ndarray:
        if self.n_rep < 2:
            return np.zeros_like(self.paths[0])
        return self.paths.var(axis=0, ddof=1)

    def se_mean(self) -> np.ndarray:
        return np.sqrt(self.var() / self.n_rep)

    def se_var(self) -> np.ndarray:
        # normal-theory standard error of the sample variance
        return self.var() * np.sqrt(2.0 / max(self.n_rep - 1, 1))

    def to_csv(self, path) -> None:
        """Long-format dump: time, replicate, x1..xd."""
        d = self.paths.shape[2]
        cols = ",".join(f"x{i + 1}" for i in range(d))
        with open(path, "w") as fh:
            fh.write(f"{CSV_HEADER}\n")
            fh.write(f"time,replicate,{cols}\n")
            for r in range(self.n_rep):
                for ti, t in enumerate(self.times):
                    vals = ",".join(_fmt(v) for v in self.paths[r, ti])
                    fh.write(f"{_fmt(t)},{r},{vals}\n")

    def moments_to_csv(self, path) -> None:
        """Moment table: time, mean_i, var_i, se_i per dimension."""
        d = self.paths.shape[2]
        mean, var, se = self.mean(), self.var(), self.se_mean()
        head = ",".join(
            [f"mean_{i + 1}" for i in range(d)]
            + [f"var_{i + 1}" for i in range(d)]
            + [f"se_{i + 1}" for i in range(d)])
        with open(path, "w") as fh:
            fh.write(f"{CSV_HEADER}\n")
            fh.write(f"time,{head}\n")
            for ti, t in enumerate(self.times):
                row = np.concatenate([mean[ti], var[ti], se[ti]])
                fh.write(f"{_fmt(t)}," + ",".join(_fmt(v) for v in row) + "\n")


def _grid(dt: float, t_end: float, record_every: int) -> Tuple[int, np.ndarray]:
    n_steps = int(round(t_end / dt))
    n_out = n_steps // record_every + 1
    times = np.arange(n_out) * (dt * record_every)
    return n_steps, times


def simulate_full(system: SdeSystem, x0, dt: float, t_end: float,
                  n_rep: int, seed: int, record_every: int = 1,
                  model_tag: str = "full") -> TrajectoryEnsemble:
    """Ito-Euler ensemble of the full model.

    x <- x + (f + eps h) dt + sqrt(mu dt) G xi, with xi standard normal per
    channel.  ``dt`` should resolve the fast contraction
    (dt * ||J|| < 0.5).  State-dependent rate arguments inside G are
    clamped per the system's rate_floor policy.
    """
    d, s = system.dim, system.noise_dim
    n_steps, times = _grid(dt, t_end, record_every)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n_rep, d)).copy()
    paths = np.empty((n_rep, times.size, d))
    paths[:, 0] = x
    rngs = [replicate_rng(seed, r) for r in range(n_rep)]
    sq = np.sqrt(system.mu * dt)
    block = max(1, min(n_steps, int(4_000_000 // max(n_rep * s, 1))))
    out_i = 1
    step = 0
    while step < n_steps:
        b = min(block, n_steps - step)
        noise = np.empty((b, n_rep, s))
        for r, rng in enumerate(rngs):
            noise[:, r, :] = rng.standard_normal((b, s))
        for k in range(b):
            drift = system.f(x) + system.epsilon * system.h(x)
            kick = np.einsum("rds,rs->rd", system.G(x), noise[k])
            x = x + drift * dt + sq * kick
            step += 1
            if not np.all(np.isfinite(x)):
                raise BlowUpError("non-finite state in simulate_full", step)
            if step % record_every == 0:
                paths[:, out_i] = x
                out_i += 1
    return TrajectoryEnsemble(times=times, paths=paths, seed_root=seed,
                              model_tag=model_tag)


def euler_maruyama_1d(drift: Callable[[np.ndarray], np.ndarray],
                      diffusion: Callable[[np.ndarray], np.ndarray],
                      z0: float, dt: float, t_end: float, n_rep: int,
                      seed: int, record_every: int = 1,
                      clamp: Tuple[float, float] | None = None,
                      model_tag: str = "reduced") -> TrajectoryEnsemble:
    """Vectorized scalar Euler-Maruyama (used for closed-form reduced SDEs)."""
    n_steps, times = _grid(dt, t_end, record_every)
    z = np.full(n_rep, float(z0))
    paths = np.empty((n_rep, times.size, 1))
    paths[:, 0, 0] = z
    rngs = [replicate_rng(seed, r) for r in range(n_rep)]
    sqdt = np.sqrt(dt)
    block = max(1, min(n_steps, int(4_000_000 // max(n_rep, 1))))
    out_i = 1
    step = 0
    while step < n_steps:
        b = min(block, n_steps - step)
        noise = np.empty((b, n_rep))
        for r, rng in enumerate(rngs):
            noise[:, r] = rng.standard_normal(b)
        for k in range(b):
            z = z + drift(z) * dt + diffusion(z) * sqdt * noise[k]
            if clamp is not None:
                z = np.clip(z, clamp[0], clamp[1])
            step += 1
            if not np.all(np.isfinite(z)):
                raise BlowUpError("non-finite state in euler_maruyama_1d", step)
            if step % record_every == 0:
                paths[:, out_i, 0] = z
                out_i += 1
    return TrajectoryEnsemble(times=times, paths=paths, seed_root=seed,
                              model_tag=model_tag)


def simulate_reduced(reduced_provider: Callable[[np.ndarray], ReducedSystem],
                     z0, dt: float, t_end: float, n_rep: int, seed: int,
                     reproject_every: int = 10,
                     project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     record_every: int = 1, model_tag: str = "reduced",
                     system: Optional[SdeSystem] = None) -> TrajectoryEnsemble:
    """Euler-Maruyama on the reduced SDE with per-step P, Q, g.

    ``reduced_provider`` maps a state on the manifold to a
    :class:`ReducedSystem`; its ``drift``/``noise`` give the step
    coefficients.  Every ``reproject_every`` steps the state is replaced by
    ``project(state)`` to suppress tangential drift-off of the
    discretization; when no closed-form projection is given but ``system``
    is, the flow-map limit stands in for it.
    """
    if project is None and system is not None:
        from .flow import pi_map

        def project(p):  # noqa: ANN001 - flow-map fallback
            return pi_map(system, p, pi_tol=1e-10).endpoint

    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    d = z0.size
    n_steps, times = _grid(dt, t_end, record_every)
    paths = np.empty((n_rep, times.size, d))
    sqdt = np.sqrt(dt)
    for r in range(n_rep):
        rng = replicate_rng(seed, r)
        z = z0.copy()
        paths[r, 0] = z
        out_i = 1
        for step in range(1, n_steps + 1):
            red = reduced_provider(z)
            xi = rng.standard_normal(red.PG.shape[1])
            z = z + red.drift * dt + sqdt * (red.noise @ xi)
            if not np.all(np.isfinite(z)):
                raise BlowUpError("non-finite state in simulate_reduced", step)
            if project is not None and step % reproject_every == 0:
                z = np.asarray(project(z), dtype=float)
            if step % record_every == 0:
                paths[r, out_i] = z
                out_i += 1
    return TrajectoryEnsemble(times=times, paths=paths, seed_root=seed,
                              model_tag=model_tag)


@dataclass(frozen=True)
class JumpModel:
    """Density-dependent population process.

    ``jumps`` is a (k, d) integer array of transition vectors l; ``rates``
    maps a density point x to the k per-capita-scaled intensities
    lambda_l(x) >= 0.  The Markov jump rate of transition l at density x is
    n * lambda_l(x).
    """

    scale_n: int
    jumps: np.ndarray
    rates: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @property
    def dim(self) -> int:
        return self.jumps.shape[1]

    def derived_drift(self, x: np.ndarray) -> np.ndarray:
        """f(x) = sum_l l lambda_l(x) - the large-n drift."""
        lam = np.asarray(self.rates(np.asarray(x, dtype=float)), dtype=float)
        return self.jumps.T @ lam

    def derived_noise(self, x: np.ndarray) -> np.ndarray:
        """G(x) with i-th column l_i sqrt(lambda_{l_i}(x))."""
        lam = np.asarray(self.rates(np.asarray(x, dtype=float)), dtype=float)
        return self.jumps.T * np.sqrt(np.maximum(lam, 0.0))[None, :]


def simulate_ssa(jump: JumpModel, x0, t_end: float, n_rep: int, seed: int,
                 n_out: int = 101, model_tag: str = "ssa") -> TrajectoryEnsemble:
    """Exact Gillespie sampling of the jump process, recorded on a grid.

    ``x0`` is a density point; it is scaled to integer counts by
    ``jump.scale_n``.  Zero total rate freezes the path (absorbing state).
    Paths are reported in density units.
    """
    n = jump.scale_n
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    X0 = np.rint(x0 * n)
    times = np.linspace(0.0, t_end, n_out)
    paths = np.empty((n_rep, n_out, x0.size))
    jumps = jump.jumps.astype(float)
    for r in range(n_rep):
        rng = replicate_rng(seed, r)
        u = rng.random(4096)
        ui = 0
        X = X0.copy()
        t = 0.0
        gi = 0
        paths[r, gi] = X / n
        gi += 1
        while gi < n_out:
            lam = np.asarray(jump.rates(X / n), dtype=float)
            total = float(lam.sum()) * n
            if total <= 0.0:
                break
            if ui + 2 > u.size:
                u = rng.random(4096)
                ui = 0
            tau = -np.log1p(-u[ui]) / total
            pick = u[ui + 1] * lam.sum()
            ui += 2
            t_next = t + tau
            while gi < n_out and times[gi] <= t_next:
                paths[r, gi] = X / n
                gi += 1
            t = t_next
            if t >= t_end:
                break
            idx = min(int(np.searchsorted(np.cumsum(lam), pick)), lam.size - 1)
            X += jumps[idx]
        while gi < n_out:
            paths[r, gi] = X / n
            gi += 1
    return TrajectoryEnsemble(times=times, paths=paths, seed_root=seed,
                              model_tag=model_tag)


@dataclass(frozen=True)
class ParticleResult:
    """Mean-square pair spread of the branching-diffusing particle system."""

    times: np.ndarray
    delta: np.ndarray  # (n_rep, n_times)
    extinct: np.ndarray  # (n_rep,) bool

    def mean(self) -> np.ndarray:
        return self.delta.mean(axis=0)

    def se(self) -> np.ndarray:
        n = self.delta.shape[0]
        if n < 2:
            return np.zeros(self.delta.shape[1])
        return self.delta.std(axis=0, ddof=1) / np.sqrt(n)


def simulate_particles_competition(epsilon: float, mu: float, n_init: int,
                                   t_end: float, dt: float, n_rep: int,
                                   seed: int, record_every: int = 1,
                                   birth_rate: float = 1.0,
                                   competitive_death: bool = True
                                   ) -> ParticleResult:
    """Branching Brownian particles with competitive deaths, 1-D.

    Per step and particle: diffusion kick of variance 2*eps*dt (matching a
    density equation with diffusion term eps * u_xx), birth with rate
    ``birth_rate`` (daughter at the parent location), death with rate
    mu * (N - 1).  Fixed-dt splitting with exact per-step thinning
    probabilities 1 - exp(-rate dt).  Setting ``birth_rate=0`` and
    ``competitive_death=False`` gives plain independent diffusers for
    baseline comparisons.

    The recorded observable is Delta = mu^2 sum_{n,m} (X_n - X_m)^2; an
    extinct population terminates its path at Delta = 0 and is flagged.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    n_steps, times = _grid(dt, t_end, record_every)
    delta = np.zeros((n_rep, times.size))
    extinct = np.zeros(n_rep, dtype=bool)
    sig = np.sqrt(2.0 * epsilon * dt)
    p_birth = -np.expm1(-birth_rate * dt)

    def spread(x: np.ndarray) -> float:
        N = x.size
        s1 = float(np.sum(x))
        s2 = float(np.sum(x * x))
        return 2.0 * mu * mu * (N * s2 - s1 * s1)

    for r in range(n_rep):
        rng = replicate_rng(seed, r)
        x = np.zeros(int(n_init))
        delta[r, 0] = spread(x)
        out_i = 1
        for step in range(1, n_steps + 1):
            N = x.size
            if N == 0:
                extinct[r] = True
                break
            x = x + sig * rng.standard_normal(N)
            if p_birth > 0.0:
                born = rng.random(N) < p_birth
            else:
                born = np.zeros(N, dtype=bool)
            if competitive_death:
                p_death = -np.expm1(-mu * (N - 1) * dt)
                dead = rng.random(N) < p_death
                x = np.concatenate([x[~dead], x[born]])
            elif p_birth > 0.0:
                x = np.concatenate([x, x[born]])
            if step % record_every == 0:
                delta[r, out_i] = spread(x)
                out_i += 1
    return ParticleResult(times=times, delta=delta, extinct=extinct)


@dataclass(frozen=True)
class MomentReport:
    """Per-time moment comparison of two ensembles of a common observable."""

    times: np.ndarray
    mean_a: np.ndarray
    mean_b: np.ndarray
    se_mean_a: np.ndarray
    se_mean_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    se_var_a: np.ndarray
    se_var_b: np.ndarray

    def mean_within(self, k: float = 3.0, atol: float = 1e-12) -> float:
        """Fraction of grid times with |mean difference| <= k combined SE.

        ``atol`` is a floating-point floor so that exactly-deterministic
        comparisons (zero SE) count as agreeing.
        """
        se = np.sqrt(self.se_mean_a ** 2 + self.se_mean_b ** 2)
        ok = np.abs(self.mean_a - self.mean_b) <= k * se + atol
        return float(np.mean(np.all(np.atleast_2d(ok.T), axis=0)))

    def var_within(self, k: float = 3.0, atol: float = 1e-12) -> float:
        se = np.sqrt(self.se_var_a ** 2 + self.se_var_b ** 2)
        ok = np.abs(self.var_a - self.var_b) <= k * se + atol
        return float(np.mean(np.all(np.atleast_2d(ok.T), axis=0)))

    def to_csv(self, path) -> None:
        arrs = [self.mean_a, self.mean_b, self.se_mean_a, self.se_mean_b,
                self.var_a, self.var_b, self.se_var_a, self.se_var_b]
        names = ["mean_full", "mean_reduced", "se_mean_full", "se_mean_reduced",
                 "var_full", "var_reduced", "se_var_full", "se_var_reduced"]
        arrs = [np.atleast_2d(a.T).T for a in arrs]
        d = arrs[0].shape[1]
        cols = [f"{n}_{i + 1}" for n in names for i in range(d)]
        with open(path, "w") as fh:
            fh.write(f"{CSV_HEADER}\n")
            fh.write("time," + ",".join(cols) + "\n")
            for ti, t in enumerate(self.times):
                row = np.concatenate([a[ti] for a in arrs])
                fh.write(f"{_fmt(t)}," + ",".join(_fmt(v) for v in row) + "\n")


def compare_projected(full: TrajectoryEnsemble, system: SdeSystem,
                      reduced: TrajectoryEnsemble,
                      project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      strip_transient: bool = False,
                      observable: Optional[Callable[[np.ndarray], np.ndarray]] = None
                      ) -> MomentReport:
    """Moment differences between projected full paths and reduced paths.

    The full ensemble is mapped through the flow projection (a vectorized
    closed form when available, else a pi_map sweep), or - with
    ``strip_transient`` - through the transient-removal construction
    x_hat(t) = x(t) - xi_{x0}(t) + pi(x0), which compares raw paths once
    the deterministic approach to the manifold is subtracted.

    ``observable`` maps path arrays (..., d) to (...) or (..., q); by
    default all coordinates are compared.
    """
    if full.times.shape != reduced.times.shape or not np.allclose(
            full.times, reduced.times):
        raise ValueError("ensembles must share the same time grid")

    if project is None:
        from .flow import pi_map

        def project(pts):  # noqa: ANN001 - local fallback
            flat = pts.reshape(-1, pts.shape[-1])
            out = np.array([pi_map(system, p, pi_tol=1e-8).endpoint for p in flat])
            return out.reshape(pts.shape)

    if strip_transient:
        from .flow import integrate_outer, pi_map

        x0 = full.paths[0, 0]
        _, xi_path = integrate_outer(system, x0, full.times[-1],
                                     t_eval=full.times)
        pi0 = pi_map(system, x0, pi_tol=1e-10).endpoint
        proj_paths = full.paths - xi_path[None, :, :] + pi0[None, None, :]
    else:
        proj_paths = project(full.paths)

    red_paths = reduced.paths
    if observable is not None:
        proj_paths = np.asarray(observable(proj_paths))
        red_paths = np.asarray(observable(red_paths))

    def stats(p):
        n = p.shape[0]
        mean = p.mean(axis=0)
        var = p.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
        return mean, var, np.sqrt(var / n), var * np.sqrt(2.0 / max(n - 1, 1))

    ma, va, sma, sva = stats(proj_paths)
    mb, vb, smb, svb = stats(red_paths)
    return MomentReport(times=full.times, mean_a=ma, mean_b=mb,
                        se_mean_a=sma, se_mean_b=smb, var_a=va, var_b=vb,
                        se_var_a=sva, se_var_b=svb)
