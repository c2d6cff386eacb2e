"""Command-line interface.

Subcommands:

    reduce    compute P, Q, g at a manifold point (any route)
    oracle    compare a reduction route against the flow-map FD oracle
    simulate  run a full or reduced ensemble, dump CSV tables
    ssa       run the exact jump process of a built-in model
    compare   full-vs-reduced moment comparison or particle-vs-prediction

Exit codes: 0 ok, 1 a requested check failed, 2 configuration error,
3 numerical error.  The seed falls back to the SLOWMANI_SEED environment
variable, then to 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_model_file
from .core import General, SdeSystem
from .errors import ConfigError, SlowmaniError
from .flow import pi_jet_fd
from .models import (
    BuiltinModel,
    build_model,
    competition_delta_prediction,
    reference,
)
from .reduction import ReducedSystem, reduce_at
from .simulate import (
    CSV_HEADER,
    compare_projected,
    euler_maruyama_1d,
    simulate_full,
    simulate_particles_competition,
    simulate_ssa,
)

_EXIT_OK = 0
_EXIT_CHECK = 1
_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3


def _fmt(x: float) -> str:
    return repr(float(x))


def _seed_default() -> int:
    env = os.environ.get("SLOWMANI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SLOWMANI_SEED={env!r} is not an integer") from exc
    return 0


def _parse_extra_params(extra) -> dict:
    """Turn leftover '--name value' pairs into a parameter dict."""
    params = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            i += 1
            if i >= len(extra):
                raise ConfigError(f"missing value for parameter --{key}")
            val = extra[i]
        try:
            params[key] = float(val) if "." in val or "e" in val.lower() else int(val)
        except ValueError:
            params[key] = val
        i += 1
    return params


def _load_model(args, extra) -> tuple[SdeSystem, BuiltinModel | None]:
    if getattr(args, "model_file", None):
        if extra:
            raise ConfigError(f"unexpected arguments with --model-file: {extra}")
        return load_model_file(args.model_file)
    name = getattr(args, "builtin", None)
    if not name:
        raise ConfigError("specify --builtin <name> or --model-file <path>")
    params = _parse_extra_params(extra)
    model = build_model(name, params)
    return model.sde, model


def _point_for(model: BuiltinModel | None, system: SdeSystem, at: str):
    """Parse --at into (state point, chart scalar or None)."""
    vals = [float(v) for v in at.split(",")]
    if len(vals) == 1 and model is not None and model.chart_point is not None:
        z = vals[0]
        return np.asarray(model.chart_point(z), dtype=float), z
    if len(vals) == 1 and system.dim == 1:
        return np.array(vals), None
    if len(vals) != system.dim:
        raise ConfigError(
            f"--at needs {system.dim} comma-separated values (or a chart "
            "coordinate for builtins with a curve chart)")
    return np.array(vals), None


def _write_report(outdir: Path, checks: dict) -> None:
    payload = {"version": __version__,
               "passed": all(c.get("passed", True) for c in checks.values()),
               "checks": checks}
    (outdir / "report.json").write_text(json.dumps(payload, indent=2,
                                                   sort_keys=True) + "\n")


def _route_for(system: SdeSystem, model: BuiltinModel | None, method: str):
    """Resolve the reduction route and manifold to use."""
    if model is None:
        manifold = General(slow_dim=system.dim - 1)
        return ("general" if method in ("auto", "general") else method), manifold
    if method == "auto":
        if model.parametrized1d is not None:
            return "one_d", model.parametrized1d
        if model.codim_one is not None:
            return "codim1", model.codim_one
        return "general", General(slow_dim=model.slow_dim)
    if method == "one_d":
        if model.parametrized1d is None:
            raise ConfigError(
                "one_d route unavailable; options for this model: "
                + ", ".join(_available_routes(model)))
        return method, model.parametrized1d
    if method == "codim1":
        if model.codim_one is None:
            raise ConfigError(
                "codim1 route unavailable; options for this model: "
                + ", ".join(_available_routes(model)))
        return method, model.codim_one
    if method in ("general", "oracle"):
        return method, General(slow_dim=max(model.slow_dim, 1))
    raise ConfigError(f"unknown method {method!r}")


def _available_routes(model: BuiltinModel) -> list:
    routes = []
    if model.parametrized1d is not None:
        routes.append("one_d")
    if model.codim_one is not None:
        routes.append("codim1")
    routes += ["general", "oracle"]
    return routes


def _invariant_residuals(system: SdeSystem, red: ReducedSystem) -> dict:
    from .core import eval_jet

    P, Q = red.P, red.Q
    jet = eval_jet(system, red.base_point)
    J = jet.jac
    res = {
        "idempotency": float(np.max(np.abs(P @ P - P))),
        "JP": float(np.max(np.abs(J @ P))),
        "Q_symmetry": float(np.max(np.abs(Q - Q.swapaxes(1, 2)))),
    }
    # consistency of J Q_jk with the projected Hessian contraction
    H = jet.hess
    HP = np.einsum("mj,imn,nk->ijk", P, H, P)
    res["flow_consistency"] = float(np.max(np.abs(
        np.einsum("il,ljk->ijk", J, Q) + HP)))
    return res


def cmd_reduce(args, extra) -> int:
    system, model = _load_model(args, extra)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    point, z_scalar = _point_for(model, system, args.at)

    method, manifold = _route_for(system, model, args.method)
    if method == "oracle":
        P, Q = pi_jet_fd(system, point, fd_step=args.fd_step, pi_tol=args.tol)
        from .reduction import assemble_reduced, noise_drift

        g = noise_drift(Q, np.asarray(system.G(point), dtype=float))
        red = assemble_reduced(system, P, Q, g, point, method_tag="oracle")
    else:
        red = reduce_at(system, manifold, point, method=method, z_scalar=z_scalar)

    d, s = system.dim, system.noise_dim
    cols = (["point_" + str(i + 1) for i in range(d)]
            + [f"P_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
            + [f"Q_{i + 1}{j + 1}{k + 1}" for i in range(d)
               for j in range(d) for k in range(d)]
            + [f"g_{i + 1}" for i in range(d)]
            + [f"drift_{i + 1}" for i in range(d)]
            + [f"noise_{i + 1}{j + 1}" for i in range(d) for j in range(s)])
    row = np.concatenate([red.base_point, red.P.ravel(), red.Q.ravel(),
                          red.g, red.drift, red.noise.ravel()])
    with open(outdir / "reduction.csv", "w") as fh:
        fh.write(f"{CSV_HEADER}\n")
        fh.write(",".join(cols) + "\n")
        fh.write(",".join(_fmt(v) for v in row) + "\n")

    resid = _invariant_residuals(system, red)
    passed = resid["idempotency"] <= args.tol and resid["Q_symmetry"] <= args.tol
    lines = [f"method: {red.method_tag}", f"point: {red.base_point.tolist()}"]
    lines += [f"{k}: {v:.3e}" for k, v in resid.items()]
    lines.append(f"invariants within tol {args.tol:g}: {'yes' if passed else 'NO'}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    _write_report(outdir, {"reduce": {"passed": bool(passed), **resid}})
    return _EXIT_OK if passed else _EXIT_CHECK


def cmd_oracle(args, extra) -> int:
    system, model = _load_model(args, extra)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    point, z_scalar = _point_for(model, system, args.at)
    method, manifold = _route_for(system, model,
                                  "general" if args.method in ("auto", "oracle")
                                  else args.method)
    red = reduce_at(system, manifold, point, method=method, z_scalar=z_scalar)
    P_fd, Q_fd = pi_jet_fd(system, point, fd_step=args.fd_step, pi_tol=args.pi_tol)
    dP = float(np.max(np.abs(P_fd - red.P)))
    dQ = float(np.max(np.abs(Q_fd - red.Q)))
    passed = dP <= args.tol and dQ <= args.tol
    msg = (f"method {method} vs flow-map oracle at {point.tolist()}: "
           f"max|dP| = {dP:.3e}, max|dQ| = {dQ:.3e}, tol = {args.tol:g} "
           f"-> {'ok' if passed else 'FAIL'}")
    print(msg)
    (outdir / "summary.txt").write_text(msg + "\n")
    _write_report(outdir, {"oracle": {"passed": bool(passed),
                                      "max_dP": dP, "max_dQ": dQ}})
    return _EXIT_OK if passed else _EXIT_CHECK


def cmd_simulate(args, extra) -> int:
    system, model = _load_model(args, extra)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = args.seed

    if args.kind == "full":
        x0, _ = _point_for(model, system, args.x0)
        ens = simulate_full(system, x0, dt=args.dt, t_end=args.t_end,
                            n_rep=args.reps, seed=seed,
                            record_every=args.record_every)
    else:
        if model is None or model.name != "michaelis_menten":
            raise ConfigError(
                "--kind reduced is built in for michaelis_menten only; "
                "use the library API for custom reduced simulations")
        ref = reference(model)
        z0 = float(args.x0.split(",")[0])
        ens = euler_maruyama_1d(ref.reduced_drift, ref.reduced_diffusion, z0,
                                dt=args.dt, t_end=args.t_end, n_rep=args.reps,
                                seed=seed, record_every=args.record_every)
    if args.format == "csv":
        ens.to_csv(outdir / "trajectories.csv")
        ens.moments_to_csv(outdir / "moments.csv")
    print(f"wrote {outdir / 'trajectories.csv'} and {outdir / 'moments.csv'} "
          f"({ens.n_rep} replicates, {ens.times.size} times)")
    _write_report(outdir, {"simulate": {"passed": True,
                                        "replicates": int(ens.n_rep)}})
    return _EXIT_OK


def cmd_ssa(args, extra) -> int:
    system, model = _load_model(args, extra)
    if model is None or model.jump is None:
        raise ConfigError("ssa needs a builtin with a jump process "
                          "(lotka_volterra_wf or stochastic_logistic)")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    x0, _ = _point_for(model, system, args.x0)
    ens = simulate_ssa(model.jump, x0, t_end=args.t_end, n_rep=args.reps,
                       seed=args.seed, n_out=args.n_out)
    if args.format == "csv":
        ens.to_csv(outdir / "trajectories.csv")
        ens.moments_to_csv(outdir / "moments.csv")
    print(f"wrote {outdir / 'trajectories.csv'} ({ens.n_rep} replicates)")
    _write_report(outdir, {"ssa": {"passed": True,
                                   "replicates": int(ens.n_rep)}})
    return _EXIT_OK


def _plot_lines(path, xs, curves, xlabel, ylabel, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys, style in curves:
        ax.plot(xs, ys, style, label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _compare_mm(args, outdir: Path) -> int:
    model = build_model("michaelis_menten",
                        dict(alpha=args.alpha, beta=args.beta,
                             epsilon=args.epsilon, mu=args.mu))
    system = model.sde
    ref = reference(model)
    z0 = args.z0
    x0 = model.chart_point(z0)
    full = simulate_full(system, x0, dt=args.dt, t_end=args.t_end,
                         n_rep=args.reps, seed=args.seed,
                         record_every=args.record_every)
    red = euler_maruyama_1d(ref.reduced_drift, ref.reduced_diffusion, z0,
                            dt=args.dt_reduced, t_end=args.t_end,
                            n_rep=args.reps, seed=args.seed + 1,
                            record_every=max(1, int(round(
                                args.dt * args.record_every / args.dt_reduced))))
    report = compare_projected(full, system, red, project=model.project,
                               observable=lambda p: p[..., 0])
    full.moments_to_csv(outdir / "moments.csv")
    report.to_csv(outdir / "comparison.csv")

    frac_mean = report.mean_within(3.0)
    frac_var = report.var_within(3.0)
    passed = frac_mean >= 0.95 and frac_var >= 0.95

    # Fig. 3 analogue: one realization of x1, pi1(x), z
    x1 = full.paths[0, :, 0]
    pi1 = model.project(full.paths[0])[:, 0]
    zt = red.paths[0, :: max(1, (red.times.size - 1) // (full.times.size - 1)), 0]
    zt = zt[: full.times.size]
    _plot_lines(outdir / "overlay.svg", full.times,
                [("x1 (full)", x1, "-"), ("pi1(x) (projected)", pi1, "--"),
                 ("z (reduced)", zt, ":")],
                "t", "substrate coordinate", "full vs reduced trajectory")
    # Fig. 1 analogue: distance to the slow curve along one path
    dist = np.abs(full.paths[0] - model.project(full.paths[0])).max(axis=1)
    _plot_lines(outdir / "manifold_distance.svg", full.times,
                [("|x - pi(x)|", dist, "-")],
                "t", "distance to manifold", "distance to the slow curve")

    line = (f"mean within 3 SE at {100 * frac_mean:.1f}% of times, "
            f"variance at {100 * frac_var:.1f}% (need >= 95%): "
            f"{'ok' if passed else 'FAIL'}")
    print(line)
    (outdir / "summary.txt").write_text(line + "\n")
    _write_report(outdir, {"moment_agreement": {
        "passed": bool(passed), "frac_mean_within_3se": frac_mean,
        "frac_var_within_3se": frac_var}})
    return _EXIT_OK if passed else _EXIT_CHECK


def _compare_particles(args, outdir: Path) -> int:
    model = build_model("competition_diffusion",
                        dict(epsilon=args.epsilon, mu=args.mu))
    res = simulate_particles_competition(
        epsilon=args.epsilon, mu=args.mu,
        n_init=model.extras["n_equilibrium"], t_end=args.t_end, dt=args.dt,
        n_rep=args.reps, seed=args.seed,
        record_every=args.record_every)
    pred = competition_delta_prediction(res.times, args.epsilon, args.mu)
    mean = res.mean()
    limit = model.extras["limit"]
    sel = res.times >= min(3.0 / (2.0 * args.mu), 0.75 * args.t_end)
    # check the plateau average: pointwise values of the ensemble mean are
    # heavy-tailed at moderate replicate counts
    plateau_dev = abs(float(mean[sel].mean()) - limit) / limit
    point_dev = float(np.max(np.abs(mean[sel] - limit)) / limit)
    passed = plateau_dev <= 0.15

    with open(outdir / "delta.csv", "w") as fh:
        fh.write(f"{CSV_HEADER}\n")
        fh.write("time,delta_mean,delta_se,prediction\n")
        se = res.se()
        for i, t in enumerate(res.times):
            fh.write(f"{_fmt(t)},{_fmt(mean[i])},{_fmt(se[i])},{_fmt(pred[i])}\n")
    _plot_lines(outdir / "delta.svg", res.times,
                [("simulated", mean, "-"), ("prediction", pred, "--"),
                 ("limit 2 eps/mu", np.full_like(res.times, limit), ":")],
                "t", "mean square pair distance", "competition-limited diffusion")
    line = (f"late-time spread plateau within 15% of {limit:g}: "
            f"{'ok' if passed else 'FAIL'} (plateau dev {plateau_dev:.3f}, "
            f"max pointwise dev {point_dev:.3f})")
    print(line)
    (outdir / "summary.txt").write_text(line + "\n")
    _write_report(outdir, {"delta_limit": {"passed": bool(passed),
                                           "plateau_rel_dev": plateau_dev,
                                           "max_pointwise_rel_dev": point_dev}})
    return _EXIT_OK if passed else _EXIT_CHECK


def cmd_compare(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments: {extra}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.builtin == "michaelis_menten":
        return _compare_mm(args, outdir)
    if args.builtin == "competition_diffusion":
        return _compare_particles(args, outdir)
    raise ConfigError("compare supports michaelis_menten and "
                      "competition_diffusion")


def _add_model_args(p):
    p.add_argument("--builtin", help="built-in model name")
    p.add_argument("--model-file", help="TOML model definition file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slowmani", allow_abbrev=False,
        description="slow-manifold reduction of stochastic dynamical systems")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    common = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                  allow_abbrev=False)

    p = sub.add_parser("reduce", help="compute P, Q, g at a point", **common)
    _add_model_args(p)
    p.add_argument("--at", default="1.0", help="point (chart coord or x1,..,xd)")
    p.add_argument("--method", default="auto",
                   choices=["auto", "general", "one_d", "codim1", "oracle"])
    p.add_argument("--fd-step", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("oracle", help="route vs flow-map FD oracle", **common)
    _add_model_args(p)
    p.add_argument("--at", default="1.0")
    p.add_argument("--method", default="general",
                   choices=["auto", "general", "one_d", "codim1"])
    p.add_argument("--fd-step", type=float, default=1e-3)
    p.add_argument("--pi-tol", type=float, default=1e-10)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="run an ensemble", **common)
    _add_model_args(p)
    p.add_argument("--kind", default="full", choices=["full", "reduced"])
    p.add_argument("--x0", default="1.0", help="initial point")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--record-every", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", default="csv", choices=["csv"])
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ssa", help="exact jump-process ensemble", **common)
    _add_model_args(p)
    p.add_argument("--x0", default="0.25,0.25")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--n-out", type=int, default=101)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", default="csv", choices=["csv"])
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_ssa)

    p = sub.add_parser("compare", help="full vs reduced moment comparison",
                       **common)
    p.add_argument("--builtin", default="michaelis_menten",
                   choices=["michaelis_menten", "competition_diffusion"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--z0", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--dt-reduced", type=float, default=0.05)
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--reps", type=int, default=400)
    p.add_argument("--record-every", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        try:
            args.seed = _seed_default()
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return _EXIT_CONFIG
    try:
        return args.func(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except SlowmaniError as exc:
        print(f"numerical error: {exc.__class__.__name__}: {exc}",
              file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
