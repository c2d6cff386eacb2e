"""Model definition files.

A model file is TOML.  Either it names a built-in:

    builtin = "michaelis_menten"
    [params]
    alpha = 1.0
    beta = 1.0
    epsilon = 0.01
    mu = 0.01

or it spells out a custom model with expression strings:

    dim = 2
    noise_dim = 1
    epsilon = 0.01
    mu = 0.01
    f = ["-x1 + (x1 + a)*x2", "b*(x1 - (x1 + a)*x2)"]
    h = ["0", "-x2"]
    G = [["sqrt(a*x2)"], ["-b*sqrt(a*x2)"]]
    [params]
    a = 1.0
    b = 1.0

Custom models carry no analytic derivatives; the library falls back to
finite differences everywhere.
"""

from __future__ import annotations

import sys
from typing import Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .core import SdeSystem
from .errors import ConfigError
from .expressions import compile_expression
from .models import BuiltinModel, build_model

__all__ = ["load_model_file", "load_model_dict"]


def load_model_file(path) -> Tuple[SdeSystem, BuiltinModel | None]:
    """Read a model definition file.

    Returns ``(system, builtin)`` where ``builtin`` is the full
    BuiltinModel when the file names one (manifolds, references and jump
    process included) and None for expression-defined models.
    """
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"malformed model file {path}: {exc}") from exc
    return load_model_dict(data)


def load_model_dict(data: dict) -> Tuple[SdeSystem, BuiltinModel | None]:
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be a table")

    if "builtin" in data:
        model = build_model(str(data["builtin"]), params)
        if model.sde is None:
            raise ConfigError(
                f"builtin {model.name!r} has no SDE form; it is simulation-only")
        return model.sde, model

    for key in ("dim", "noise_dim", "f", "G"):
        if key not in data:
            raise ConfigError(f"model file missing required field {key!r}")
    dim = int(data["dim"])
    noise_dim = int(data["noise_dim"])
    if dim < 1 or noise_dim < 1:
        raise ConfigError("dim and noise_dim must be positive")
    epsilon = float(data.get("epsilon", 0.0))
    mu = float(data.get("mu", 0.0))

    f_texts = list(data["f"])
    h_texts = list(data.get("h", ["0"] * dim))
    G_rows = [list(row) for row in data["G"]]
    if len(f_texts) != dim or len(h_texts) != dim:
        raise ConfigError(f"f and h must each list {dim} expressions")
    if len(G_rows) != dim or any(len(row) != noise_dim for row in G_rows):
        raise ConfigError(f"G must be a {dim} x {noise_dim} table of expressions")

    f_exprs = [compile_expression(t, dim, params) for t in f_texts]
    h_exprs = [compile_expression(t, dim, params) for t in h_texts]
    G_exprs = [[compile_expression(t, dim, params) for t in row] for row in G_rows]

    def stack_vec(exprs):
        def call(x):
            x = np.asarray(x, dtype=float)
            vals = [np.broadcast_to(np.asarray(e(x), dtype=float), x.shape[:-1])
                    for e in exprs]
            return np.stack(vals, axis=-1)
        return call

    def G_call(x):
        x = np.asarray(x, dtype=float)
        rows = []
        for row in G_exprs:
            vals = [np.broadcast_to(np.asarray(e(x), dtype=float), x.shape[:-1])
                    for e in row]
            rows.append(np.stack(vals, axis=-1))
        return np.stack(rows, axis=-2)

    system = SdeSystem(dim=dim, noise_dim=noise_dim, f=stack_vec(f_exprs),
                       h=stack_vec(h_exprs), G=G_call, epsilon=epsilon, mu=mu,
                       name=str(data.get("name", "custom")))
    return system, None
