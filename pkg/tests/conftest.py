import numpy as np
import pytest

from slowmani import build_model


@pytest.fixture(scope="session")
def mm():
    """Michaelis-Menten with analytic derivatives, alpha=beta=1, eps=mu=0.01."""
    return build_model("michaelis_menten",
                       dict(alpha=1.0, beta=1.0, epsilon=0.01, mu=0.01))


@pytest.fixture(scope="session")
def lv():
    """Neutral 2-species Lotka-Volterra, b=2, d=1, c=1, K=1000."""
    return build_model("lotka_volterra_wf", dict(b=2.0, d=1.0, c=1.0, K=1000))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
