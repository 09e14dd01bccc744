"""Evidence estimation with Wang-Landau surrogate mixtures."""

import json

from . import _wlmix
from ._wlmix import methods, models, wl_update

__all__ = ["estimate", "benchmark", "gprior_select", "methods", "models", "wl_update"]


def estimate(model, method="wl", config=None, seed=1):
    """Run one estimator; `model` is a spec dict such as {"name": "mvn", "dim": 20, "mu": 3}."""
    return json.loads(_wlmix._estimate(json.dumps(model), method, json.dumps(config or {}), int(seed)))


def benchmark(config, output_dir="", workers=0):
    """Run an experiment config dict and return the summary."""
    return json.loads(_wlmix._benchmark(json.dumps(config), str(output_dir), int(workers)))


def gprior_select(X, y, g, sampler="mtm", iters=20000, burn_frac=0.1, tries=5, seed=1):
    """Posterior inclusion probabilities by trans-dimensional MCMC, with exact enumeration alongside."""
    X = [[float(v) for v in row] for row in X]
    y = [float(v) for v in y]
    return json.loads(_wlmix._gprior_select(X, y, float(g), sampler, int(iters), float(burn_frac), int(tries), int(seed)))
