"""Shared test fixtures: an independent brute-force enumerator and model builders.

The enumerator here is deliberately pure Python with its own energy
formula, independent of both the production code paths and the package
oracle, so it can arbitrate between them.
"""

import itertools
import math

import numpy as np
import pytest

from trafficbp import PairwiseModel


def brute_distribution(model):
    """All configurations (as x tuples) with their exact probabilities."""
    v = model.n_vars
    edges = [(int(a), int(b), float(j))
             for (a, b), j in zip(model.edges, model.couplings)]
    fields = [float(h) for h in model.fields]
    weights = []
    configs = list(itertools.product((0, 1), repeat=v))
    for x in configs:
        s = [1 - 2 * xi for xi in x]
        logw = sum(j * s[a] * s[b] for a, b, j in edges)
        logw += sum(h * si for h, si in zip(fields, s))
        weights.append(math.exp(logw))
    z = sum(weights)
    return configs, [w / z for w in weights], math.log(z)


def brute_marginals(model):
    """Per-variable P(x=1) from the pure-Python enumeration."""
    configs, probs, _ = brute_distribution(model)
    p = np.zeros(model.n_vars)
    for x, w in zip(configs, probs):
        for i, xi in enumerate(x):
            if xi:
                p[i] += w
    return p


def brute_conditional(model, observations):
    """P(x_v = 1 | observations) for every hidden variable v."""
    configs, probs, _ = brute_distribution(model)
    keep = [(x, w) for x, w in zip(configs, probs)
            if all(x[v] == s for v, s in observations.items())]
    z = sum(w for _, w in keep)
    hidden = [v for v in range(model.n_vars) if v not in observations]
    out = {}
    for v in hidden:
        out[v] = sum(w for x, w in keep if x[v] == 1) / z
    return out


def brute_pair_marginal(model, i, j):
    """Exact 2x2 joint of (x_i, x_j)."""
    configs, probs, _ = brute_distribution(model)
    table = np.zeros((2, 2))
    for x, w in zip(configs, probs):
        table[x[i], x[j]] += w
    return table


def random_tree_model(rng, n_vars, j_scale=1.5, h_scale=1.0):
    """Random tree by parent attachment; J ~ U[-j_scale, j_scale], h ~ U[-h_scale, h_scale]."""
    edges = []
    for child in range(1, n_vars):
        parent = int(rng.integers(0, child))
        edges.append((parent, child, float(rng.uniform(-j_scale, j_scale))))
    fields = rng.uniform(-h_scale, h_scale, n_vars)
    return PairwiseModel.make(n_vars, edges, fields)


def random_loopy_model(rng, n_vars, extra_edges, j_scale=1.0, h_scale=1.0):
    """A random tree plus extra chords (may create loops)."""
    tree = random_tree_model(rng, n_vars, j_scale, h_scale)
    existing = {(int(a), int(b)) for a, b in tree.edges}
    edges = [(int(a), int(b), float(j))
             for (a, b), j in zip(tree.edges, tree.couplings)]
    tries = 0
    while len(edges) < n_vars - 1 + extra_edges and tries < 200:
        tries += 1
        i, j = sorted(rng.choice(n_vars, size=2, replace=False).tolist())
        if (i, j) in existing:
            continue
        existing.add((i, j))
        edges.append((i, j, float(rng.uniform(-j_scale, j_scale))))
    return PairwiseModel.make(n_vars, edges, tree.fields)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
