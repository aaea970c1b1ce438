"""Shared helpers: finite differences and small random problem instances."""

import numpy as np
import pytest

from bmtas.graph import SupergraphSpec
from bmtas.partition import Partition
from bmtas.eval import SyntheticTaskSpec, generate_tasks
from bmtas.seeding import rng_stream


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f over a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2 * h)
    return grad


def relative_error(got, want):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = max(np.linalg.norm(want), 1e-12)
    return np.linalg.norm(got - want) / denom


def random_alpha(rng, num_tasks, num_layers, scale=2.0):
    return scale * rng.standard_normal((num_tasks, num_layers, num_tasks))


@pytest.fixture
def pair_benchmark():
    """4 tasks in two related pairs over a 3-layer chain, seeded."""

    def make(seed):
        spec = SyntheticTaskSpec(
            num_tasks=4,
            input_dim=16,
            hidden_dim=8,
            target_dim=4,
            relatedness=Partition((0, 0, 1, 1)),
        )
        data = generate_tasks(spec, rng_stream(seed, "data"))
        supergraph = SupergraphSpec.chain([16, 8, 8, 8], 4)
        return spec, data, supergraph

    return make
