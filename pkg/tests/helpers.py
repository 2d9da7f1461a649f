"""Shared generators for property tests."""

import numpy as np

from tempo_snn.neuron import AdLifParams


def random_params(rng, n, decay=(0.6, 0.98), a=(0.0, 0.999), b=(0.0, 2.0), theta=1.0):
    return [
        AdLifParams(
            float(rng.uniform(*decay)),
            float(rng.uniform(*decay)),
            float(rng.uniform(*a)),
            float(rng.uniform(*b)),
            theta,
        )
        for _ in range(n)
    ]


def bank_arrays(bank):
    keys = ("alpha", "beta", "a", "b", "theta") if bank.form == "adlif" else ("Hv", "Hf", "Hi", "Hr", "theta")
    return [getattr(bank, k) for k in keys]


def assert_models_equal(m1, m2):
    assert len(m1.layers) == len(m2.layers)
    for l1, l2 in zip(m1.layers, m2.layers):
        np.testing.assert_array_equal(l1.W, l2.W)
        assert (l1.V is None) == (l2.V is None)
        if l1.V is not None:
            np.testing.assert_array_equal(l1.V, l2.V)
        assert l1.norm == l2.norm
        assert l1.neurons.form == l2.neurons.form
        for x, y in zip(bank_arrays(l1.neurons), bank_arrays(l2.neurons)):
            np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(m1.readout_W, m2.readout_W)
    np.testing.assert_array_equal(m1.readout_b, m2.readout_b)
