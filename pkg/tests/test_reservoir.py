import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcnet.errors import ConfigurationError, DimensionError, ParameterError
from rgcnet.graph import Graph, normalize_adjacency
from rgcnet.reservoir import (
    ReservoirConfig,
    ReservoirLayer,
    adjust_spectral_radius,
    check_stack,
    input_transform,
    reservoir_forward,
    stack_forward,
)

from oracles import random_graph


def brute_reservoir(a_norm, h, w_res, alpha, k):
    for _ in range(k):
        h = np.maximum((1 - alpha) * h + alpha * a_norm @ h @ w_res, 0)
    return h


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(1, 3), st.sampled_from([1.0, 0.9, 0.8, 0.7]), st.integers(0, 10_000))
def test_forward_matches_direct_formula(n, k, alpha, seed):
    rng = np.random.default_rng(seed)
    a_norm = normalize_adjacency(random_graph(rng, n))
    layer = ReservoirLayer(6, 4, n_in=3, alpha=alpha, k=k, seed=seed)
    x = rng.standard_normal((n, 3))
    h0 = x @ layer.w_in.value
    want = brute_reservoir(a_norm, h0, layer.w_res.value, alpha, k) @ layer.w_out.value
    np.testing.assert_allclose(layer(a_norm, x).value, want, rtol=1e-12, atol=1e-12)


def test_identity_adjacency_shortcut(rng):
    layer = ReservoirLayer(5, 5, seed=1)
    h = rng.random((4, 5))
    np.testing.assert_array_equal(
        reservoir_forward(layer, None, h).value, reservoir_forward(layer, np.eye(4), h).value
    )


def test_reservoir_radius_and_determinism():
    a = ReservoirLayer(30, 8, n_in=4, seed=3)
    b = ReservoirLayer(30, 8, n_in=4, seed=3)
    np.testing.assert_array_equal(a.w_res.value, b.w_res.value)
    assert np.max(np.abs(np.linalg.eigvals(a.w_res.value))) <= 1 + 1e-6


def test_trainable_flags():
    fixed = ReservoirLayer(5, 3, n_in=2, trainable=False)
    train = ReservoirLayer(5, 3, n_in=2, trainable=True)
    assert fixed.count_trainable() == 5 * 3
    assert train.count_trainable() == 5 * 3 + 5 * 5 + 2 * 5


def test_parameter_validation():
    with pytest.raises(ParameterError):
        ReservoirLayer(4, 4, alpha=0.0)
    with pytest.raises(ParameterError):
        ReservoirLayer(4, 4, alpha=1.5)
    with pytest.raises(ParameterError):
        ReservoirLayer(4, 4, k=0)
    with pytest.raises(DimensionError):
        adjust_spectral_radius(np.ones((2, 3)))


def test_input_map_only_on_first_layer(rng):
    first = ReservoirLayer(6, 4, n_in=3)
    second = ReservoirLayer(4, 2)
    check_stack([first, second])
    with pytest.raises(ConfigurationError):
        input_transform(second, rng.random((2, 4)))
    with pytest.raises(ConfigurationError):
        check_stack([first, ReservoirLayer(4, 2, n_in=4)])
    with pytest.raises(ConfigurationError):
        check_stack([first, ReservoirLayer(5, 2)])
    g = Graph(random_graph(rng, 5), rng.random((5, 3)))
    assert stack_forward([first, second], g).shape == (5, 2)


def test_width_mismatch(rng):
    layer = ReservoirLayer(6, 4)
    with pytest.raises(DimensionError):
        reservoir_forward(layer, np.eye(3), rng.random((3, 5)))
    with pytest.raises(DimensionError):
        reservoir_forward(layer, np.eye(2), rng.random((3, 6)))


def test_config_round_trip():
    layer = ReservoirLayer(7, 3, alpha=0.9, k=2, seed=11)
    again = ReservoirLayer.from_config(ReservoirConfig(**layer.config().to_dict()))
    np.testing.assert_array_equal(layer.w_res.value, again.w_res.value)
