import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayeslrp.errors import DivergenceError, ParameterError, ShapeError
from bayeslrp.nn import (Layer, LabeledDataset, NetworkSpec, SGDConfig, accuracy, cross_entropy, forward,
                         grad_loss_input, grad_loss_weights, init_weights, logits, mlp, softmax, train_sgd)

from conftest import central_diff, identity_net, random_net, rel_err


def test_identity_network_passes_input_through():
    spec, w = identity_net(2)
    np.testing.assert_allclose(logits(spec, w, [0.3, 0.7]), [0.3, 0.7])


def test_single_relu_layer_by_hand():
    spec = NetworkSpec([Layer(2, 1, False, "relu"), Layer(1, 1, False, "identity")], class_count=1)
    w = spec.flatten([(np.array([[1.0], [-1.0]]), None), (np.array([[1.0]]), None)])
    tr = forward(spec, w, [0.5, 2.0])
    assert tr.pre_activations[0][0] == pytest.approx(-1.5)
    assert tr.post_activations[0][0] == 0.0


def test_zero_weights_give_zero_logits(tiny):
    spec, _ = tiny
    assert np.all(logits(spec, np.zeros(spec.n_params), np.ones(4)) == 0)


def test_input_dimension_mismatch():
    spec = mlp(4, [3], 2)
    with pytest.raises(ShapeError):
        forward(spec, init_weights(spec, 0), np.ones(5))


def test_bad_architecture_rejected():
    with pytest.raises(ParameterError):
        NetworkSpec([Layer(3, 4), Layer(5, 2, activation="identity")], class_count=2)
    with pytest.raises(ParameterError):
        NetworkSpec([Layer(3, 2)], class_count=2)


@pytest.mark.parametrize("z, expected", [((0, 0), (0.5, 0.5)), ((1000, 1000), (0.5, 0.5)),
                                         ((math.log(3), 0), (0.75, 0.25))])
def test_softmax_examples(z, expected):
    p = softmax(np.array(z, dtype=float))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, expected, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=8))
def test_softmax_is_a_distribution(z):
    p = softmax(np.array(z))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_saturated_loss_gradient_vanishes():
    spec = NetworkSpec([Layer(1, 2, False, "identity")], class_count=2)
    w = spec.flatten([(np.array([[50.0, 0.0]]), None)])
    g = grad_loss_input(spec, w, np.array([1.0]), 0)
    assert np.linalg.norm(g) < 1e-8


def test_zero_weights_give_zero_input_gradient(tiny):
    spec, _ = tiny
    assert np.all(grad_loss_input(spec, np.zeros(spec.n_params), np.ones(4), 1) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec, w = random_net(rng)
    x = rng.normal(size=spec.input_dim)
    y = int(rng.integers(spec.class_count))
    gw = grad_loss_weights(spec, w, x, y)
    gx = grad_loss_input(spec, w, x, y)
    fw = central_diff(lambda v: cross_entropy(spec, v, x, y), w)
    fx = central_diff(lambda v: cross_entropy(spec, w, v, y), x)
    assert rel_err(gw, fw) < 1e-6
    assert rel_err(gx, fx) < 1e-6


def test_separable_toy_set_trains_to_full_accuracy():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, (20, 2))
    X[:, 0] += np.where(np.arange(20) < 10, 1.5, -1.5)
    Y = (np.arange(20) < 10).astype(int)
    data = LabeledDataset(X, Y, class_count=2)
    spec = mlp(2, [8], 2)
    w = train_sgd(spec, data, SGDConfig(learning_rate=0.1, epochs=200, batch_size=4, seed=0))
    assert accuracy(spec, w, data) == 1.0


def test_zero_learning_rate_leaves_init():
    spec = mlp(3, [4], 2)
    data = LabeledDataset(np.random.default_rng(0).uniform(size=(10, 3)), np.arange(10) % 2, 2)
    init = init_weights(spec, 7)
    w = train_sgd(spec, data, SGDConfig(learning_rate=0.0, epochs=3), init=init)
    np.testing.assert_array_equal(w, init)


def test_training_is_deterministic():
    spec = mlp(3, [4], 2)
    data = LabeledDataset(np.random.default_rng(0).uniform(size=(30, 3)), np.arange(30) % 2, 2)
    a = train_sgd(spec, data, SGDConfig(epochs=5, seed=4))
    b = train_sgd(spec, data, SGDConfig(epochs=5, seed=4))
    assert a.tobytes() == b.tobytes()


def test_divergence_names_epoch():
    spec = mlp(3, [4], 2)
    X = np.random.default_rng(0).uniform(size=(10, 3)) * 1e150
    data = LabeledDataset(X, np.arange(10) % 2, 2)
    with pytest.raises(DivergenceError) as err:
        train_sgd(spec, data, SGDConfig(learning_rate=1e150, epochs=5))
    assert err.value.epoch >= 0


def test_flatten_unflatten_roundtrip(rng):
    spec, w = random_net(rng)
    np.testing.assert_array_equal(spec.flatten(spec.unflatten(w)), w)
