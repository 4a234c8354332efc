import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayeslrp.errors import DivisionHazardError, LayerIndexError, ParameterError
from bayeslrp.lrp import explain, lrp_epsilon, lrp_relevances, taylor_attribution, top_k
from bayeslrp.nn import Layer, NetworkSpec, forward, logits, mlp

from conftest import identity_net, random_net


def naive_lrp(spec, w, x, cls, eps):
    """Unit-by-unit epsilon rule with the sign-matched stabilizer, biases discarded."""
    params = spec.unflatten(w)
    acts = [np.asarray(x, float)]
    for (W, b), layer in zip(params, spec.layers):
        z = acts[-1] @ W + (b if b is not None else 0)
        acts.append(np.maximum(z, 0) if layer.activation == "relu" else z)
    R = np.zeros(spec.class_count)
    R[cls] = acts[-1][cls]
    for l in range(spec.depth - 1, -1, -1):
        W, b = params[l]
        a = acts[l]
        z = a @ W + (b if b is not None else 0)
        new = np.zeros(len(a))
        for j in range(len(a)):
            for k in range(len(z)):
                den = z[k] + eps * (1.0 if z[k] >= 0 else -1.0)
                if den != 0:
                    new[j] += a[j] * W[j, k] / den * R[k]
        R = new
    return R


@pytest.mark.parametrize("seed", range(10))
def test_matches_naive_loop(seed):
    rng = np.random.default_rng(seed)
    spec, w = random_net(rng)
    x = rng.uniform(0, 1, spec.input_dim)
    cls = int(rng.integers(spec.class_count))
    hm = explain(spec, w, x, seed_class=cls, eps=0.1)
    np.testing.assert_allclose(hm.relevances, naive_lrp(spec, w, x, cls, 0.1), rtol=1e-10, atol=1e-12)


def test_single_layer_hand_example():
    spec = NetworkSpec([Layer(2, 1, False, "identity")], class_count=1)
    w = spec.flatten([(np.array([[0.5], [0.25]]), None)])
    hm = explain(spec, w, [1.0, 2.0], seed_class=0, eps=0.0, stabilizer="literal")
    np.testing.assert_allclose(hm.relevances, [0.5, 0.5])
    assert hm.relevances.sum() == pytest.approx(logits(spec, w, [1.0, 2.0])[0])


def test_zero_input_gives_zero_relevance():
    spec = mlp(4, [3], 2)
    w = np.random.default_rng(0).normal(size=spec.n_params)
    assert np.all(explain(spec, w, np.zeros(4), seed_class=0).relevances == 0)


def test_identity_network_puts_logit_on_its_pixel():
    spec, w = identity_net(3)
    hm = explain(spec, w, [0.2, 0.9, 0.4], seed_class=1, eps=0.0)
    np.testing.assert_allclose(hm.relevances, [0, 0.9, 0])


def test_layer_out_of_range():
    spec = mlp(3, [2], 2)
    w = np.ones(spec.n_params)
    with pytest.raises(LayerIndexError):
        lrp_epsilon(spec, w, forward(spec, w, np.ones(3)), layer=2)


def test_class_seed_only_on_final_layer():
    spec = mlp(3, [2], 2)
    w = np.ones(spec.n_params)
    with pytest.raises(ParameterError):
        lrp_epsilon(spec, w, forward(spec, w, np.ones(3)), layer=0, seed_class=1)


def test_literal_stabilizer_zero_denominator_names_layer_and_unit():
    spec = NetworkSpec([Layer(2, 2, False, "identity")], class_count=2)
    w = spec.flatten([(np.array([[1.0, 1.0], [-1.0, 1.0]]), None)])
    tr = forward(spec, w, np.array([1.0, 1.0]))
    with pytest.raises(DivisionHazardError) as err:
        lrp_epsilon(spec, w, tr, seed_class=1, eps=0.0, stabilizer="literal")
    assert (err.value.layer, err.value.unit) == (0, 0)
    # the sign-matched rule lets the zero unit pass nothing
    hm = lrp_epsilon(spec, w, tr, seed_class=1, eps=0.0)
    np.testing.assert_allclose(hm.relevances, [1.0, 1.0])


def test_inner_layer_seed_uses_activations():
    rng = np.random.default_rng(1)
    spec, w = random_net(rng, bias=False, depth=3)
    x = rng.uniform(size=spec.input_dim)
    tr = forward(spec, w, x)
    R = lrp_relevances(spec, w, tr, layer=1, eps=0.0)
    total = tr.post_activations[1].sum()
    if abs(total) > 1e-9:
        assert R.sum() == pytest.approx(total, rel=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_conservation_bias_free(seed):
    rng = np.random.default_rng(seed)
    while True:
        spec, w = random_net(rng, bias=False)
        x = rng.uniform(0.1, 1, spec.input_dim)
        tr = forward(spec, w, x)
        if all(np.all(np.abs(z) > 1e-6) for z in tr.pre_activations):
            break
    cls = int(np.argmax(tr.logits))
    hm = lrp_epsilon(spec, w, tr, seed_class=cls, eps=0.0)
    f = tr.logits[cls]
    if f != 0:
        assert abs(hm.relevances.sum() - f) / abs(f) < 1e-9


def test_top_k_examples():
    assert top_k(np.array([9, 7, 5, 3, 1.0]), 2).indices == {0, 1}
    assert top_k(np.ones(5), 3).indices == {0, 1, 2}
    hm = np.array([-5, 1, -3.0])
    assert top_k(hm, 1, "absolute-descending").indices == {0}
    assert top_k(hm, 1, "signed-descending").indices == {1}


def test_top_k_bounds():
    with pytest.raises(ParameterError):
        top_k(np.ones(3), 4)
    with pytest.raises(ParameterError):
        top_k(np.ones(3), 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=12), st.data())
def test_top_k_by_enumeration(values, data):
    k = data.draw(st.integers(1, len(values)))
    got = top_k(np.array(values, float), k).indices
    # oracle: rank by (-value, index)
    expected = {i for _, i in sorted((-v, i) for i, v in enumerate(values))[:k]}
    assert got == expected


def test_taylor_root_equals_x():
    spec = mlp(3, [4], 2)
    w = np.random.default_rng(0).normal(size=spec.n_params)
    x = np.array([0.1, 0.5, 0.9])
    t = taylor_attribution(spec, w, x, x)
    assert np.all(t.per_pixel_terms == 0) and t.residual == 0


def test_taylor_linear_network_is_exact():
    spec = NetworkSpec([Layer(3, 2, False, "identity")], class_count=2)
    w = np.random.default_rng(0).normal(size=spec.n_params)
    x = np.array([0.3, -0.2, 0.8])
    t = taylor_attribution(spec, w, x, np.zeros(3), seed_class=1)
    assert abs(t.residual) < 1e-12
    assert t.per_pixel_terms.sum() == pytest.approx(logits(spec, w, x)[1], abs=1e-12)


def test_taylor_active_set_change_leaves_residual():
    # f(x) = relu(x) with root at -1 (inactive) and x = 1 (active)
    spec = NetworkSpec([Layer(1, 1, False, "relu"), Layer(1, 1, False, "identity")], class_count=1)
    w = spec.flatten([(np.array([[1.0]]), None), (np.array([[1.0]]), None)])
    t = taylor_attribution(spec, w, np.array([1.0]), np.array([-1.0]), seed_class=0)
    assert t.residual == pytest.approx(1.0)
