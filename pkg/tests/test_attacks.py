import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayeslrp.attacks import AttackSpec, attack_model, bayes_fgsm, bayes_pgd, fgsm, pgd
from bayeslrp.errors import ParameterError
from bayeslrp.nn import Layer, NetworkSpec, mlp

from conftest import random_net


def logistic_as_softmax(wt):
    # two logits (0, wt * x): softmax over them equals the logistic model sigma(wt * x)
    spec = NetworkSpec([Layer(1, 2, False, "identity")], class_count=2)
    return spec, spec.flatten([(np.array([[0.0, wt]]), None)])


def test_logistic_closed_form():
    spec, w = logistic_as_softmax(2.0)
    # dL/dx = (sigma(0.8) - 1) * 2 < 0, so x moves down by delta
    out = fgsm(spec, w, np.array([0.4]), 1, AttackSpec(delta=0.1))
    np.testing.assert_allclose(out, [0.3], atol=1e-15)


def test_zero_delta_is_identity(tiny):
    spec, w = tiny
    x = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(fgsm(spec, w, x, 0, AttackSpec(delta=0.0)), x)


def test_zero_gradient_leaves_input(tiny):
    spec, _ = tiny
    x = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(fgsm(spec, np.zeros(spec.n_params), x, 0), x)


def test_pgd_zero_eps_is_identity(tiny):
    spec, w = tiny
    x = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(pgd(spec, w, x, 0, AttackSpec(method="pgd", eps=0.0, alpha=0.0)), x)


def test_opposite_gradients_cancel():
    spec, w = logistic_as_softmax(2.0)
    _, w_neg = logistic_as_softmax(-2.0)
    # same label, mirrored weights: the two input gradients are exact negatives at x = 0
    np.testing.assert_array_equal(bayes_fgsm(spec, np.stack([w, w_neg]), np.array([0.0]), 1), [0.0])


def test_identical_ensemble_equals_single(rng):
    spec, w = random_net(rng)
    x = rng.uniform(size=spec.input_dim)
    a = AttackSpec(delta=0.1, clip_range=(-5, 5))
    np.testing.assert_array_equal(bayes_fgsm(spec, np.stack([w] * 4), x, 0, a), fgsm(spec, w, x, 0, a))
    p = AttackSpec(method="pgd", eps=0.2, alpha=0.05, steps=5, clip_range=(-5, 5))
    np.testing.assert_array_equal(bayes_pgd(spec, w[None], x, 0, p), pgd(spec, w, x, 0, p))


def test_empty_ensemble(tiny):
    spec, _ = tiny
    with pytest.raises(ParameterError):
        bayes_fgsm(spec, np.zeros((0, spec.n_params)), np.zeros(4), 0)


def test_attack_spec_validation():
    with pytest.raises(ParameterError):
        AttackSpec(method="cw")
    with pytest.raises(ParameterError):
        AttackSpec(method="pgd", eps=0.1, alpha=0.2)
    with pytest.raises(ParameterError):
        AttackSpec(delta=-1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.5))
def test_fgsm_perturbation_is_ternary(seed, delta):
    rng = np.random.default_rng(seed)
    spec, w = random_net(rng)
    x = rng.uniform(size=spec.input_dim)
    a = AttackSpec(delta=delta, clip_range=(-10, 10))
    d = fgsm(spec, w, x, int(rng.integers(spec.class_count)), a) - x
    assert np.all(np.isclose(np.abs(d), delta, atol=1e-12) | (d == 0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.5))
def test_pgd_stays_in_ball_and_box(seed, eps):
    rng = np.random.default_rng(seed)
    spec, w = random_net(rng)
    x = rng.uniform(size=spec.input_dim)
    traj = []
    pgd(spec, w, x, 0, AttackSpec(method="pgd", eps=eps, alpha=eps / 3, steps=6, seed=seed), trajectory=traj)
    for x_t in traj:
        assert np.max(np.abs(x_t - x)) <= eps + 1e-12
        assert x_t.min() >= 0 and x_t.max() <= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5))
def test_single_step_pgd_equals_fgsm(seed, eps):
    rng = np.random.default_rng(seed)
    spec, w = random_net(rng)
    samples = np.stack([w, rng.normal(size=w.size)])
    x = rng.uniform(size=spec.input_dim)
    one = AttackSpec(method="pgd", eps=eps, alpha=eps, steps=1, random_init=False)
    np.testing.assert_array_equal(pgd(spec, w, x, 0, one), fgsm(spec, w, x, 0, AttackSpec(delta=eps)))
    np.testing.assert_array_equal(bayes_pgd(spec, samples, x, 0, one),
                                  bayes_fgsm(spec, samples, x, 0, AttackSpec(delta=eps)))


def test_default_label_is_prediction(tiny):
    spec, w = tiny
    x = np.array([0.3, 0.2, 0.9, 0.1])
    from bayeslrp.nn import predict
    np.testing.assert_array_equal(attack_model(spec, w, x), fgsm(spec, w, x, int(predict(spec, w, x))))


def test_pgd_reproducible(tiny):
    spec, w = tiny
    x = np.full(4, 0.5)
    a = AttackSpec(method="pgd", seed=3)
    np.testing.assert_array_equal(pgd(spec, w, x, 0, a), pgd(spec, w, x, 0, a))
