import numpy as np
import pytest

from bayeslrp.nn import Layer, NetworkSpec, init_weights, mlp


def random_net(rng, bias=True, max_width=6, depth=None):
    """Small random MLP with weights large enough to exercise every sign pattern."""
    depth = depth or int(rng.integers(1, 4))
    widths = [int(rng.integers(2, max_width + 1)) for _ in range(depth)]
    classes = int(rng.integers(2, 5))
    spec = mlp(widths[0], widths[1:], classes, bias=bias)
    w = rng.normal(0, 1.0, spec.n_params)
    return spec, w


def central_diff(f, x, h=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def identity_net(d, relu=False):
    act = "relu" if relu else "identity"
    layers = [Layer(d, d, False, act), Layer(d, d, False, "identity")]
    spec = NetworkSpec(layers, class_count=d)
    eye = np.eye(d)
    return spec, spec.flatten([(eye, None), (eye, None)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny():
    spec = mlp(4, [5], 3)
    return spec, init_weights(spec, 0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
