import numpy as np
import pytest

from dualverify.conjugates import (conjugate, conjugate_elu, conjugate_general, conjugate_linear,
                                   conjugate_maxpool, conjugate_relu, conjugate_sigmoid, conjugate_tanh,
                                   evaluate)
from dualverify.errors import InvalidIntervalError, UnsupportedActivationError
from dualverify.network import ELU, IDENTITY, RELU, SIGMOID, TANH, activation_eval, maxpool
from dualverify.oracles import conjugate_grid


def grid(kind, lam, mu, lo, hi, n=100_001):
    return conjugate_grid(lambda y: activation_eval(kind, y), lam, mu, lo, hi, n)


def sigmoid(y):
    return 1.0 / (1.0 + np.exp(-y))


@pytest.mark.parametrize("lam, mu, lo, hi, value, argmax", [
    (0.0, 1.0, -1.0, 2.0, 2.0, 2.0),
    (1.0, 1.0, -1.0, 2.0, 0.0, None),
    (2.0, 1.0, 1.0, 3.0, -1.0, 1.0),
])
def test_relu_examples(lam, mu, lo, hi, value, argmax):
    res = conjugate_relu(lam, mu, lo, hi)
    assert float(res.value) == pytest.approx(value, abs=1e-12)
    assert float(res.value) == pytest.approx(grid(RELU, lam, mu, lo, hi), abs=1e-4)
    if argmax is not None:
        assert float(res.argmax) == pytest.approx(argmax)


def test_sigmoid_examples():
    assert float(conjugate_sigmoid(0.0, 1.0, -2.0, 3.0).value) == pytest.approx(3.0)
    v = float(conjugate_sigmoid(1.0, 0.0, -2.0, 3.0).value)
    assert v == pytest.approx(-sigmoid(-2.0), abs=1e-12)
    assert v == pytest.approx(-0.1192, abs=1e-4)
    res = conjugate_sigmoid(4.0, 1.0, -3.0, 3.0)
    assert float(res.value) == pytest.approx(3.0 - 4.0 * sigmoid(3.0), abs=1e-12)
    assert float(res.value) == pytest.approx(-0.8096, abs=1e-3)
    assert float(res.argmax) == pytest.approx(3.0)
    assert float(res.value) == pytest.approx(grid(SIGMOID, 4.0, 1.0, -3.0, 3.0), abs=1e-4)


def test_tanh_examples():
    res = conjugate_tanh(0.0, -1.0, -2.0, 1.0)
    assert float(res.value) == pytest.approx(2.0)
    assert float(res.argmax) == pytest.approx(-2.0)
    res = conjugate_tanh(1.0, 1.0, -2.0, 2.0)
    assert float(res.value) == pytest.approx(2.0 - np.tanh(2.0), abs=1e-12)
    assert float(res.value) == pytest.approx(1.036, abs=1e-3)
    res = conjugate_tanh(2.0, 1.0, -3.0, 3.0)
    y = np.array([-3.0, 3.0, np.arctanh(np.sqrt(0.5)), -np.arctanh(np.sqrt(0.5))])
    assert float(res.value) == pytest.approx(np.max(y - 2.0 * np.tanh(y)), abs=1e-12)
    assert float(res.value) == pytest.approx(grid(TANH, 2.0, 1.0, -3.0, 3.0), abs=1e-4)


def test_maxpool_examples():
    res = conjugate_maxpool(0.0, [1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
    assert float(res.value) == pytest.approx(2.0)
    assert res.argmax == pytest.approx([1.0, 1.0])
    assert float(conjugate_maxpool(1.0, [0.0, 0.0], [0.0, 2.0], [1.0, 3.0]).value) == pytest.approx(-2.0)
    # y1 - max(y1, y2) <= 0 with equality whenever y2 <= y1
    res = conjugate_maxpool(1.0, [1.0, 0.0], [0.0, 0.0], [2.0, 1.0])
    assert float(res.value) == pytest.approx(0.0, abs=1e-12)
    ys = np.stack(np.meshgrid(np.linspace(0, 2, 401), np.linspace(0, 1, 201)), -1).reshape(-1, 2)
    assert float(res.value) == pytest.approx(np.max(ys[:, 0] - ys.max(axis=1)), abs=1e-12)


def test_maxpool_batched_and_dispatch():
    rng = np.random.default_rng(0)
    lo = rng.uniform(-2, 0, size=(5, 3))
    hi = lo + rng.uniform(0, 2, size=(5, 3))
    mu, lam = rng.normal(size=(5, 3)), rng.normal(size=5)
    batched = conjugate_maxpool(lam, mu, lo, hi)
    for i in range(5):
        single = conjugate_maxpool(lam[i], mu[i], lo[i], hi[i])
        assert float(single.value) == pytest.approx(batched.value[i])
    flat = conjugate(maxpool(3), lam, mu.ravel(), lo.ravel(), hi.ravel())
    assert np.allclose(flat.value, batched.value)
    assert np.allclose(evaluate(maxpool(3), lam, mu.ravel(), flat.argmax), flat.value)
    assert np.all(flat.argmax >= lo.ravel()) and np.all(flat.argmax <= hi.ravel())


def test_general_examples():
    assert conjugate_general(np.tanh, 0.0, 1.0, -1.0, 2.0, 1).value == pytest.approx(2.0)
    assert conjugate_general(sigmoid, 1.0, 0.0, -2.0, 3.0, 1).value == pytest.approx(
        float(conjugate_sigmoid(1.0, 0.0, -2.0, 3.0).value))
    exact = float(conjugate_tanh(1.0, 1.0, -2.0, 2.0).value)
    bounds = [conjugate_general(np.tanh, 1.0, 1.0, -2.0, 2.0, p).value for p in (1, 10, 1000)]
    assert bounds[0] >= bounds[1] >= bounds[2] >= exact - 1e-12
    assert bounds[2] - exact <= 1e-3
    assert not conjugate_general(np.tanh, 1.0, 1.0, -2.0, 2.0, 4).exact


def test_general_refinement_by_doubling():
    rng = np.random.default_rng(1)
    for _ in range(100):
        lam, mu = rng.normal(size=2)
        lo, hi = np.sort(rng.uniform(-4, 4, size=2))
        vals = [conjugate_general(sigmoid, lam, mu, lo, hi, 2 ** k).value for k in range(8)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] >= float(conjugate_sigmoid(lam, mu, lo, hi).value) - 1e-12


def test_dispatch_mirrors_specific_solvers():
    rng = np.random.default_rng(2)
    lam, mu = rng.normal(size=10), rng.normal(size=10)
    lo = rng.uniform(-3, 0, size=10)
    hi = lo + rng.uniform(0, 3, size=10)
    for kind, fn in [(RELU, conjugate_relu), (SIGMOID, conjugate_sigmoid), (TANH, conjugate_tanh),
                     (ELU, conjugate_elu), (IDENTITY, conjugate_linear)]:
        assert np.array_equal(conjugate(kind, lam, mu, lo, hi).value, fn(lam, mu, lo, hi).value)


def test_elu_matches_grid_on_wide_interval():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lam, mu = rng.normal(size=2)
        res = conjugate(ELU, lam, mu, -4.0, 4.0)
        assert res.exact
        g = grid(ELU, lam, mu, -4.0, 4.0)
        assert g - 1e-12 <= float(res.value) <= g + 1e-3


@pytest.mark.parametrize("kind", [RELU, SIGMOID, TANH, ELU, IDENTITY])
def test_soundness_and_value_consistency(kind):
    rng = np.random.default_rng(4)
    n = 2000
    lam = rng.normal(size=n) * rng.choice([0.0, 1.0, 5.0], size=n)
    mu = rng.normal(size=n) * 2
    lo = rng.uniform(-6, 3, size=n)
    hi = lo + rng.exponential(2.0, size=n) * (rng.random(n) > 0.1)
    res = conjugate(kind, lam, mu, lo, hi)
    assert np.all(res.argmax >= lo) and np.all(res.argmax <= hi)
    assert np.allclose(res.value, evaluate(kind, lam, mu, res.argmax), atol=1e-9)
    ys = lo[:, None] + (hi - lo)[:, None] * rng.random((n, 200))
    sampled = mu[:, None] * ys - lam[:, None] * activation_eval(kind, ys)
    assert np.all(sampled <= res.value[:, None] + 1e-9)


@pytest.mark.parametrize("kind", [RELU, SIGMOID, TANH, ELU])
def test_degenerate_interval_is_exact(kind):
    for y in (-2.5, 0.0, 1.3):
        res = conjugate(kind, 0.7, -1.2, y, y)
        assert float(res.value) == -1.2 * y - 0.7 * float(activation_eval(kind, np.array(y)))


def test_tiny_lambda_treated_as_linear():
    res = conjugate_sigmoid(1e-14, 1.0, -2.0, 3.0)
    assert float(res.value) == pytest.approx(3.0)
    assert np.isfinite(res.value)


def test_sigmoid_boundary_ratio_single_stationary_point():
    # mu / lam = 1/4 puts the only stationary point at y = 0
    res = conjugate_sigmoid(4.0, 1.0, -0.5, 0.5)
    assert float(res.value) == pytest.approx(grid(SIGMOID, 4.0, 1.0, -0.5, 0.5), abs=1e-9)


def test_invalid_interval():
    with pytest.raises(InvalidIntervalError):
        conjugate_relu(1.0, 1.0, 2.0, 1.0)
    with pytest.raises(InvalidIntervalError):
        conjugate_maxpool(1.0, [1.0, 1.0], [0.0, 2.0], [1.0, 1.0])
    with pytest.raises(InvalidIntervalError):
        conjugate_tanh(1.0, 1.0, -np.inf, 1.0)


def test_unknown_kind_rejected():
    class Fake:
        name = "swish"
        is_maxpool = False
    with pytest.raises(UnsupportedActivationError):
        conjugate(Fake(), 1.0, 1.0, 0.0, 1.0)


def test_conjugate_grid_contract():
    assert conjugate_grid(lambda y: y, 1.0, 3.0, -1.0, 2.0, 2) == pytest.approx(4.0)
    assert conjugate_grid(np.tanh, 1.0, 1.0, 0.5, 0.5, 1000) == pytest.approx(0.5 - np.tanh(0.5))
    exact = float(conjugate_sigmoid(2.0, 0.3, -4.0, 4.0).value)
    errs = [exact - conjugate_grid(sigmoid, 2.0, 0.3, -4.0, 4.0, n) for n in (10, 1000, 100_000)]
    assert errs[0] >= errs[1] >= errs[2] >= -1e-12
    assert errs[2] <= 1e-4
