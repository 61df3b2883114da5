import numpy as np
import pytest

from dualverify.bounds import interval_propagate
from dualverify.dual import DualConfig, DualVariables, convexity_probe, dual_objective, minimize_dual
from dualverify.errors import PreconditionError, ShapeError
from dualverify.input_sets import Box, NormBall
from dualverify.network import IDENTITY, RELU, SIGMOID, TANH, Layer, Network, forward_batch, random_network
from dualverify.oracles import pgd_attack

from factories import random_net, random_set


def setup(rng, **kw):
    net = random_net(rng, **kw)
    s = random_set(rng, net.input_dim)
    return net, s, rng.normal(size=net.output_dim), float(rng.normal()), interval_propagate(net, *s.bounding_box())


def test_zero_network_bound_is_zero():
    net = Network((Layer(np.zeros((2, 2)), np.zeros(2), RELU), Layer(np.zeros((1, 2)), np.zeros(1), RELU)))
    s = Box([-1.0, -1.0], [1.0, 1.0])
    b = interval_propagate(net, *s.bounding_box())
    assert dual_objective(net, [1.0], 0.0, s, b, DualVariables.zeros(net)).bound == 0.0


def test_zero_duals_hand_assembly_one_neuron():
    # x in [-1, 2], z = 2x + 1 in [-1, 5], out = tanh(z), objective 3*out - 0.5
    net = Network((Layer([[2.0]], [1.0], TANH),))
    s = Box([-1.0], [2.0])
    b = interval_propagate(net, *s.bounding_box())
    ev = dual_objective(net, [3.0], -0.5, s, b, DualVariables.zeros(net))
    assert ev.bound == pytest.approx(3 * np.tanh(5.0) - 0.5)
    assert ev.pre_witness[0] == pytest.approx([5.0])


def test_zero_duals_equal_interval_relaxation():
    rng = np.random.default_rng(0)
    for _ in range(30):
        net = random_network(rng, [3, 4, 2], [SIGMOID, IDENTITY])
        s = random_set(rng, 3)
        b = interval_propagate(net, *s.bounding_box())
        c = rng.normal(size=2)
        expected = float(np.maximum(c, 0) @ b.postu[-1] + np.minimum(c, 0) @ b.postl[-1])
        assert dual_objective(net, c, 0.0, s, b, DualVariables.zeros(net)).bound == pytest.approx(expected)


def test_weak_duality_random_duals_tanh():
    rng = np.random.default_rng(1)
    net = random_network(rng, [3, 6, 2], [TANH, TANH])
    s = NormBall(2, rng.normal(size=3), 0.5)
    b = interval_propagate(net, *s.bounding_box())
    c = rng.normal(size=2)
    primal = forward_batch(net, s.sample(rng, 1000)) @ c + 0.3
    for _ in range(50):
        bound = dual_objective(net, c, 0.3, s, b, DualVariables.random(net, rng, scale=2.0)).bound
        assert np.all(primal <= bound + 1e-9)


def test_subgradient_inequality():
    rng = np.random.default_rng(2)
    for _ in range(200):
        net, s, c, d, b = setup(rng, max_width=5)
        base = DualVariables.random(net, rng)
        ev = dual_objective(net, c, d, s, b, base)
        g = ev.subgrad.flat()
        for _ in range(3):
            other = base.unflatten(base.flat() + rng.normal(size=g.size))
            val = dual_objective(net, c, d, s, b, other).bound
            assert val >= ev.bound + g @ (other.flat() - base.flat()) - 1e-8


def test_zero_iterations_is_zero_dual_value():
    rng = np.random.default_rng(3)
    net, s, c, d, b = setup(rng)
    res = minimize_dual(net, c, d, s, b, DualConfig(iterations=0))
    assert res.bound == dual_objective(net, c, d, s, b, DualVariables.zeros(net)).bound
    assert res.history == [res.bound] and res.iterations == 0


def test_history_is_running_minimum():
    rng = np.random.default_rng(4)
    for schedule in ("sqrt", "constant"):
        net, s, c, d, b = setup(rng)
        res = minimize_dual(net, c, d, s, b, DualConfig(iterations=80, schedule=schedule))
        assert len(res.history) == 81
        assert all(y <= x for x, y in zip(res.history, res.history[1:]))
        assert res.bound == res.history[-1]
        assert dual_objective(net, c, d, s, b, res.duals).bound == res.bound


def test_optimised_bound_closes_gap_on_sigmoid_net():
    rng = np.random.default_rng(5)
    net = random_network(rng, [4, 8, 3], [SIGMOID, IDENTITY])
    s = NormBall("inf", rng.normal(size=4), 0.01)
    b = interval_propagate(net, *s.bounding_box())
    c = np.array([1.0, -1.0, 0.0])
    attack = pgd_attack(net, c, 0.0, s).value
    start = minimize_dual(net, c, 0.0, s, b, DualConfig(iterations=0)).bound
    end = minimize_dual(net, c, 0.0, s, b, DualConfig(iterations=500)).bound
    assert attack <= end < start


def test_offset_shifts_bound_exactly():
    rng = np.random.default_rng(6)
    for _ in range(20):
        net, s, c, d, b = setup(rng)
        duals = DualVariables.random(net, rng)
        one = dual_objective(net, c, d, s, b, duals).bound
        two = dual_objective(net, c, 2 * d, s, b, duals).bound
        assert two - one == pytest.approx(d, abs=1e-12)


def test_convexity_probe_trivial_cases():
    rng = np.random.default_rng(7)
    net, s, c, d, b = setup(rng)
    a = DualVariables.random(net, rng)
    other = DualVariables.random(net, rng)
    assert convexity_probe(net, c, d, s, b, a, a)
    assert convexity_probe(net, c, d, s, b, a, other, thetas=(0.0, 1.0), tol=1e-12)
    assert np.array_equal(a.combine(other, 1.0).flat(), a.flat())
    assert np.array_equal(a.combine(other, 0.0).flat(), other.flat())


def test_convexity_probe_random():
    rng = np.random.default_rng(8)
    for _ in range(200):
        net, s, c, d, b = setup(rng, max_width=5)
        assert convexity_probe(net, c, d, s, b, DualVariables.random(net, rng, 3.0),
                               DualVariables.random(net, rng, 3.0))


def test_dual_variable_layout():
    rng = np.random.default_rng(9)
    net = random_network(rng, [3, 4, 5, 2], [RELU, TANH, IDENTITY])
    z = DualVariables.zeros(net)
    assert [a.shape for a in z.lam] == [(4,), (5,)]
    assert [a.shape for a in z.mu] == [(4,), (5,), (2,)]
    r = DualVariables.random(net, rng)
    again = r.unflatten(r.flat())
    assert all(np.array_equal(x, y) for x, y in zip(r.lam + r.mu, again.lam + again.mu))


def test_shape_errors():
    rng = np.random.default_rng(10)
    net, s, c, d, b = setup(rng)
    with pytest.raises(ShapeError):
        dual_objective(net, np.ones(net.output_dim + 1), d, s, b, DualVariables.zeros(net))
    bad = DualVariables(DualVariables.zeros(net).lam, ())
    with pytest.raises(ShapeError):
        dual_objective(net, c, d, s, b, bad)
    shallow = interval_propagate(net.truncated(1), *s.bounding_box()) if len(net) > 1 else None
    if shallow is not None:
        with pytest.raises(PreconditionError):
            dual_objective(net, c, d, s, shallow, DualVariables.zeros(net))
    with pytest.raises(ValueError):
        DualConfig(step_size=0.0)
    with pytest.raises(ValueError):
        DualConfig(schedule="harmonic")
