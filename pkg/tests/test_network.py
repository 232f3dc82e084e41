import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memassoc.learning import train_hebbian
from memassoc.network import (
    Activation,
    HopfieldNet,
    MultilayerNet,
    RetrievalConfig,
    UpdateMode,
    batch_energy,
    energy,
    forward_multilayer,
    retrieve,
    retrieve_batch,
    sign_retain,
    update_async_sweep,
    update_sync,
)
from memassoc.patterns import Pattern, PatternKind, PatternSet

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def energy_by_sum(w, b, x):
    n = len(x)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total -= 0.5 * w[i, j] * x[i] * x[j]
        total -= b[i] * x[i]
    return total


def symmetric_net(rng, n, bias=True):
    a = rng.normal(size=(n, n))
    w = (a + a.T) / 2
    np.fill_diagonal(w, 0.0)
    b = rng.normal(size=n) if bias else np.zeros(n)
    return HopfieldNet(w, b)


def test_energy_zero_net():
    net = HopfieldNet(np.zeros((3, 3)))
    assert energy(net, np.array([1.0, -1.0, 1.0])) == 0.0


@pytest.mark.parametrize("x, expected", [([1, 1], -1.0), ([1, -1], 1.0)])
def test_energy_two_neurons(x, expected):
    assert energy(HopfieldNet(SWAP), np.array(x, float)) == pytest.approx(expected)


def test_energy_matches_double_sum(rng):
    for _ in range(20):
        n = rng.integers(1, 9)
        w, b = rng.normal(size=(n, n)), rng.normal(size=n)
        x = rng.choice([-1.0, 1.0], size=n)
        assert energy(HopfieldNet(w, b), x) == pytest.approx(energy_by_sum(w, b, x))


def test_batch_energy_rows(rng):
    net = symmetric_net(rng, 6)
    xs = rng.choice([-1.0, 1.0], size=(5, 6))
    np.testing.assert_allclose(batch_energy(net, xs), [energy(net, x) for x in xs])


def test_energy_dimension_mismatch():
    with pytest.raises(ValueError):
        energy(HopfieldNet(SWAP), np.ones(3))


def test_sync_identity_fixed_point():
    out = update_sync(HopfieldNet(np.eye(2)), np.array([1.0, -1.0]))
    np.testing.assert_array_equal(out, [1, -1])


def test_sync_swap_two_cycle():
    net = HopfieldNet(SWAP)
    once = update_sync(net, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(once, [-1, 1])
    np.testing.assert_array_equal(update_sync(net, once), [1, -1])


def test_sync_zero_field_keeps_state():
    out = update_sync(HopfieldNet(np.zeros((2, 2))), np.array([1.0, 1.0]))
    np.testing.assert_array_equal(out, [1, 1])


def test_sign_retain_only_where_zero():
    out = sign_retain(np.array([2.0, 0.0, -0.5, 0.0]), np.array([-1.0, -1.0, 1.0, 1.0]))
    np.testing.assert_array_equal(out, [1, -1, -1, 1])


def test_bias_enters_with_plus_sign():
    net = HopfieldNet(np.zeros((2, 2)), np.array([0.5, -0.5]))
    np.testing.assert_array_equal(update_sync(net, np.array([-1.0, 1.0])), [1, -1])


def test_tanh_update_uses_steepness():
    w = np.array([[0.0, 0.7], [0.2, 0.0]])
    b = np.array([0.1, -0.3])
    x = np.array([0.4, -0.6])
    out = update_sync(HopfieldNet(w, b, steepness=2.0), x, Activation.TANH)
    np.testing.assert_allclose(out, np.tanh(2.0 * (w @ x + b)))


def test_async_sweep_hebbian_corrects_one_flip():
    xi = np.array([1.0, 1.0, -1.0, -1.0])
    net = train_hebbian(PatternSet(xi[None], "binary"))
    noisy = xi.copy()
    noisy[2] = 1.0
    out = update_async_sweep(net, noisy, np.arange(4))
    np.testing.assert_array_equal(out, xi)


def test_async_sweep_sees_earlier_updates():
    # Neuron 1 copies neuron 0; in order (0, 1) it sees 0's new value.
    w = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([1.0, 0.0])
    out = update_async_sweep(HopfieldNet(w, b), np.array([-1.0, -1.0]), [0, 1])
    np.testing.assert_array_equal(out, [1, 1])
    out = update_async_sweep(HopfieldNet(w, b), np.array([-1.0, -1.0]), [1, 0])
    np.testing.assert_array_equal(out, [1, -1])


def test_async_sweep_keeps_sync_fixed_point(rng):
    net = symmetric_net(rng, 8)
    x = retrieve(net, rng.choice([-1.0, 1.0], 8), RetrievalConfig(max_iterations=500)).final
    if np.array_equal(update_sync(net, x), x):
        np.testing.assert_array_equal(update_async_sweep(net, x, rng.permutation(8)), x)


@pytest.mark.parametrize("order", [[0, 0, 1], [0, 1], [0, 1, 3], [[0, 1, 2]]])
def test_async_sweep_rejects_bad_order(order):
    with pytest.raises(ValueError):
        update_async_sweep(HopfieldNet(np.zeros((3, 3))), np.ones(3), order)


def test_retrieve_fixed_point_one_iteration():
    xi = np.array([1.0, -1.0, 1.0, 1.0])
    net = train_hebbian(PatternSet(xi[None], "binary"))
    trace = retrieve(net, xi)
    assert trace.converged and not trace.cycle_detected
    assert trace.iterations_used == 1
    assert len(trace.states) == 2


def test_retrieve_reports_two_cycle():
    trace = retrieve(HopfieldNet(SWAP), np.array([1.0, -1.0]))
    assert trace.cycle_detected and not trace.converged
    assert len(trace.states) == trace.iterations_used + 1
    assert len(trace.energies) == len(trace.states)


def test_cycle_returns_lower_energy_state():
    # Bias makes the two cycle members differ in energy: 0.5 versus 1.5.
    net = HopfieldNet(SWAP, np.array([0.5, 0.0]))
    low = np.array([1.0, -1.0])
    assert energy(net, low) == pytest.approx(0.5)
    assert energy(net, -low) == pytest.approx(1.5)
    for start in (low, -low):
        trace = retrieve(net, start)
        assert trace.cycle_detected
        np.testing.assert_array_equal(trace.final, low)


def test_cycle_tie_keeps_older_member():
    # States 0, 1, 2 = a, b, a; the pair is (b, a) and b is the older one.
    trace = retrieve(HopfieldNet(SWAP), np.array([1.0, -1.0]))
    np.testing.assert_array_equal(trace.final, [-1, 1])


def test_retrieve_accepts_pattern_objects():
    xi = Pattern(np.array([1.0, -1.0, 1.0]), PatternKind.BINARY)
    trace = retrieve(HopfieldNet(np.eye(3)), xi)
    np.testing.assert_array_equal(trace.final, xi.values)


def test_retrieve_dimension_mismatch():
    with pytest.raises(ValueError):
        retrieve(HopfieldNet(np.eye(3)), np.ones(4))


def test_retrieve_max_iterations_reports_nonconvergence():
    # Continuous rotation never settles within two steps.
    w = np.array([[0.0, 2.0], [-2.0, 0.0]])
    cfg = RetrievalConfig(activation=Activation.TANH, max_iterations=2)
    trace = retrieve(HopfieldNet(w), np.array([0.5, 0.5]), cfg)
    assert not trace.converged and trace.iterations_used == 2


def test_retrieve_continuous_tolerance():
    cfg = RetrievalConfig(activation=Activation.TANH, continuous_tolerance=1e-6, max_iterations=1000)
    trace = retrieve(HopfieldNet(np.zeros((3, 3)), np.array([0.2, -0.1, 0.0])), np.array([0.5, 0.5, 0.5]), cfg)
    assert trace.converged
    np.testing.assert_allclose(trace.final, np.tanh([0.2, -0.1, 0.0]))


def test_async_needs_single_layer():
    net = MultilayerNet(np.zeros((1, 2)), np.zeros(1), np.zeros((2, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        retrieve(net, np.ones(2), RetrievalConfig(mode=UpdateMode.ASYNC))


def test_retrieve_deterministic_async(rng):
    net = symmetric_net(rng, 12)
    x = rng.choice([-1.0, 1.0], 12)
    cfg = RetrievalConfig(mode=UpdateMode.ASYNC, seed=5)
    a, b = retrieve(net, x, cfg), retrieve(net, x, cfg)
    assert a.iterations_used == b.iterations_used
    for s, t in zip(a.states, b.states):
        np.testing.assert_array_equal(s, t)


def test_forward_zero_net():
    net = MultilayerNet(np.zeros((2, 3)), np.zeros(2), np.zeros((3, 2)), np.zeros(3))
    np.testing.assert_array_equal(forward_multilayer(net, np.array([0.3, -1.0, 1.0])), np.zeros(3))


def test_forward_scalar():
    net = MultilayerNet(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1))
    out = forward_multilayer(net, np.array([0.5]))
    assert out[0] == pytest.approx(np.tanh(np.tanh(0.5)))
    assert out[0] == pytest.approx(0.431808, abs=1e-6)


def test_multilayer_shape_checks():
    with pytest.raises(ValueError):
        MultilayerNet(np.zeros((2, 3)), np.zeros(2), np.zeros((3, 4)), np.zeros(3))


def test_hopfield_shape_checks():
    with pytest.raises(ValueError):
        HopfieldNet(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        HopfieldNet(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        HopfieldNet(np.zeros((2, 2)), steepness=0.0)


def test_batch_matches_single_retrieval(rng):
    net = symmetric_net(rng, 16)
    xs = rng.choice([-1.0, 1.0], size=(25, 16))
    batch = retrieve_batch(net, xs)
    for k, x in enumerate(xs):
        t = retrieve(net, x)
        np.testing.assert_array_equal(batch.states[k], t.final)
        assert batch.iterations[k] == t.iterations_used
        assert batch.converged[k] == t.converged
        assert batch.cycle_detected[k] == t.cycle_detected


def test_batch_matches_single_multilayer(rng):
    net = MultilayerNet(rng.normal(size=(4, 8)), rng.normal(size=4), rng.normal(size=(8, 4)), rng.normal(size=8))
    xs = rng.choice([-1.0, 1.0], size=(10, 8))
    batch = retrieve_batch(net, xs)
    for k, x in enumerate(xs):
        np.testing.assert_array_equal(batch.states[k], retrieve(net, x).final)


def test_binary_fixed_point_iff_sign_of_field(rng):
    for _ in range(50):
        net = symmetric_net(rng, 6)
        x = rng.choice([-1.0, 1.0], 6)
        h = net.field(x)
        direct = bool(np.all((h > 0) & (x > 0) | (h < 0) & (x < 0) | (h == 0)))
        assert direct == np.array_equal(update_sync(net, x), x)


def test_sync_trajectories_end_in_fixed_point_or_two_cycle_exhaustive():
    rng = np.random.default_rng(7)
    for n in (3, 5, 8):
        for _ in range(4):
            net = symmetric_net(rng, n)
            for bits in itertools.product([-1.0, 1.0], repeat=n):
                trace = retrieve(net, np.array(bits), RetrievalConfig(max_iterations=2**n))
                assert trace.converged or trace.cycle_detected


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 32), seed=st.integers(0, 2**32 - 1))
def test_async_sweep_never_raises_energy(n, seed):
    rng = np.random.default_rng(seed)
    net = symmetric_net(rng, n)
    x = rng.choice([-1.0, 1.0], n)
    for _ in range(5):
        new = update_async_sweep(net, x, rng.permutation(n))
        assert energy(net, new) <= energy(net, x) + 1e-9
        x = new


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_trace_invariants(n, seed):
    rng = np.random.default_rng(seed)
    net = HopfieldNet(rng.normal(size=(n, n)), rng.normal(size=n))
    trace = retrieve(net, rng.choice([-1.0, 1.0], n), RetrievalConfig(max_iterations=20))
    assert len(trace.states) == trace.iterations_used + 1
    assert not (trace.converged and trace.cycle_detected)
    assert set(np.unique(trace.final)) <= {-1.0, 1.0}
