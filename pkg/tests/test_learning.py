import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memassoc.learning import (
    FaultMask,
    Optimizer,
    Rule,
    RuleTrainer,
    SingularPatternsError,
    TrainingConfig,
    adaptive_loss_multilayer,
    adaptive_loss_single,
    grad_loss_multilayer,
    grad_loss_single,
    storkey_local_fields,
    train_adaptive_multilayer,
    train_adaptive_single,
    train_hebbian,
    train_pseudo_inverse,
    train_storkey,
    with_faults,
)
from memassoc.network import HopfieldNet, MultilayerNet, retrieve, update_sync
from memassoc.patterns import PatternSet


def binary_set(rng, m, n):
    return PatternSet(rng.choice([-1.0, 1.0], size=(m, n)), "binary")


def fd_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


# ---------------------------------------------------------------- classical rules


def test_hebbian_single_pattern():
    xi = np.array([1.0, 1.0, -1.0, -1.0])
    net = train_hebbian(PatternSet(xi[None], "binary"))
    expected = np.outer(xi, xi) / 4
    np.fill_diagonal(expected, 0)
    np.testing.assert_allclose(net.weights, expected)
    np.testing.assert_array_equal(net.bias, 0)
    np.testing.assert_array_equal(update_sync(net, xi), xi)


def test_hebbian_empty_set():
    net = train_hebbian(PatternSet.empty(5, "binary"))
    np.testing.assert_array_equal(net.weights, np.zeros((5, 5)))


def test_hebbian_duplicate_doubles_weights():
    xi = np.array([[1.0, -1.0, 1.0, 1.0, -1.0]])
    one = train_hebbian(PatternSet(xi, "binary"))
    two = train_hebbian(PatternSet(np.vstack([xi, xi]), "binary"))
    np.testing.assert_allclose(two.weights, 2 * one.weights)
    np.testing.assert_array_equal(update_sync(two, xi[0]), update_sync(one, xi[0]))


@pytest.mark.parametrize("fn", [train_hebbian, train_storkey, train_pseudo_inverse])
def test_classical_rules_reject_continuous(fn):
    with pytest.raises(ValueError):
        fn(PatternSet(np.array([[0.5, -0.2]]), "continuous"))


def test_storkey_local_fields_exclude_i_and_j(rng):
    n = 6
    w = rng.normal(size=(n, n))
    xi = rng.choice([-1.0, 1.0], n)
    h = storkey_local_fields(w, xi)
    for i in range(n):
        for j in range(n):
            direct = sum(w[i, k] * xi[k] for k in range(n) if k not in (i, j))
            assert h[i, j] == pytest.approx(direct)


def test_storkey_single_pattern_equals_hebbian():
    xi = PatternSet(np.array([[1.0, -1.0, -1.0, 1.0, 1.0, -1.0]]), "binary")
    np.testing.assert_allclose(train_storkey(xi).weights, train_hebbian(xi).weights)


def test_storkey_empty_set():
    np.testing.assert_array_equal(train_storkey(PatternSet.empty(4, "binary")).weights, 0)


def test_storkey_three_patterns_are_fixed_points():
    rng = np.random.default_rng(3)
    for _ in range(10):
        pats = binary_set(rng, 3, 16)
        net = train_storkey(pats)
        assert np.all(np.diag(net.weights) == 0)
        for xi in pats.values:
            np.testing.assert_array_equal(update_sync(net, xi), xi)


def test_storkey_order_matters_and_is_reported(rng):
    pats = binary_set(rng, 4, 12)
    a = train_storkey(pats)
    b = train_storkey(pats, order=[3, 2, 1, 0])
    assert not np.allclose(a.weights, b.weights)
    _, report = RuleTrainer(Rule.STORKEY).train(pats)
    assert report.presentation_order == [0, 1, 2, 3]


def test_pseudo_inverse_orthogonal_equals_hebbian():
    # Rows of a Hadamard matrix are mutually orthogonal.
    h = np.array([[1.0]])
    for _ in range(3):
        h = np.block([[h, h], [h, -h]])
    pats = PatternSet(h[1:5], "binary")
    pinv = train_pseudo_inverse(pats)
    hebb = pats.values.T @ pats.values / 8
    np.testing.assert_allclose(pinv.weights, hebb, atol=1e-12)
    # Hebbian rule additionally zeroes the diagonal.
    off = ~np.eye(8, dtype=bool)
    np.testing.assert_allclose(pinv.weights[off], train_hebbian(pats).weights[off], atol=1e-12)


def test_pseudo_inverse_single_pattern():
    xi = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
    net = train_pseudo_inverse(PatternSet(xi[None], "binary"))
    np.testing.assert_allclose(net.weights, np.outer(xi, xi) / 5)
    np.testing.assert_allclose(net.weights @ xi, xi)


def test_pseudo_inverse_duplicate_names_indices():
    xi = np.array([[1.0, -1.0, 1.0, 1.0], [1.0, 1.0, -1.0, 1.0], [1.0, -1.0, 1.0, 1.0]])
    with pytest.raises(SingularPatternsError) as exc:
        train_pseudo_inverse(PatternSet(xi, "binary"))
    assert set(exc.value.indices) == {0, 2}
    assert "0" in str(exc.value) and "2" in str(exc.value)


def test_pseudo_inverse_dependent_combination():
    a = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    b = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    c = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0]) * -1
    with pytest.raises(SingularPatternsError) as exc:
        train_pseudo_inverse(PatternSet(np.vstack([a, b, c]), "binary"))
    assert 2 in exc.value.indices


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 40), frac=st.floats(0.05, 0.9), seed=st.integers(0, 2**32 - 1))
def test_pseudo_inverse_exact_storage(n, frac, seed):
    rng = np.random.default_rng(seed)
    m = max(1, int(frac * n))
    xi = rng.choice([-1.0, 1.0], size=(m, n))
    if np.linalg.matrix_rank(xi) < m:
        with pytest.raises(SingularPatternsError):
            train_pseudo_inverse(PatternSet(xi, "binary"))
        return
    net = train_pseudo_inverse(PatternSet(xi, "binary"))
    assert np.max(np.abs(xi @ net.weights.T - xi)) < 1e-9


# ---------------------------------------------------------------- losses and gradients


def test_loss_summed_convention():
    net = HopfieldNet(np.zeros((2, 2)))
    assert adaptive_loss_single(net, PatternSet(np.array([[1.0, -1.0]]), "binary")) == pytest.approx(2.0)


def test_loss_order_invariant(rng):
    pats = binary_set(rng, 5, 7)
    net = HopfieldNet(rng.normal(size=(7, 7)), rng.normal(size=7))
    shuffled = pats.subset(rng.permutation(5))
    assert adaptive_loss_single(net, pats) == pytest.approx(adaptive_loss_single(net, shuffled))


def test_loss_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        adaptive_loss_single(HopfieldNet(np.zeros((3, 3))), binary_set(rng, 2, 4))
    with pytest.raises(ValueError):
        grad_loss_single(HopfieldNet(np.zeros((3, 3))), binary_set(rng, 2, 4))


def test_zero_residual_gives_zero_gradient():
    # Continuous targets that are exact fixed points of tanh(W x + b).
    x = np.array([[0.3, -0.6, 0.1]])
    b = np.arctanh(x[0])
    net = HopfieldNet(np.zeros((3, 3)), b)
    gw, gb = grad_loss_single(net, PatternSet(x, "continuous"))
    np.testing.assert_allclose(gw, 0, atol=1e-15)
    np.testing.assert_allclose(gb, 0, atol=1e-15)


def test_masked_gradient_is_exactly_zero(rng):
    pats = binary_set(rng, 3, 5)
    net = HopfieldNet(rng.normal(size=(5, 5)), rng.normal(size=5))
    mask = rng.random((5, 5)) < 0.4
    gw, _ = grad_loss_single(net, pats, mask)
    assert np.all(gw[mask] == 0.0)


def single_gradient_error(rng, n, m, lam):
    pats = PatternSet(rng.choice([-1.0, 1.0], size=(m, n)), "binary")
    w, b = rng.normal(scale=0.5, size=(n, n)), rng.normal(scale=0.5, size=n)

    def loss():
        return adaptive_loss_single(HopfieldNet(w, b, lam), pats)

    gw, gb = grad_loss_single(HopfieldNet(w, b, lam), pats)
    return max(rel_err(gw, fd_grad(loss, w)), rel_err(gb, fd_grad(loss, b)))


def multi_gradient_error(rng, n, h, m):
    pats = PatternSet(rng.uniform(-0.9, 0.9, size=(m, n)), "continuous")
    params = [rng.normal(scale=0.7, size=s) for s in [(h, n), (h,), (n, h), (n,)]]

    def loss():
        return adaptive_loss_multilayer(MultilayerNet(*params), pats)

    grads = grad_loss_multilayer(MultilayerNet(*params), pats)
    return max(rel_err(g, fd_grad(loss, p)) for g, p in zip(grads, params))


def test_single_gradient_small_instance():
    rng = np.random.default_rng(0)
    assert single_gradient_error(rng, 4, 2, 1.0) < 1e-5


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 8), m=st.integers(1, 4), lam=st.floats(0.3, 2.0), seed=st.integers(0, 2**32 - 1))
def test_single_gradient_matches_finite_differences(n, m, lam, seed):
    assert single_gradient_error(np.random.default_rng(seed), n, m, lam) < 1e-5


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 8), h=st.integers(1, 4), m=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_multilayer_gradient_matches_finite_differences(n, h, m, seed):
    assert multi_gradient_error(np.random.default_rng(seed), n, h, m) < 1e-5


# ---------------------------------------------------------------- adaptive training


def test_config_defaults():
    s, m = TrainingConfig.single_layer(), TrainingConfig.multilayer()
    assert (s.learning_rate, s.max_steps, s.optimizer) == (3e-2, 10_000, Optimizer.PLAIN_GD)
    assert (m.learning_rate, m.max_steps, m.optimizer) == (3e-4, 60_000, Optimizer.RMSPROP)
    assert s.loss_threshold == m.loss_threshold == 1e-8
    assert (m.rmsprop_decay, m.rmsprop_epsilon) == (0.99, 1e-8)


def test_adaptive_single_two_orthogonal_patterns():
    pats = PatternSet(np.array([[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0]]), "binary")
    # Plain GD only creeps towards +-1 targets; RMSProp reaches the threshold.
    net, report = train_adaptive_single(pats, TrainingConfig(optimizer="rmsprop", max_steps=20_000))
    assert report.converged and report.final_loss < 1e-8
    for xi in pats.values:
        np.testing.assert_array_equal(update_sync(net, xi), xi)


def test_report_invariants(rng):
    pats = binary_set(rng, 4, 10)
    _, report = train_adaptive_single(pats, TrainingConfig(max_steps=300))
    assert report.converged == (report.final_loss < 1e-8)
    assert report.steps_used == 300
    assert report.final_loss < report.initial_loss
    assert report.loss_history[-1] == (300, report.final_loss)


def test_adaptive_single_respects_mask_each_step(rng):
    pats = binary_set(rng, 5, 12)
    mask = rng.random((12, 12)) < 0.3
    net, _ = train_adaptive_single(pats, TrainingConfig(max_steps=500, check_mask=True), mask)
    assert np.all(net.weights[mask] == 0.0)


def test_zero_diagonal_option(rng):
    pats = binary_set(rng, 3, 8)
    pinned, _ = train_adaptive_single(pats, TrainingConfig(max_steps=200))
    free, _ = train_adaptive_single(pats, TrainingConfig(max_steps=200, zero_diagonal=False))
    assert np.all(np.diag(pinned.weights) == 0)
    assert np.any(np.diag(free.weights) != 0)


def test_mask_shape_checked(rng):
    with pytest.raises(ValueError):
        train_adaptive_single(binary_set(rng, 2, 5), TrainingConfig(max_steps=5), np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        train_adaptive_multilayer(binary_set(rng, 2, 5), 3, TrainingConfig.multilayer(max_steps=5), FaultMask([np.zeros((3, 5), bool)]))


def test_training_is_deterministic(rng):
    pats = binary_set(rng, 4, 9)
    mask = FaultMask.single(rng.random((9, 9)) < 0.2)
    a, _ = train_adaptive_single(pats, TrainingConfig(max_steps=100, seed=9), mask)
    b, _ = train_adaptive_single(pats, TrainingConfig(max_steps=100, seed=9), mask)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
    c, _ = train_adaptive_multilayer(pats, 3, TrainingConfig.multilayer(max_steps=100, seed=9))
    d, _ = train_adaptive_multilayer(pats, 3, TrainingConfig.multilayer(max_steps=100, seed=9))
    assert np.array_equal(c.encoder, d.encoder) and np.array_equal(c.decoder, d.decoder)


def test_init_is_fan_in_uniform():
    pats = PatternSet(np.ones((1, 400)), "binary")
    net, _ = train_adaptive_single(pats, TrainingConfig(max_steps=1, learning_rate=1e-12, zero_diagonal=False))
    assert np.abs(net.weights).max() <= 1 / 20 + 1e-9
    assert np.abs(net.weights).max() > 0.9 / 20


def test_multilayer_masks_hold(rng):
    pats = binary_set(rng, 4, 10)
    masks = FaultMask([rng.random((5, 10)) < 0.3, rng.random((10, 5)) < 0.3])
    net, _ = train_adaptive_multilayer(pats, 5, TrainingConfig.multilayer(max_steps=300, check_mask=True), masks)
    assert np.all(net.encoder[masks.layers[0]] == 0)
    assert np.all(net.decoder[masks.layers[1]] == 0)


def test_multilayer_forward_reproduces_patterns():
    rng = np.random.default_rng(1)
    pats = binary_set(rng, 10, 16)
    net, report = train_adaptive_multilayer(pats, 16, TrainingConfig.multilayer(learning_rate=3e-3))
    assert report.converged
    assert np.max(np.abs(net.forward(pats.values) - pats.values)) < 1e-3


def test_wider_hidden_layer_converges_faster():
    rng = np.random.default_rng(2)
    pats = binary_set(rng, 6, 16)
    cfg = TrainingConfig.multilayer(learning_rate=3e-3, seed=4)
    _, wide = train_adaptive_multilayer(pats, 16, cfg)
    _, narrow = train_adaptive_multilayer(pats, 4, cfg)
    assert wide.converged
    assert wide.steps_used < narrow.steps_used


def test_with_faults_zeroes_post_hoc(rng):
    net = HopfieldNet(rng.normal(size=(4, 4)))
    mask = np.eye(4, dtype=bool)
    assert np.all(np.diag(with_faults(net, mask).weights) == 0)


def test_rule_trainer_pickles_and_trains(rng):
    pats = binary_set(rng, 3, 16)
    trainer = pickle.loads(pickle.dumps(RuleTrainer("hebbian")))
    net = trainer(pats, seed=0)
    for xi in pats.values:
        assert retrieve(net, xi).converged
    with pytest.raises(ValueError):
        RuleTrainer("adaptive_multi")


def test_rule_trainer_applies_mask_to_classical_rules(rng):
    pats = binary_set(rng, 3, 8)
    mask = FaultMask.single(rng.random((8, 8)) < 0.5)
    net = RuleTrainer("pseudo_inverse", mask=mask)(pats)
    assert np.all(net.weights[mask.layers[0]] == 0)
