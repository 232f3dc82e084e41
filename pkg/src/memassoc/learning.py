"""Weight learning: Hebbian, Storkey, pseudo-inverse, and gradient-trained
fixed-point storage for single-layer and encoder/decoder networks.

Losses are the mean over patterns of the summed squared error,
``(1/M) * sum_m ||xi_m - f(xi_m)||^2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .network import HopfieldNet, MultilayerNet
from .patterns import PatternKind, PatternSet
from .seeding import make_rng


class Optimizer(str, enum.Enum):
    PLAIN_GD = "plain_gd"
    RMSPROP = "rmsprop"


class SingularPatternsError(ValueError):
    """Raised when the pattern overlap matrix cannot be inverted."""

    def __init__(self, indices):
        self.indices = tuple(int(i) for i in indices)
        super().__init__(f"pattern overlap matrix is singular; dependent patterns: {list(self.indices)}")


@dataclass
class TrainingConfig:
    learning_rate: float = 3e-2
    max_steps: int = 10_000
    loss_threshold: float = 1e-8
    optimizer: Optimizer = Optimizer.PLAIN_GD
    rmsprop_decay: float = 0.99
    rmsprop_epsilon: float = 1e-8
    init_scale: float | None = None  # None -> 1/sqrt(fan_in)
    seed: int = 0
    history_every: int = 10
    check_mask: bool = False
    zero_diagonal: bool = True  # single-layer only: pin self-couplings to zero

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @classmethod
    def single_layer(cls, **kw) -> "TrainingConfig":
        return cls(**kw)

    @classmethod
    def multilayer(cls, **kw) -> "TrainingConfig":
        base = dict(learning_rate=3e-4, max_steps=60_000, optimizer=Optimizer.RMSPROP)
        base.update(kw)
        return cls(**base)


@dataclass
class FaultMask:
    """Per-layer boolean masks; True marks a stuck weight pinned at zero."""

    layers: list[np.ndarray]

    def __post_init__(self):
        self.layers = [np.asarray(m, dtype=bool) for m in self.layers]

    @classmethod
    def single(cls, mask: np.ndarray) -> "FaultMask":
        return cls([mask])

    @property
    def fraction(self) -> float:
        total = sum(m.size for m in self.layers)
        return sum(int(m.sum()) for m in self.layers) / total if total else 0.0

    def check_shapes(self, shapes) -> None:
        if len(self.layers) != len(shapes):
            raise ValueError(f"mask has {len(self.layers)} layers, network has {len(shapes)}")
        for i, (m, s) in enumerate(zip(self.layers, shapes)):
            if m.shape != tuple(s):
                raise ValueError(f"mask layer {i} has shape {m.shape}, weights have {tuple(s)}")


@dataclass
class TrainingReport:
    final_loss: float
    steps_used: int
    loss_history: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = False
    initial_loss: float = float("nan")
    presentation_order: list[int] | None = None


# ---------------------------------------------------------------- classical rules


def _binary_matrix(patterns: PatternSet) -> np.ndarray:
    if patterns.kind is not PatternKind.BINARY:
        raise ValueError("this learning rule only stores binary patterns")
    return patterns.values


def train_hebbian(patterns: PatternSet) -> HopfieldNet:
    xi = _binary_matrix(patterns)
    n = patterns.dim
    w = xi.T @ xi / n
    np.fill_diagonal(w, 0.0)
    return HopfieldNet(w)


def storkey_local_fields(w: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """h[i, j] = sum over k not in {i, j} of w[i, k] * xi[k]."""
    h = w @ xi
    out = h[:, None] - np.diag(w)[:, None] * xi[:, None] - w * xi[None, :]
    # When i == j the self term was removed twice.
    out[np.diag_indices_from(out)] += np.diag(w) * xi
    return out


def train_storkey(patterns: PatternSet, order=None) -> HopfieldNet:
    """Storkey's incremental rule, one pass in dataset order unless ``order`` is given."""
    xi_all = _binary_matrix(patterns)
    n = patterns.dim
    order = range(patterns.count) if order is None else order
    w = np.zeros((n, n))
    for xi in xi_all[list(order)]:
        h = storkey_local_fields(w, xi)
        w = w + (np.outer(xi, xi) - xi[:, None] * h.T - h * xi[None, :]) / n
        np.fill_diagonal(w, 0.0)
    return HopfieldNet(w)


def _dependent_rows(xi: np.ndarray) -> list[int]:
    """Indices of rows that are linear combinations of earlier rows."""
    tol = max(xi.shape) * np.finfo(float).eps * max(1.0, np.abs(xi).max())
    basis = np.zeros((0, xi.shape[1]))
    bad = []
    for m, row in enumerate(xi):
        resid = row - basis.T @ (basis @ row) if basis.size else row.copy()
        norm = np.linalg.norm(resid)
        if norm <= tol * np.linalg.norm(row) * 1e3:
            bad.append(m)
        else:
            basis = np.vstack([basis, resid / norm])
    return bad


def train_pseudo_inverse(patterns: PatternSet) -> HopfieldNet:
    """Projection rule W = (1/N) Xi^T Q^-1 Xi with Q = (1/N) Xi Xi^T."""
    xi = _binary_matrix(patterns)
    n = patterns.dim
    if patterns.count == 0:
        return HopfieldNet(np.zeros((n, n)))
    bad = _dependent_rows(xi)
    if bad:
        first = bad[0]
        partners = [m for m in range(first) if np.array_equal(xi[m], xi[first]) or np.array_equal(xi[m], -xi[first])]
        raise SingularPatternsError(partners + bad)
    q = xi @ xi.T / n
    w = xi.T @ np.linalg.solve(q, xi) / n
    return HopfieldNet(w)


# ---------------------------------------------------------------- single-layer gradient training


def adaptive_loss_single(net: HopfieldNet, patterns: PatternSet) -> float:
    xi = patterns.values
    if xi.shape[1] != net.dim:
        raise ValueError(f"patterns have length {xi.shape[1]}, network has N={net.dim}")
    if patterns.count == 0:
        return 0.0
    out = np.tanh(net.steepness * net.field(xi))
    return float(np.sum((xi - out) ** 2) / patterns.count)


def _single_grads(w, b, lam, xi):
    m = xi.shape[0]
    out = np.tanh(lam * (xi @ w.T + b))
    resid = out - xi
    loss = float(np.sum(resid**2) / m)
    delta = (2.0 / m) * lam * resid * (1.0 - out**2)
    return loss, delta.T @ xi, delta.sum(axis=0)


def grad_loss_single(net: HopfieldNet, patterns: PatternSet, mask: np.ndarray | None = None):
    """Analytic (dL/dW, dL/db); masked weight entries get exactly zero gradient."""
    xi = patterns.values
    if xi.shape[1] != net.dim:
        raise ValueError(f"patterns have length {xi.shape[1]}, network has N={net.dim}")
    if patterns.count == 0:
        return np.zeros_like(net.weights), np.zeros_like(net.bias)
    _, gw, gb = _single_grads(net.weights, net.bias, net.steepness, xi)
    if mask is not None:
        gw = np.where(mask, 0.0, gw)
    return gw, gb


class _Optim:
    def __init__(self, cfg: TrainingConfig, params: list[np.ndarray]):
        self.cfg = cfg
        self.cache = [np.zeros_like(p) for p in params] if cfg.optimizer is Optimizer.RMSPROP else None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        lr = self.cfg.learning_rate
        if self.cache is None:
            for p, g in zip(params, grads):
                p -= lr * g
            return
        rho, eps = self.cfg.rmsprop_decay, self.cfg.rmsprop_epsilon
        for p, g, v in zip(params, grads, self.cache):
            v *= rho
            v += (1.0 - rho) * g * g
            p -= lr * g / (np.sqrt(v) + eps)


def _init_uniform(rng, shape, fan_in, scale):
    scale = 1.0 / np.sqrt(fan_in) if scale is None else scale
    return rng.uniform(-scale, scale, size=shape)


def _run(cfg, params, masks, loss_and_grads):
    """Shared optimisation loop. ``masks[i]`` (or None) pins params[i] entries to zero."""
    for p, mk in zip(params, masks):
        if mk is not None:
            p[mk] = 0.0
    opt = _Optim(cfg, params)
    history = []
    loss, grads = loss_and_grads(params)
    initial = loss
    steps = 0
    while loss >= cfg.loss_threshold and steps < cfg.max_steps:
        for g, mk in zip(grads, masks):
            if mk is not None:
                g[mk] = 0.0
        opt.step(params, grads)
        for p, mk in zip(params, masks):
            if mk is not None:
                p[mk] = 0.0
                if cfg.check_mask:
                    assert not np.any(p[mk]), "masked weight drifted from zero"
        steps += 1
        loss, grads = loss_and_grads(params)
        if steps % cfg.history_every == 0:
            history.append((steps, loss))
    if not history or history[-1][0] != steps:
        history.append((steps, loss))
    return TrainingReport(
        final_loss=loss,
        steps_used=steps,
        loss_history=history,
        converged=loss < cfg.loss_threshold,
        initial_loss=initial,
    )


def _mask_layer(mask: FaultMask | np.ndarray | None, index: int):
    if mask is None:
        return None
    if isinstance(mask, FaultMask):
        return mask.layers[index]
    return np.asarray(mask, dtype=bool)


def train_adaptive_single(
    patterns: PatternSet,
    cfg: TrainingConfig | None = None,
    mask: FaultMask | np.ndarray | None = None,
    steepness: float = 1.0,
) -> tuple[HopfieldNet, TrainingReport]:
    """Gradient descent on the tanh fixed-point loss, stuck weights held at zero."""
    cfg = cfg or TrainingConfig.single_layer()
    n = patterns.dim
    wmask = _mask_layer(mask, 0)
    if isinstance(mask, FaultMask):
        mask.check_shapes([(n, n)])
    elif wmask is not None and wmask.shape != (n, n):
        raise ValueError(f"mask has shape {wmask.shape}, weights have {(n, n)}")
    if cfg.zero_diagonal:
        wmask = np.eye(n, dtype=bool) if wmask is None else (wmask | np.eye(n, dtype=bool))
    rng = make_rng(cfg.seed, "init")
    w = _init_uniform(rng, (n, n), n, cfg.init_scale)
    b = np.zeros(n)
    xi = patterns.values

    def loss_and_grads(params):
        if xi.shape[0] == 0:
            return 0.0, [np.zeros_like(params[0]), np.zeros_like(params[1])]
        loss, gw, gb = _single_grads(params[0], params[1], steepness, xi)
        return loss, [gw, gb]

    report = _run(cfg, [w, b], [wmask, None], loss_and_grads)
    return HopfieldNet(w, b, steepness), report


# ---------------------------------------------------------------- multilayer gradient training


def _multi_grads(w1, b1, w2, b2, xi):
    m = xi.shape[0]
    h = np.tanh(xi @ w1.T + b1)
    out = np.tanh(h @ w2.T + b2)
    resid = out - xi
    loss = float(np.sum(resid**2) / m)
    d2 = (2.0 / m) * resid * (1.0 - out**2)
    d1 = (d2 @ w2) * (1.0 - h**2)
    return loss, [d1.T @ xi, d1.sum(axis=0), d2.T @ h, d2.sum(axis=0)]


def adaptive_loss_multilayer(net: MultilayerNet, patterns: PatternSet) -> float:
    xi = patterns.values
    if xi.shape[1] != net.dim:
        raise ValueError(f"patterns have length {xi.shape[1]}, network has N={net.dim}")
    if patterns.count == 0:
        return 0.0
    return float(np.sum((xi - net.forward(xi)) ** 2) / patterns.count)


def grad_loss_multilayer(net: MultilayerNet, patterns: PatternSet):
    """Backpropagated (dW1, db1, dW2, db2) of the encoder/decoder loss."""
    xi = patterns.values
    if xi.shape[1] != net.dim:
        raise ValueError(f"patterns have length {xi.shape[1]}, network has N={net.dim}")
    _, grads = _multi_grads(net.encoder, net.encoder_bias, net.decoder, net.decoder_bias, xi)
    return tuple(grads)


def train_adaptive_multilayer(
    patterns: PatternSet,
    hidden_dim: int,
    cfg: TrainingConfig | None = None,
    masks: FaultMask | None = None,
) -> tuple[MultilayerNet, TrainingReport]:
    cfg = cfg or TrainingConfig.multilayer()
    if hidden_dim < 1:
        raise ValueError("hidden_dim must be at least 1")
    n = patterns.dim
    if masks is not None:
        masks.check_shapes([(hidden_dim, n), (n, hidden_dim)])
    rng = make_rng(cfg.seed, "init")
    w1 = _init_uniform(rng, (hidden_dim, n), n, cfg.init_scale)
    w2 = _init_uniform(rng, (n, hidden_dim), hidden_dim, cfg.init_scale)
    b1 = np.zeros(hidden_dim)
    b2 = np.zeros(n)
    xi = patterns.values

    def loss_and_grads(params):
        if xi.shape[0] == 0:
            return 0.0, [np.zeros_like(p) for p in params]
        return _multi_grads(*params, xi)

    layer_masks = [None, None, None, None]
    if masks is not None:
        layer_masks = [masks.layers[0], None, masks.layers[1], None]
    report = _run(cfg, [w1, b1, w2, b2], layer_masks, loss_and_grads)
    return MultilayerNet(w1, b1, w2, b2), report


def with_faults(net: HopfieldNet, mask: np.ndarray) -> HopfieldNet:
    """Zero stuck weights after the fact (what a fault-unaware rule suffers)."""
    return replace(net, weights=np.where(mask, 0.0, net.weights))


class Rule(str, enum.Enum):
    HEBBIAN = "hebbian"
    STORKEY = "storkey"
    PSEUDO_INVERSE = "pseudo_inverse"
    ADAPTIVE_SINGLE = "adaptive_single"
    ADAPTIVE_MULTI = "adaptive_multi"


@dataclass
class RuleTrainer:
    """Picklable ``(patterns, seed) -> net`` handle for any learning rule.

    ``mask`` is used by the adaptive rules during training; for the
    classical rules it is applied afterwards, the way a fault-unaware rule
    experiences stuck devices.
    """

    rule: Rule
    cfg: TrainingConfig | None = None
    hidden_dim: int | None = None
    mask: FaultMask | None = None
    steepness: float = 1.0

    def __post_init__(self):
        self.rule = Rule(self.rule)
        if self.rule is Rule.ADAPTIVE_MULTI and not self.hidden_dim:
            raise ValueError("adaptive_multi needs hidden_dim")

    def __call__(self, patterns: PatternSet, seed: int = 0):
        return self.train(patterns, seed)[0]

    def train(self, patterns: PatternSet, seed: int = 0):
        """Return ``(net, report)``; Hebbian and pseudo-inverse give no report."""
        if self.rule is Rule.ADAPTIVE_SINGLE:
            cfg = replace(self.cfg or TrainingConfig.single_layer(), seed=seed)
            return train_adaptive_single(patterns, cfg, self.mask, self.steepness)
        if self.rule is Rule.ADAPTIVE_MULTI:
            cfg = replace(self.cfg or TrainingConfig.multilayer(), seed=seed)
            return train_adaptive_multilayer(patterns, self.hidden_dim, cfg, self.mask)
        fn = {Rule.HEBBIAN: train_hebbian, Rule.STORKEY: train_storkey, Rule.PSEUDO_INVERSE: train_pseudo_inverse}[self.rule]
        net = fn(patterns)
        if self.mask is not None:
            net = with_faults(net, self.mask.layers[0])
        report = None
        if self.rule is Rule.STORKEY:
            # Order-dependent rule: keep the order it saw the patterns in.
            report = TrainingReport(float("nan"), patterns.count, presentation_order=list(range(patterns.count)))
        return net, report
