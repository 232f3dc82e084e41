"""Hopfield dynamics: energy, synchronous/asynchronous updates, retrieval.

Sign convention: the local field is ``W @ x + b`` everywhere (the threshold of
the classical ``W @ x - b`` form is folded into the sign of ``b``), and the
matching energy is ``-0.5 * x @ W @ x - b @ x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .patterns import Pattern, PatternKind
from .seeding import make_rng


class UpdateMode(str, enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


class Activation(str, enum.Enum):
    SIGN = "sign"
    TANH = "tanh"


def _values(state) -> np.ndarray:
    if isinstance(state, Pattern):
        return state.values
    return np.asarray(state, dtype=float)


def _check_dim(n: int, x: np.ndarray) -> None:
    if x.shape[-1] != n:
        raise ValueError(f"state has length {x.shape[-1]}, network has N={n}")


@dataclass(frozen=True)
class HopfieldNet:
    weights: np.ndarray
    bias: np.ndarray | None = None
    steepness: float = 1.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        b = np.zeros(w.shape[0]) if self.bias is None else np.array(self.bias, dtype=float)
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias must have length {w.shape[0]}, got shape {b.shape}")
        if self.steepness <= 0:
            raise ValueError("steepness must be positive")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def field(self, x: np.ndarray) -> np.ndarray:
        """Local field ``W x + b`` for a state or a batch of states (rows)."""
        return x @ self.weights.T + self.bias

    def row_field(self, i: int, x: np.ndarray) -> float:
        return float(self.weights[i] @ x + self.bias[i])


@dataclass(frozen=True)
class MultilayerNet:
    """Encoder/decoder pair iterated as a recurrent associative memory."""

    encoder: np.ndarray
    encoder_bias: np.ndarray
    decoder: np.ndarray
    decoder_bias: np.ndarray

    def __post_init__(self):
        w1 = np.array(self.encoder, dtype=float)
        w2 = np.array(self.decoder, dtype=float)
        b1 = np.array(self.encoder_bias, dtype=float)
        b2 = np.array(self.decoder_bias, dtype=float)
        if w1.ndim != 2 or w2.ndim != 2 or w1.shape != w2.T.shape:
            raise ValueError(f"encoder {w1.shape} and decoder {w2.shape} shapes do not match")
        if b1.shape != (w1.shape[0],) or b2.shape != (w2.shape[0],):
            raise ValueError("bias lengths do not match layer widths")
        for a in (w1, w2, b1, b2):
            a.setflags(write=False)
        object.__setattr__(self, "encoder", w1)
        object.__setattr__(self, "decoder", w2)
        object.__setattr__(self, "encoder_bias", b1)
        object.__setattr__(self, "decoder_bias", b2)

    @property
    def dim(self) -> int:
        return self.encoder.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.encoder.shape[0]

    def hidden(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.encoder.T + self.encoder_bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(self.hidden(x) @ self.decoder.T + self.decoder_bias)


@dataclass
class RetrievalConfig:
    mode: UpdateMode = UpdateMode.SYNC
    activation: Activation = Activation.SIGN
    max_iterations: int = 100
    continuous_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        self.mode = UpdateMode(self.mode)
        self.activation = Activation(self.activation)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @classmethod
    def for_kind(cls, kind: PatternKind, **kw) -> "RetrievalConfig":
        act = Activation.SIGN if PatternKind(kind) is PatternKind.BINARY else Activation.TANH
        return cls(activation=act, **kw)


@dataclass
class RetrievalTrace:
    states: list[np.ndarray] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    converged: bool = False
    cycle_detected: bool = False
    iterations_used: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def energy(net: HopfieldNet, state) -> float:
    x = _values(state)
    _check_dim(net.dim, x)
    return float(-0.5 * x @ net.weights @ x - net.bias @ x)


def batch_energy(net: HopfieldNet, states: np.ndarray) -> np.ndarray:
    return -0.5 * np.einsum("mi,ij,mj->m", states, net.weights, states) - states @ net.bias


def sign_retain(h: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """sgn(h), keeping the previous value wherever the field is exactly zero."""
    return np.where(h > 0, 1.0, np.where(h < 0, -1.0, previous))


def update_sync(net: HopfieldNet, state, activation: Activation = Activation.SIGN) -> np.ndarray:
    x = _values(state)
    _check_dim(net.dim, x)
    h = net.field(x)
    if Activation(activation) is Activation.SIGN:
        return sign_retain(h, x)
    return np.tanh(net.steepness * h)


def update_async_sweep(net: HopfieldNet, state, order, activation: Activation = Activation.SIGN) -> np.ndarray:
    """One pass of single-neuron updates in ``order``; later neurons see earlier updates."""
    x = np.array(_values(state), dtype=float)
    _check_dim(net.dim, x)
    order = np.asarray(order)
    if order.shape != (net.dim,) or not np.array_equal(np.sort(order), np.arange(net.dim)):
        raise ValueError("order must be a permutation of 0..N-1")
    sign = Activation(activation) is Activation.SIGN
    for i in order:
        h = net.row_field(int(i), x)
        if sign:
            if h != 0.0:
                x[i] = 1.0 if h > 0 else -1.0
        else:
            x[i] = np.tanh(net.steepness * h)
    return x


def forward_multilayer(net: MultilayerNet, state) -> np.ndarray:
    x = _values(state)
    _check_dim(net.dim, x)
    return net.forward(x)


def _step(net, x: np.ndarray, activation: Activation) -> np.ndarray:
    if isinstance(net, HopfieldNet) or not hasattr(net, "forward"):
        h = net.field(x)
        if activation is Activation.SIGN:
            return sign_retain(h, x)
        return np.tanh(getattr(net, "steepness", 1.0) * h)
    y = net.forward(x)
    if activation is Activation.SIGN:
        return sign_retain(y, x)
    return y


def _has_energy(net) -> bool:
    return hasattr(net, "weights") and hasattr(net, "bias") and not hasattr(net, "forward")


def retrieve(net, state, cfg: RetrievalConfig | None = None) -> RetrievalTrace:
    """Iterate the configured update from ``state`` until it settles.

    Binary states stop when a step changes nothing, or on a period-2 cycle
    (the lower-energy member of the pair is returned; ties keep the older
    state). Continuous states stop when the max-norm change drops below the
    tolerance. Hitting ``max_iterations`` leaves ``converged`` false.
    """
    cfg = cfg or RetrievalConfig()
    x = np.array(_values(state), dtype=float)
    _check_dim(net.dim, x)
    with_energy = _has_energy(net)
    asynchronous = cfg.mode is UpdateMode.ASYNC
    if asynchronous and not with_energy:
        raise ValueError("asynchronous updates need a single-layer network")
    rng = make_rng(cfg.seed, "async-order") if asynchronous else None
    binary = cfg.activation is Activation.SIGN

    trace = RetrievalTrace(states=[x.copy()])
    if with_energy:
        trace.energies.append(energy(net, x))
    prev = None
    for it in range(1, cfg.max_iterations + 1):
        if asynchronous:
            new = update_async_sweep(net, x, rng.permutation(net.dim), cfg.activation)
        else:
            new = _step(net, x, cfg.activation)
        trace.states.append(new.copy())
        if with_energy:
            trace.energies.append(energy(net, new))
        trace.iterations_used = it
        if binary:
            if np.array_equal(new, x):
                trace.converged = True
                return trace
            if prev is not None and not asynchronous and np.array_equal(new, prev):
                trace.cycle_detected = True
                if with_energy and energy(net, new) < energy(net, x):
                    trace.states.append(new.copy())
                else:
                    trace.states.append(x.copy())
                # The resolved state is appended as the final entry; keep
                # len(states) == iterations_used + 1 by counting it.
                trace.iterations_used = it + 1
                if with_energy:
                    trace.energies.append(energy(net, trace.states[-1]))
                return trace
        elif np.max(np.abs(new - x)) < cfg.continuous_tolerance:
            trace.converged = True
            return trace
        prev, x = x, new
    return trace


@dataclass
class BatchRetrieval:
    """Final states of many retrievals run side by side."""

    states: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    cycle_detected: np.ndarray


def retrieve_batch(net, states: np.ndarray, cfg: RetrievalConfig | None = None) -> BatchRetrieval:
    """Synchronous ``retrieve`` over rows of ``states``; same stopping rules.

    Rows are frozen once they stop, so results match per-row ``retrieve``.
    """
    cfg = cfg or RetrievalConfig()
    if cfg.mode is UpdateMode.ASYNC:
        finals = []
        iters, conv, cyc = [], [], []
        for k, row in enumerate(np.atleast_2d(states)):
            sub = RetrievalConfig(cfg.mode, cfg.activation, cfg.max_iterations, cfg.continuous_tolerance, cfg.seed + k)
            t = retrieve(net, row, sub)
            finals.append(t.final)
            iters.append(t.iterations_used)
            conv.append(t.converged)
            cyc.append(t.cycle_detected)
        return BatchRetrieval(np.array(finals), np.array(iters), np.array(conv), np.array(cyc))

    x = np.array(np.atleast_2d(states), dtype=float)
    _check_dim(net.dim, x)
    m = x.shape[0]
    binary = cfg.activation is Activation.SIGN
    with_energy = _has_energy(net)
    active = np.ones(m, dtype=bool)
    iterations = np.zeros(m, dtype=int)
    converged = np.zeros(m, dtype=bool)
    cycles = np.zeros(m, dtype=bool)
    prev = np.full_like(x, np.nan)
    for it in range(1, cfg.max_iterations + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = x[idx]
        new = _step(net, cur, cfg.activation)
        iterations[idx] = it
        if binary:
            fixed = np.all(new == cur, axis=1)
            cyc = ~fixed & np.all(new == prev[idx], axis=1)
            if cyc.any():
                ci = idx[cyc]
                if with_energy:
                    lower = batch_energy(net, new[cyc]) < batch_energy(net, cur[cyc])
                    x[ci] = np.where(lower[:, None], new[cyc], cur[cyc])
                cycles[ci] = True
                iterations[ci] = it + 1
            done = fixed | cyc
            converged[idx[fixed]] = True
        else:
            done = np.max(np.abs(new - cur), axis=1) < cfg.continuous_tolerance
            converged[idx[done]] = True
        moving = idx[~done]
        prev[moving] = x[moving]
        x[moving] = new[~done]
        x[idx[done & ~(cycles[idx])]] = new[done & ~(cycles[idx])]
        active[idx[done]] = False
    return BatchRetrieval(x, iterations, converged, cycles)
