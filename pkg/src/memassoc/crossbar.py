"""1T1M crossbar emulation: differential-pair mapping, programming error,
stuck-at-zero faults and analog matrix-vector products.

Conductances are in microsiemens, voltages in volts, currents in microamps.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .learning import FaultMask
from .network import HopfieldNet, MultilayerNet
from .seeding import make_rng

TILE = 64


@dataclass
class CrossbarConfig:
    g_min: float = 0.0
    g_max: float = 150.0
    write_tolerance: float = 5.0
    read_voltage: float = 0.2
    program_error_mean: float = 0.108
    program_error_std: float = 3.894
    stuck_fraction: float = 0.0
    read_noise_std: float = 0.0  # additive, in uA per output line; off by default
    seed: int = 0

    def __post_init__(self):
        if self.g_min > self.g_max:
            raise ValueError("g_min must not exceed g_max")
        if self.write_tolerance <= 0:
            raise ValueError("write_tolerance must be positive")
        if self.program_error_std < 0:
            raise ValueError("program_error_std must be nonnegative")
        if not 0.0 <= self.stuck_fraction <= 1.0:
            raise ValueError("stuck_fraction must lie in [0, 1]")

    @classmethod
    def ideal(cls, **kw) -> "CrossbarConfig":
        return cls(program_error_mean=0.0, program_error_std=0.0, **kw)


@dataclass
class CrossbarPair:
    g_plus: np.ndarray
    g_minus: np.ndarray
    stuck_mask: np.ndarray
    scale: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_plus.shape

    @property
    def tiles(self) -> tuple[int, int]:
        r, c = self.shape
        return -(-r // TILE), -(-c // TILE)

    def copy(self) -> "CrossbarPair":
        return CrossbarPair(self.g_plus.copy(), self.g_minus.copy(), self.stuck_mask.copy(), self.scale)


def map_weights(w: np.ndarray, cfg: CrossbarConfig | None = None) -> CrossbarPair:
    """Split signed weights over a differential pair, one device per sign."""
    cfg = cfg or CrossbarConfig()
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weights must be a matrix")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = cfg.g_max / peak if peak > 0 else 1.0
    # normalise first: for subnormal peaks the scale itself overflows
    g = cfg.g_max * (w / peak) if peak > 0 else w
    g_plus = np.where(w > 0, g, 0.0)
    g_minus = np.where(w < 0, -g, 0.0)
    return CrossbarPair(g_plus, g_minus, np.zeros(w.shape, dtype=bool), scale)


def program(pair: CrossbarPair, cfg: CrossbarConfig | None = None, seed: int | None = None) -> CrossbarPair:
    """Write target conductances with a one-shot Gaussian programming error.

    Unselected (zero-target) and stuck devices stay at 0 uS.
    """
    cfg = cfg or CrossbarConfig()
    rng = make_rng(cfg.seed if seed is None else seed, "program")
    out = pair.copy()
    for g in (out.g_plus, out.g_minus):
        err = rng.normal(cfg.program_error_mean, cfg.program_error_std, size=g.shape) if cfg.program_error_std > 0 else np.full(g.shape, cfg.program_error_mean)
        target = (g != 0) & ~pair.stuck_mask
        g[target] = np.clip(g[target] + err[target], cfg.g_min, cfg.g_max)
        g[pair.stuck_mask] = 0.0
    return out


def program_verify(
    pair: CrossbarPair,
    cfg: CrossbarConfig | None = None,
    seed: int | None = None,
    pulse_std: float = 12.0,
    max_pulses: int = 50,
) -> tuple[CrossbarPair, np.ndarray]:
    """Iterative write-and-verify: re-pulse each device until it reads within
    ``write_tolerance`` of its target, or ``max_pulses`` is spent.

    Each pulse lands at a Gaussian offset around the target whose spread
    shrinks as the pulse amplitude ramps. Returns the pair and the pulse
    count per device (g_plus and g_minus stacked).
    """
    cfg = cfg or CrossbarConfig()
    rng = make_rng(cfg.seed if seed is None else seed, "program-verify")
    out = pair.copy()
    pulses = np.zeros((2,) + pair.shape, dtype=int)
    for k, g in enumerate((out.g_plus, out.g_minus)):
        target = g.copy()
        todo = (target != 0) & ~pair.stuck_mask
        current = np.zeros_like(g)
        for p in range(max_pulses):
            if not todo.any():
                break
            spread = pulse_std / (1.0 + 0.1 * p)
            current[todo] = np.clip(target[todo] + rng.normal(0.0, spread, size=int(todo.sum())), cfg.g_min, cfg.g_max)
            pulses[k][todo] += 1
            todo &= np.abs(current - target) > cfg.write_tolerance
        g[:] = np.where((target != 0) & ~pair.stuck_mask, current, 0.0)
    return out, pulses


def inject_faults(pair: CrossbarPair, fraction: float, seed: int) -> tuple[CrossbarPair, np.ndarray]:
    """Mark floor(fraction * R * C) weights stuck at zero, chosen uniformly."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    mask = random_fault_mask(pair.shape, fraction, seed)
    return apply_faults(pair, mask), mask


def random_fault_mask(shape, fraction: float, seed: int) -> np.ndarray:
    r, c = shape
    count = int(np.floor(fraction * r * c))
    flat = np.zeros(r * c, dtype=bool)
    flat[make_rng(seed, "faults").choice(r * c, size=count, replace=False)] = True
    return flat.reshape(r, c)


def apply_faults(pair: CrossbarPair, mask: np.ndarray) -> CrossbarPair:
    out = pair.copy()
    out.stuck_mask |= np.asarray(mask, dtype=bool)
    out.g_plus[out.stuck_mask] = 0.0
    out.g_minus[out.stuck_mask] = 0.0
    return out


def column_currents(pair: CrossbarPair, x: np.ndarray, cfg: CrossbarConfig, rng=None) -> np.ndarray:
    """Output-line currents in uA, accumulated tile by tile."""
    x = np.asarray(x, dtype=float)
    r, c = pair.shape
    if x.shape[-1] != c:
        raise ValueError(f"input has length {x.shape[-1]}, crossbar has {c} columns")
    v = cfg.read_voltage * x
    current = np.zeros(x.shape[:-1] + (r,))
    for r0 in range(0, r, TILE):
        for c0 in range(0, c, TILE):
            gp = pair.g_plus[r0 : r0 + TILE, c0 : c0 + TILE]
            gm = pair.g_minus[r0 : r0 + TILE, c0 : c0 + TILE]
            current[..., r0 : r0 + TILE] += v[..., c0 : c0 + TILE] @ (gp - gm).T
    if cfg.read_noise_std > 0:
        rng = rng if rng is not None else make_rng(cfg.seed, "read-noise")
        current = current + rng.normal(0.0, cfg.read_noise_std, size=current.shape)
    return current


def mvm(pair: CrossbarPair, x: np.ndarray, cfg: CrossbarConfig | None = None, rng=None) -> np.ndarray:
    """Analog W @ x, returned in weight units."""
    cfg = cfg or CrossbarConfig()
    return column_currents(pair, x, cfg, rng) / (pair.scale * cfg.read_voltage)


def read_weights(pair: CrossbarPair) -> np.ndarray:
    return (pair.g_plus - pair.g_minus) / pair.scale


def fault_mask(pair: CrossbarPair) -> FaultMask:
    return FaultMask.single(pair.stuck_mask.copy())


# ---------------------------------------------------------------- emulated networks


class CrossbarHopfield:
    """Single-layer net whose field is computed by the emulated crossbar."""

    def __init__(self, pair: CrossbarPair, bias: np.ndarray, cfg: CrossbarConfig | None = None, steepness: float = 1.0):
        self.pair = pair
        self.bias = np.asarray(bias, dtype=float)
        self.cfg = cfg or CrossbarConfig()
        self.steepness = steepness
        self._rng = make_rng(self.cfg.seed, "read-noise")

    @property
    def dim(self) -> int:
        return self.pair.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return read_weights(self.pair)

    def field(self, x: np.ndarray) -> np.ndarray:
        return mvm(self.pair, x, self.cfg, self._rng) + self.bias

    def row_field(self, i: int, x: np.ndarray) -> float:
        return float(self.field(x)[i])

    def ideal(self) -> HopfieldNet:
        return HopfieldNet(self.weights, self.bias, self.steepness)


class CrossbarMultilayer:
    """Encoder/decoder pair realised on two crossbars."""

    def __init__(self, encoder: CrossbarPair, encoder_bias, decoder: CrossbarPair, decoder_bias, cfg: CrossbarConfig | None = None):
        self.encoder = encoder
        self.decoder = decoder
        self.encoder_bias = np.asarray(encoder_bias, dtype=float)
        self.decoder_bias = np.asarray(decoder_bias, dtype=float)
        self.cfg = cfg or CrossbarConfig()
        self._rng = make_rng(self.cfg.seed, "read-noise")

    @property
    def dim(self) -> int:
        return self.encoder.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.encoder.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(mvm(self.encoder, x, self.cfg, self._rng) + self.encoder_bias)
        return np.tanh(mvm(self.decoder, h, self.cfg, self._rng) + self.decoder_bias)

    def ideal(self) -> MultilayerNet:
        return MultilayerNet(read_weights(self.encoder), self.encoder_bias, read_weights(self.decoder), self.decoder_bias)


def deploy(net, cfg: CrossbarConfig | None = None, mask: FaultMask | None = None, seed: int | None = None):
    """Map, fault and program a trained net onto emulated crossbars.

    Without an explicit ``mask``, ``cfg.stuck_fraction`` of each layer's
    weights are drawn stuck at random.
    """
    cfg = cfg or CrossbarConfig()
    seed = cfg.seed if seed is None else seed
    if mask is None and cfg.stuck_fraction > 0:
        shapes = [net.encoder.shape, net.decoder.shape] if isinstance(net, MultilayerNet) else [net.weights.shape]
        mask = FaultMask([random_fault_mask(s, cfg.stuck_fraction, seed + k) for k, s in enumerate(shapes)])
    if isinstance(net, MultilayerNet):
        pairs = []
        for k, w in enumerate((net.encoder, net.decoder)):
            pair = map_weights(w, cfg)
            if mask is not None:
                pair = apply_faults(pair, mask.layers[k])
            pairs.append(program(pair, cfg, seed=seed + k))
        return CrossbarMultilayer(pairs[0], net.encoder_bias, pairs[1], net.decoder_bias, cfg)
    pair = map_weights(net.weights, cfg)
    if mask is not None:
        pair = apply_faults(pair, mask.layers[0])
    return CrossbarHopfield(program(pair, cfg, seed=seed), net.bias, cfg, net.steepness)


def save_conductances_csv(pair: CrossbarPair, path: str | os.PathLike, layer: str = "W") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "row", "col", "g_plus_uS", "g_minus_uS", "stuck"])
        for (i, j), gp in np.ndenumerate(pair.g_plus):
            writer.writerow([layer, i, j, f"{gp:.6f}", f"{pair.g_minus[i, j]:.6f}", int(pair.stuck_mask[i, j])])


def load_conductances_csv(path: str | os.PathLike, scale: float) -> CrossbarPair:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    r = 1 + max(int(x["row"]) for x in rows)
    c = 1 + max(int(x["col"]) for x in rows)
    gp, gm, st = np.zeros((r, c)), np.zeros((r, c)), np.zeros((r, c), dtype=bool)
    for x in rows:
        i, j = int(x["row"]), int(x["col"])
        gp[i, j] = float(x["g_plus_uS"])
        gm[i, j] = float(x["g_minus_uS"])
        st[i, j] = bool(int(x["stuck"]))
    return CrossbarPair(gp, gm, st, scale)


__all__ = [
    "CrossbarConfig",
    "CrossbarPair",
    "CrossbarHopfield",
    "CrossbarMultilayer",
    "apply_faults",
    "deploy",
    "fault_mask",
    "inject_faults",
    "map_weights",
    "mvm",
    "program",
    "program_verify",
    "random_fault_mask",
    "read_weights",
]
