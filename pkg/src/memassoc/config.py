"""Experiment configuration: TOML text in, fully resolved record out.

Only ``experiment`` and the ``[dataset]`` table are required; everything else
falls back to the documented defaults below (published constants for the
learning rules and the crossbar).
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

CONFIG_VERSION = 1


class ExperimentKind(str, enum.Enum):
    STORE = "store"
    RETRIEVE = "retrieve"
    CAPACITY = "capacity"
    FAULTS = "faults"
    SCALING = "scaling"
    CONTINUOUS_DEMO = "continuous_demo"
    COST = "cost"


RULES = ("hebbian", "storkey", "pseudo_inverse", "adaptive_single", "adaptive_multi")

_REQUIRED = object()


def _choice(*options):
    def check(v):
        return None if v in options else f"must be one of {list(options)}"

    return check


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be nonnegative"


def _unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _rules(v):
    vals = [v] if isinstance(v, str) else v
    if not isinstance(vals, list) or not vals:
        return "must be a rule name or a non-empty list of rule names"
    bad = [r for r in vals if r not in RULES]
    return f"unknown rule(s) {bad}; choose from {list(RULES)}" if bad else None


def _float_list(v):
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return "must be a list of numbers"
    return None


def _int_list(v):
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in v):
        return "must be a list of positive integers"
    return None


# section -> key -> (type, default, check). None default means "derived".
SCHEMA: dict[str, dict[str, tuple]] = {
    "": {
        "experiment": (str, _REQUIRED, _choice(*[k.value for k in ExperimentKind])),
        "seed": (int, 0, _nonneg),
        "output": (str, "results", None),
        "threads": (int, 1, _positive),
        "version": (int, CONFIG_VERSION, None),
    },
    "dataset": {
        "source": (str, _REQUIRED, _choice("mnist", "random")),
        "path": (str, "data/mnist", None),
        "kind": (str, "binary", _choice("binary", "continuous")),
        "side": (int, 8, _positive),
        "count": (int, 10, _positive),
        "per_digit": (bool, True, None),
        "distinct": (bool, True, None),
    },
    "network": {
        "rule": ((str, list), "adaptive_single", _rules),
        "hidden": (int, None, _positive),
        "hidden_ratio": (float, 0.5, _positive),
        "steepness": (float, 1.0, _positive),
    },
    "training": {
        "learning_rate": (float, None, _positive),
        "max_steps": (int, None, _positive),
        "loss_threshold": (float, 1e-8, _nonneg),
        "optimizer": (str, None, _choice("plain_gd", "rmsprop")),
        "rmsprop_decay": (float, 0.99, _unit),
        "rmsprop_epsilon": (float, 1e-8, _positive),
        "init_scale": (float, None, _positive),
        "zero_diagonal": (bool, True, None),
    },
    "retrieval": {
        "mode": (str, "sync", _choice("sync", "async")),
        "max_iterations": (int, 100, _positive),
        "continuous_tolerance": (float, 1e-4, _positive),
        "corruption": (str, None, _choice("flip", "gaussian")),
        "level": (float, None, _nonneg),
        "repeats": (int, 1, _positive),
    },
    "crossbar": {
        "enabled": (bool, False, None),
        "g_min": (float, 0.0, _nonneg),
        "g_max": (float, 150.0, _positive),
        "write_tolerance": (float, 5.0, _positive),
        "read_voltage": (float, 0.2, _positive),
        "program_error_mean": (float, 0.108, None),
        "program_error_std": (float, 3.894, _nonneg),
        "stuck_fraction": (float, 0.0, _unit),
        "read_noise_std": (float, 0.0, _nonneg),
        "snapshots": (bool, False, None),
    },
    "capacity": {
        "threshold": (float, 0.99, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]"),
        "corruption": (str, None, _choice("flip", "gaussian")),
        "level": (float, None, _nonneg),
        "repeats": (int, 10, _positive),
        "step": (int, None, _positive),
        "max_patterns": (int, 64, _positive),
        "full_curve": (bool, False, None),
    },
    "faults": {
        "fractions": (list, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6], _float_list),
    },
    "scaling": {
        "sides": (list, [8, 10, 12, 14], _int_list),
        "max_patterns_factor": (float, 4.0, _positive),
    },
    "cost": {
        "e_mvm_per_cell": (float, 5e-15, _nonneg),
        "e_adc_per_sample": (float, 1.5e-12, _nonneg),
        "e_dac_per_sample": (float, 5e-14, _nonneg),
        "t_mvm": (float, 100e-9, _nonneg),
        "t_adc": (float, 5e-9, _nonneg),
        "t_dac": (float, 5e-9, _nonneg),
        "parallel_adc_count": (int, 64, _positive),
    },
}

REQUIRED_SECTIONS = ("dataset",)

# Defaults that differ by experiment; applied only where the file is silent.
EXPERIMENT_DEFAULTS: dict[str, dict[str, dict[str, Any]]] = {
    "capacity": {"network": {"rule": ["adaptive_single", "pseudo_inverse", "hebbian"]}, "dataset": {"per_digit": False}},
    "faults": {"network": {"rule": ["adaptive_single", "pseudo_inverse"]}},
    "scaling": {"network": {"rule": ["adaptive_single", "adaptive_multi"]}, "dataset": {"per_digit": False}},
    "continuous_demo": {
        "network": {"rule": ["adaptive_multi", "adaptive_single"], "hidden": 32},
        "dataset": {"kind": "continuous", "count": 6},
    },
    "cost": {"network": {"rule": ["adaptive_single", "adaptive_multi"], "hidden": 16}},
}


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def find_duplicate_keys(text: str) -> list[str]:
    """Duplicate keys within a table (the TOML parser rejects these without naming them)."""
    seen: dict[str, set[str]] = {"": set()}
    section = ""
    errors = []
    depth = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        if depth == 0:
            m = _HEADER.match(line)
            if m:
                section = m.group(1)
                if section in seen:
                    errors.append(f"line {lineno}: duplicate table [{section}]")
                seen.setdefault(section, set())
                continue
            m = _KEY.match(line)
            if m:
                key = m.group(1)
                where = f"{section}.{key}" if section else key
                if key in seen[section]:
                    errors.append(f"line {lineno}: duplicate key '{where}'")
                seen[section].add(key)
        depth += line.count("[") - line.count("]") if not _HEADER.match(line) else 0
        depth = max(depth, 0)
    return errors


def _type_ok(value, expected) -> bool:
    types = expected if isinstance(expected, tuple) else (expected,)
    if isinstance(value, bool) and bool not in types:
        return False
    if float in types and isinstance(value, int):
        return True
    return isinstance(value, types)


def _type_name(expected) -> str:
    types = expected if isinstance(expected, tuple) else (expected,)
    return " or ".join(t.__name__ for t in types)


@dataclass
class ExperimentConfig:
    """Resolved configuration: every field present, nothing left implicit."""

    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    @property
    def kind(self) -> ExperimentKind:
        return ExperimentKind(self.values[""]["experiment"])

    @property
    def seed(self) -> int:
        return self.values[""]["seed"]

    @property
    def rules(self) -> list[str]:
        rule = self.values["network"]["rule"]
        return [rule] if isinstance(rule, str) else list(rule)

    def to_json(self) -> str:
        flat = {k: v for k, v in self.values[""].items()}
        flat.update({k: v for k, v in self.values.items() if k})
        return json.dumps(flat, sort_keys=True, indent=2)

    def fingerprint(self) -> str:
        """Hash of everything that can change results (not output path or threads)."""
        flat = json.loads(self.to_json())
        for key in ("output", "threads"):
            flat.pop(key, None)
        return hashlib.sha1(json.dumps(flat, sort_keys=True).encode()).hexdigest()[:10]

    @property
    def experiment_id(self) -> str:
        return f"{self.kind.value}-{self.fingerprint()}"

    def training_overrides(self, rule: str) -> dict[str, Any]:
        """TrainingConfig keyword arguments with rule-specific defaults filled."""
        t = dict(self.values["training"])
        multi = rule == "adaptive_multi"
        if t["learning_rate"] is None:
            t["learning_rate"] = 3e-4 if multi else 3e-2
        if t["max_steps"] is None:
            t["max_steps"] = 60_000 if multi else 10_000
        if t["optimizer"] is None:
            t["optimizer"] = "rmsprop" if multi else "plain_gd"
        if t["init_scale"] is None:
            del t["init_scale"]
        return t

    def hidden_for(self, n: int) -> int:
        h = self.values["network"]["hidden"]
        return h if h is not None else max(1, int(round(n * self.values["network"]["hidden_ratio"])))


def _resolve_derived(values: dict) -> None:
    kind = values["dataset"]["kind"]
    default_corruption = "flip" if kind == "binary" else "gaussian"
    for section, default_level in (("retrieval", {"flip": 0.1, "gaussian": 0.6}), ("capacity", {"flip": 0.05, "gaussian": 0.6})):
        sec = values[section]
        if sec["corruption"] is None:
            sec["corruption"] = default_corruption
        if sec["level"] is None:
            sec["level"] = default_level[sec["corruption"]]


def resolve(raw: dict) -> ExperimentConfig:
    """Apply defaults to a parsed mapping, collecting every problem found."""
    errors: list[str] = []
    values: dict[str, dict] = {}
    raw = copy.deepcopy(raw)
    overlay = EXPERIMENT_DEFAULTS.get(raw.get("experiment"), {}) if isinstance(raw.get("experiment"), str) else {}
    for section, table in overlay.items():
        if isinstance(raw.get(section, {}), dict):
            target = raw.setdefault(section, {}) if section in raw or section != "dataset" else None
            if target is not None:
                for k, v in table.items():
                    target.setdefault(k, copy.deepcopy(v))
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in raw.items() if isinstance(v, dict)}
    for name in tables:
        if name not in SCHEMA:
            errors.append(f"unknown section [{name}]")
    for section, keys in SCHEMA.items():
        given = top if section == "" else tables.get(section)
        if given is None and section in REQUIRED_SECTIONS:
            errors.append(f"missing required section [{section}]")
            given = {}
        given = given or {}
        resolved = {}
        for key in given:
            if key not in keys:
                label = f"{section}.{key}" if section else key
                errors.append(f"unknown key '{label}'")
        for key, (expected, default, check) in keys.items():
            label = f"{section}.{key}" if section else key
            if key in given:
                value = given[key]
                if not _type_ok(value, expected):
                    errors.append(f"'{label}' must be {_type_name(expected)}, got {type(value).__name__}")
                    continue
                if expected is float and isinstance(value, int):
                    value = float(value)
                if check is not None:
                    problem = check(value)
                    if problem:
                        errors.append(f"'{label}' {problem}")
                        continue
                resolved[key] = value
            elif default is _REQUIRED:
                errors.append(f"missing required field '{label}'")
            else:
                resolved[key] = copy.deepcopy(default)
        values[section] = resolved
    if not errors:
        cb = values["crossbar"]
        if cb["g_min"] > cb["g_max"]:
            errors.append("'crossbar.g_min' must not exceed 'crossbar.g_max'")
        if values["dataset"]["kind"] == "continuous":
            bad = [r for r in ([values["network"]["rule"]] if isinstance(values["network"]["rule"], str) else values["network"]["rule"]) if r in ("hebbian", "storkey", "pseudo_inverse")]
            if bad:
                errors.append(f"'network.rule' {bad} cannot store continuous patterns")
    if errors:
        raise ConfigError(errors)
    _resolve_derived(values)
    return ExperimentConfig(values)


def validate(text: str) -> ExperimentConfig:
    """Parse TOML text and resolve it; raises ConfigError listing all problems."""
    dup = find_duplicate_keys(text)
    if dup:
        raise ConfigError(dup)
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    return resolve(raw)


def default_config(kind: ExperimentKind | str, **sections) -> ExperimentConfig:
    raw: dict[str, Any] = {"experiment": ExperimentKind(kind).value, "dataset": {"source": "mnist"}}
    for name, table in sections.items():
        if name == "top":
            raw.update(table)
        else:
            raw.setdefault(name, {}).update(table)
    return resolve(raw)


def to_toml(cfg: ExperimentConfig) -> str:
    """Render a resolved config back to TOML (None-valued keys omitted)."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = [f"{k} = {fmt(v)}" for k, v in cfg.values[""].items() if v is not None]
    for section, table in cfg.values.items():
        if not section:
            continue
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in table.items() if v is not None)
    return "\n".join(lines) + "\n"
