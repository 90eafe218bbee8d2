"""Flat `key = value` run configuration with typed validation.

Unknown keys are rejected (all offenders listed at once); the normalized
form written next to run outputs re-runs to identical results.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigurationError


@dataclass
class RunConfig:
    source_path: str = ""
    target_path: str = ""
    fraction: float = 0.2
    seed: int = 0
    d1: int = 64
    hidden: int = 64
    mlp_layers: int = 3
    enc_layers: int = 2
    n_heads: int = 1
    max_history_len: int = 50
    T: int = 200
    eta: float = 0.1
    alpha_min: float = 0.1
    alpha_max: float = 10.0
    batch_size: int = 128
    learning_rate: float = 0.01
    epochs: int = 10
    lam: float = 0.01
    p_uncond: float = 0.1
    loss_weighting: str = "simplified"
    init_scale: float = 0.1
    omega: float = 0.0
    t_prime: int = -1          # -1 means "use T"
    variant: int = 0           # 0 = full model, 1..6 = comparison wirings
    ablation: str = "none"     # none | no_tf | no_gs | no_dm
    dtype: str = "float32"

    def resolved_t_prime(self) -> int:
        return self.T if self.t_prime < 0 else self.t_prime

    def validate(self) -> None:
        problems = []
        if not 0.0 < self.fraction < 1.0:
            problems.append("fraction must be in (0, 1)")
        if not 0.0 < self.eta <= 1.0:
            problems.append("eta must be in (0, 1]")
        if not 0.0 < self.alpha_min < self.alpha_max:
            problems.append("need 0 < alpha_min < alpha_max")
        if not 0.0 <= self.lam <= 1.0:
            problems.append("lam must be in [0, 1]")
        if self.omega < 0:
            problems.append("omega must be >= 0")
        if self.t_prime > self.T:
            problems.append("t_prime must be <= T")
        if self.variant not in range(0, 7):
            problems.append("variant must be 0..6")
        if self.ablation not in ("none", "no_tf", "no_gs", "no_dm"):
            problems.append("ablation must be one of none|no_tf|no_gs|no_dm")
        if self.loss_weighting not in ("simplified", "variance_weighted"):
            problems.append("loss_weighting must be simplified|variance_weighted")
        if self.variant != 0 and self.ablation != "none":
            problems.append("variant and ablation are mutually exclusive")
        if problems:
            raise ConfigurationError("; ".join(problems))


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"key {name!r}: cannot parse {raw!r} as {kind}") from None


def parse_config_text(text: str) -> RunConfig:
    values = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            unknown.append(key)
            continue
        values[key] = _coerce(key, raw)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def normalized_text(cfg: RunConfig) -> str:
    """Canonical echo of the config; parsing it back yields an equal config."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
