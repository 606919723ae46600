"""Flat key = value experiment configuration.

Lines are `key = value`; '#' starts a comment; list values are whitespace or
comma separated. Unknown keys and invalid values are collected and reported
together in a single ConfigError.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError

MODES = ("greedy", "stability", "fixed-subset", "all")


@dataclass
class ExperimentConfig:
    """Everything one run needs; defaults reproduce the 2000-node benchmark scenario."""

    # system
    state_dim: int = 2
    transition: str = "builtin"  # builtin | table:<path>
    q_scale: float = 0.1
    x0: tuple = (1.0, 1.0)
    ts: float = 0.01
    # network
    n_sensors: int = 2000
    variance_range: tuple = (0.0, 0.5)
    delay_range: tuple = (0.0, 2.0)
    jitter_std: float = 0.0
    network_file: str = ""
    # stability machinery
    k_bar: int = 20
    alpha: float = 1e-6
    beta_hat_override: float | None = None
    # experiment
    mode: str = "stability"
    horizon: int = 200
    seed: int | None = None
    runs: int = 25
    out: str = "out"
    iterations: int = 100
    subset: tuple = ("all",)
    band: float = 0.01

    def validate(self):
        bad = []
        if self.state_dim < 1:
            bad.append("state_dim")
        if not (self.transition == "builtin" or self.transition.startswith("table:")):
            bad.append("transition")
        if self.q_scale <= 0:
            bad.append("q_scale")
        if len(self.x0) != self.state_dim:
            bad.append("x0")
        if self.ts <= 0:
            bad.append("ts")
        if self.n_sensors < 1:
            bad.append("n_sensors")
        for key, rng in (("variance_range", self.variance_range), ("delay_range", self.delay_range)):
            if len(rng) != 2 or not (0 <= rng[0] <= rng[1]):
                bad.append(key)
        if self.jitter_std < 0:
            bad.append("jitter_std")
        if self.k_bar < 1:
            bad.append("k_bar")
        if self.alpha <= 0:
            bad.append("alpha")
        if self.beta_hat_override is not None and not (0 < self.beta_hat_override <= 1):
            bad.append("beta_hat_override")
        if self.mode not in MODES:
            bad.append("mode")
        if self.horizon < 2:
            bad.append("horizon")
        if self.seed is None:
            bad.append("seed")
        if self.runs < 1:
            bad.append("runs")
        if self.iterations < 1:
            bad.append("iterations")
        if not (0 < self.band < 1):
            bad.append("band")
        if self.subset != ("all",):
            try:
                tuple(int(v) for v in self.subset)
            except (TypeError, ValueError):
                bad.append("subset")
        if bad:
            raise ConfigError(f"invalid configuration values for: {', '.join(bad)}", keys=bad)
        return self

    def subset_ids(self, network) -> list:
        if self.subset == ("all",):
            return network.ids()
        return [int(v) for v in self.subset]


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("x0", "variance_range", "delay_range"):
        parts = raw.replace(",", " ").split()
        return tuple(float(v) for v in parts)
    if key == "subset":
        parts = raw.replace(",", " ").split()
        if parts == ["all"] or not parts:
            return ("all",)
        return tuple(int(v) for v in parts)
    if key in ("state_dim", "n_sensors", "k_bar", "horizon", "seed", "runs", "iterations"):
        return int(raw)
    if key in ("q_scale", "ts", "jitter_std", "alpha", "band"):
        return float(raw)
    if key == "beta_hat_override":
        return float(raw) if raw else None
    return raw  # transition, network_file, mode, out


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    unknown, invalid = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            invalid.append(f"line {lineno}")
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            unknown.append(key)
            continue
        try:
            setattr(cfg, key, _parse_value(key, raw))
        except ValueError:
            invalid.append(key)
    problems = unknown + invalid
    if problems:
        raise ConfigError(
            f"bad configuration: unknown or malformed keys: {', '.join(problems)}", keys=problems
        )
    return cfg


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)
