"""Experiment configuration: a flat ``key = value`` text format with a schema version.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys, a missing or
different ``schema_version`` and malformed values are all errors. Lists are
comma separated (``seeds = 0, 1, 2``) and ``a..b`` is an inclusive integer range.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import UsageError

SCHEMA_VERSION = 1
TOPOLOGIES = ("columnar", "constructive", "ccn", "tbptt")
PRESET_DIR = Path(__file__).with_name("configs")


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "run"
    topology: str = "ccn"
    # data source
    env: str = "trace"
    stream_path: str = ""
    # run length, metrics and orchestration
    total_steps: int = 1_000_000
    window: int = 10_000
    log_every: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1
    output_dir: str = "runs"
    # network
    features: int = 16
    features_per_stage: int = 4
    steps_per_stage: int = 250_000
    truncation: int = 15
    normalize: str = "auto"
    norm_beta: float = 0.99999
    norm_eps: float = 0.001
    init_scale: float = 0.0
    forget_bias: float = 0.0
    # learner
    step_size: float = 1e-4
    gamma: float = 0.9
    lam: float = 0.99
    optimizer: str = "adaptive"
    beta2: float = 0.9999
    eps_opt: float = 1e-8
    bias_correction: bool = False
    # trace patterning
    isi_min: int = 24
    isi_max: int = 36
    iti_min: int = 80
    iti_max: int = 120
    n_positive: int = 10
    noise: bool = True
    # compute budget check (0 disables)
    budget: int = 0
    budget_tolerance: float = 0.15

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise UsageError(f"schema_version {self.schema_version} is not supported "
                             f"(expected {SCHEMA_VERSION})")
        if self.topology not in TOPOLOGIES:
            raise UsageError(f"topology must be one of {TOPOLOGIES}")
        if self.env not in ("trace", "replay"):
            raise UsageError("env must be 'trace' or 'replay'")
        if self.env == "replay" and not self.stream_path:
            raise UsageError("env = replay needs stream_path")
        for name in ("total_steps", "window", "log_every", "features", "features_per_stage",
                     "steps_per_stage", "workers"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.topology == "tbptt" and self.truncation < 1:
            raise UsageError("truncation must be >= 1")
        if self.topology == "ccn" and self.features % self.features_per_stage:
            raise UsageError("features must be a multiple of features_per_stage")
        if self.normalize not in ("auto", "true", "false"):
            raise UsageError("normalize must be auto, true or false")
        if not self.seeds:
            raise UsageError("seeds must not be empty")
        if self.init_scale < 0:
            raise UsageError("init_scale must be >= 0 (0 means 1/sqrt(fan-in))")

    @property
    def use_normalization(self):
        if self.normalize == "auto":
            return self.topology != "tbptt"
        return self.normalize == "true"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_int(text):
    text = text.replace("_", "")
    try:
        return int(text)
    except ValueError:
        f = float(text)
        if f != int(f):
            raise
        return int(f)


def parse_value(key, text):
    if key not in _TYPES:
        raise UsageError(f"unknown configuration key {key!r}")
    text = text.strip()
    kind = _TYPES[key].type
    try:
        if key == "seeds":
            out = []
            for part in text.strip("[]").split(","):
                part = part.strip()
                if not part:
                    continue
                if ".." in part:
                    a, b = part.split("..")
                    out.extend(range(_parse_int(a), _parse_int(b) + 1))
                else:
                    out.append(_parse_int(part))
            return out
        if kind in ("bool", bool):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind in ("int", int):
            return _parse_int(text)
        if kind in ("float", float):
            return float(text.replace("_", ""))
        return text.strip("\"'")
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None


def parse_text(text, overrides=()):
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise UsageError(f"line {n}: duplicate key {key!r}")
        values[key] = parse_value(key, val)
    if "schema_version" not in values:
        raise UsageError("configuration lacks schema_version")
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, val = (s.strip() for s in item.split("=", 1))
        values[key] = parse_value(key, val)
    return ExperimentConfig(**values)


def resolve_path(name_or_path):
    p = Path(name_or_path)
    if p.exists():
        return p
    preset = PRESET_DIR / f"{name_or_path}.cfg"
    if preset.exists():
        return preset
    raise UsageError(f"no config file or preset named {name_or_path!r}")


def load_config(name_or_path, overrides=()):
    return parse_text(resolve_path(name_or_path).read_text(), overrides)


def presets():
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
