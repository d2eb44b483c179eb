"""Run configuration: a flat ``key = value`` text file plus command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import os
from pathlib import Path
from typing import Union

OUTPUT_ENV = "H22_OUTPUT_DIR"
DEFAULT_SUITES = ("graining", "laplace", "ward", "martingale", "expmart", "totalmass",
                  "conservation", "walk")


class ConfigError(ValueError):
    pass


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "h22_output")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


@dataclass(frozen=True)
class RunConfig:
    wbar: float = 1.0
    rho: float = 2.0
    level: int = 3
    max_level: int = 20
    replicates: int = 1
    seed: int = 0
    out: str = field(default_factory=default_output_dir)
    suite: str = ",".join(DEFAULT_SUITES)
    s: tuple = (0.3,)
    lam: tuple = ()
    samples: int = 20_000
    burn_in: int = 400
    workers: int = 1
    format: str = "h22"
    svg: bool = True
    inject_fault: bool = False

    def __post_init__(self):
        if not self.wbar > 0:
            raise ConfigError("wbar must be positive")
        if not self.rho > 1:
            raise ConfigError("rho must exceed 1")
        if not 0 <= self.level <= self.max_level:
            raise ConfigError("level must lie in [0, max_level]")
        if self.replicates < 1 or self.samples < 1 or self.workers < 1 or self.burn_in < 1:
            raise ConfigError("replicates, samples, burn_in and workers must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.format not in ("h22", "json"):
            raise ConfigError("format must be 'h22' or 'json'")
        unknown = set(self.suites) - set(DEFAULT_SUITES)
        if unknown:
            raise ConfigError(f"unknown suites: {sorted(unknown)}")
        if any(not 0 < x < 1 for x in self.s):
            raise ConfigError("exponents s must lie in (0, 1)")
        if any(x < 0 for x in self.lam):
            raise ConfigError("lambda entries must be nonnegative")

    @property
    def suites(self) -> tuple:
        return tuple(x.strip() for x in self.suite.split(",") if x.strip())

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls().with_overrides(parse_pairs(text))

    def with_overrides(self, pairs: dict) -> "RunConfig":
        kinds = {f.name: f for f in fields(self)}
        updates = {}
        for key, raw in pairs.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(self, key)
            if not isinstance(raw, str):
                updates[key] = raw
            elif isinstance(current, bool):
                updates[key] = _parse_bool(raw)
            elif isinstance(current, int):
                updates[key] = int(raw)
            elif isinstance(current, float):
                updates[key] = float(raw)
            elif isinstance(current, tuple):
                updates[key] = _parse_floats(raw)
            else:
                updates[key] = raw
        try:
            return replace(self, **updates)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def parse_pairs(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_text(text)
