"""Run configuration: defaults, JSON file, command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping

from .errors import ConfigError
from .scenarios import SWEEP_PERIODS_MS, Mode, ScenarioConfig

COMMANDS = ("run", "sweep", "bench", "dkg-demo")


@dataclass(frozen=True)
class RunConfig:
    command: str = "run"
    scenario: int = 1
    mode: str = "zk"
    validators: int = 5
    threshold: int = 3
    block_period_ms: int = 1000
    refresh_s: int = 300
    inter_task_ms: int = 5000
    runs: int = 10
    byzantine_computers: int = 0
    computers: int | None = None  # defaults to one per validator
    seed: int = 0
    periods_ms: tuple[int, ...] = SWEEP_PERIODS_MS
    iterations: int = 100
    out: str | None = None
    dump_ledger: str | None = None

    @property
    def replication(self) -> int:
        return self.validators

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}")
        if self.scenario not in (1, 2, 3):
            raise ConfigError("scenario", "must be 1, 2 or 3")
        if self.mode not in {m.value for m in Mode}:
            raise ConfigError("mode", "must be zk or plain")
        for name in ("validators", "threshold", "block_period_ms", "refresh_s", "inter_task_ms", "runs", "iterations"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        if self.threshold > self.validators:
            raise ConfigError("threshold", f"{self.threshold} exceeds validators={self.validators}")
        if self.computers is not None and self.computers <= 0:
            raise ConfigError("computers", "must be positive")
        pool = self.computers or self.validators
        if not 0 <= self.byzantine_computers <= pool:
            raise ConfigError("byzantine_computers", f"must lie in [0, {pool}]")
        if not self.periods_ms or any(p <= 0 for p in self.periods_ms):
            raise ConfigError("periods_ms", "need positive inter-task periods")
        return self

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            scenario=self.scenario,
            mode=Mode(self.mode),
            runs=self.runs,
            inter_task_ms=self.inter_task_ms,
            seed=self.seed,
            validators=self.validators,
            threshold=self.threshold,
            block_period_ms=self.block_period_ms,
            refresh_ms=self.refresh_s * 1000,
            byzantine_computers=self.byzantine_computers,
            computers=self.computers,
        )

    def to_json(self) -> str:
        d = asdict(self)
        d["periods_ms"] = list(self.periods_ms)
        return json.dumps(d, indent=2, sort_keys=True)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELDS:
        raise ConfigError(name, "unknown configuration key")
    default = getattr(RunConfig(), name)
    try:
        if name == "periods_ms":
            return tuple(int(v) for v in value)
        if value is None:
            return None
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int) or name == "computers":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"bad value {value!r}") from exc


def load_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return data


def merge(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> RunConfig:
    """Defaults, then the file, then explicit flags."""
    cfg = RunConfig()
    for source in (file_values, flag_values):
        cfg = replace(cfg, **{k: _coerce(k, v) for k, v in source.items()})
    return cfg.validate()
