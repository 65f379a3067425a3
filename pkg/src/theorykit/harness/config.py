"""Run configuration: one YAML file merged over defaults, then CLI overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..gateway import Price
from ..model import KnowledgeWindow, digest

MILLION = Decimal(1_000_000)

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 4,
    "window": {"model_cutoff": "2024-06-30", "supplement_end": "2025-06-30", "holdout_end": "2025-12-31"},
    "models": {
        "default": "gpt-4.1-mini",
        "synthesis": "gpt-4.1",
        "reflection": "gpt-4.1",
        "belief": "gpt-4.1",
        "novelty_consolidate": "claude-sonnet-4.5",
    },
    # USD per million tokens, kept as strings so they convert to Decimal exactly
    "prices": {
        "gpt-4.1": {"input": "2.00", "output": "8.00"},
        "gpt-4.1-mini": {"input": "0.40", "output": "1.60"},
        "claude-sonnet-4.5": {"input": "3.00", "output": "15.00"},
    },
    "gateway": {"max_attempts": 5, "base_delay": 0.5, "max_delay": 30.0, "rate_per_second": None},
    "discovery": {"target_size": 100},
    "synthesis": {"token_budget": 120_000, "n_theories": 8, "reflect": True},
    "evaluation": {
        "judge_resamples": 10_000,
        "backtest_resamples": 1_000,
        "belief_samples": 10,
        "limit_per_query": 20,
        "novelty_sample": 100,
        "novel_degrees": ["genuinely_new", "derivable_unstated"],
        "overlap_n_values": [1, 2, 5, 10, 20],
        "overlap_samples": 50,
    },
}

MOCK_OVERRIDES: dict[str, Any] = {
    "models": {
        "default": "mock-small",
        "synthesis": "mock-large",
        "reflection": "mock-large",
        "belief": "mock-large",
        "novelty_consolidate": "mock-large",
    },
    "prices": {
        "mock-large": {"input": "3.00", "output": "15.00"},
        "mock-small": {"input": "0.25", "output": "2.00"},
    },
    "gateway": {"base_delay": 0.0, "max_delay": 0.0},
    "workers": 1,
}


class ConfigError(ValueError):
    pass


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_window(text: str) -> dict[str, str]:
    """'CUTOFF,SUPPLEMENT_END,HOLDOUT_END' as dates."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("--window takes three comma-separated dates: cutoff,supplement_end,holdout_end")
    return dict(zip(("model_cutoff", "supplement_end", "holdout_end"), parts))


@dataclass(frozen=True)
class Config:
    data: dict[str, Any]

    @classmethod
    def load(
        cls, path: str | Path | None = None, *, mock: bool = False, overrides: Mapping[str, Any] | None = None
    ) -> "Config":
        data = deep_merge(DEFAULTS, MOCK_OVERRIDES) if mock else copy.deepcopy(DEFAULTS)
        if path is not None:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
            if not isinstance(loaded, Mapping):
                raise ConfigError(f"{path}: top level must be a mapping")
            data = deep_merge(data, loaded)
        if overrides:
            data = deep_merge(data, overrides)
        cfg = cls(data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.window  # noqa: B018 - raises on a bad window
        self.prices
        if "default" not in self.models:
            raise ConfigError("models must name a default model")
        if int(self.data["discovery"]["target_size"]) < 1:
            raise ConfigError("discovery.target_size must be positive")
        if int(self.data["synthesis"]["token_budget"]) < 1:
            raise ConfigError("synthesis.token_budget must be positive")

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def workers(self) -> int:
        return max(1, int(self.data["workers"]))

    @property
    def window(self) -> KnowledgeWindow:
        try:
            return KnowledgeWindow(**self.data["window"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad knowledge window: {exc}") from None

    @property
    def models(self) -> dict[str, str]:
        return dict(self.data["models"])

    @property
    def prices(self) -> dict[str, Price]:
        """Per-token prices derived from the per-million figures."""
        out = {}
        for model, p in (self.data.get("prices") or {}).items():
            try:
                out[model] = Price(Decimal(str(p["input"])) / MILLION, Decimal(str(p["output"])) / MILLION)
            except Exception as exc:
                raise ConfigError(f"bad price for {model}: {exc}") from None
        return out

    @property
    def digest(self) -> str:
        return digest(self.data)

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.data[name])
