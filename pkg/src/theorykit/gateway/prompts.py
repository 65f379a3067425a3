"""Versioned prompt templates stored as markdown files in ``theorykit/prompts``.

A template file starts with a ``version: N`` line followed by ``---``; the
rest is a ``str.format`` template. Literal braces are doubled.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptAsset:
    id: str
    version: int
    template: str

    @property
    def placeholders(self) -> set[str]:
        names = set()
        for _, field_name, _, _ in string.Formatter().parse(self.template):
            if field_name:
                names.add(field_name.split(".")[0].split("[")[0])
        return names

    def render(self, variables: Mapping[str, str]) -> str:
        missing = self.placeholders - set(variables)
        if missing:
            raise PromptError(f"prompt {self.id!r}: unbound placeholders {sorted(missing)}")
        return self.template.format(**variables)


def parse_asset(asset_id: str, text: str) -> PromptAsset:
    head, sep, body = text.partition("\n---\n")
    if not sep or not head.startswith("version:"):
        raise PromptError(f"prompt {asset_id!r} lacks a 'version: N' header")
    return PromptAsset(asset_id, int(head.split(":", 1)[1]), body.strip() + "\n")


@lru_cache(maxsize=None)
def load_prompt(asset_id: str) -> PromptAsset:
    try:
        text = resources.files("theorykit.prompts").joinpath(f"{asset_id}.md").read_text()
    except FileNotFoundError:
        raise PromptError(f"unknown prompt asset {asset_id!r}") from None
    return parse_asset(asset_id, text)


def list_prompts() -> list[str]:
    return sorted(
        p.name[:-3] for p in resources.files("theorykit.prompts").iterdir() if p.name.endswith(".md")
    )
