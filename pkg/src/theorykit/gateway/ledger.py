"""Append-only cost ledger with exact decimal arithmetic."""
from __future__ import annotations

import contextvars
import json
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, TypeVar

from ..model import from_data, to_data

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Price:
    """USD per single input / output token."""

    input: Decimal
    output: Decimal

    @classmethod
    def parse(cls, value: Any) -> "Price":
        if isinstance(value, Price):
            return value
        if isinstance(value, Mapping):
            return cls(Decimal(str(value["input"])), Decimal(str(value["output"])))
        inp, out = value
        return cls(Decimal(str(inp)), Decimal(str(out)))


ZERO_PRICE = Price(Decimal(0), Decimal(0))


@dataclass(frozen=True)
class LedgerEntry:
    stage: str
    model_id: str
    input_tokens: int
    output_tokens: int
    usd: Decimal
    prompt_asset_id: str = ""
    subject: str = ""
    request_digest: str = ""


# Tasks running under parallel_map buffer their entries here so the ledger
# ends up in input order no matter which task finishes first.
_SINK: contextvars.ContextVar[list | None] = contextvars.ContextVar("ledger_sink", default=None)


class CostLedger:
    def __init__(self, prices: Mapping[str, Any] | None = None):
        self.prices: dict[str, Price] = {k: Price.parse(v) for k, v in (prices or {}).items()}
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()
        self._listeners: list[Callable[[LedgerEntry], None]] = []

    def price_for(self, model_id: str) -> Price:
        return self.prices.get(model_id, ZERO_PRICE)

    def cost(self, model_id: str, input_tokens: int, output_tokens: int) -> Decimal:
        p = self.price_for(model_id)
        return input_tokens * p.input + output_tokens * p.output

    def record(
        self,
        stage: str,
        model_id: str,
        input_tokens: int,
        output_tokens: int,
        *,
        prompt_asset_id: str = "",
        subject: str = "",
        request_digest: str = "",
    ) -> LedgerEntry:
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        entry = LedgerEntry(
            stage,
            model_id,
            input_tokens,
            output_tokens,
            self.cost(model_id, input_tokens, output_tokens),
            prompt_asset_id,
            subject,
            request_digest,
        )
        self._commit(entry)
        return entry

    def _commit(self, entry: LedgerEntry) -> None:
        sink = _SINK.get()
        if sink is not None:
            sink.append((self, entry))
            return
        with self._lock:
            self._entries.append(entry)
        for fn in self._listeners:
            fn(entry)

    def subscribe(self, fn: Callable[[LedgerEntry], None]) -> None:
        self._listeners.append(fn)

    @property
    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def total(self) -> Decimal:
        return sum((e.usd for e in self.entries), Decimal(0))

    def subtotals(self, key: str = "stage") -> dict[str, Decimal]:
        out: dict[str, Decimal] = defaultdict(lambda: Decimal(0))
        for e in self.entries:
            out[getattr(e, key)] += e.usd
        return dict(out)

    def load(self, entries: Iterable[LedgerEntry]) -> None:
        with self._lock:
            self._entries.extend(entries)


def read_ledger(path: Path) -> list[LedgerEntry]:
    if not path.exists():
        return []
    return [from_data(LedgerEntry, json.loads(line)) for line in path.read_text().splitlines() if line.strip()]


def ledger_line(entry: LedgerEntry) -> str:
    return json.dumps(to_data(entry), sort_keys=True) + "\n"


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Map ``fn`` over ``items`` concurrently; results and ledger entries keep input order."""
    items = list(items)

    def run(item):
        buf: list = []
        token = _SINK.set(buf)
        try:
            return fn(item), buf, None
        except Exception as exc:  # re-raised below, after ledger flush
            return None, buf, exc
        finally:
            _SINK.reset(token)

    if workers <= 1 or len(items) <= 1:
        outcomes = [contextvars.copy_context().run(run, it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(contextvars.copy_context().run, run, it) for it in items]
            outcomes = [f.result() for f in futures]

    results = []
    first_error = None
    for value, buf, err in outcomes:
        for ledger, entry in buf:
            ledger._commit(entry)
        if err is not None and first_error is None:
            first_error = err
        results.append(value)
    if first_error is not None:
        raise first_error
    return results
