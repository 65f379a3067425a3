"""On-disk layout of a run, stage markers and the run digest."""
from __future__ import annotations

import hashlib
import json
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Mapping

from filelock import FileLock, Timeout

from ..gateway.ledger import LedgerEntry, ledger_line, read_ledger
from ..model import RunManifest, digest, dumps, loads, text_digest

SUBDIRS = (
    "corpus",
    "schemas",
    "extractions",
    "theories",
    "quarantine",
    "evals/judge",
    "evals/backtest",
    "evals/novelty",
    "evals/overlap",
    "reports",
    "stages",
)

# never part of the run digest: lock, wall-clock timings, response caches, rendered reports
DIGEST_EXCLUDES = (".lock", "timings.json", "cache/", "reports/")


class RunLocked(RuntimeError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class RunDirectory:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    # -- layout ---------------------------------------------------------------

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    @property
    def manifest_path(self) -> Path:
        return self.path("manifest.json")

    @property
    def ledger_path(self) -> Path:
        return self.path("ledger.jsonl")

    @property
    def cache_dir(self) -> Path:
        return self.path("cache")

    def create(self, manifest: RunManifest) -> None:
        """Write the manifest first, then the layout; an existing manifest must match."""
        self.root.mkdir(parents=True, exist_ok=True)
        if self.manifest_path.exists():
            existing = self.manifest()
            if existing.run_id != manifest.run_id or existing.config_digest != manifest.config_digest:
                raise ValueError(
                    f"{self.root} already holds run {existing.run_id} with a different configuration"
                )
        else:
            write_text(self.manifest_path, dumps(manifest))
        for sub in SUBDIRS:
            self.path(sub).mkdir(parents=True, exist_ok=True)

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def manifest(self) -> RunManifest:
        if not self.manifest_path.exists():
            raise FileNotFoundError(f"{self.root} is not a run directory (no manifest.json)")
        return loads(RunManifest, self.manifest_path.read_text())

    # -- records --------------------------------------------------------------

    def write_record(self, rel: str, record: Any) -> str:
        text = dumps(record)
        write_text(self.path(rel), text)
        return text_digest(text)

    def read_json(self, rel: str) -> Any:
        return json.loads(self.path(rel).read_text())

    def has(self, rel: str) -> bool:
        return self.path(rel).exists()

    def file_digest(self, rel: str) -> str:
        return hashlib.sha256(self.path(rel).read_bytes()).hexdigest()

    # -- stage markers --------------------------------------------------------

    def marker_path(self, stage: str) -> Path:
        return self.path("stages", f"{stage}.done")

    def is_done(self, stage: str) -> bool:
        return self.marker_path(stage).exists()

    def mark_done(self, stage: str, inputs: Mapping[str, str], outputs: list[str]) -> None:
        """Terminal marker naming input digests and output file digests."""
        marker = {
            "stage": stage,
            "inputs": dict(sorted(inputs.items())),
            "outputs": {rel: self.file_digest(rel) for rel in sorted(outputs)},
        }
        write_text(self.marker_path(stage), json.dumps(marker, indent=2, sort_keys=True) + "\n")

    def marker(self, stage: str) -> dict[str, Any]:
        return json.loads(self.marker_path(stage).read_text())

    # -- ledger ---------------------------------------------------------------

    def append_ledger(self, entry: LedgerEntry) -> None:
        with open(self.ledger_path, "a", encoding="utf-8") as fh:
            fh.write(ledger_line(entry))

    def ledger(self) -> list[LedgerEntry]:
        return read_ledger(self.ledger_path)

    # -- timings ---------------------------------------------------------------

    @contextmanager
    def timed(self, stage: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            path = self.path("timings.json")
            data = json.loads(path.read_text()) if path.exists() else {}
            data[stage] = round(data.get(stage, 0.0) + time.perf_counter() - start, 4)
            write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    # -- locking and digest ---------------------------------------------------

    @contextmanager
    def lock(self) -> Iterator[None]:
        self.root.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(self.path(".lock")), timeout=0)
        try:
            lock.acquire()
        except Timeout:
            raise RunLocked(f"{self.root} is in use by another process") from None
        try:
            yield
        finally:
            lock.release()

    def digest_files(self) -> list[str]:
        out = []
        for p in sorted(self.root.rglob("*")):
            if not p.is_file():
                continue
            rel = p.relative_to(self.root).as_posix()
            if any(rel == ex or (ex.endswith("/") and rel.startswith(ex)) for ex in DIGEST_EXCLUDES):
                continue
            out.append(rel)
        return out

    def run_digest(self) -> str:
        """Digest over every persisted record, excluding timings, lock, caches and rendered reports."""
        return digest({rel: self.file_digest(rel) for rel in self.digest_files()})


def write_text(path: Path, text: str) -> None:
    """Atomic replace so an interrupted write never leaves a torn record."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
