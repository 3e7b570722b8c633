"""Append-only JSON-lines record store.

Each record kind lives in its own ``<kind>.jsonl`` file under the store root.
Records carry a ``key``; appending a key that is already present is a no-op,
which makes re-running a finished job free. Failures go to a separate kind so
they are retried on the next run. Wall-clock timings of benchmark sessions
are kept apart from results so results stay byte-stable.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path

STORE_ENV = "CFSAMPLING_STORE"
DEFAULT_ROOT = "runs"

KINDS = ("evals", "samples", "embeddings", "taus", "psi", "failures", "timings")


def default_root() -> Path:
    return Path(os.environ.get(STORE_ENV, DEFAULT_ROOT))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


class RunStore:
    def __init__(self, root: os.PathLike | str | None = None):
        self.root = Path(root) if root is not None else default_root()
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._keys: dict[str, set[str]] = {}

    # -- paths -------------------------------------------------------------

    def path(self, kind: str) -> Path:
        if kind not in KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        return self.root / f"{kind}.jsonl"

    def dataset_dir(self, name: str) -> Path:
        return self.root / "datasets" / name

    def has_dataset(self, name: str) -> bool:
        return (self.dataset_dir(name) / "manifest.json").exists()

    @property
    def reports(self) -> Path:
        p = self.root / "reports"
        p.mkdir(exist_ok=True)
        return p

    @property
    def models(self) -> Path:
        p = self.root / "genie"
        p.mkdir(exist_ok=True)
        return p

    # -- config snapshot -----------------------------------------------------

    def snapshot_config(self, config: dict) -> str:
        """Record the resolved config; returns its hash."""
        h = config_hash(config)
        snap = self.root / "configs" / f"{h}.json"
        if not snap.exists():
            snap.parent.mkdir(exist_ok=True)
            snap.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
        (self.root / "config.json").write_text(json.dumps({"hash": h, **config}, sort_keys=True,
                                                          indent=2) + "\n")
        return h

    # -- records -------------------------------------------------------------

    def records(self, kind: str) -> list[dict]:
        p = self.path(kind)
        if not p.exists():
            return []
        out = []
        with p.open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def keys(self, kind: str) -> set[str]:
        if kind not in self._keys:
            self._keys[kind] = {r["key"] for r in self.records(kind) if "key" in r}
        return self._keys[kind]

    def has(self, kind: str, key: str) -> bool:
        return key in self.keys(kind)

    def append(self, kind: str, record: dict) -> bool:
        """Write ``record`` unless its key is already stored; True if written."""
        if "key" not in record:
            raise ValueError("records need a key")
        with self._lock:
            keys = self.keys(kind)
            if kind != "failures" and record["key"] in keys:
                return False
            with self.path(kind).open("a") as fh:
                fh.write(canonical_json(record) + "\n")
            keys.add(record["key"])
            return True

    def latest(self, kind: str) -> dict[str, dict]:
        """Key -> record (first write wins, matching :meth:`append`)."""
        out: dict[str, dict] = {}
        for r in self.records(kind):
            out.setdefault(r["key"], r)
        return out
