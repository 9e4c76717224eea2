"""Append-only store of run records shared by all configuration processes.

The store is global across subsets and phases within one construction run;
concurrent configure calls append under a lock and queries see a consistent
snapshot. Records are persisted as a line-delimited JSON log so interrupted
constructions can resume.
"""

from __future__ import annotations

import json
import math
import threading
from pathlib import Path

from .core import RunRecord, RunStatus, penalized_score
from .space import Configuration, ParameterSpace, parse_config, serialize_config


class RunDataStore:
    def __init__(self) -> None:
        self._records: list[RunRecord] = []
        self._configs: dict[str, Configuration] = {}
        self._by_pair: dict[tuple[str, str], list[RunRecord]] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def add(self, record: RunRecord, config: Configuration | None = None) -> None:
        """Append a record; never mutates or removes existing records."""
        if config is not None and config.config_id != record.config_id:
            raise ValueError("config does not match the record's config_id")
        with self._lock:
            self._records.append(record)
            self._by_pair.setdefault((record.config_id, record.instance_id), []).append(record)
            if config is not None:
                self._configs.setdefault(record.config_id, config)

    def records(self) -> tuple[RunRecord, ...]:
        """Consistent snapshot of all records at call time."""
        with self._lock:
            return tuple(self._records)

    def config(self, config_id: str) -> Configuration:
        with self._lock:
            return self._configs[config_id]

    def known_configs(self) -> dict[str, Configuration]:
        with self._lock:
            return dict(self._configs)

    def runs_for(self, config_id: str, instance_id: str) -> tuple[RunRecord, ...]:
        with self._lock:
            return tuple(self._by_pair.get((config_id, instance_id), ()))

    def incumbent_performance(
        self, config: Configuration, instance_id: str, cutoff: float, penalty: int
    ) -> float | None:
        """Mean penalized score over all runs of (config, instance).

        Returns None when the configuration was never run on the instance,
        in which case the instance sits out the whole transfer process.
        """
        runs = self.runs_for(config.config_id, instance_id)
        if not runs:
            return None
        return math.fsum(
            penalized_score(r.status, r.runtime, cutoff, penalty) for r in runs
        ) / len(runs)

    def save(self, path: str | Path) -> None:
        records = self.records()
        configs = self.known_configs()
        with open(path, "w") as fh:
            for rec in records:
                config = configs.get(rec.config_id)
                fh.write(
                    json.dumps(
                        {
                            "config_id": rec.config_id,
                            "config": serialize_config(config) if config else None,
                            "instance_id": rec.instance_id,
                            "seed": rec.seed,
                            "status": rec.status.value,
                            "runtime": rec.runtime,
                            "cutoff": rec.cutoff,
                            "phase": rec.phase,
                            "subset_index": rec.subset_index,
                            "backend": rec.backend_label,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path, space: ParameterSpace) -> RunDataStore:
        store = cls()
        config_cache: dict[str, Configuration] = {}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                record = RunRecord(
                    config_id=doc["config_id"],
                    instance_id=doc["instance_id"],
                    seed=doc["seed"],
                    status=RunStatus(doc["status"]),
                    runtime=doc["runtime"],
                    cutoff=doc["cutoff"],
                    backend_label=doc.get("backend", ""),
                    phase=doc.get("phase"),
                    subset_index=doc.get("subset_index"),
                )
                config = None
                if doc.get("config") is not None:
                    config = config_cache.get(doc["config"])
                    if config is None:
                        config = parse_config(space, doc["config"])
                        config_cache[doc["config"]] = config
                store.add(record, config)
        return store


def record_run(store: RunDataStore, record: RunRecord, config: Configuration | None = None) -> None:
    store.add(record, config)
