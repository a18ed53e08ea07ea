"""Disk-backed scenario store.

Layout under the data directory, one subdirectory per scenario:
    scenario.json            status record (the only rewritten file)
    series.csv, statics.csv  uploaded snapshot
    runs/<run_id>/...        pipeline artifacts (append-only)
    models/version_<n>.json  bandit model versions (append-only)
    feedback/events.json     feedback log (append-only list)

Writes are serialized per scenario with an in-process lock; reads are safe
anytime because completed artifacts are immutable.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..bandit import BanditModel
from ..data_io import Snapshot, load_snapshot
from ..pipeline import RunArtifact, RunConfig

__all__ = ["StoreError", "ScenarioStore"]

_STATUSES = ("draft", "training", "ready", "failed")
_TRANSITIONS = {("draft", "training"), ("training", "ready"), ("training", "failed")}


class StoreError(Exception):
    """Store-level failure with the HTTP mapping the routes need."""

    def __init__(self, status_code: int, code: str, stage: str, message: str, location: str | None = None):
        super().__init__(message)
        self.status_code = status_code
        self.code = code
        self.stage = stage
        self.message = message
        self.location = location


class ScenarioStore:
    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._global_lock = threading.Lock()
        self._scenario_locks: dict[str, threading.Lock] = {}
        self._snapshots: dict[str, Snapshot] = {}
        self._artifacts: dict[str, RunArtifact] = {}

    # -- locking ----------------------------------------------------------

    def lock(self, scenario_id: str) -> threading.Lock:
        with self._global_lock:
            if scenario_id not in self._scenario_locks:
                self._scenario_locks[scenario_id] = threading.Lock()
            return self._scenario_locks[scenario_id]

    # -- scenario lifecycle -------------------------------------------------

    def _dir(self, scenario_id: str) -> Path:
        d = self.root / scenario_id
        if not d.is_dir():
            raise StoreError(404, "not_found", "store", f"unknown scenario: {scenario_id}")
        return d

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "scenario.json").is_file())

    def create(self, series_text: str, statics_text: str, config: RunConfig) -> dict:
        with self._global_lock:
            scenario_id = f"s{len([p for p in self.root.iterdir() if p.is_dir()]) + 1:04d}"
            d = self.root / scenario_id
            d.mkdir()
        (d / "series.csv").write_text(series_text, encoding="utf-8")
        (d / "statics.csv").write_text(statics_text, encoding="utf-8")
        snapshot = load_snapshot(d / "series.csv", d / "statics.csv")
        record = {
            "id": scenario_id,
            "status": "draft",
            "config": config.to_dict(),
            "snapshot_hash": snapshot.content_hash,
            "run_id": None,
            "error": None,
        }
        self._write_record(d, record)
        self._snapshots[scenario_id] = snapshot
        return record

    def _write_record(self, d: Path, record: dict) -> None:
        tmp = d / "scenario.json.tmp"
        tmp.write_text(json.dumps(record, sort_keys=True), encoding="utf-8")
        tmp.replace(d / "scenario.json")

    def record(self, scenario_id: str) -> dict:
        d = self._dir(scenario_id)
        return json.loads((d / "scenario.json").read_text(encoding="utf-8"))

    def set_status(
        self,
        scenario_id: str,
        status: str,
        error: dict | None = None,
        run_id: str | None = None,
    ) -> dict:
        if status not in _STATUSES:
            raise StoreError(500, "internal", "store", f"illegal status {status}")
        d = self._dir(scenario_id)
        record = self.record(scenario_id)
        if (record["status"], status) not in _TRANSITIONS:
            raise StoreError(
                409,
                "conflict",
                "store",
                f"cannot move scenario from {record['status']} to {status}",
            )
        record["status"] = status
        record["error"] = error
        if run_id is not None:
            record["run_id"] = run_id
        self._write_record(d, record)
        return record

    # -- derived objects ------------------------------------------------------

    def snapshot(self, scenario_id: str) -> Snapshot:
        if scenario_id not in self._snapshots:
            d = self._dir(scenario_id)
            self._snapshots[scenario_id] = load_snapshot(d / "series.csv", d / "statics.csv")
        return self._snapshots[scenario_id]

    def config(self, scenario_id: str) -> RunConfig:
        return RunConfig.from_dict(self.record(scenario_id)["config"])

    def runs_dir(self, scenario_id: str) -> Path:
        return self._dir(scenario_id) / "runs"

    def artifact(self, scenario_id: str) -> RunArtifact:
        record = self.record(scenario_id)
        if record["status"] != "ready" or not record["run_id"]:
            raise StoreError(
                409, "unready", "store", f"scenario {scenario_id} is {record['status']}"
            )
        run_id = record["run_id"]
        cache_key = f"{scenario_id}/{run_id}"
        if cache_key not in self._artifacts:
            path = self.runs_dir(scenario_id) / run_id / "artifact.json"
            if not path.is_file():
                raise StoreError(500, "internal", "store", f"missing artifact for run {run_id}")
            self._artifacts[cache_key] = RunArtifact.from_json(path.read_text(encoding="utf-8"))
        return self._artifacts[cache_key]

    # -- bandit model versions -------------------------------------------------

    def _models_dir(self, scenario_id: str) -> Path:
        d = self._dir(scenario_id) / "models"
        d.mkdir(exist_ok=True)
        return d

    def model_versions(self, scenario_id: str) -> list[int]:
        d = self._models_dir(scenario_id)
        return sorted(int(p.stem.split("_")[1]) for p in d.glob("version_*.json"))

    def latest_model(self, scenario_id: str) -> tuple[int, BanditModel]:
        versions = self.model_versions(scenario_id)
        if not versions:
            raise StoreError(409, "unready", "store", "no trained model yet")
        latest = versions[-1]
        text = (self._models_dir(scenario_id) / f"version_{latest}.json").read_text("utf-8")
        return latest, BanditModel.from_json(text)

    def model_version(self, scenario_id: str, version: int) -> BanditModel:
        path = self._models_dir(scenario_id) / f"version_{version}.json"
        if not path.is_file():
            raise StoreError(404, "not_found", "store", f"no model version {version}")
        return BanditModel.from_json(path.read_text("utf-8"))

    def append_model(self, scenario_id: str, model: BanditModel) -> int:
        versions = self.model_versions(scenario_id)
        next_version = (versions[-1] if versions else 0) + 1
        path = self._models_dir(scenario_id) / f"version_{next_version}.json"
        path.write_text(model.to_json(), encoding="utf-8")
        return next_version

    # -- feedback log -----------------------------------------------------------

    def _feedback_path(self, scenario_id: str) -> Path:
        d = self._dir(scenario_id) / "feedback"
        d.mkdir(exist_ok=True)
        return d / "events.json"

    def feedback_events(self, scenario_id: str) -> list[dict]:
        path = self._feedback_path(scenario_id)
        if not path.is_file():
            return []
        return json.loads(path.read_text(encoding="utf-8"))

    def append_feedback(self, scenario_id: str, event: dict) -> None:
        events = self.feedback_events(scenario_id)
        events.append(event)
        path = self._feedback_path(scenario_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(events, sort_keys=True), encoding="utf-8")
        tmp.replace(path)
