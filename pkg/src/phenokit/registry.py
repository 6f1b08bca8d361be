"""On-disk definition registry: append-only versions, revision history,
and recorded evaluation reports queryable as a PPV time series.

Layout per definition id:

    registry/<id>/v<N>.json            canonical document, immutable
    registry/<id>/history.json         version + evaluation index
    registry/<id>/evaluations/e<K>.json   recorded evaluation reports

Writes are serialized through an advisory flock on registry/.lock, so a
single registry directory tolerates concurrent writers on one host.
"""
from __future__ import annotations

import fcntl
import json
import os
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .canonical import from_canonical, to_canonical
from .model import PhenotypeDefinition, validate_definition

_ID_RE = re.compile(r"[^a-zA-Z0-9._-]+")


class RegistryError(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def slug_for(definition_id: str) -> str:
    """Directory-safe name for a definition id; ids that collide after
    slugging are rejected at register time."""
    slug = _ID_RE.sub("_", definition_id).strip("_")
    if not slug:
        raise RegistryError(f"definition id {definition_id!r} has no directory-safe form")
    return slug


class _Lock:
    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        self.fd = os.open(self.path, os.O_CREAT | os.O_RDWR, 0o644)
        fcntl.flock(self.fd, fcntl.LOCK_EX)
        return self

    def __exit__(self, *exc):
        fcntl.flock(self.fd, fcntl.LOCK_UN)
        os.close(self.fd)
        return False


def _write_json(path: Path, doc) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


class Registry:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _lock(self) -> _Lock:
        return _Lock(self.root / ".lock")

    def _dir(self, definition_id: str) -> Path:
        return self.root / slug_for(definition_id)

    def _history_path(self, definition_id: str) -> Path:
        return self._dir(definition_id) / "history.json"

    def _load_history(self, definition_id: str) -> dict:
        path = self._history_path(definition_id)
        if not path.exists():
            return {"definition_id": definition_id, "versions": [], "evaluations": []}
        history = json.loads(path.read_text(encoding="utf-8"))
        if history["definition_id"] != definition_id:
            raise RegistryError(
                f"registry directory {path.parent.name!r} holds {history['definition_id']!r}, "
                f"not {definition_id!r} (id collision after slugging)")
        return history

    # -- registration --------------------------------------------------------

    def register(self, definition: PhenotypeDefinition, author: str,
                 change_note: str, timestamp: Optional[str] = None) -> int:
        issues = validate_definition(definition)
        if issues:
            raise RegistryError(
                "cannot register an invalid definition: " + "; ".join(str(i) for i in issues))
        with self._lock():
            history = self._load_history(definition.definition_id)
            version = history["versions"][-1]["version"] + 1 if history["versions"] else 1
            target = self._dir(definition.definition_id) / f"v{version}.json"
            if target.exists():
                raise RegistryError(f"{target} already exists; registry index is inconsistent")
            doc = to_canonical(definition)
            doc["version"] = version  # registry owns version numbering
            target.parent.mkdir(parents=True, exist_ok=True)
            _write_json(target, doc)
            history["versions"].append({
                "version": version,
                "author": author,
                "timestamp": timestamp or _now(),
                "change_note": change_note,
            })
            _write_json(self._history_path(definition.definition_id), history)
        return version

    # -- retrieval ------------------------------------------------------------

    def definition_ids(self) -> list[str]:
        ids = []
        for history_path in sorted(self.root.glob("*/history.json")):
            ids.append(json.loads(history_path.read_text(encoding="utf-8"))["definition_id"])
        return ids

    def versions(self, definition_id: str) -> list[dict]:
        history = self._load_history(definition_id)
        if not history["versions"]:
            raise RegistryError(f"unknown definition {definition_id!r}")
        return history["versions"]

    def latest_version(self, definition_id: str) -> int:
        return self.versions(definition_id)[-1]["version"]

    def get_document(self, definition_id: str, version: Optional[int] = None) -> dict:
        if version is None:
            version = self.latest_version(definition_id)
        path = self._dir(definition_id) / f"v{version}.json"
        if not path.exists():
            raise RegistryError(f"unknown version {version} of {definition_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def get_definition(self, definition_id: str, version: Optional[int] = None) -> PhenotypeDefinition:
        return from_canonical(self.get_document(definition_id, version))

    # -- evaluation history -----------------------------------------------------

    def record_evaluation(self, definition_id: str, version: int, dataset_id: str,
                          report: dict, timestamp: Optional[str] = None) -> dict:
        with self._lock():
            history = self._load_history(definition_id)
            known = {v["version"] for v in history["versions"]}
            if version not in known:
                raise RegistryError(f"unknown version {version} of {definition_id!r}")
            seq = len(history["evaluations"]) + 1
            rel = f"evaluations/e{seq}.json"
            report_path = self._dir(definition_id) / rel
            report_path.parent.mkdir(parents=True, exist_ok=True)
            _write_json(report_path, report)
            entry = {
                "version": version,
                "dataset_id": dataset_id,
                "report_file": rel,
                "timestamp": timestamp or _now(),
            }
            history["evaluations"].append(entry)
            _write_json(self._history_path(definition_id), history)
        return entry

    def evaluations(self, definition_id: str) -> list[dict]:
        history = self._load_history(definition_id)
        if not history["versions"]:
            raise RegistryError(f"unknown definition {definition_id!r}")
        return history["evaluations"]

    def load_evaluation(self, definition_id: str, entry: dict) -> dict:
        path = self._dir(definition_id) / entry["report_file"]
        return json.loads(path.read_text(encoding="utf-8"))

    def ppv_series(self, definition_id: str) -> list[dict]:
        """Recorded PPV per evaluation, in timestamp order."""
        points = []
        for entry in self.evaluations(definition_id):
            report = self.load_evaluation(definition_id, entry)
            metrics = report.get("overall", {}).get("metrics") or report.get("metrics") or {}
            points.append({
                "timestamp": entry["timestamp"],
                "version": entry["version"],
                "dataset_id": entry["dataset_id"],
                "ppv": metrics.get("ppv"),
            })
        points.sort(key=lambda p: p["timestamp"])
        return points

    # -- diffing ---------------------------------------------------------------

    def diff(self, definition_id: str, version_a: int, version_b: int) -> list[dict]:
        doc_a = self.get_document(definition_id, version_a)
        doc_b = self.get_document(definition_id, version_b)
        changes: list[dict] = []
        _diff_value("$", doc_a, doc_b, changes)
        # the version field always differs between two registered versions;
        # that is bookkeeping, not a revision
        return [c for c in changes if c["path"] != "$.version"]


def _diff_value(path: str, a, b, out: list[dict]) -> None:
    if type(a) is not type(b):
        out.append({"path": path, "kind": "changed", "from": a, "to": b})
        return
    if isinstance(a, dict):
        for key in a:
            if key not in b:
                out.append({"path": f"{path}.{key}", "kind": "removed", "from": a[key]})
        for key in b:
            if key not in a:
                out.append({"path": f"{path}.{key}", "kind": "added", "to": b[key]})
        for key in a:
            if key in b:
                _diff_value(f"{path}.{key}", a[key], b[key], out)
        return
    if isinstance(a, list):
        for i in range(min(len(a), len(b))):
            _diff_value(f"{path}[{i}]", a[i], b[i], out)
        for i in range(len(b), len(a)):
            out.append({"path": f"{path}[{i}]", "kind": "removed", "from": a[i]})
        for i in range(len(a), len(b)):
            out.append({"path": f"{path}[{i}]", "kind": "added", "to": b[i]})
        return
    if a != b:
        out.append({"path": path, "kind": "changed", "from": a, "to": b})
