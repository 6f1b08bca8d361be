"""Local HTTP service for the interactive assess-and-revise loop.

Thin wiring over the library: every endpoint's behavior is reproducible
with a CLI command on the same inputs. State is the definition registry,
the loaded immutable datasets, and an in-process run cache keyed by
(definition content hash, dataset id), so re-running an unchanged
definition returns the cached run.

Error contract: 400 malformed request body, 404 unknown id, 422 definition
that fails parsing or validation (body carries the issue list), 500 bugs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import dsl
from .canonical import CanonicalError, content_hash, from_canonical, to_canonical
from .dates import format_day, parse_day
from .engine import CompileError, compile, execute
from .metrics import (
    DEFAULT_AGE_BINS,
    DEFAULT_MIN_CELL,
    STRATA_AXES,
    GroundTruthLabels,
    MetricsError,
    evaluation_report,
    labels_from_csv,
)
from .model import PhenotypeDefinition, validate_definition
from .registry import Registry, RegistryError
from .results import AttritionReport, CohortRecord
from .store import Store, data_dictionary
from .vocab import VocabError


@dataclass
class Dataset:
    dataset_id: str
    store: Store
    labels: dict[str, GroundTruthLabels] = field(default_factory=dict)


def load_dataset(dataset_id: str, store_dir: Path) -> Dataset:
    store = Store.load(store_dir)
    labels: dict[str, GroundTruthLabels] = {}
    labels_path = store_dir / "labels.csv"
    if labels_path.exists():
        labels = labels_from_csv(labels_path.read_text(encoding="utf-8"))
    return Dataset(dataset_id=dataset_id, store=store, labels=labels)


def load_datasets(data_dir: Path) -> dict[str, Dataset]:
    """Each subdirectory holding a persons.csv is a dataset named by the
    directory."""
    datasets = {}
    for child in sorted(Path(data_dir).iterdir()):
        if child.is_dir() and (child / "persons.csv").exists():
            datasets[child.name] = load_dataset(child.name, child)
    return datasets


@dataclass
class _Run:
    run_id: str
    dataset_id: str
    definition: PhenotypeDefinition
    records: list[CohortRecord]
    attrition: AttritionReport
    warnings: tuple[str, ...]


def _issues_response(issues) -> HTTPException:
    return HTTPException(status_code=422, detail={
        "issues": [{"path": i.path, "message": i.message} for i in issues]})


def create_app(registry: Registry, datasets: dict[str, Dataset], dev: bool = False) -> FastAPI:
    app = FastAPI(title="phenotype workbench service")

    if dev:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    runs: dict[str, _Run] = {}

    @app.exception_handler(RequestValidationError)
    async def _malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    def _dataset(dataset_id: str) -> Dataset:
        dataset = datasets.get(dataset_id)
        if dataset is None:
            raise HTTPException(status_code=404, detail=f"unknown dataset {dataset_id!r}")
        return dataset

    def _definition_from(payload: dict) -> PhenotypeDefinition:
        doc = payload.get("definition")
        text = payload.get("dsl")
        if (doc is None) == (text is None):
            raise HTTPException(
                status_code=400, detail="supply exactly one of 'definition' and 'dsl'")
        if text is not None:
            if not isinstance(text, str):
                raise HTTPException(status_code=400, detail="'dsl' must be a string")
            try:
                return dsl.parse(text)
            except dsl.DslError as exc:
                raise HTTPException(status_code=422, detail={
                    "issues": [{"path": str(exc.span), "message": exc.reason}]}) from None
        if not isinstance(doc, dict):
            raise HTTPException(status_code=400, detail="'definition' must be an object")
        try:
            return from_canonical(doc)
        except CanonicalError as exc:
            raise HTTPException(status_code=422, detail={
                "issues": [{"path": exc.path, "message": str(exc)}]}) from None

    def _validated(definition: PhenotypeDefinition) -> PhenotypeDefinition:
        issues = validate_definition(definition)
        if issues:
            raise _issues_response(issues)
        return definition

    # -- datasets ------------------------------------------------------------

    @app.get("/datasets")
    def list_datasets():
        return [
            {
                "dataset_id": ds.dataset_id,
                "n_persons": len(ds.store.persons),
                "n_events": ds.store.n_events,
                "conditions": sorted(ds.labels),
                "dictionary": data_dictionary(ds.store).to_doc(),
            }
            for ds in (datasets[k] for k in sorted(datasets))
        ]

    # -- definition conversion -------------------------------------------------

    @app.post("/parse")
    def parse_dsl(payload: dict = Body(...)):
        text = payload.get("dsl")
        if not isinstance(text, str):
            raise HTTPException(status_code=400, detail="'dsl' must be a string")
        try:
            definition = dsl.parse(text)
        except dsl.DslError as exc:
            raise HTTPException(status_code=422, detail={
                "issues": [{"path": str(exc.span), "message": exc.reason}]}) from None
        return {
            "definition": to_canonical(definition),
            "issues": [
                {"path": i.path, "message": i.message}
                for i in validate_definition(definition)
            ],
        }

    @app.post("/format")
    def format_definition(payload: dict = Body(...)):
        definition = _definition_from(payload)
        try:
            return {"dsl": dsl.print_definition(definition)}
        except dsl.PrintError as exc:
            raise HTTPException(status_code=422, detail={
                "issues": [{"path": "$", "message": str(exc)}]}) from None

    # -- registry ---------------------------------------------------------------

    @app.post("/definitions", status_code=201)
    def register_definition(payload: dict = Body(...)):
        definition = _definition_from(payload)
        author = payload.get("author", "")
        note = payload.get("change_note", "")
        try:
            version = registry.register(definition, author=author, change_note=note)
        except RegistryError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"definition_id": definition.definition_id, "version": version}

    @app.get("/definitions")
    def list_definitions():
        out = []
        for definition_id in registry.definition_ids():
            versions = registry.versions(definition_id)
            out.append({
                "definition_id": definition_id,
                "latest_version": versions[-1]["version"],
                "versions": versions,
            })
        return out

    @app.get("/definitions/{definition_id}/versions/{version}")
    def get_version(definition_id: str, version: int):
        try:
            return registry.get_document(definition_id, version)
        except RegistryError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/definitions/{definition_id}/diff")
    def diff_versions(definition_id: str, a: int, b: int):
        try:
            changes = registry.diff(definition_id, a, b)
        except RegistryError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"definition_id": definition_id, "a": a, "b": b, "changes": changes}

    @app.get("/definitions/{definition_id}/history")
    def get_history(definition_id: str):
        try:
            versions = registry.versions(definition_id)
        except RegistryError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {
            "definition_id": definition_id,
            "versions": versions,
            "evaluations": registry.evaluations(definition_id),
        }

    @app.get("/definitions/{definition_id}/monitor")
    def monitor_series(definition_id: str):
        try:
            points = registry.ppv_series(definition_id)
        except RegistryError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"definition_id": definition_id, "points": points}

    # -- lint ----------------------------------------------------------------------

    @app.post("/lint")
    def lint_definition(payload: dict = Body(...)):
        definition = _definition_from(payload)
        dataset_id = payload.get("dataset_id") or (sorted(datasets)[0] if datasets else None)
        if dataset_id is None:
            raise HTTPException(status_code=404, detail="no datasets loaded to lint against")
        dataset = _dataset(dataset_id)
        threshold = payload.get("threshold", 0.95)
        from .model import checklist_lint

        report = checklist_lint(definition, dataset.store.vocab, sufficiency_threshold=threshold)
        doc = report.to_doc()
        doc["issues"] = [
            {"path": i.path, "message": i.message} for i in validate_definition(definition)
        ]
        doc["dataset_id"] = dataset_id
        return doc

    # -- runs --------------------------------------------------------------------------

    @app.post("/run")
    def run_definition(payload: dict = Body(...)):
        definition = _validated(_definition_from(payload))
        dataset_id = payload.get("dataset_id")
        if not isinstance(dataset_id, str):
            raise HTTPException(status_code=400, detail="'dataset_id' must be a string")
        dataset = _dataset(dataset_id)

        key = f"{content_hash(definition)}:{dataset_id}"
        run_id = hashlib.sha256(key.encode()).hexdigest()[:16]
        cached = run_id in runs
        if not cached:
            try:
                plan = compile(definition, dataset.store.vocab)
            except (CompileError, VocabError) as exc:
                raise HTTPException(status_code=422, detail={
                    "issues": [{"path": "$", "message": str(exc)}]}) from None
            records, attrition = execute(plan, dataset.store)
            runs[run_id] = _Run(
                run_id=run_id, dataset_id=dataset_id, definition=definition,
                records=records, attrition=attrition, warnings=plan.warnings)
        run = runs[run_id]
        return {
            "run_id": run.run_id,
            "dataset_id": run.dataset_id,
            "definition_id": run.definition.definition_id,
            "version": run.definition.version,
            "cohort_size": len(run.records),
            "attrition": run.attrition.to_doc(),
            "warnings": list(run.warnings),
            "cached": cached,
        }

    def _run_for(run_id: str) -> _Run:
        run = runs.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return run

    @app.get("/runs/{run_id}/cohort")
    def run_cohort(run_id: str, page: int = 1, page_size: int = 100):
        run = _run_for(run_id)
        if page < 1 or page_size < 1 or page_size > 1000:
            raise HTTPException(status_code=400, detail="bad paging parameters")
        start = (page - 1) * page_size
        rows = run.records[start:start + page_size]
        return {
            "run_id": run_id,
            "page": page,
            "page_size": page_size,
            "total": len(run.records),
            "rows": [
                {
                    "person_id": r.person_id,
                    "entry_date": format_day(r.entry_day),
                    "exit_date": format_day(r.exit_day),
                }
                for r in rows
            ],
        }

    # -- evaluation ---------------------------------------------------------------------

    @app.post("/evaluate")
    def evaluate_run(payload: dict = Body(...)):
        run = _run_for(str(payload.get("run_id")))
        dataset = _dataset(run.dataset_id)
        condition = payload.get("condition")
        labels = dataset.labels.get(condition)
        if labels is None:
            raise HTTPException(
                status_code=404,
                detail=f"dataset {run.dataset_id!r} has no labels for {condition!r}")
        axes = payload.get("strata") or list(STRATA_AXES)
        min_cell = payload.get("min_cell", DEFAULT_MIN_CELL)
        age_bins = payload.get("age_bins") or DEFAULT_AGE_BINS
        as_of = payload.get("as_of")
        try:
            report = evaluation_report(
                cohort={r.person_id for r in run.records},
                labels=labels,
                store=dataset.store,
                axes=axes,
                age_bins=age_bins,
                min_cell=min_cell,
                as_of_day=parse_day(as_of) if as_of else None,
            )
        except MetricsError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        report["run_id"] = run.run_id
        report["dataset_id"] = run.dataset_id

        if payload.get("record"):
            try:
                entry = registry.record_evaluation(
                    run.definition.definition_id,
                    run.definition.version,
                    dataset_id=run.dataset_id,
                    report=report,
                    timestamp=payload.get("timestamp"),
                )
            except RegistryError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from None
            report["recorded"] = entry
        return report

    return app
