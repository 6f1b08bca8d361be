"""Command-line surface wiring the library into one workflow.

Exit codes are stable for scripting: 0 success, 1 usage error, 2 validation
or lint failure, 3 runtime or data error. Machine-readable output (JSON
documents, CSV files) goes to stdout or the named output files; progress and
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import dsl
from .canonical import CanonicalError, from_canonical, to_canonical
from .dates import DateError, parse_day
from .engine import CompileError, compile, execute
from .metrics import (
    DEFAULT_AGE_BINS,
    DEFAULT_MIN_CELL,
    MetricsError,
    evaluation_report,
    labels_from_csv,
)
from .model import checklist_lint, validate_definition
from .oracle import reference_evaluate
from .registry import Registry, RegistryError
from .results import cohort_from_csv, cohort_to_csv
from .store import IngestError, Store, StoreError, data_dictionary, ingest
from .synthgen import SynthError, generate, load_config
from .vocab import VocabError, load_vocabulary

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DATA = 3


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_definition(path: str):
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json") or text.lstrip().startswith("{"):
        return from_canonical(json.loads(text))
    return dsl.parse(text)


def _fail_validation(issues) -> int:
    for issue in issues:
        _say(f"invalid: {issue}")
    return EXIT_VALIDATION


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    config = load_config(args.config)
    config = dataclasses.replace(config, seed=args.seed)
    vocab = load_vocabulary(args.vocab)
    manifest = generate(config, vocab, args.out)
    _say(f"generated {manifest['n_persons']} persons, {manifest['n_events']} events -> {args.out}")
    _emit(manifest, None)
    return EXIT_OK


def cmd_ingest(args) -> int:
    store = ingest(args.persons, args.periods, args.events, args.vocab)
    store.save(args.out)
    _say(f"ingested store -> {args.out}")
    _emit({"n_persons": len(store.persons), "n_events": store.n_events}, None)
    return EXIT_OK


def cmd_dict(args) -> int:
    store = Store.load(args.store)
    _emit(data_dictionary(store).to_doc(), args.out)
    return EXIT_OK


def cmd_lint(args) -> int:
    definition = _load_definition(args.definition)
    vocab = load_vocabulary(args.vocab)
    issues = validate_definition(definition)
    report = checklist_lint(definition, vocab, sufficiency_threshold=args.threshold)
    for item in report.items:
        _say(f"{'PASS' if item.passed else 'FAIL'} {item.name}: {item.detail}")
    for issue in issues:
        _say(f"FAIL structure: {issue}")
    doc = report.to_doc()
    doc["issues"] = [{"path": i.path, "message": i.message} for i in issues]
    _emit(doc, args.out)
    return EXIT_OK if report.passed and not issues else EXIT_VALIDATION


def cmd_compile(args) -> int:
    definition = _load_definition(args.definition)
    vocab = load_vocabulary(args.vocab)
    plan = compile(definition, vocab)
    for warning in plan.warnings:
        _say(f"warning: {warning}")
    _emit({
        "definition_id": plan.definition_id,
        "version": plan.version,
        "entry": {"domain": plan.entry.domain, "n_concepts": len(plan.entry.concepts),
                  "occurrence": plan.entry.occurrence_kind},
        "prior_observation_days": plan.prior_observation_days,
        "rules": [
            {
                "name": rule.name,
                "role": rule.role,
                "domain": rule.query.domain,
                "n_concepts": len(rule.query.concepts),
                "window": [rule.start_offset, rule.end_offset],
                "anchor": rule.anchor,
                "count": f"{rule.count_comparator} {rule.count}",
            }
            for rule in plan.rules
        ],
        "exit": plan.exit.kind,
        "warnings": list(plan.warnings),
    }, args.out)
    return EXIT_OK


def _run_common(args, evaluator) -> int:
    definition = _load_definition(args.definition)
    issues = validate_definition(definition)
    if issues:
        return _fail_validation(issues)
    store = Store.load(args.store)
    records, attrition = evaluator(definition, store)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(cohort_to_csv(records), encoding="utf-8")
    attrition_path = Path(args.attrition) if args.attrition else out.with_suffix(".attrition.json")
    attrition_path.write_text(json.dumps(attrition.to_doc(), indent=2) + "\n", encoding="utf-8")
    _say(f"cohort size {len(records)} -> {out}; attrition -> {attrition_path}")
    _emit({"cohort_size": len(records), "cohort": str(out), "attrition": str(attrition_path)}, None)
    return EXIT_OK


def cmd_run(args) -> int:
    def evaluator(definition, store):
        plan = compile(definition, store.vocab)
        for warning in plan.warnings:
            _say(f"warning: {warning}")
        return execute(plan, store, threads=args.threads)

    return _run_common(args, evaluator)


def cmd_oracle(args) -> int:
    return _run_common(args, reference_evaluate)


def cmd_evaluate(args) -> int:
    store = Store.load(args.store)
    records = cohort_from_csv(Path(args.cohort).read_text(encoding="utf-8"))
    label_sets = labels_from_csv(Path(args.truth).read_text(encoding="utf-8"))
    condition = args.condition
    if condition is None:
        if len(label_sets) != 1:
            _say(f"--condition required; labels file holds: {', '.join(sorted(label_sets))}")
            return EXIT_USAGE
        condition = next(iter(label_sets))
    labels = label_sets.get(condition)
    if labels is None:
        _say(f"no labels for condition {condition!r}; available: {', '.join(sorted(label_sets))}")
        return EXIT_DATA
    report = evaluation_report(
        cohort={r.person_id for r in records},
        labels=labels,
        store=store,
        axes=[a.strip() for a in args.strata.split(",")] if args.strata else list(
            ("race", "gender", "age_group")),
        age_bins=[int(b) for b in args.age_bins.split(",")] if args.age_bins else DEFAULT_AGE_BINS,
        min_cell=args.min_cell,
        as_of_day=parse_day(args.as_of) if args.as_of else None,
    )
    _emit(report, args.out)
    return EXIT_OK


def cmd_register(args) -> int:
    definition = _load_definition(args.definition)
    issues = validate_definition(definition)
    if issues:
        return _fail_validation(issues)
    registry = Registry(args.registry)
    version = registry.register(
        definition, author=args.author, change_note=args.note, timestamp=args.timestamp)
    _emit({"definition_id": definition.definition_id, "version": version}, None)
    return EXIT_OK


def cmd_diff(args) -> int:
    registry = Registry(args.registry)
    changes = registry.diff(args.definition_id, args.a, args.b)
    _emit({"definition_id": args.definition_id, "a": args.a, "b": args.b, "changes": changes}, None)
    return EXIT_OK


def cmd_history(args) -> int:
    registry = Registry(args.registry)
    if args.ppv:
        _emit({"definition_id": args.definition_id, "points": registry.ppv_series(args.definition_id)}, None)
    else:
        _emit({
            "definition_id": args.definition_id,
            "versions": registry.versions(args.definition_id),
            "evaluations": registry.evaluations(args.definition_id),
        }, None)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app, load_datasets

    registry = Registry(args.registry)
    datasets = load_datasets(Path(args.data))
    if not datasets:
        _say(f"no datasets found under {args.data}")
        return EXIT_DATA
    _say(f"serving {len(datasets)} dataset(s) on {args.host}:{args.port}")
    app = create_app(registry, datasets, dev=args.dev)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="phenokit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("generate", help="generate a synthetic store from a config")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--vocab", required=True, help="vocabulary bundle directory")
    p.add_argument("--out", required=True, help="output store directory")
    p.add_argument("--seed", required=True, type=int, help="generation seed (no implicit entropy)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="ingest raw CSVs into a normalized store")
    p.add_argument("--persons", required=True)
    p.add_argument("--periods", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("dict", help="data dictionary for a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("lint", help="authoring checklist over a definition")
    p.add_argument("definition", help=".phen or canonical .json definition")
    p.add_argument("--vocab", required=True)
    p.add_argument("--threshold", type=float, default=0.95,
                   help="mapping sufficiency threshold (default 0.95)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("compile", help="compile a definition to a plan summary")
    p.add_argument("definition")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    for name, helptext in (("run", "execute a definition against a store"),
                           ("oracle", "slow reference evaluation (test aid)")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("definition")
        p.add_argument("--store", required=True, help="store directory")
        p.add_argument("--out", required=True, help="cohort CSV path")
        p.add_argument("--attrition", help="attrition JSON path (default: <out>.attrition.json)")
        if name == "run":
            p.add_argument("--threads", type=int, default=1)
            p.set_defaults(func=cmd_run)
        else:
            p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evaluate", help="validity metrics for a cohort vs ground truth")
    p.add_argument("cohort", help="cohort CSV from run")
    p.add_argument("--truth", required=True, help="labels CSV")
    p.add_argument("--store", required=True)
    p.add_argument("--condition", help="label condition (required if file has several)")
    p.add_argument("--strata", help="comma-separated axes (race,gender,age_group)")
    p.add_argument("--min-cell", type=int, default=DEFAULT_MIN_CELL)
    p.add_argument("--age-bins", help="comma-separated ascending bin edges")
    p.add_argument("--as-of", help="reference date for ages (default: latest observation end)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("register", help="record a definition version in the registry")
    p.add_argument("definition")
    p.add_argument("--registry", required=True)
    p.add_argument("--author", required=True)
    p.add_argument("--note", required=True, help="change note")
    p.add_argument("--timestamp", help="override record timestamp (ISO 8601)")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("diff", help="field-level diff between two registered versions")
    p.add_argument("definition_id")
    p.add_argument("a", type=int)
    p.add_argument("b", type=int)
    p.add_argument("--registry", required=True)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("history", help="versions and evaluations of a definition")
    p.add_argument("definition_id")
    p.add_argument("--registry", required=True)
    p.add_argument("--ppv", action="store_true", help="print the PPV series instead")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("serve", help="start the local HTTP service")
    p.add_argument("--registry", required=True)
    p.add_argument("--data", required=True, help="directory of store subdirectories")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--dev", action="store_true", help="permissive cross-origin responses")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (dsl.DslError, dsl.PrintError, CanonicalError, CompileError) as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION
    except (IngestError, StoreError, VocabError, MetricsError, SynthError,
            RegistryError, DateError) as exc:
        _say(f"error: {exc}")
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        _say(f"error: not valid JSON: {exc}")
        return EXIT_DATA
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
