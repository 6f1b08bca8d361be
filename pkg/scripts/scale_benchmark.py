"""Time a full run against a 100k-person / ~5M-event store.

Generates the store from fixtures/sim_scale.json (reused across runs when
--keep is given), executes the hypertension fixture definition single- and
multi-threaded, and verifies that the outputs are byte-identical.
"""
import argparse
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phenokit.dsl import parse
from phenokit.engine import compile, execute
from phenokit.results import cohort_to_csv
from phenokit.store import Store
from phenokit.synthgen import generate, load_config
from phenokit.vocab import load_vocabulary

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(FIXTURES / "sim_scale.json"))
    ap.add_argument("--definition", default=str(FIXTURES / "hypertension.phen"))
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--keep", help="directory to generate into and reuse on later runs")
    args = ap.parse_args()

    vocab = load_vocabulary(FIXTURES / "vocab")
    with tempfile.TemporaryDirectory() as tmp:
        store_dir = Path(args.keep) if args.keep else Path(tmp) / "store"
        if not (store_dir / "persons.csv").exists():
            t0 = time.perf_counter()
            manifest = generate(load_config(args.config), vocab, store_dir)
            print(f"generate: {manifest['n_persons']} persons, "
                  f"{manifest['n_events']} events in {time.perf_counter() - t0:.1f}s")
        else:
            print(f"reusing store at {store_dir}")

        t0 = time.perf_counter()
        store = Store.load(store_dir)
        print(f"load: {time.perf_counter() - t0:.1f}s")

        definition = parse(Path(args.definition).read_text(encoding="utf-8"))
        plan = compile(definition, store.vocab)

        t0 = time.perf_counter()
        records, attrition = execute(plan, store, threads=1)
        single = time.perf_counter() - t0
        print(f"execute threads=1: {single:.2f}s, cohort {len(records)}")

        t0 = time.perf_counter()
        threaded_records, threaded_attrition = execute(plan, store, threads=args.threads)
        print(f"execute threads={args.threads}: {time.perf_counter() - t0:.2f}s")

        same = (cohort_to_csv(records) == cohort_to_csv(threaded_records)
                and attrition.to_doc() == threaded_attrition.to_doc())
        print("outputs byte-identical:", same)
        for stage in attrition.stages:
            print(f"  {stage.name:<24} remaining {stage.remaining:>7} removed {stage.removed:>7}")
        return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
