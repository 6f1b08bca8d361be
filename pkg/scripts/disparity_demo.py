"""Show measured sensitivity tracking a subgroup's documentation rate.

Two synthetic cohorts share every parameter except the probability that a
true case in subgroup B receives a diagnosis code. A definition that keys
on diagnosis codes alone inherits that gap: subgroup sensitivity lands on
the emission rate, and the overall number quietly drops.

Usage: python scripts/disparity_demo.py [--n-persons 5000] [--out /tmp/disparity]
"""
import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phenokit.dsl import parse
from phenokit.engine import compile, execute
from phenokit.metrics import evaluation_report, labels_from_csv
from phenokit.store import Store
from phenokit.synthgen import DiseaseModule, RateSpec, SimulationConfig, generate
from phenokit.vocab import load_vocabulary

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

DEFINITION = """\
phenotype "dx-only" v1 {
  intent "diagnosis code presence, nothing else"
  conceptset dx { 1001 +descendants }
  entry any condition in dx
  observation prior 0 days
  exit offset 0
}
"""


def config(seed: int, n_persons: int, emission: RateSpec) -> SimulationConfig:
    return SimulationConfig(
        seed=seed, n_persons=n_persons, as_of="2020-12-31",
        demographics={"gender": (("F", 0.5), ("M", 0.5)),
                      "race": (("A", 0.5), ("B", 0.5)),
                      "ethnicity": (("NH", 1.0),)},
        age_range=(18, 90), observation_min_days=730, observation_max_days=3650,
        diseases=(DiseaseModule(name="marker", prevalence=RateSpec(0.4),
                                diagnosis_concepts=(1001,),
                                diagnosis_emission_prob=emission),))


def run_arm(name: str, emission: RateSpec, args, vocab, out_root: Path) -> dict:
    out = out_root / name
    generate(config(args.seed, args.n_persons, emission), vocab, out)
    store = Store.load(out)
    labels = labels_from_csv((out / "labels.csv").read_text(encoding="utf-8"))["marker"]
    records, _ = execute(compile(parse(DEFINITION), store.vocab), store)
    return evaluation_report({r.person_id for r in records}, labels, store, axes=("race",))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-persons", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--rate-b", type=float, default=0.45,
                    help="diagnosis emission probability for subgroup B in the shifted arm")
    ap.add_argument("--out", help="keep generated stores here (default: temp dir)")
    args = ap.parse_args()

    vocab = load_vocabulary(FIXTURES / "vocab")
    with tempfile.TemporaryDirectory() as tmp:
        out_root = Path(args.out) if args.out else Path(tmp)
        arms = {
            "base": run_arm("base", RateSpec(0.9), args, vocab, out_root),
            "shifted": run_arm(
                "shifted", RateSpec(0.9, (("race", "B", args.rate_b),)), args, vocab, out_root),
        }

    print(f"{'arm':<10}{'race':<6}{'cases':>7}{'sensitivity':>13}")
    for name, report in arms.items():
        for cell in report["strata"]:
            confusion = cell["confusion"]
            print(f"{name:<10}{cell['axes']['race']:<6}"
                  f"{confusion['tp'] + confusion['fn']:>7}"
                  f"{cell['metrics']['sensitivity']:>13.4f}")
        print(f"{name:<10}{'all':<6}{'':>7}"
              f"{report['overall']['metrics']['sensitivity']:>13.4f}")
    drop = (arms["base"]["overall"]["metrics"]["sensitivity"]
            - arms["shifted"]["overall"]["metrics"]["sensitivity"])
    print(f"\noverall sensitivity drop from halving subgroup B documentation: {drop:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
