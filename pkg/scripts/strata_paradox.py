"""Demonstrate how fine stratification produces single-digit cells.

A 10,000-person population split over 5 races x 2 genders x 10 age bins
averages 100 persons per stratum. Add one rare subgroup at weight 0.0005
and its strata hold a handful of people each; the report suppresses any
cell below the --min-cell threshold rather than publish the counts.
"""
import argparse
import sys
import tempfile
from collections import Counter
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phenokit.metrics import labels_from_csv, stratify
from phenokit.store import Store
from phenokit.synthgen import DiseaseModule, RateSpec, SimulationConfig, generate
from phenokit.vocab import load_vocabulary

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def build_report(races, args, vocab, out: Path):
    config = SimulationConfig(
        seed=args.seed, n_persons=args.n_persons, as_of="2020-12-31",
        demographics={"gender": (("F", 0.5), ("M", 0.5)),
                      "race": races,
                      "ethnicity": (("NH", 1.0),)},
        age_range=(0, 99), observation_min_days=365, observation_max_days=3650,
        diseases=(DiseaseModule(name="marker", prevalence=RateSpec(0.2),
                                diagnosis_concepts=(1001,),
                                diagnosis_emission_prob=RateSpec(1.0)),))
    generate(config, vocab, out)
    store = Store.load(out)
    labels = labels_from_csv((out / "labels.csv").read_text(encoding="utf-8"))["marker"]
    return stratify(labels.positives, labels, set(store.persons), store,
                    axes=("race", "gender", "age_group"), min_cell=args.min_cell)


def describe(tag: str, report) -> None:
    sizes = sorted(cell.n for cell in report.cells)
    suppressed = [cell for cell in report.cells if cell.suppressed]
    print(f"\n[{tag}] {len(report.cells)} strata, "
          f"mean n = {sum(sizes) / len(sizes):.1f}, "
          f"min = {sizes[0]}, max = {sizes[-1]}, suppressed = {len(suppressed)}")
    if suppressed:
        by_race = Counter(cell.axes[0] for cell in suppressed)
        print("  suppressed cells by race: "
              + ", ".join(f"{race}={count}" for race, count in sorted(by_race.items())))
        smallest = min(suppressed, key=lambda cell: cell.n)
        print(f"  e.g. {dict(zip(report.axes, smallest.axes))} has n = {smallest.n}: "
              "metrics withheld")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-persons", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--min-cell", type=int, default=10)
    args = ap.parse_args()

    vocab = load_vocabulary(FIXTURES / "vocab")
    with tempfile.TemporaryDirectory() as tmp:
        even = tuple((race, 0.2) for race in "ABCDE")
        describe("balanced", build_report(even, args, vocab, Path(tmp) / "even"))
        rare = tuple((race, 0.2) for race in "ABCD") + (("E", 0.1995), ("F", 0.0005))
        describe("rare subgroup F at weight 0.0005",
                 build_report(rare, args, vocab, Path(tmp) / "rare"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
