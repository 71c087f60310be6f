#!/usr/bin/env python3
"""Run the generator case study end to end and write every artifact to one folder.

    python scripts/run_case_study.py --out runs/case
"""

import argparse
import json
import pathlib
import time
import warnings

from emd_expert.expert_db import (apply_constraints, build_database, export_plot_csv,
                                  parse_constraints, pareto_front, save_database,
                                  verify_with_oracle)
from emd_expert.guide import REFERENCE_DESIGN, SpecQuery, compare_report, query
from emd_expert.mop import cop_matrix, save_model, train_mop
from emd_expert.sampling import SplitSpec, default_space, generate_dataset, save_dataset
from emd_expert.wrsg import Boundaries, OracleConstants

CASE_SPEC = "pout>30,w<17,eta>92,d2<205"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/case")
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--db-n", type=int, default=9900)
    ap.add_argument("--db-seed", type=int, default=11)
    ap.add_argument("--spec", default=CASE_SPEC)
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    c, b, space = OracleConstants(), Boundaries(), default_space()
    timings = {}

    t0 = time.perf_counter()
    ds = generate_dataset(space, args.n, args.seed, c, b)
    save_dataset(ds, out / "dataset.jsonl")
    timings["sample"] = time.perf_counter() - t0
    print(f"dataset: {len(ds)} samples, {len(ds.valid_samples)} valid")

    t0 = time.perf_counter()
    mop = train_mop(ds, SplitSpec(0.25, args.seed))
    timings["train"] = time.perf_counter() - t0
    save_model(mop, out / "model.jsonl")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cm = cop_matrix(mop, ds)
    (out / "cop_matrix.txt").write_text(cm.format() + "\n")
    print(cm.format())

    t0 = time.perf_counter()
    db = build_database(mop, space, args.db_n, args.db_seed, b, c)
    db = pareto_front(apply_constraints(db, parse_constraints("eta>92")))
    timings["build_db"] = time.perf_counter() - t0
    save_database(db, out / "db.jsonl")
    export_plot_csv(db, out / "plot.csv")
    print(f"database: {len(db)} records, {len(db.feasible)} feasible, {len(db.front)} on front")

    ranking = query(db, SpecQuery.parse(args.spec, top_k=6))
    timings["query"] = ranking.search_time
    (out / "ranking.csv").write_text(ranking.to_csv())
    print(f"\nspec {args.spec}: {ranking.n_matching} matches ({ranking.status})")
    if ranking.entries:
        print(ranking.to_table())
        best = ranking.entries[0][0]
        bundle = compare_report(best, REFERENCE_DESIGN, oracle=True, b=b, c=c,
                                labels=(f"No.{best.id}", "reference"))
        (out / "report.csv").write_text(bundle.to_csv())
        print("\n" + bundle.to_text())

    report = verify_with_oracle(db, "front", b, c)
    (out / "verify_front.json").write_text(json.dumps(report.to_dict(), indent=1))
    print("\nfront vs oracle:")
    for q in ("pout_kva", "w_kg", "eta_pct"):
        print(f"  {q:>9}: max {100 * report.max_rel_err(q):6.2f} %  "
              f"mean {100 * report.mean_rel_err(q):5.2f} %")
    (out / "timings.json").write_text(json.dumps(timings, indent=1))
    print("\ntimings (s): " + ", ".join(f"{k} {v:.3f}" for k, v in timings.items()))


if __name__ == "__main__":
    main()
