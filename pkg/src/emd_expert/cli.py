"""Command-line pipeline: sample -> train -> build-db -> query / verify / report.

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from datetime import datetime, timezone

from . import _io
from .errors import EmdError
from .expert_db import (apply_constraints, build_database, export_plot_csv, load_database,
                        parse_constraints, pareto_front, save_database, verify_with_oracle)
from .guide import REFERENCE_DESIGN, SpecQuery, compare_report, query
from .mop import cop_matrix, load_model, save_model, train_mop
from .sampling import (DesignSpace, SplitSpec, default_space, generate_dataset, load_dataset,
                       save_dataset)
from .wrsg import Boundaries, OracleConstants

log = logging.getLogger("emd_expert")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_constants(path) -> OracleConstants:
    """Flat JSON object whose keys are OracleConstants field names."""
    if path is None:
        return OracleConstants()
    values = _load_json(path)
    if not isinstance(values, dict):
        raise ValueError(f"{path}: constants file must hold a flat JSON object")
    return OracleConstants.from_mapping(values)


def load_space(path) -> DesignSpace:
    return default_space() if path is None else DesignSpace.from_dict(_load_json(path))


def cmd_sample(args, c):
    created = datetime.now(timezone.utc).isoformat(timespec="seconds") if args.stamp else None
    ds = generate_dataset(load_space(args.space_file), args.n, args.seed, c, Boundaries(),
                          workers=args.workers, created=created)
    save_dataset(ds, args.out)
    print(f"{len(ds)} samples, {len(ds.valid_samples)} valid -> {args.out}")


def cmd_train(args, c):
    ds = load_dataset(args.data)
    t0 = time.perf_counter()
    mop = train_mop(ds, SplitSpec(args.test_fraction, args.seed), workers=args.workers)
    elapsed = time.perf_counter() - t0
    save_model(mop, args.out)
    for t, tm in mop.targets.items():
        print(f"{t:>9}: {tm.model.kind.label:<22} vars={','.join(tm.model.variables):<24} "
              f"CoP={tm.cop:.4f}")
    print(f"trained in {elapsed:.2f} s -> {args.out}")
    if args.cop_matrix:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            print(cop_matrix(mop, ds).format())


def cmd_build_db(args, c):
    mop = load_model(args.model)
    t0 = time.perf_counter()
    db = build_database(mop, load_space(args.space_file), args.n, args.seed, Boundaries(), c)
    db = pareto_front(apply_constraints(db, parse_constraints(args.constraints)))
    elapsed = time.perf_counter() - t0
    save_database(db, args.out)
    if args.plot_csv:
        export_plot_csv(db, args.plot_csv)
    print(f"{len(db)} records ({db.n_dropped} invalid dropped), {len(db.feasible)} feasible, "
          f"{len(db.front)} on front, {elapsed:.2f} s -> {args.out}")


def cmd_query(args, c):
    db = load_database(args.db)
    q = SpecQuery.parse(args.spec, rank_by=args.rank_by, top_k=args.top_k)
    ranking = query(db, q)
    if args.format == "csv":
        sys.stdout.write(ranking.to_csv())
    elif args.format == "lines":
        for row in ranking.rows():
            print(_io.dumps(row))
    else:
        print(f"spec: {q.spec or '(none)'}  matches: {ranking.n_matching}  "
              f"status: {ranking.status}  search: {1e3 * ranking.search_time:.1f} ms")
        if ranking.entries:
            print(ranking.to_table())
    if ranking.status == "no_solution":
        print("no_solution: no design satisfies the query", file=sys.stderr)


def cmd_verify(args, c):
    db = load_database(args.db)
    report = verify_with_oracle(db, args.which, None, c)
    doc = report.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    for q, agg in doc["aggregates"].items():
        print(f"{q:>9}: max rel err {100 * agg['max']:.3f} %  mean {100 * agg['mean']:.3f} %")
    print(f"{doc['n_checked']} records checked, {doc['n_failed']} oracle failures")


def cmd_report(args, c):
    db = load_database(args.db)
    if not 0 <= args.id < len(db):
        raise EmdError("unknown_record", f"no record {args.id} in {args.db}")
    reference = REFERENCE_DESIGN if args.baseline_file is None else _load_json(args.baseline_file)
    bundle = compare_report(db[args.id], reference, oracle=args.oracle, b=db.boundaries, c=c,
                            labels=(f"No.{args.id}", "reference"))
    print(bundle.to_text())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(bundle.to_csv())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--constants-file", help="JSON object overriding oracle constants")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="emd-expert", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="generate an oracle-evaluated dataset")
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--space-file")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--stamp", action="store_true", help="record creation time in the header")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("train", parents=[common], help="train the per-target metamodels")
    s.add_argument("--data", required=True)
    s.add_argument("--test-fraction", type=float, default=0.25)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--cop-matrix", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("build-db", parents=[common], help="sweep the surrogate into a database")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=9900)
    s.add_argument("--seed", type=int, default=11)
    s.add_argument("--space-file")
    s.add_argument("--constraints", default="eta>92",
                   help='feasibility partition applied before front extraction; "" for none')
    s.add_argument("--plot-csv")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_db)

    s = sub.add_parser("query", parents=[common], help="retrieve designs meeting a spec")
    s.add_argument("--db", required=True)
    s.add_argument("--spec", required=True, help='e.g. "pout>30,w<17,eta>92,d2<205"')
    s.add_argument("--top-k", type=int, default=6)
    s.add_argument("--rank-by", choices=("power_density", "pout", "eta"), default="power_density")
    s.add_argument("--format", choices=("table", "csv", "lines"), default="table")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("verify", parents=[common], help="re-evaluate records with the oracle")
    s.add_argument("--db", required=True)
    s.add_argument("--which", default="front", help="front | sample:k:seed")
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", parents=[common], help="compare a record with a reference")
    s.add_argument("--db", required=True)
    s.add_argument("--id", type=int, required=True)
    s.add_argument("--baseline-file")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_report)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        c = load_constants(args.constants_file)
        args.func(args, c)
    except EmdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
