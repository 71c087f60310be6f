"""Requirement queries against an expert database, and design comparison reports."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

from .errors import QueryError
from .expert_db import (DesignRecord, ExpertDatabase, format_constraints, parse_constraints,
                        satisfies)
from .wrsg import (Boundaries, GeometryVars, OracleConstants, derive_dependent,
                   evaluate_performance)

RANK_KEYS = {
    "power_density": lambda r: r.p_pred.power_density,
    "pout": lambda r: r.p_pred.pout_kva,
    "eta": lambda r: r.p_pred.eta_pct,
}

# reference machine of conventional design
REFERENCE_DESIGN = {
    "pout_kva": 30.05, "w_kg": 15.11, "eta_pct": 94.45, "d2": 204.95, "l": 70.04,
    "pbh": 22.12, "pbw": 22.36, "d1": 163.40, "na": 7,
}
REPORT_ROWS = ("pout_kva", "w_kg", "eta_pct", "d2", "l", "pbh", "pbw", "d1", "na",
               "power_density")
QUERY_COLUMNS = ("rank", "id", "pout_kva", "w_kg", "eta_pct", "power_density",
                 "d1", "d2", "l", "pbh", "pbw", "na")


@dataclass(frozen=True)
class SpecQuery:
    constraints: tuple = ()
    rank_by: str = "power_density"
    top_k: int = 10

    def __post_init__(self):
        if self.top_k < 1:
            raise QueryError("bad_query", f"top_k must be >= 1, got {self.top_k}")
        if self.rank_by not in RANK_KEYS:
            raise QueryError("bad_query", f"rank_by must be one of {sorted(RANK_KEYS)}")

    @classmethod
    def parse(cls, spec: str, rank_by="power_density", top_k=10):
        return cls(parse_constraints(spec), rank_by, top_k)

    @property
    def spec(self):
        return format_constraints(self.constraints)


@dataclass(frozen=True)
class SolutionRanking:
    entries: tuple           # (DesignRecord, power_density), best first
    query: SpecQuery
    search_time: float
    n_matching: int = 0

    @property
    def status(self):
        return "ok" if self.entries else "no_solution"

    def __len__(self):
        return len(self.entries)

    def rows(self):
        out = []
        for rank, (r, pd) in enumerate(self.entries, start=1):
            out.append({"rank": rank, "id": r.id, "pout_kva": r.p_pred.pout_kva,
                        "w_kg": r.p_pred.w_kg, "eta_pct": r.p_pred.eta_pct,
                        "power_density": pd, "d1": r.x.d1, "d2": r.x.d2, "l": r.x.l,
                        "pbh": r.x.pbh, "pbw": r.x.pbw, "na": r.x.na})
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(QUERY_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
        return buf.getvalue()

    def to_table(self):
        head = (f"{'rank':>4} {'id':>6} {'P/kVA':>8} {'W/kg':>7} {'eta/%':>7} {'kVA/kg':>7} "
                f"{'D1':>7} {'D2':>7} {'L':>6} {'PBH':>6} {'PBW':>6} {'Na':>3}")
        lines = [head]
        for r in self.rows():
            lines.append(f"{r['rank']:>4} {r['id']:>6} {r['pout_kva']:>8.2f} {r['w_kg']:>7.2f} "
                         f"{r['eta_pct']:>7.2f} {r['power_density']:>7.3f} {r['d1']:>7.2f} "
                         f"{r['d2']:>7.2f} {r['l']:>6.2f} {r['pbh']:>6.2f} {r['pbw']:>6.2f} "
                         f"{r['na']:>3}")
        return "\n".join(lines)


def parse_ranking_csv(text):
    """Inverse of :meth:`SolutionRanking.to_csv`: list of row dicts."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: (int(v) if k in ("rank", "id", "na") else float(v)) for k, v in row.items()})
    return rows


def query(db: ExpertDatabase, q: SpecQuery) -> SolutionRanking:
    """Filter by every constraint, rank descending by the chosen key (ties: lower id first)."""
    t0 = time.perf_counter()
    key = RANK_KEYS[q.rank_by]
    hits = [r for r in db.records if satisfies(r, q.constraints, db.boundaries)]
    hits.sort(key=lambda r: (-key(r), r.id))
    entries = tuple((r, r.p_pred.power_density) for r in hits[:q.top_k])
    return SolutionRanking(entries, q, time.perf_counter() - t0, len(hits))


def design_values(design) -> dict:
    """Flatten a record or a literal mapping into the report parameter set."""
    if isinstance(design, DesignRecord):
        v = {"pout_kva": design.p_pred.pout_kva, "w_kg": design.p_pred.w_kg,
             "eta_pct": design.p_pred.eta_pct, **design.x.to_dict()}
    else:
        v = dict(design)
    if "power_density" not in v and "pout_kva" in v and "w_kg" in v:
        v["power_density"] = v["pout_kva"] / v["w_kg"]
    missing = [k for k in REPORT_ROWS if k not in v]
    if missing:
        raise QueryError("missing_fields", f"design lacks {missing}")
    return {k: v[k] for k in REPORT_ROWS}


@dataclass(frozen=True)
class ReportRow:
    name: str
    candidate: float
    reference: float
    abs_delta: float
    rel_delta: float
    oracle: float | None = None
    oracle_rel_err: float | None = None


@dataclass(frozen=True)
class ReportBundle:
    rows: tuple
    candidate_label: str = "candidate"
    reference_label: str = "reference"

    @property
    def has_oracle(self):
        return any(r.oracle is not None for r in self.rows)

    def row(self, name):
        return next(r for r in self.rows if r.name == name)

    def to_text(self):
        cols = ["parameter", self.candidate_label, self.reference_label, "delta", "delta/%"]
        if self.has_oracle:
            cols += ["oracle", "pred err/%"]
        lines = [f"{cols[0]:>13}  " + "  ".join(f"{c:>12}" for c in cols[1:])]
        for r in self.rows:
            cells = [f"{r.name:>13}", f"{r.candidate:>12.4g}", f"{r.reference:>12.4g}",
                     f"{r.abs_delta:>12.4g}", f"{100 * r.rel_delta:>12.2f}"]
            if self.has_oracle:
                cells.append(f"{r.oracle:>12.4g}" if r.oracle is not None else f"{'':>12}")
                cells.append(f"{100 * r.oracle_rel_err:>12.2f}"
                             if r.oracle_rel_err is not None else f"{'':>12}")
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "candidate", "reference", "abs_delta", "rel_delta",
                    "oracle", "oracle_rel_err"])
        for r in self.rows:
            w.writerow([r.name, r.candidate, r.reference, r.abs_delta, r.rel_delta,
                        "" if r.oracle is None else r.oracle,
                        "" if r.oracle_rel_err is None else r.oracle_rel_err])
        return buf.getvalue()


def compare_report(candidate, reference=REFERENCE_DESIGN, oracle=False,
                   b: Boundaries = Boundaries(), c: OracleConstants = OracleConstants(),
                   labels=("candidate", "reference")) -> ReportBundle:
    """Side-by-side comparison; with ``oracle`` the candidate is re-evaluated too."""
    cand = design_values(candidate)
    ref = design_values(reference)
    truth = None
    if oracle:
        x = GeometryVars(float(cand["d1"]), float(cand["d2"]), float(cand["l"]),
                         float(cand["pbh"]), float(cand["pbw"]), int(cand["na"]))
        p = evaluate_performance(x, derive_dependent(x, b), b, c)
        truth = {"pout_kva": p.pout_kva, "w_kg": p.w_kg, "eta_pct": p.eta_pct,
                 "power_density": p.pout_kva / p.w_kg}
    rows = []
    for name in REPORT_ROWS:
        cv, rv = float(cand[name]), float(ref[name])
        delta = cv - rv
        o = err = None
        if truth is not None and name in truth:
            o = truth[name]
            err = abs(cv - o) / abs(o)
        rows.append(ReportRow(name, cv, rv, delta, delta / rv if rv else 0.0, o, err))
    return ReportBundle(tuple(rows), *labels)
