"""Surrogate-generated design database, constraint partitioning and Pareto front."""

from __future__ import annotations

import csv
import logging
import math
import re
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _io
from .errors import DatabaseError, EmdWarning, QueryError
from .mop.train import MopModel, model_fingerprint
from .sampling import DesignSpace, default_space, lhs_points
from .wrsg import (Boundaries, DependentParams, GeometryVars, OracleConstants, VAR_NAMES,
                   derive_dependent, evaluate_performance, validate)

log = logging.getLogger(__name__)

PREDICTED = ("pout_kva", "w_kg", "eta_pct")
QUANTITIES = ("pout_kva", "w_kg", "eta_pct", "d2", "n")
ALIASES = {"pout": "pout_kva", "p": "pout_kva", "w": "w_kg", "eta": "eta_pct",
           **{q: q for q in QUANTITIES}}
SHORT = {"pout_kva": "pout", "w_kg": "w", "eta_pct": "eta", "d2": "d2", "n": "n"}
OPS = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
}
_CONSTRAINT_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(>=|<=|>|<|≥|≤)\s*(\S+)\s*$")


@dataclass(frozen=True)
class Constraint:
    quantity: str
    op: str
    value: float

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise QueryError("unknown_quantity", f"{self.quantity!r} is not one of {QUANTITIES}")
        if self.op not in OPS:
            raise QueryError("bad_operator", f"{self.op!r}")
        if not math.isfinite(self.value):
            raise QueryError("bad_value", f"constraint value must be finite, got {self.value}")

    def holds(self, value):
        return OPS[self.op](value, self.value)

    def __str__(self):
        v = self.value
        text = str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
        return f"{SHORT[self.quantity]}{self.op}{text}"

    @classmethod
    def parse(cls, text):
        m = _CONSTRAINT_RE.match(text)
        if not m:
            raise QueryError("bad_spec", f"cannot parse constraint {text!r}")
        name, op, value = m.groups()
        op = {"≥": ">=", "≤": "<="}.get(op, op)
        if name.lower() not in ALIASES:
            raise QueryError("unknown_quantity", f"{name!r} is not one of {sorted(ALIASES)}")
        try:
            v = float(value)
        except ValueError:
            raise QueryError("bad_spec", f"not a number: {value!r}") from None
        return cls(ALIASES[name.lower()], op, v)


def parse_constraints(text) -> tuple:
    """``"pout>=30,w<=17"`` -> tuple of Constraint. Empty text means no constraints."""
    parts = [p for p in (text or "").split(",") if p.strip()]
    return tuple(Constraint.parse(p) for p in parts)


def format_constraints(cs) -> str:
    return ",".join(str(c) for c in cs)


@dataclass(frozen=True)
class Predicted:
    pout_kva: float
    w_kg: float
    eta_pct: float

    @property
    def power_density(self):
        return self.pout_kva / self.w_kg


@dataclass(frozen=True)
class DesignRecord:
    id: int
    x: GeometryVars
    m: DependentParams
    p_pred: Predicted
    feasible: bool = True
    on_front: bool = False

    def value(self, quantity, b: Boundaries):
        if quantity in PREDICTED:
            return getattr(self.p_pred, quantity)
        if quantity == "d2":
            return self.x.d2
        if quantity == "n":
            return b.n_rated
        raise QueryError("unknown_quantity", quantity)

    def to_dict(self):
        return {"id": self.id, "x": self.x.to_dict(), "m": self.m.to_dict(),
                "p_pred": asdict(self.p_pred), "feasible": self.feasible,
                "on_front": self.on_front}

    @classmethod
    def from_dict(cls, d):
        return cls(id=int(d["id"]), x=GeometryVars.from_dict(d["x"]),
                   m=DependentParams.from_dict(d["m"]),
                   p_pred=Predicted(**{k: float(d["p_pred"][k]) for k in PREDICTED}),
                   feasible=bool(d["feasible"]), on_front=bool(d["on_front"]))


@dataclass(frozen=True)
class ExpertDatabase:
    records: tuple
    seed: int
    space: DesignSpace = field(default_factory=default_space)
    model_fingerprint: str = ""
    constraints: tuple = ()
    boundaries: Boundaries = Boundaries()
    n_requested: int = 0
    n_dropped: int = 0

    def __len__(self):
        return len(self.records)

    def __getitem__(self, record_id):
        # ids are contiguous from 0, so the id is also the position
        if not 0 <= record_id < len(self.records):
            raise QueryError("unknown_record", f"no record {record_id}")
        return self.records[record_id]

    @property
    def feasible(self):
        return [r for r in self.records if r.feasible]

    @property
    def front(self):
        return [r for r in self.records if r.on_front]

    def header(self):
        return {"kind": "expert_db", "seed": self.seed, "space": self.space.to_dict(),
                "model_fingerprint": self.model_fingerprint,
                "constraints": [str(c) for c in self.constraints],
                "boundaries": asdict(self.boundaries),
                "n_requested": self.n_requested, "n_dropped": self.n_dropped,
                "n_records": len(self.records)}


def satisfies(record: DesignRecord, cs, b: Boundaries) -> bool:
    return all(c.holds(record.value(c.quantity, b)) for c in cs)


def build_database(mop: MopModel, space: DesignSpace, n: int, seed: int,
                   b: Boundaries = Boundaries(), c: OracleConstants = OracleConstants()
                   ) -> ExpertDatabase:
    """Sweep the design space with the surrogate; geometry-invalid points are dropped."""
    missing = [t for t in PREDICTED if t not in mop.targets]
    if missing:
        raise DatabaseError("model_target_mismatch", f"model lacks targets {missing}")
    if tuple(mop.input_names) != VAR_NAMES:
        raise DatabaseError("model_target_mismatch", f"model inputs {mop.input_names}")
    t0 = time.perf_counter()
    kept = []
    for x in lhs_points(space, n, seed):
        m = derive_dependent(x, b)
        if validate(x, m, b, c).valid:
            kept.append((x, m))
    X = np.array([x.as_tuple() for x, _ in kept], dtype=float).reshape(-1, len(VAR_NAMES))
    preds = {t: mop.predict(t, X) for t in PREDICTED}
    records = []
    for i, (x, m) in enumerate(kept):
        p = Predicted(*(float(preds[t][i]) for t in PREDICTED))
        if not all(math.isfinite(v) for v in (p.pout_kva, p.w_kg, p.eta_pct)):
            raise DatabaseError("nonfinite_prediction", f"surrogate returned {p} for {x}")
        records.append(DesignRecord(id=i, x=x, m=m, p_pred=p))
    log.info("built %d records from %d samples in %.2f s", len(records), n,
             time.perf_counter() - t0)
    return ExpertDatabase(records=tuple(records), seed=seed, space=space,
                          model_fingerprint=model_fingerprint(mop), boundaries=b,
                          n_requested=n, n_dropped=n - len(records))


def apply_constraints(db: ExpertDatabase, cs) -> ExpertDatabase:
    """Flag every record against the conjunction of ``cs``; clears front flags."""
    cs = tuple(cs)
    for c in cs:
        if c.quantity not in QUANTITIES:
            raise QueryError("unknown_quantity", c.quantity)
    records = tuple(replace(r, feasible=satisfies(r, cs, db.boundaries), on_front=False)
                    for r in db.records)
    n_feas = sum(r.feasible for r in records)
    log.info("constraints %s: %d feasible, %d infeasible", format_constraints(cs) or "(none)",
             n_feas, len(records) - n_feas)
    return replace(db, records=records, constraints=cs)


def front_mask(power, weight, feasible=None):
    """Non-dominated mask for maximising ``power`` and minimising ``weight``.

    Records equal on both objectives do not dominate each other, so ties stay
    together on the front. Runs in O(n log n).
    """
    power = np.asarray(power, dtype=float)
    weight = np.asarray(weight, dtype=float)
    n = len(power)
    feasible = np.ones(n, dtype=bool) if feasible is None else np.asarray(feasible, dtype=bool)
    mask = np.zeros(n, dtype=bool)
    idx = np.flatnonzero(feasible)
    if idx.size == 0:
        return mask
    order = idx[np.lexsort((weight[idx], -power[idx]))]
    best_w = math.inf    # lightest record with strictly more power
    k = 0
    while k < len(order):
        j = k
        p = power[order[k]]
        while j < len(order) and power[order[j]] == p:
            j += 1
        level = order[k:j]
        w_min = weight[level[0]]
        if w_min < best_w:
            mask[level[weight[level] == w_min]] = True
        best_w = min(best_w, w_min)
        k = j
    return mask


def pareto_front(db: ExpertDatabase) -> ExpertDatabase:
    recs = db.records
    mask = front_mask([r.p_pred.pout_kva for r in recs], [r.p_pred.w_kg for r in recs],
                      [r.feasible for r in recs])
    if recs and not any(r.feasible for r in recs):
        warnings.warn("empty_front: no feasible records", EmdWarning, stacklevel=2)
    return replace(db, records=tuple(replace(r, on_front=bool(f)) for r, f in zip(recs, mask)))


@dataclass(frozen=True)
class RecordCheck:
    id: int
    predicted: Predicted
    oracle: Predicted | None
    rel_err: dict      # quantity -> |pred - oracle| / |oracle|
    error: str | None = None


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple

    def _errors(self, q):
        return [c.rel_err[q] for c in self.checks if c.error is None]

    def max_rel_err(self, q):
        e = self._errors(q)
        return max(e) if e else 0.0

    def mean_rel_err(self, q):
        e = self._errors(q)
        return float(np.mean(e)) if e else 0.0

    @property
    def failures(self):
        return [c for c in self.checks if c.error is not None]

    def to_dict(self):
        return {
            "n_checked": len(self.checks),
            "n_failed": len(self.failures),
            "aggregates": {q: {"max": self.max_rel_err(q), "mean": self.mean_rel_err(q)}
                           for q in PREDICTED},
            "records": [{"id": c.id, "predicted": asdict(c.predicted),
                         "oracle": None if c.oracle is None else asdict(c.oracle),
                         "rel_err": c.rel_err, "error": c.error} for c in self.checks],
        }


def select_records(db: ExpertDatabase, which):
    """``which``: ``"front"``, ``("sample", k, seed)``, ``"sample:k:seed"`` or a list of ids."""
    if isinstance(which, str) and which.startswith("sample:"):
        try:
            _, k, seed = which.split(":")
            which = ("sample", int(k), int(seed))
        except ValueError:
            raise QueryError("bad_selection", f"expected sample:k:seed, got {which!r}") from None
    if which == "front":
        return db.front
    if isinstance(which, tuple) and which[0] == "sample":
        _, k, seed = which
        k = min(int(k), len(db.records))
        picks = np.random.default_rng(seed).choice(len(db.records), size=k, replace=False)
        return [db.records[i] for i in sorted(picks.tolist())]
    if isinstance(which, str):
        raise QueryError("bad_selection", f"unknown selection {which!r}")
    return [db[i] for i in which]


def verify_with_oracle(db: ExpertDatabase, which="front", b: Boundaries | None = None,
                       c: OracleConstants = OracleConstants()) -> VerificationReport:
    """Re-evaluate selected records with the analytical oracle and compare."""
    b = db.boundaries if b is None else b
    checks = []
    for r in select_records(db, which):
        try:
            p = evaluate_performance(r.x, r.m, b, c)
        except Exception as exc:  # per-record failure is reported, not raised
            checks.append(RecordCheck(r.id, r.p_pred, None, {}, f"{type(exc).__name__}: {exc}"))
            continue
        o = Predicted(p.pout_kva, p.w_kg, p.eta_pct)
        rel = {q: abs(getattr(r.p_pred, q) - getattr(o, q)) / abs(getattr(o, q)) for q in PREDICTED}
        checks.append(RecordCheck(r.id, r.p_pred, o, rel))
    return VerificationReport(tuple(checks))


def save_database(db: ExpertDatabase, path):
    _io.write_jsonl(path, db.header(), [r.to_dict() for r in db.records])


def load_database(path, model: MopModel | None = None) -> ExpertDatabase:
    header, rows = _io.read_jsonl(path, DatabaseError, "corrupt_database")
    if header.get("kind") != "expert_db":
        raise DatabaseError("corrupt_database", f"{path}: not a database file")
    try:
        records = tuple(DesignRecord.from_dict(r) for r in rows)
        db = ExpertDatabase(
            records=records,
            seed=int(header["seed"]),
            space=DesignSpace.from_dict(header["space"]),
            model_fingerprint=header["model_fingerprint"],
            constraints=parse_constraints(",".join(header.get("constraints", []))),
            boundaries=Boundaries(**header.get("boundaries", {})),
            n_requested=int(header.get("n_requested", 0)),
            n_dropped=int(header.get("n_dropped", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatabaseError("corrupt_database", f"{path}: {exc}") from exc
    if header.get("n_records", len(records)) != len(records):
        raise DatabaseError("corrupt_database",
                            f"{path}: header lists {header['n_records']} records, found {len(records)}")
    if [r.id for r in records] != list(range(len(records))):
        raise DatabaseError("corrupt_database", f"{path}: record ids are not contiguous")
    if model is not None and model_fingerprint(model) != db.model_fingerprint:
        warnings.warn(f"stale_model: {path} was built by a different model", EmdWarning,
                      stacklevel=2)
    return db


def export_plot_csv(db: ExpertDatabase, path):
    """Scatter data for power-versus-weight plots."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "w_kg", "pout_kva", "eta_pct", "feasible", "on_front"])
        for r in db.records:
            w.writerow([r.id, repr(r.p_pred.w_kg), repr(r.p_pred.pout_kva),
                        repr(r.p_pred.eta_pct), int(r.feasible), int(r.on_front)])
