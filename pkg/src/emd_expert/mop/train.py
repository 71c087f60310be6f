"""Metamodel of optimal prognosis: screen inputs, fit candidates, keep the best.

For each target the candidates are every metamodel kind crossed with every
significance subset of the inputs. Each is fitted on the training split and
scored by CoP on the test split; the highest CoP wins.
"""

from __future__ import annotations

import hashlib
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import _io
from ..errors import EmdWarning, FitError
from ..sampling import Dataset, SplitSpec, split_dataset
from ..wrsg import VAR_NAMES
from .metamodels import KRIGING, MLS, PLS, FittedMetamodel, TrainMatrix, fit_metamodel
from .stats import cop_score, correlation_coefficient, rmse

log = logging.getLogger(__name__)

STRONG = 0.7
WEAK = 0.3
DEFAULT_TARGETS = ("pout_kva", "w_kg", "eta_pct")
MLS_BANDWIDTHS = (0.5, 1.0, 2.0)
# CoP values closer than this count as tied, so parsimony decides
TIE_TOL = 1e-10


def candidate_kinds():
    return [PLS(1), PLS(2)] + [MLS(h) for h in MLS_BANDWIDTHS] + [KRIGING()]


@dataclass(frozen=True)
class SignificanceReport:
    var_names: tuple
    targets: tuple
    rho: np.ndarray   # n_vars x n_targets

    def __post_init__(self):
        if self.rho.shape != (len(self.var_names), len(self.targets)):
            raise ValueError("rho shape does not match names")

    def column(self, target):
        return self.rho[:, self.targets.index(target)]

    @property
    def strong(self):
        return {(v, t) for (i, v) in enumerate(self.var_names)
                for (j, t) in enumerate(self.targets) if abs(self.rho[i, j]) >= STRONG}

    @property
    def weak(self):
        return {(v, t) for (i, v) in enumerate(self.var_names)
                for (j, t) in enumerate(self.targets) if abs(self.rho[i, j]) < WEAK}

    def to_dict(self):
        return {"var_names": list(self.var_names), "targets": list(self.targets),
                "rho": self.rho.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["var_names"]), tuple(d["targets"]),
                   np.asarray(d["rho"], dtype=float).reshape(len(d["var_names"]), len(d["targets"])))


def significance_subsets(report: SignificanceReport, target) -> list[tuple]:
    """Input subsets to try, from most to least selective: |rho| >= 0.7, >= 0.3, all."""
    rho = report.column(target)
    out = []
    for cut in (STRONG, WEAK, None):
        subset = tuple(v for v, r in zip(report.var_names, rho) if cut is None or abs(r) >= cut)
        if subset and subset not in out:
            out.append(subset)
    return out


@dataclass(frozen=True)
class TargetModel:
    model: FittedMetamodel
    cop: float
    candidates_tried: int
    rmse: float = float("nan")

    def to_dict(self):
        d = self.model.to_dict()
        d["cop"] = self.cop
        d["candidates_tried"] = self.candidates_tried
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(FittedMetamodel.from_dict(d), float(d["cop"]), int(d["candidates_tried"]))


@dataclass(frozen=True)
class MopModel:
    targets: dict            # target name -> TargetModel
    significance: SignificanceReport
    split: SplitSpec
    input_names: tuple = VAR_NAMES

    def __getitem__(self, target):
        return self.targets[target]

    def predict(self, target, x):
        return self.targets[target].model.predict(x)

    def cop(self, target):
        return self.targets[target].cop


def cop(model: FittedMetamodel, test_inputs, test_targets) -> float:
    return cop_score(test_targets, model.predict(np.asarray(test_inputs, dtype=float)))


def dataset_arrays(ds: Dataset, target):
    X = np.array([s.x.as_tuple() for s in ds.samples], dtype=float).reshape(-1, len(VAR_NAMES))
    y = np.array([getattr(s.p, target) for s in ds.samples], dtype=float)
    return X, y


def significance_report(train: Dataset, targets) -> SignificanceReport:
    X, _ = dataset_arrays(train, targets[0])
    names = tuple(n for j, n in enumerate(VAR_NAMES) if np.ptp(X[:, j]) > 0)
    rho = np.zeros((len(names), len(targets)))
    for j, t in enumerate(targets):
        _, y = dataset_arrays(train, t)
        for i, n in enumerate(names):
            rho[i, j] = correlation_coefficient(y, X[:, VAR_NAMES.index(n)])
    return SignificanceReport(names, tuple(targets), rho)


def _selection_key(item):
    kind_model, subset = item[0], item[1]
    return (len(subset), kind_model.simplicity)


def select_winner(scored):
    """``scored``: list of (kind, subset, cop, fitted). Highest CoP; ties go to the simplest."""
    best = max(s[2] for s in scored)
    tied = [s for s in scored if s[2] >= best - TIE_TOL]
    return min(tied, key=_selection_key)


def _score_candidate(args):
    kind, subset, tm, X_test, y_test = args
    try:
        fitted = fit_metamodel(kind, tm, subset)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmdWarning)
            score = cop(fitted, X_test, y_test)
    except (FitError, np.linalg.LinAlgError) as exc:
        log.debug("candidate %s on %s failed: %s", kind.label, subset, exc)
        return None
    return kind, subset, score, fitted


def train_target(train: Dataset, test: Dataset, target, report: SignificanceReport,
                 workers=1) -> tuple[TargetModel, list]:
    X_tr, y_tr = dataset_arrays(train, target)
    X_te, y_te = dataset_arrays(test, target)
    tm = TrainMatrix.build(X_tr, y_tr, VAR_NAMES, target)
    jobs = [(kind, subset, tm, X_te, y_te)
            for subset in significance_subsets(report, target)
            for kind in candidate_kinds()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score_candidate, jobs))
    else:
        results = [_score_candidate(j) for j in jobs]
    scored = [r for r in results if r is not None]
    if not scored:
        raise FitError("no_viable_metamodel", f"every candidate failed for {target}")
    kind, subset, score, fitted = select_winner(scored)
    err = rmse(y_te, fitted.predict(X_te))
    log.info("%s: winner %s on %s, CoP=%.4f, RMSE=%.4g (%d candidates)",
             target, fitted.kind.label, subset, score, err, len(jobs))
    return TargetModel(fitted, score, len(jobs), err), scored


def train_mop(ds: Dataset, split: SplitSpec = SplitSpec(), targets=DEFAULT_TARGETS,
              workers=1) -> MopModel:
    t0 = time.perf_counter()
    targets = tuple(targets)
    train, test = split_dataset(ds, split)
    if len(test) < 3:
        raise FitError("too_few_test_points", f"test split has {len(test)} samples, need >= 3")
    for t in targets:
        _, y_te = dataset_arrays(test, t)
        if np.all(y_te == y_te[0]):
            raise FitError("degenerate_test_set", f"target {t} is constant on the test split")
    report = significance_report(train, targets)
    results = {t: train_target(train, test, t, report, workers)[0] for t in targets}
    log.info("trained %d targets in %.2f s", len(targets), time.perf_counter() - t0)
    return MopModel(results, report, split)


@dataclass(frozen=True)
class CopMatrix:
    var_names: tuple
    targets: tuple
    values: np.ndarray    # n_vars x n_targets, single-variable CoP
    total: np.ndarray     # per target, the winner's CoP

    def format(self):
        head = f"{'':>8}" + "".join(f"{t:>10}" for t in self.targets)
        lines = [head]
        for i, v in enumerate(self.var_names):
            lines.append(f"{v:>8}" + "".join(f"{x:>10.3f}" for x in self.values[i]))
        lines.append(f"{'total':>8}" + "".join(f"{x:>10.3f}" for x in self.total))
        return "\n".join(lines)


def _single_variable_cop(kind, tm, v, X_te, y_te):
    # a kind that cannot fit one input alone (Kriging on a projection with
    # conflicting neighbours) falls back to a quadratic, then a line
    for k in (kind, PLS(2), PLS(1)):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmdWarning)
                score = cop(fit_metamodel(k, tm, (v,)), X_te, y_te)
        except FitError as exc:
            warnings.warn(f"cop_matrix_fallback: {k.label} on {v} for {tm.target_name} "
                          f"failed ({exc.code})", EmdWarning, stacklevel=3)
            continue
        return score
    return 0.0


def cop_matrix(mop: MopModel, ds: Dataset) -> CopMatrix:
    """Per-variable CoP: the winner's kind refitted on that input alone.

    The last column (``total``) is the winner's own CoP.
    """
    train, test = split_dataset(ds, mop.split)
    targets = tuple(mop.targets)
    names = mop.significance.var_names
    values = np.zeros((len(names), len(targets)))
    for j, t in enumerate(targets):
        winner = mop[t].model
        X_tr, y_tr = dataset_arrays(train, t)
        X_te, y_te = dataset_arrays(test, t)
        tm = TrainMatrix.build(X_tr, y_tr, VAR_NAMES, t)
        kind = winner.kind
        if kind.name == "KRIGING":
            kind = KRIGING()
        for i, v in enumerate(names):
            values[i, j] = _single_variable_cop(kind, tm, v, X_te, y_te)
    total = np.array([mop.cop(t) for t in targets])
    return CopMatrix(names, targets, values, total)


def model_lines(mop: MopModel):
    header = {"kind": "mop", "input_names": list(mop.input_names),
              "split": {"test_fraction": mop.split.test_fraction, "seed": mop.split.seed},
              "significance": mop.significance.to_dict(), "targets": list(mop.targets)}
    return header, [mop.targets[t].to_dict() for t in mop.targets]


def serialize_model(mop: MopModel) -> str:
    header, rows = model_lines(mop)
    return "".join(_io.dumps(o) + "\n" for o in [header, *rows])


def model_fingerprint(mop: MopModel) -> str:
    """SHA-256 of the serialized model file."""
    return hashlib.sha256(serialize_model(mop).encode("utf-8")).hexdigest()


def save_model(mop: MopModel, path):
    header, rows = model_lines(mop)
    _io.write_jsonl(path, header, rows)


def load_model(path) -> MopModel:
    header, rows = _io.read_jsonl(path, FitError, "corrupt_model")
    if header.get("kind") != "mop":
        raise FitError("corrupt_model", f"{path}: not a model file")
    try:
        targets = {r["target"]: TargetModel.from_dict(r) for r in rows}
        split = SplitSpec(**header["split"])
        report = SignificanceReport.from_dict(header["significance"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FitError("corrupt_model", f"{path}: {exc}") from exc
    if list(targets) != header.get("targets", list(targets)):
        raise FitError("corrupt_model", f"{path}: target list does not match records")
    return MopModel(targets, report, split, tuple(header.get("input_names", VAR_NAMES)))
