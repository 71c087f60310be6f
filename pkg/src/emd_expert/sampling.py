"""Design space, Latin hypercube sampling and oracle-evaluated datasets."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from . import _io
from .errors import SamplingError
from .wrsg import (Boundaries, DependentParams, GeometryVars, OracleConstants, Performance,
                   Reason, derive_dependent, evaluate_performance, validate)

CONTINUOUS = ("d1", "d2", "l", "pbh", "pbw")


@dataclass(frozen=True)
class DesignSpace:
    bounds: tuple = (("d1", 100.0, 200.0), ("d2", 120.0, 250.0), ("l", 40.0, 80.0),
                     ("pbh", 20.0, 40.0), ("pbw", 20.0, 40.0))
    na_levels: tuple = (5, 6, 7)

    def __post_init__(self):
        names = tuple(name for name, _, _ in self.bounds)
        if names != CONTINUOUS:
            raise ValueError(f"bounds must cover {CONTINUOUS} in order, got {names}")
        for name, lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bad bounds for {name}: [{lo}, {hi}]")
        if not self.na_levels or any(int(k) != k or k < 1 for k in self.na_levels):
            raise ValueError(f"na_levels must be non-empty positive integers: {self.na_levels}")

    def bound(self, name):
        for n, lo, hi in self.bounds:
            if n == name:
                return lo, hi
        raise KeyError(name)

    def to_dict(self):
        return {"bounds": {n: [lo, hi] for n, lo, hi in self.bounds},
                "na": list(self.na_levels)}

    @classmethod
    def from_dict(cls, d):
        b = d["bounds"]
        return cls(bounds=tuple((n, float(b[n][0]), float(b[n][1])) for n in CONTINUOUS),
                   na_levels=tuple(int(k) for k in d["na"]))


def default_space() -> DesignSpace:
    return DesignSpace()


@dataclass(frozen=True)
class Sample:
    id: int
    x: GeometryVars
    m: DependentParams
    p: Performance | None
    reasons: tuple = ()

    @property
    def valid(self):
        return self.p is not None

    def to_dict(self):
        return {
            "id": self.id,
            "x": self.x.to_dict(),
            "m": self.m.to_dict(),
            "p": None if self.p is None else self.p.to_dict(),
            "valid": self.valid,
            "reasons": [{"rule": r.rule, "message": r.message} for r in self.reasons],
        }

    @classmethod
    def from_dict(cls, d):
        p = d.get("p")
        s = cls(
            id=int(d["id"]),
            x=GeometryVars.from_dict(d["x"]),
            m=DependentParams.from_dict(d["m"]),
            p=None if p is None else Performance.from_dict(p),
            reasons=tuple(Reason(r["rule"], r["message"]) for r in d.get("reasons", [])),
        )
        if s.valid != bool(d["valid"]) or (s.valid and s.reasons):
            raise SamplingError("corrupt_dataset", f"sample {s.id}: valid flag disagrees with content")
        return s


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    seed: int
    space: DesignSpace = field(default_factory=default_space)
    created: str | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def valid_samples(self):
        return [s for s in self.samples if s.valid]

    def header(self):
        return {"kind": "dataset", "seed": self.seed, "space": self.space.to_dict(),
                "created": self.created, "n_samples": len(self.samples)}


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def sample_lhs(space: DesignSpace, n: int, seed: int) -> list[GeometryVars]:
    """Latin hypercube over the continuous variables; ``na`` drawn uniformly.

    Each continuous dimension gets exactly one point in each of ``n`` equal
    bins. The turn count of point ``i`` comes from its own generator seeded
    by ``(seed, i)``.
    """
    if n < 2:
        raise SamplingError("too_few_samples", f"n must be >= 2, got {n}")
    return lhs_points(space, n, seed)


def lhs_points(space: DesignSpace, n: int, seed: int) -> list[GeometryVars]:
    """As :func:`sample_lhs` but also accepts ``n == 1``."""
    if n < 1:
        raise SamplingError("too_few_samples", f"n must be >= 1, got {n}")
    if seed < 0:
        raise SamplingError("bad_seed", "seed must be non-negative")
    engine = qmc.LatinHypercube(d=len(CONTINUOUS), seed=np.random.default_rng(seed))
    unit = engine.random(n)
    lo = np.array([b[1] for b in space.bounds])
    hi = np.array([b[2] for b in space.bounds])
    pts = lo + unit * (hi - lo)
    levels = space.na_levels
    out = []
    for i, row in enumerate(pts):
        na = levels[int(np.random.default_rng([seed, i]).integers(len(levels)))]
        out.append(GeometryVars(*(float(v) for v in row), int(na)))
    return out


def _evaluate_one(args):
    i, x, b, c = args
    m = derive_dependent(x, b)
    report = validate(x, m, b, c)
    p = evaluate_performance(x, m, b, c) if report.valid else None
    return Sample(id=i, x=x, m=m, p=p, reasons=report.reasons)


def generate_dataset(space: DesignSpace, n: int, seed: int,
                     c: OracleConstants = OracleConstants(), b: Boundaries = Boundaries(),
                     workers: int = 1, created: str | None = None) -> Dataset:
    xs = sample_lhs(space, n, seed)
    jobs = [(i, x, b, c) for i, x in enumerate(xs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_evaluate_one, jobs))
    else:
        samples = [_evaluate_one(j) for j in jobs]
    samples.sort(key=lambda s: s.id)
    return Dataset(samples=tuple(samples), seed=seed, space=space, created=created)


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffle the valid samples and cut off a test share; both parts keep id order."""
    valid = ds.valid_samples
    nv = len(valid)
    if nv < 4:
        raise SamplingError("too_few_valid", f"need >= 4 valid samples to split, have {nv}")
    n_test = int(math.floor(spec.test_fraction * nv + 0.5))
    n_test = min(max(n_test, 1), nv - 1)
    order = np.random.default_rng(spec.seed).permutation(nv)
    test_idx = set(order[:n_test].tolist())
    train = tuple(s for k, s in enumerate(valid) if k not in test_idx)
    test = tuple(s for k, s in enumerate(valid) if k in test_idx)
    return replace(ds, samples=train), replace(ds, samples=test)


def dataset_rows(ds: Dataset):
    return [s.to_dict() for s in ds.samples]


def save_dataset(ds: Dataset, path):
    _io.write_jsonl(path, ds.header(), dataset_rows(ds))


def load_dataset(path) -> Dataset:
    header, rows = _io.read_jsonl(path, SamplingError, "corrupt_dataset")
    if header.get("kind") != "dataset":
        raise SamplingError("corrupt_dataset", f"{path}: not a dataset file")
    try:
        samples = tuple(Sample.from_dict(r) for r in rows)
        space = DesignSpace.from_dict(header["space"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SamplingError("corrupt_dataset", f"{path}: {exc}") from exc
    if header.get("n_samples", len(samples)) != len(samples):
        raise SamplingError("corrupt_dataset", f"{path}: expected {header['n_samples']} samples")
    return Dataset(samples=samples, seed=int(header["seed"]), space=space,
                   created=header.get("created"))
