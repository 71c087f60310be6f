"""Candidate metamodels: polynomial least squares, moving least squares, Kriging.

All three work in standardized input coordinates. A fitted model carries its
own scaler and payload, so prediction never needs the training dataset.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..errors import FitError
from ..wrsg import GeometryVars

KRIGING_NUGGET = 1e-10
KRIGING_THETA_GRID = np.logspace(-3, 2, 25)
KRIGING_INTERP_TOL = 1e-7
_CHUNK = 1024


@dataclass(frozen=True)
class MetamodelKind:
    name: str                  # "PLS" | "MLS" | "KRIGING"
    degree: int | None = None
    bandwidth: float | None = None
    theta: float | None = None  # None: choose by maximum likelihood

    def __post_init__(self):
        if self.name == "PLS":
            if self.degree not in (1, 2):
                raise ValueError(f"PLS degree must be 1 or 2, got {self.degree}")
        elif self.name == "MLS":
            if not (self.bandwidth is not None and self.bandwidth > 0):
                raise ValueError(f"MLS bandwidth must be positive, got {self.bandwidth}")
        elif self.name == "KRIGING":
            if self.theta is not None and not self.theta > 0:
                raise ValueError(f"Kriging theta must be positive, got {self.theta}")
        else:
            raise ValueError(f"unknown metamodel kind {self.name!r}")

    @property
    def label(self):
        if self.name == "PLS":
            return f"PLS{self.degree}"
        if self.name == "MLS":
            return f"MLS(h={self.bandwidth:g})"
        return "KRIGING" if self.theta is None else f"KRIGING(theta={self.theta:.4g})"

    @property
    def simplicity(self):
        """Sort key used to break CoP ties: PLS1 < PLS2 < MLS < KRIGING."""
        rank = {"PLS": 0, "MLS": 2, "KRIGING": 3}[self.name]
        if self.name == "PLS":
            rank += self.degree - 1
        return (rank, self.bandwidth or 0.0)

    def hyper(self):
        if self.name == "PLS":
            return {"degree": self.degree}
        if self.name == "MLS":
            return {"bandwidth": self.bandwidth}
        return {"theta": self.theta}


def PLS(degree=1):
    return MetamodelKind("PLS", degree=degree)


def MLS(bandwidth=1.0):
    return MetamodelKind("MLS", bandwidth=float(bandwidth))


def KRIGING(theta=None):
    return MetamodelKind("KRIGING", theta=theta)


@dataclass(frozen=True)
class TrainMatrix:
    inputs: np.ndarray        # standardized, n_samples x n_inputs
    outputs: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    input_names: tuple        # column order of ``inputs`` and of raw vectors
    var_names: tuple          # non-constant inputs, usable for fitting
    target_name: str

    @classmethod
    def build(cls, raw_inputs, outputs, input_names, target_name):
        X = np.asarray(raw_inputs, dtype=float)
        y = np.asarray(outputs, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(input_names) or y.shape != (X.shape[0],):
            raise ValueError(f"inconsistent shapes {X.shape}, {y.shape} for {input_names}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training data contains NaN or inf")
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        keep = stds > 0
        # constant columns keep a unit scale but are never offered for fitting
        stds = np.where(keep, stds, 1.0)
        return cls(
            inputs=(X - means) / stds,
            outputs=y,
            means=means,
            stds=stds,
            input_names=tuple(input_names),
            var_names=tuple(n for n, k in zip(input_names, keep) if k),
            target_name=target_name,
        )

    def columns(self, subset):
        idx = [self.input_names.index(v) for v in subset]
        return self.inputs[:, idx]


def _poly_exponents(k, degree):
    terms = [()]
    for d in range(1, degree + 1):
        terms.extend(itertools.combinations_with_replacement(range(k), d))
    E = np.zeros((len(terms), k), dtype=int)
    for row, combo in enumerate(terms):
        for j in combo:
            E[row, j] += 1
    return E


def _poly_basis(Z, E):
    out = np.ones((Z.shape[0], E.shape[0]))
    for j in range(Z.shape[1]):
        out *= Z[:, j:j + 1] ** E[:, j]
    return out


def _rowsum(A):
    # fixed left-to-right accumulation: numpy reductions may block rows
    # differently for different batch shapes, which breaks bit-identity
    out = np.zeros(A.shape[0])
    for j in range(A.shape[1]):
        out += A[:, j]
    return out


def _sq_dists(A, B):
    out = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        d = A[:, j:j + 1] - B[:, j]
        out += d * d
    return out


@dataclass(frozen=True)
class FittedMetamodel:
    kind: MetamodelKind
    target_name: str
    input_names: tuple
    means: np.ndarray
    stds: np.ndarray
    variables: tuple
    payload: dict = field(repr=False)

    def _standardize(self, x):
        if isinstance(x, GeometryVars):
            X = np.array([[getattr(x, n) for n in self.input_names]], dtype=float)
        else:
            X = np.asarray(x, dtype=float)
            if X.ndim == 1:
                X = X[None, :]
        if X.ndim != 2 or X.shape[1] != len(self.input_names):
            raise ValueError(f"expected inputs ordered as {self.input_names}, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise FitError("nonfinite_input", "prediction inputs must be finite")
        Z = (X - self.means) / self.stds
        idx = [self.input_names.index(v) for v in self.variables]
        return Z[:, idx]

    def predict(self, x):
        """Predict one point (GeometryVars or 1-D raw vector) or a batch (2-D array).

        Rows are evaluated independently, so a batch gives bit-identical results
        to row-by-row calls.
        """
        single = isinstance(x, GeometryVars) or np.ndim(x) == 1
        Z = self._standardize(x)
        out = np.concatenate([self._eval(Z[i:i + _CHUNK]) for i in range(0, len(Z), _CHUNK)]) \
            if len(Z) else np.empty(0)
        return float(out[0]) if single else out

    def _eval(self, Z):
        p = self.payload
        name = self.kind.name
        if name == "PLS":
            return _rowsum(_poly_basis(Z, p["exponents"]) * p["coef"])
        if name == "MLS":
            return _mls_eval(Z, p["points"], p["values"], self.kind.bandwidth)
        r = np.exp(-p["theta"] * _sq_dists(Z, p["points"]))
        trend = _rowsum(_trend_basis(Z, p["linear_trend"]) * p["beta"])
        return trend + _rowsum(r * p["weights"])

    def linear_coefficients(self):
        """Degree-1 PLS only: ``(intercept, {var: slope})`` in raw input units."""
        if self.kind.name != "PLS" or self.kind.degree != 1:
            raise ValueError("raw linear coefficients exist only for PLS degree 1")
        coef = self.payload["coef"]
        intercept = float(coef[0])
        slopes = {}
        for j, v in enumerate(self.variables):
            i = self.input_names.index(v)
            slopes[v] = float(coef[j + 1] / self.stds[i])
            intercept -= float(coef[j + 1] * self.means[i] / self.stds[i])
        return intercept, slopes

    def to_dict(self):
        return {
            "target": self.target_name,
            "kind": self.kind.name,
            "hyper": self.kind.hyper(),
            "variables": list(self.variables),
            "scaler": {"names": list(self.input_names),
                       "means": self.means.tolist(), "stds": self.stds.tolist()},
            "payload": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                        for k, v in self.payload.items()},
        }

    @classmethod
    def from_dict(cls, d):
        kind = MetamodelKind(d["kind"], **d["hyper"])
        payload = {}
        for k, v in d["payload"].items():
            payload[k] = np.asarray(v, dtype=int if k == "exponents" else float) \
                if isinstance(v, list) else v
        if kind.name == "PLS" and payload["exponents"].size == 0:
            payload["exponents"] = payload["exponents"].reshape(len(payload["coef"]), 0)
        return cls(
            kind=kind,
            target_name=d["target"],
            input_names=tuple(d["scaler"]["names"]),
            means=np.asarray(d["scaler"]["means"], dtype=float),
            stds=np.asarray(d["scaler"]["stds"], dtype=float),
            variables=tuple(d["variables"]),
            payload=payload,
        )


def _mls_eval(Q, X, y, bandwidth):
    # local linear fit in coordinates centred on each query point
    diff = X[None, :, :] - Q[:, None, :]
    r2 = np.zeros(diff.shape[:2])
    for j in range(diff.shape[2]):
        r2 += diff[:, :, j] ** 2
    # per-query shift keeps the largest weight at 1; WLS is scale invariant
    w = np.exp(-(r2 - r2.min(axis=1, keepdims=True)) / bandwidth ** 2)
    B = np.concatenate([np.ones(diff.shape[:2] + (1,)), diff], axis=2)
    BtW = np.transpose(B * w[:, :, None], (0, 2, 1))
    A = BtW @ B
    rhs = BtW @ y
    coef = (np.linalg.pinv(A) @ rhs[:, :, None])[:, :, 0]
    return coef[:, 0]


def _fit_pls(kind, Z, y):
    E = _poly_exponents(Z.shape[1], kind.degree)
    Phi = _poly_basis(Z, E)
    n, p = Phi.shape
    if n <= p:
        raise FitError("singular_fit", f"{n} samples cannot fit {p} polynomial terms")
    coef, _, rank, _ = np.linalg.lstsq(Phi, y, rcond=None)
    if rank < p:
        raise FitError("singular_fit", f"polynomial basis has rank {rank} < {p}")
    return {"exponents": E, "coef": coef}


def _dedupe(Z, y):
    """Merge exact repeats; coincident inputs with different targets cannot be interpolated."""
    U, first, inverse = np.unique(Z, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if len(U) == len(Z):
        return Z, y
    yu = y[first]
    spread = np.abs(y - yu[inverse]) / np.maximum(1.0, np.abs(y))
    if spread.max() > KRIGING_INTERP_TOL:
        raise FitError("singular_fit", "coincident training inputs carry different targets")
    return U, yu


def _trend_basis(Z, linear):
    return np.concatenate([np.ones((len(Z), 1)), Z], axis=1) if linear else np.ones((len(Z), 1))


def kriging_likelihood(theta, D2, y, F):
    """Concentrated log-likelihood and fitted terms for one correlation parameter.

    ``F`` is the trend basis; its coefficients come from generalized least
    squares. Returns ``None`` when the correlation matrix is not numerically
    positive definite.
    """
    n = len(y)
    R0 = np.exp(-theta * D2)
    R = R0.copy()
    R[np.diag_indices(n)] += KRIGING_NUGGET
    try:
        cf = linalg.cho_factor(R, lower=True, check_finite=False)
        riF = linalg.cho_solve(cf, F, check_finite=False)
        beta = np.linalg.solve(F.T @ riF, riF.T @ y)
    except np.linalg.LinAlgError:
        return None
    resid = y - F @ beta
    weights = linalg.cho_solve(cf, resid, check_finite=False)
    sigma2 = float(resid @ weights) / n
    if not (np.isfinite(sigma2) and sigma2 > 0):
        return None
    # the nugget only stabilises the factorisation; refine towards R0 w = resid
    for _ in range(2):
        weights = weights + linalg.cho_solve(cf, resid - R0 @ weights, check_finite=False)
    log_det = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return -0.5 * n * np.log(sigma2) - 0.5 * log_det, beta, weights


def interpolation_error(theta, D2, y, trend, weights):
    """Max training-point error relative to ``max(1, |y|)``, nugget excluded."""
    pred = trend + np.exp(-theta * D2) @ weights
    return float(np.max(np.abs(pred - y) / np.maximum(1.0, np.abs(y))))


def _fit_kriging(kind, Z, y):
    Z, y = _dedupe(Z, y)
    if len(y) < 2:
        raise FitError("singular_fit", "Kriging needs at least two distinct training points")
    # linear trend when the data can carry it, constant mean otherwise
    linear = len(y) >= Z.shape[1] + 3
    F = _trend_basis(Z, linear)
    D2 = _sq_dists(Z, Z)
    grid = KRIGING_THETA_GRID if kind.theta is None else [kind.theta]
    scored = []
    for k, theta in enumerate(grid):
        res = kriging_likelihood(theta, D2, y, F)
        if res is not None:
            scored.append((res[0], -k, float(theta), res[1], res[2]))
    # best likelihood first, but only among theta that still interpolate:
    # near-singular correlation matrices pass Cholesky yet miss the data
    for _, _, theta, beta, weights in sorted(scored, key=lambda s: (s[0], s[1]), reverse=True):
        if interpolation_error(theta, D2, y, F @ beta, weights) <= KRIGING_INTERP_TOL:
            return MetamodelKind("KRIGING", theta=theta), {
                "points": Z, "theta": theta, "linear_trend": linear, "beta": beta,
                "weights": weights}
    raise FitError("singular_fit", "no theta gives a well-conditioned interpolating fit")


def fit_metamodel(kind: MetamodelKind, train: TrainMatrix, subset) -> FittedMetamodel:
    subset = tuple(subset)
    if not subset:
        raise ValueError("variable subset must not be empty")
    missing = [v for v in subset if v not in train.var_names]
    if missing:
        raise ValueError(f"variables not usable for fitting: {missing}")
    Z = train.columns(subset)
    y = train.outputs
    if kind.name == "PLS":
        payload = _fit_pls(kind, Z, y)
    elif kind.name == "MLS":
        if len(y) < len(subset) + 1:
            raise FitError("singular_fit", "too few samples for a local linear fit")
        payload = {"points": Z.copy(), "values": y.copy()}
    else:
        kind, payload = _fit_kriging(kind, Z, y)
    return FittedMetamodel(kind=kind, target_name=train.target_name,
                           input_names=train.input_names, means=train.means.copy(),
                           stds=train.stds.copy(), variables=subset, payload=payload)


def predict(model: FittedMetamodel, x):
    return model.predict(x)
