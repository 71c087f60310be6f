import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from emd_expert.errors import EmdWarning, FitError
from emd_expert.mop import (KRIGING, MLS, PLS, MopModel, TrainMatrix, cop_matrix, cop_score,
                            correlation_coefficient, fit_metamodel, load_model,
                            model_fingerprint, save_model, serialize_model,
                            significance_subsets, train_mop)
from emd_expert.mop.metamodels import MetamodelKind
from emd_expert.mop.train import (TIE_TOL, SignificanceReport, candidate_kinds, dataset_arrays,
                                  select_winner)
from emd_expert.sampling import (Dataset, Sample, SplitSpec, default_space, generate_dataset,
                                 split_dataset)
from emd_expert.wrsg import VAR_NAMES, GeometryVars, Performance, derive_dependent

NAMES = ("a", "b", "c")


def kriging_interp_error(model, X, y):
    pred = model.predict(X)
    return float(np.max(np.abs(pred - y) / np.maximum(1.0, np.abs(y))))


def synthetic_matrix(f, n=40, k=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 3, size=(n, k))
    return X, TrainMatrix.build(X, f(X), NAMES[:k], "y")


# correlation and CoP


def test_cop_hand_example():
    s = [1, 2, 3, 4, 5]
    s_hat = [1.1, 1.9, 3.2, 3.8, 5.3]
    # exact rational value 10609 / 10772
    assert cop_score(s, s_hat) == pytest.approx(10609 / 10772, rel=1e-14)
    assert cop_score(s, s_hat) == pytest.approx(np.corrcoef(s, s_hat)[0, 1] ** 2, rel=1e-12)


def test_correlation_matches_numpy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.normal(size=30), rng.normal(size=30)
        assert correlation_coefficient(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)


def test_correlation_degenerate():
    with pytest.raises(FitError) as exc:
        correlation_coefficient([1, 1, 1, 1], [1, 2, 3, 4])
    assert exc.value.code == "degenerate_variance"
    with pytest.raises(ValueError):
        correlation_coefficient([1, 2], [2, 1])


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(3, 40), elements=st.floats(-1e3, 1e3)),
       st.floats(-100, 100), st.floats(1e-3, 100))
def test_cop_affine_invariance(s, a, b):
    if np.ptp(s) < 1e-6:
        return
    assert cop_score(s, s) == pytest.approx(1.0, abs=1e-12)
    assert cop_score(s, a + b * s) == pytest.approx(1.0, abs=1e-9)


def test_cop_in_unit_interval_on_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(3, 50))
        v = cop_score(rng.normal(size=n), rng.normal(size=n) * rng.uniform(0.1, 10))
        assert 0.0 <= v <= 1.0


def test_cop_constant_predictor_warns_zero():
    with pytest.warns(EmdWarning, match="constant_predictor"):
        assert cop_score([1.0, 2.0, 3.0], [4.0, 4.0, 4.0]) == 0.0


@pytest.mark.parametrize("s,s_hat,code", [
    ([1.0, 2.0], [1.0, 2.0], "too_few_test_points"),
    ([2.0, 2.0, 2.0], [1.0, 2.0, 3.0], "degenerate_test_set"),
    ([1.0, 2.0, 3.0], [1.0, np.nan, 3.0], "nonfinite_prediction"),
])
def test_cop_errors(s, s_hat, code):
    with pytest.raises(FitError) as exc:
        cop_score(s, s_hat)
    assert exc.value.code == code


# significance filter


def test_significance_subsets_examples():
    rep = SignificanceReport(("d1", "d2", "l", "na"), ("t",),
                             np.array([[0.9], [-0.75], [0.4], [0.1]]))
    assert significance_subsets(rep, "t") == [("d1", "d2"), ("d1", "d2", "l"),
                                              ("d1", "d2", "l", "na")]
    assert rep.strong == {("d1", "t"), ("d2", "t")}
    assert rep.weak == {("na", "t")}
    # empty and duplicate subsets are skipped
    rep = SignificanceReport(("d1", "d2"), ("t",), np.array([[0.2], [0.1]]))
    assert significance_subsets(rep, "t") == [("d1", "d2")]


# metamodel kinds


def test_kind_validation():
    with pytest.raises(ValueError):
        PLS(3)
    with pytest.raises(ValueError):
        MLS(0.0)
    with pytest.raises(ValueError):
        KRIGING(-1.0)
    with pytest.raises(ValueError):
        MetamodelKind("RBF")
    order = sorted(candidate_kinds(), key=lambda k: k.simplicity)
    assert [k.label for k in order] == ["PLS1", "PLS2", "MLS(h=0.5)", "MLS(h=1)", "MLS(h=2)",
                                        "KRIGING"]


# PLS


def test_pls1_recovers_raw_coefficients():
    X, tm = synthetic_matrix(lambda X: 1.5 - 2.0 * X[:, 0] + 0.25 * X[:, 1] + 7.0 * X[:, 2])
    model = fit_metamodel(PLS(1), tm, NAMES)
    intercept, slopes = model.linear_coefficients()
    assert intercept == pytest.approx(1.5, abs=1e-9)
    assert slopes == pytest.approx({"a": -2.0, "b": 0.25, "c": 7.0}, abs=1e-9)


def test_pls2_exact_on_quadratic():
    f = lambda X: 3 + X[:, 0] * X[:, 1] - 0.5 * X[:, 2] ** 2 + 2 * X[:, 0]
    X, tm = synthetic_matrix(f)
    model = fit_metamodel(PLS(2), tm, NAMES)
    Xq = np.random.default_rng(9).uniform(-2, 3, size=(30, 3))
    assert np.max(np.abs(model.predict(Xq) - f(Xq))) < 1e-9
    assert cop_score(f(Xq), model.predict(Xq)) == pytest.approx(1.0, abs=1e-9)


def test_pls_singular_fit():
    X, tm = synthetic_matrix(lambda X: X[:, 0], n=8)
    with pytest.raises(FitError) as exc:
        fit_metamodel(PLS(2), tm, NAMES)     # 10 terms, 8 samples
    assert exc.value.code == "singular_fit"


def test_standardization_invariance():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(30, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    scale = np.array([1e3, 1e-2, 5.0])
    shift = np.array([100.0, -3.0, 0.5])
    Xq = rng.uniform(0, 1, size=(10, 3))
    for kind in (PLS(2), MLS(1.0), KRIGING(0.5)):
        a = fit_metamodel(kind, TrainMatrix.build(X, y, NAMES, "y"), NAMES)
        b = fit_metamodel(kind, TrainMatrix.build(X * scale + shift, y, NAMES, "y"), NAMES)
        assert np.allclose(a.predict(Xq), b.predict(Xq * scale + shift), rtol=1e-8, atol=1e-9)


# MLS


def test_mls_wide_bandwidth_tends_to_global_line():
    X, tm = synthetic_matrix(lambda X: np.cos(X[:, 0]) + X[:, 1] * X[:, 2])
    line = fit_metamodel(PLS(1), tm, NAMES)
    wide = fit_metamodel(MLS(1e5), tm, NAMES)
    Xq = np.random.default_rng(3).uniform(-2, 3, size=(20, 3))
    assert np.max(np.abs(wide.predict(Xq) - line.predict(Xq))) < 1e-6


def test_mls_reproduces_linear_data():
    X, tm = synthetic_matrix(lambda X: 2 + X @ np.array([1.0, -1.0, 0.5]))
    model = fit_metamodel(MLS(0.5), tm, NAMES)
    Xq = np.random.default_rng(8).uniform(-2, 3, size=(20, 3))
    assert np.allclose(model.predict(Xq), 2 + Xq @ np.array([1.0, -1.0, 0.5]), atol=1e-8)


@pytest.mark.parametrize("kind", [PLS(1), PLS(2), MLS(0.5), KRIGING()])
def test_batch_matches_single_predictions(kind):
    X, tm = synthetic_matrix(lambda X: np.exp(0.3 * X[:, 0]) + X[:, 1] - X[:, 2] ** 2)
    model = fit_metamodel(kind, tm, NAMES)
    Xq = np.random.default_rng(6).uniform(-2, 3, size=(2100, 3))
    batch = model.predict(Xq)
    for i in range(0, 2100, 97):
        assert model.predict(Xq[i]) == batch[i]


def test_predict_rejects_nonfinite():
    X, tm = synthetic_matrix(lambda X: X[:, 0])
    model = fit_metamodel(PLS(1), tm, NAMES)
    with pytest.raises(FitError) as exc:
        model.predict([1.0, np.inf, 0.0])
    assert exc.value.code == "nonfinite_input"


# Kriging


@pytest.mark.parametrize("seed", range(5))
def test_kriging_interpolates_training_points(seed):
    X, tm = synthetic_matrix(lambda X: np.sin(X[:, 0]) * 10 + X[:, 1] ** 3 - X[:, 2], seed=seed)
    model = fit_metamodel(KRIGING(), tm, NAMES)
    assert kriging_interp_error(model, X, tm.outputs) <= 1e-6
    assert model.kind.theta is not None


def test_kriging_repeated_inputs():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0], [0.5, 0.2]])
    y = np.array([0.0, 1.0, 2.0, 3.0, 3.0, 1.0])
    model = fit_metamodel(KRIGING(), TrainMatrix.build(X, y, NAMES[:2], "y"), NAMES[:2])
    assert kriging_interp_error(model, X, y) <= 1e-6
    y[4] = 5.0
    with pytest.raises(FitError) as exc:
        fit_metamodel(KRIGING(), TrainMatrix.build(X, y, NAMES[:2], "y"), NAMES[:2])
    assert exc.value.code == "singular_fit"


def test_constant_columns_are_not_fitted():
    X, _ = synthetic_matrix(lambda X: X[:, 0])
    X[:, 1] = 4.0
    tm = TrainMatrix.build(X, X[:, 0] + X[:, 2], NAMES, "y")
    assert tm.var_names == ("a", "c")
    with pytest.raises(ValueError):
        fit_metamodel(PLS(1), tm, NAMES)


# selection


def test_select_winner_prefers_parsimony_on_ties():
    scored = [(KRIGING(), ("a", "b"), 0.95, None), (PLS(2), ("a", "b"), 0.95, None),
              (PLS(1), ("a", "b", "c"), 0.95, None), (MLS(1.0), ("a",), 0.9, None)]
    assert select_winner(scored)[0] == PLS(2)
    scored.append((MLS(2.0), ("a",), 0.95 - TIE_TOL / 2, None))
    assert select_winner(scored)[0] == MLS(2.0)


def synthetic_dataset(f, n=60, seed=0):
    """A dataset whose performance is an arbitrary function of the geometry."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        x = GeometryVars(*rng.uniform([120, 180, 40, 20, 20], [160, 240, 80, 30, 30]),
                         int(rng.integers(5, 8)))
        v = np.array(x.as_tuple())
        samples.append(Sample(i, x, derive_dependent(x), Performance(*f(v)), ()))
    return Dataset(tuple(samples), seed, default_space())


def test_linear_targets_pick_pls1():
    ds = synthetic_dataset(lambda v: (0.2 * v[0] + 0.1 * v[2], 0.05 * v[1] + v[5],
                                      90 + 0.01 * v[3], 1.0))
    mop = train_mop(ds, SplitSpec(0.25, 1))
    for t in ("pout_kva", "w_kg", "eta_pct"):
        assert mop[t].cop == pytest.approx(1.0, abs=1e-9)
        assert mop[t].model.kind == PLS(1)


def test_constant_target_is_degenerate():
    ds = synthetic_dataset(lambda v: (v[0], v[1], 95.0, 1.0))
    with pytest.raises(FitError) as exc:
        train_mop(ds, SplitSpec(0.25, 1))
    assert exc.value.code == "degenerate_test_set"


def test_winner_is_best_candidate(pipeline):
    mop = pipeline.model
    ds = pipeline.dataset
    train, test = split_dataset(ds, mop.split)
    for t, tm_ in mop.targets.items():
        X_tr, y_tr = dataset_arrays(train, t)
        X_te, y_te = dataset_arrays(test, t)
        tm = TrainMatrix.build(X_tr, y_tr, VAR_NAMES, t)
        best = -1.0
        for subset, kind in itertools.product(significance_subsets(mop.significance, t),
                                              candidate_kinds()):
            try:
                m = fit_metamodel(kind, tm, subset)
            except FitError:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmdWarning)
                best = max(best, cop_score(y_te, m.predict(X_te)))
        assert tm_.cop >= best - TIE_TOL
        assert tm_.cop == pytest.approx(cop_score(y_te, tm_.model.predict(X_te)), abs=1e-15)


def test_every_kriging_candidate_interpolates(pipeline):
    mop = pipeline.model
    train, _ = split_dataset(pipeline.dataset, mop.split)
    n_fits = 0
    for t in mop.targets:
        X_tr, y_tr = dataset_arrays(train, t)
        tm = TrainMatrix.build(X_tr, y_tr, VAR_NAMES, t)
        for subset in significance_subsets(mop.significance, t):
            try:
                m = fit_metamodel(KRIGING(), tm, subset)
            except FitError as exc:
                # a projection with near-coincident, conflicting points has no
                # interpolating theta; the candidate is rejected, not kept
                assert exc.code == "singular_fit"
                continue
            assert kriging_interp_error(m, X_tr, y_tr) <= 1e-6, (t, subset)
            n_fits += 1
    assert n_fits >= 6


def test_training_deterministic(pipeline):
    again = train_mop(pipeline.dataset, SplitSpec(0.25, 7))
    assert serialize_model(again) == serialize_model(pipeline.model)


def test_model_round_trip(pipeline, tmp_path):
    path = tmp_path / "model.jsonl"
    save_model(pipeline.model, path)
    loaded = load_model(path)
    assert isinstance(loaded, MopModel)
    assert model_fingerprint(loaded) == model_fingerprint(pipeline.model)
    Xq = np.array([s.x.as_tuple() for s in pipeline.dataset.valid_samples], dtype=float)
    for t in loaded.targets:
        assert np.array_equal(loaded.predict(t, Xq), pipeline.model.predict(t, Xq))


def test_corrupt_model_rejected(tmp_path):
    path = tmp_path / "model.jsonl"
    path.write_text('{"kind": "dataset"}\n')
    with pytest.raises(FitError) as exc:
        load_model(path)
    assert exc.value.code == "corrupt_model"


def test_cop_matrix(pipeline):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmdWarning)
        cm = cop_matrix(pipeline.model, pipeline.dataset)
    assert cm.values.shape == (len(cm.var_names), 3)
    assert np.all((cm.values >= 0) & (cm.values <= 1))
    assert np.array_equal(cm.total, [pipeline.model.cop(t) for t in cm.targets])
    assert "total" in cm.format()


def test_cop_matrix_target_equal_to_input():
    ds = synthetic_dataset(lambda v: (v[0], v[1] + 0.1 * v[0], 90 + 0.01 * v[3] + 0.001 * v[2], 1.0))
    mop = train_mop(ds, SplitSpec(0.25, 1))
    cm = cop_matrix(mop, ds)
    assert cm.values[cm.var_names.index("d1"), 0] == pytest.approx(1.0, abs=1e-12)
