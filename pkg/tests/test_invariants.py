"""Cross-module invariants. Runs on its own: ``pytest tests/test_invariants.py``."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqrd.conformal_core import GlobalQuantile, conformity_score, cqr_intervals, fit_cqr
from cqrd.dataset import Dataset, SplitIndices, split_dataset
from cqrd.density import fit_cqrd, local_density, local_weight, predict_intervals
from cqrd.quantile_regression import KNN, LINEAR, LearnerSpec, LinearQuantile, QuantileModel
from cqrd.serialization import load_model, model_from_dict, model_to_dict, save_model
from cqrd.simulate import SimConfig, generate

seeds = st.integers(0, 2**32 - 1)


def _fit(seed, n=300, learner=KNN):
    ds = generate(SimConfig(n=n, seed=seed))
    sp = split_dataset(ds, (0.6, 0.2, 0.2), seed)
    hp = {"k_q": 8} if learner == KNN else {"epochs": 20}
    return ds, sp, fit_cqrd(ds, sp, LearnerSpec(learner, hp))


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=40))
def test_weight_closure(distances):
    w = local_weight(local_density(distances))
    assert 0 < w <= 1
    assert w + (1.0 - w) == 1.0


@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_weight_monotone_in_density(a, b):
    lo, hi = sorted((a, b))
    assert local_weight(lo) <= local_weight(hi)
    if hi - lo >= 1e-3 and hi < 1e3:  # otherwise the step can vanish in rounding
        assert local_weight(lo) < local_weight(hi)


dyadic = st.integers(-2**14, 2**14).map(lambda i: i / 64)  # sums stay exact


@given(dyadic, dyadic.map(abs), dyadic, dyadic)
def test_score_interval_duality(q_lo, width, y, q):
    q_hi = q_lo + width
    if q_lo - q <= q_hi + q:  # the empty-interval case has no members
        assert (conformity_score(q_lo, q_hi, y) <= q) == (q_lo - q <= y <= q_hi + q)


@settings(max_examples=15)
@given(seeds, st.floats(0.1, 5.0), st.integers(1, 20))
def test_constant_scores_reduce_to_cqr(seed, c, k):
    r = np.random.default_rng(seed)
    x = r.normal(size=(120, 3))
    ds = Dataset(x, np.full(120, -c))
    qm = QuantileModel(LinearQuantile(0.05, np.zeros(3), 0.0), LinearQuantile(0.95, np.zeros(3), 0.0), 0.1)
    sp = SplitIndices(np.arange(60), np.arange(60, 90), np.arange(90, 120))
    model = fit_cqrd(ds, sp, quantile_model=qm, k=k)
    _, gq = fit_cqr(qm, ds, sp.calibration)
    lo, hi = cqr_intervals(qm, gq, x)
    batch = predict_intervals(model, x, lam=1.0)
    np.testing.assert_array_equal(batch.lo, lo)
    np.testing.assert_array_equal(batch.hi, hi)


@settings(max_examples=8)
@given(seeds)
def test_predict_determinism(seed):
    ds, sp, model = _fit(seed % 1000)
    a = predict_intervals(model, ds.features)
    b = predict_intervals(model, ds.features[::-1])
    np.testing.assert_array_equal(a.lo, b.lo[::-1])
    np.testing.assert_array_equal(a.hi, b.hi[::-1])
    _, _, again = _fit(seed % 1000)
    np.testing.assert_array_equal(predict_intervals(again, ds.features).lo, a.lo)


@pytest.mark.parametrize("learner", [KNN, LINEAR])
def test_serialization_roundtrip(learner, tmp_path):
    ds, sp, model = _fit(3, learner=learner)
    path = tmp_path / "m.json"
    save_model(model, path, {"note": "x"})
    back = load_model(path)
    q = np.vstack([ds.features, np.linspace(-4, 4, 50).reshape(-1, 1)])
    a, b = predict_intervals(model, q), predict_intervals(back, q)
    for field in ("lo", "hi", "local_quantile", "density", "w_local", "combined_quantile"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert back.lambda_star == model.lambda_star
    assert back.global_quantile == model.global_quantile
    assert model_to_dict(back) == model_to_dict(model)


def test_roundtrip_rejects_foreign_format():
    from cqrd.dataset import DataError
    with pytest.raises(DataError):
        model_from_dict({"format": "other"})
    with pytest.raises(DataError):
        model_from_dict({"format": "cqrd-model", "format_version": 99})


def test_global_quantile_is_value_object():
    assert GlobalQuantile(1.0, 0.9) == GlobalQuantile(1.0, 0.9)
