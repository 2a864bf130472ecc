import numpy as np
import pytest
from hypothesis import given, strategies as st

from cqrd.conformal_core import (ConformityScores, GlobalQuantile, conformal_level, conformity_score,
                                 cqr_intervals, fit_cqr)
from cqrd.dataset import Dataset, SplitIndices, Standardizer, split_dataset
from cqrd.density import (CqrdModel, LocalContext, calibration_coverage,
                          calibration_objective, combined_quantile, fit_cqrd, local_context,
                          local_density, local_weight, predict_intervals)
from cqrd.neighbors import build_index
from cqrd.quantile_regression import KNN, LINEAR, LearnerSpec, LinearQuantile, QuantileModel, fit_quantile_model
from cqrd.simulate import SimConfig, generate
from cqrd.utils import QuantileClampWarning
from oracles import brute_force_knn, dense_grid_min, sort_quantile

FAST_LINEAR = LearnerSpec(LINEAR, {"epochs": 40})


@pytest.mark.parametrize("dist,rho", [([1, 1, 1, 1], 1.0), ([0.5, 0.5], 2.0), ([0, 0, 0], 1e12)])
def test_local_density(dist, rho):
    assert local_density(dist) == pytest.approx(rho)


def test_local_density_floor_pushes_weight_to_one():
    assert local_weight(local_density([0.0, 0.0])) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        local_density([])


@pytest.mark.parametrize("rho,w", [(1.0, 0.5), (0.0, 0.0), (1e12, 1.0)])
def test_local_weight(rho, w):
    assert local_weight(rho) == pytest.approx(w, abs=1e-9)


def test_local_weight_negative():
    with pytest.raises(ValueError):
        local_weight(-0.1)


@given(st.floats(0, 1e15))
def test_weight_closure_exact(rho):
    w = local_weight(rho)
    assert 0 <= w < 1 or rho > 1e15
    assert w + (1.0 - w) == 1.0


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_weight_monotone(a, b):
    if a < b and local_weight(a) != local_weight(b):
        assert local_weight(a) < local_weight(b)
    assert (local_weight(a) <= local_weight(b)) == (a <= b) or local_weight(a) == local_weight(b)


def _ctx(w, q_loc):
    return LocalContext(None, q_loc, 1.0, w, 1.0 - w)


@pytest.mark.parametrize("w,q_loc,q_glob,lam,expected", [
    (0.5, 2.0, 4.0, 1.0, 3.0), (0.0, 2.0, 4.0, 1.0, 4.0), (0.5, 2.0, 4.0, 1.2, 3.6)])
def test_combined_quantile(w, q_loc, q_glob, lam, expected):
    assert combined_quantile(_ctx(w, q_loc), q_glob, lam) == pytest.approx(expected)


def test_combined_quantile_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        combined_quantile(_ctx(0.5, 1.0), 1.0, 0.0)


@given(st.floats(0, 1), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.1, 2), st.floats(0.1, 2))
def test_combined_increasing_in_lambda(w, ql, qg, l1, l2):
    ctx = _ctx(w, ql)
    if l1 < l2:
        assert combined_quantile(ctx, qg, l1) < combined_quantile(ctx, qg, l2)


def _line_model(scores, k, alpha=0.1, lam=1.0):
    """Calibration points at 0, 1, 2, ... with identity standardization."""
    m = len(scores)
    qm = QuantileModel(LinearQuantile(alpha / 2, np.zeros(1), 0.0), LinearQuantile(1 - alpha / 2, np.zeros(1), 0.0), alpha)
    pts = np.arange(m, dtype=float).reshape(-1, 1)
    return CqrdModel(qm, Standardizer(np.zeros(1), np.ones(1)), build_index(pts), ConformityScores(scores, np.arange(m)),
                     GlobalQuantile(5.0, conformal_level(alpha, m)), k, alpha, lam, 0.0)


def test_local_context_constant_scores():
    ctx = local_context(_line_model(np.full(30, 2.5), 7), [10.0])
    assert ctx.local_quantile == 2.5
    assert ctx.w_local + ctx.w_global == 1.0


def test_local_context_nine_scores_large_calibration():
    scores = np.full(1999, 100.0)
    scores[:9] = np.arange(1, 10)
    model = _line_model(scores, 9)
    ctx = local_context(model, [4.0])
    assert sorted(ctx.neighbor_set.ids.tolist()) == list(range(9))
    level = conformal_level(0.1, 1999)
    assert level == pytest.approx(0.90045, abs=1e-5)
    assert sort_quantile(range(1, 10), level) == 9
    assert ctx.local_quantile == 9.0
    assert ctx.density == pytest.approx(1 / (20 / 9))


def test_local_context_self_exclusion():
    model = _line_model(np.arange(10, dtype=float), 2)
    ctx = local_context(model, [0.0], exclude_id=0)
    assert ctx.neighbor_set.ids.tolist() == [1, 2]
    assert ctx.density == pytest.approx(1 / 1.5)


@pytest.fixture(scope="module")
def sim_fit():
    ds = generate(SimConfig(n=1000, seed=4))
    sp = split_dataset(ds, (0.6, 0.2, 0.2), 4)
    qm = fit_quantile_model(ds, sp.train, 0.1, FAST_LINEAR)
    return ds, sp, qm, fit_cqrd(ds, sp, alpha=0.1, quantile_model=qm)


def test_seeded_neighbor_scores_match_bruteforce(sim_fit):
    ds, sp, qm, model = sim_fit
    cal = sp.calibration
    z = model.standardizer.transform(ds.features[cal])
    cs, _ = fit_cqr(qm, ds, cal)
    by_id = dict(zip(cs.cal_ids.tolist(), cs.scores.tolist()))
    for i in range(0, len(cal), 17):
        ctx = local_context(model, ds.features[cal[i]], exclude_id=int(cal[i]))
        o_ids, _ = brute_force_knn(z, cal, z[i], model.k, exclude_id=int(cal[i]))
        assert ctx.neighbor_set.ids.tolist() == o_ids
        assert ctx.local_quantile == sort_quantile([by_id[j] for j in o_ids], model.local_level)


def test_fit_cqrd_simulation(sim_fit):
    ds, sp, _, model = sim_fit
    lo, hi = model.lambda_bounds
    assert lo <= model.lambda_star <= hi
    assert model.epsilon_achieved <= 0.02
    assert model.k == int(np.ceil(np.sqrt(len(sp.calibration))))
    obj = calibration_objective(model, ds)
    assert model.epsilon_achieved == abs(calibration_coverage(model, ds) - 0.9)
    assert model.epsilon_achieved <= dense_grid_min(obj.scores, obj.blends, 0.1, (lo, hi)) + 1 / model.m


def test_near_global_limit_matches_cqr(sim_fit):
    ds, sp, qm, _ = sim_fit
    m = len(sp.calibration)
    model = fit_cqrd(ds, sp, alpha=0.1, k=m - 1, quantile_model=qm)
    _, gq = fit_cqr(qm, ds, sp.calibration)
    x = ds.features[sp.test]
    lo, hi = cqr_intervals(qm, gq, x)
    w_cqrd = predict_intervals(model, x).width.mean()
    assert abs(w_cqrd - (hi - lo).mean()) <= 0.05 * (hi - lo).mean()


def test_k_validation(sim_fit):
    ds, sp, qm, _ = sim_fit
    with pytest.raises(ValueError, match="exceeds calibration size"):
        fit_cqrd(ds, sp, k=len(sp.calibration), quantile_model=qm)


def test_minimal_calibration_set():
    ds = generate(SimConfig(n=10, seed=0))
    sp = split_dataset(ds, (0.6, 0.2, 0.2), 0)
    assert len(sp.calibration) == 2
    with pytest.warns(QuantileClampWarning):
        model = fit_cqrd(ds, sp, LearnerSpec(KNN, {"k_q": 2}), k=1)
    batch = predict_intervals(model, ds.features)
    assert np.all(batch.lo <= batch.hi)


def test_query_on_calibration_point_uses_floor():
    model = _line_model(np.arange(10, dtype=float), 1)
    batch = predict_intervals(model, [[3.0]])
    assert batch.density[0] == pytest.approx(1e12)
    assert batch.w_local[0] == pytest.approx(1.0, abs=1e-9)


def test_lambda_scales_combined_quantile(sim_fit):
    ds, sp, _, model = sim_fit
    x = ds.features[sp.test[:50]]
    half = predict_intervals(model, x, lam=0.5)
    one = predict_intervals(model, x, lam=1.0)
    np.testing.assert_allclose(half.combined_quantile, 0.5 * one.combined_quantile, rtol=1e-15)


def test_constant_scores_reduce_to_cqr():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 2))
    # lo = hi = 0 and y = -c everywhere gives every calibration score c
    ds = Dataset(x, np.full(200, -1.5))
    qm = QuantileModel(LinearQuantile(0.05, np.zeros(2), 0.0), LinearQuantile(0.95, np.zeros(2), 0.0), 0.1)
    sp = SplitIndices(np.arange(100), np.arange(100, 150), np.arange(150, 200))
    model = fit_cqrd(ds, sp, alpha=0.1, quantile_model=qm)
    cs, gq = fit_cqr(qm, ds, sp.calibration)
    assert np.all(cs.scores == 1.5) and gq.value == 1.5
    batch = predict_intervals(model, x[150:], lam=1.0)
    lo, hi = cqr_intervals(qm, gq, x[150:])
    np.testing.assert_allclose(batch.lo, lo, rtol=0, atol=1e-15)
    np.testing.assert_allclose(batch.hi, hi, rtol=0, atol=1e-15)


def test_prediction_duality(sim_fit):
    ds, sp, qm, model = sim_fit
    x = ds.features[sp.test]
    batch = predict_intervals(model, x)
    q_lo, q_hi = batch.lo + batch.combined_quantile, batch.hi - batch.combined_quantile
    rng = np.random.default_rng(0)
    for y in (ds.response[sp.test], rng.normal(0, 2, len(x))):
        inside = batch.covers(y)
        assert np.array_equal(inside, conformity_score(q_lo, q_hi, y) <= batch.combined_quantile)


def test_predict_is_deterministic(sim_fit):
    ds, sp, _, model = sim_fit
    a = predict_intervals(model, ds.features[sp.test])
    b = predict_intervals(model, ds.features[sp.test])
    np.testing.assert_array_equal(a.lo, b.lo)
    np.testing.assert_array_equal(a.hi, b.hi)


def test_empty_interval_repair_counted():
    model = _line_model(np.full(10, -3.0), 3, lam=1.0)
    model = CqrdModel(**{**model.__dict__, "global_quantile": GlobalQuantile(-3.0, 1.0)})
    batch = predict_intervals(model, [[2.0], [5.0]])
    assert batch.n_repaired == 2
    assert np.all(batch.lo == batch.hi)


def test_interval_batch_csv(tmp_path, sim_fit):
    ds, sp, _, model = sim_fit
    batch = predict_intervals(model, ds.features[sp.test[:5]])
    p = tmp_path / "iv.csv"
    batch.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "lo,hi,width,local_quantile,density,w_local,combined_quantile"
    assert len(lines) == 6
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == batch.lo[0] and first[2] == batch.width[0]


def test_dimension_mismatch(sim_fit):
    *_, model = sim_fit
    with pytest.raises(ValueError):
        predict_intervals(model, np.zeros((3, 2)))
