import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsfm.evaluation import (
    METRIC_NAMES,
    EvaluationError,
    aggregate,
    depth_metrics,
    evaluate,
    evaluate_predictions,
    garg_crop_mask,
    median_scale,
    read_depth_png,
    report_csv,
    report_table,
    write_depth_png,
)
from mtsfm.pipeline.synth import SceneConfig, synth_dataset


def oracle_metrics(pred, gt, cap=80.0, scale=True):
    # straight-line per-pixel loops, no vectorised helpers
    pv, gv = [], []
    for p, g in zip(np.ravel(pred), np.ravel(gt)):
        if g > 0:
            pv.append(float(p))
            gv.append(float(g))
    if scale:
        s = float(np.median(gv)) / float(np.median(pv))
        pv = [p * s for p in pv]
    keep = [(min(max(p, 1e-3), cap), g) for p, g in zip(pv, gv) if g <= cap]
    n = len(keep)
    out = dict.fromkeys(METRIC_NAMES, 0.0)
    logs = []
    for p, g in keep:
        out["abs_rel"] += abs(p - g) / g / n
        out["sq_rel"] += (p - g) ** 2 / g / n
        out["rmse"] += (p - g) ** 2 / n
        e = np.log(p) - np.log(g)
        out["rmse_log"] += e * e / n
        r = max(p / g, g / p)
        out["delta1"] += (r < 1.25) / n
        out["delta2"] += (r < 1.25**2) / n
        out["delta3"] += (r < 1.25**3) / n
        logs.append(e)
        out["sq_err_rel"] += 100 * (p - g) ** 2 / g**2 / n
    out["rmse"] = np.sqrt(out["rmse"])
    out["rmse_log"] = np.sqrt(out["rmse_log"])
    mean_log = sum(logs) / n
    out["silog"] = np.sqrt(sum((e - mean_log) ** 2 for e in logs) / n) * 100
    return out


def test_median_scale_double():
    gt = np.array([[1.0, 2.0], [3.0, 5.0]])
    np.testing.assert_allclose(median_scale(2 * gt, gt), gt)


def test_median_scale_global_invariance(rng):
    gt = rng.uniform(1, 50, (6, 6))
    pred = rng.uniform(1, 50, (6, 6))
    np.testing.assert_allclose(median_scale(pred, gt), median_scale(7 * pred, gt), rtol=1e-14)


def test_median_only_over_valid_pixels():
    gt = np.array([0.0, 2.0, 0.0, 4.0, 6.0])
    pred = np.array([100.0, 1.0, 100.0, 3.0, 2.0])
    # valid preds 1, 3, 2 -> median 2; valid gt median 4; scale 2
    np.testing.assert_allclose(median_scale(pred, gt), pred * 2.0)


def test_median_scale_no_valid():
    with pytest.raises(EvaluationError):
        median_scale(np.ones(3), np.zeros(3))


def test_perfect_prediction():
    gt = np.array([1.0, 5.0, 20.0])
    r = depth_metrics(gt, gt)
    assert r.abs_rel == 0 and r.rmse == 0 and r.silog == 0
    assert r.delta1 == r.delta2 == r.delta3 == 1


def test_hand_example():
    r = depth_metrics(np.array([1.1, 1.8, 4.4]), np.array([1.0, 2.0, 4.0]))
    assert r.abs_rel == pytest.approx(0.1)
    assert r.delta1 == 1


def test_uniform_overshoot():
    gt = np.array([1.0, 3.0, 7.0])
    r = depth_metrics(1.3 * gt, gt)
    assert r.delta1 == 0 and r.delta2 == 1
    assert r.silog == pytest.approx(0.0, abs=1e-6)


def test_cap_and_validity():
    gt = np.array([0.0, 10.0, 90.0])
    pred = np.array([5.0, 10.0, 200.0])
    r = depth_metrics(pred, gt)
    assert r.n_pixels == 1 and r.abs_rel == 0


def test_prediction_clamped_to_cap():
    r = depth_metrics(np.array([500.0]), np.array([80.0]))
    assert r.abs_rel == 0


def test_empty_mask_raises():
    with pytest.raises(EvaluationError):
        depth_metrics(np.ones(3), np.zeros(3))
    with pytest.raises(EvaluationError):
        depth_metrics(np.ones(3), np.ones(4))


def test_single_pixel_pointwise():
    p, g = 3.0, 2.0
    r = depth_metrics(np.array([p]), np.array([g]))
    assert r.abs_rel == pytest.approx(0.5)
    assert r.sq_rel == pytest.approx(0.5)
    assert r.rmse == pytest.approx(1.0)
    assert r.rmse_log == pytest.approx(np.log(1.5))
    assert r.silog == pytest.approx(0.0, abs=1e-6)
    assert r.sq_err_rel == pytest.approx(25.0)
    assert (r.delta1, r.delta2, r.delta3) == (0.0, 1.0, 1.0)  # 1.5 < 1.25^2


def test_matches_oracle_on_random_images(rng):
    preds, gts, reps = [], [], []
    for _ in range(3):
        gt = rng.uniform(0.5, 90, (5, 7))
        gt[rng.random(gt.shape) < 0.3] = 0
        pred = gt * rng.uniform(0.6, 1.6, gt.shape) + rng.uniform(0, 3, gt.shape)
        preds.append(pred)
        gts.append(gt)
        reps.append(oracle_metrics(pred, gt))
    got = evaluate_predictions(preds, gts, "scaled")
    for k in METRIC_NAMES:
        assert getattr(got, k) == pytest.approx(np.mean([r[k] for r in reps]), abs=1e-10, rel=1e-10)


def test_unscaled_matches_oracle(rng):
    gt = rng.uniform(1, 30, (4, 4))
    pred = gt * 1.7
    got = evaluate_predictions([pred], [gt], "unscaled")
    want = oracle_metrics(pred, gt, scale=False)
    for k in METRIC_NAMES:
        assert getattr(got, k) == pytest.approx(want[k], abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 20))
def test_silog_scale_invariant_abs_rel_not(seed, c):
    r = np.random.default_rng(seed)
    gt = r.uniform(1, 20, 30)
    pred = r.uniform(1, 20, 30)
    a, b = depth_metrics(pred, gt, cap=1e9), depth_metrics(pred * c, gt, cap=1e9)
    assert a.silog == pytest.approx(b.silog, abs=1e-9)
    if abs(c - 1) > 0.05:
        assert a.abs_rel != pytest.approx(b.abs_rel, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_delta_monotone(seed):
    r = np.random.default_rng(seed)
    gt = r.uniform(0.1, 80, 20)
    pred = gt * np.exp(r.normal(0, 0.5, 20))
    rep = depth_metrics(pred, gt)
    assert rep.delta1 <= rep.delta2 <= rep.delta3 <= 1
    assert all(getattr(rep, k) >= 0 for k in METRIC_NAMES)


def test_aggregate_identical():
    gt = np.array([1.0, 2.0, 4.0])
    r = depth_metrics(np.array([1.1, 1.8, 4.4]), gt)
    agg = aggregate([r, r])
    for k in METRIC_NAMES:
        assert getattr(agg, k) == pytest.approx(getattr(r, k))
    with pytest.raises(EvaluationError):
        aggregate([])


def test_oracle_model_on_synthetic_set():
    data = synth_dataset(2, SceneConfig(height=32, width=32, motion=(0.02, 0, 0.1)))
    lookup = {id(t.target): t.depth for t in data}
    rep = evaluate(lambda img: lookup[id(img)], data)
    assert rep.abs_rel == 0 and rep.rmse == 0 and rep.delta1 == 1


def test_crop_mask():
    m = garg_crop_mask(375, 1242)
    assert m.sum() > 0 and not m[0].any() and not m[:, 0].any()
    gt = np.ones((375, 1242))
    assert depth_metrics(gt, gt, crop=True).n_pixels == m.sum()


def test_bad_mode():
    with pytest.raises(ValueError):
        evaluate_predictions([np.ones(2)], [np.ones(2)], "median")


def test_png_round_trip(tmp_path, rng):
    d = rng.uniform(0, 200, (6, 9))
    d[0, 0] = 0
    write_depth_png(tmp_path / "d.png", d)
    back = read_depth_png(tmp_path / "d.png")
    np.testing.assert_allclose(back, np.round(d * 256) / 256, atol=1e-12)
    assert back[0, 0] == 0


def test_report_exports(tmp_path):
    r = depth_metrics(np.array([1.1, 1.8, 4.4]), np.array([1.0, 2.0, 4.0]))
    text = report_csv({"clean": r}, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == ["name", *METRIC_NAMES, "n_pixels"]
    assert float(lines[1].split(",")[1]) == r.abs_rel
    assert text == (tmp_path / "r.csv").read_text()
    table = report_table({"clean": r})
    assert "abs_rel" in table and "clean" in table
