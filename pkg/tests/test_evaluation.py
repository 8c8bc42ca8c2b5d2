from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suctionbench.evaluation import (
    EvalConfig,
    Predictions,
    aggregate_reports,
    ap_metrics,
    evaluate_scene,
    evaluate_split,
    metric_names,
    nms,
    precision_at_k,
    score_predictions,
)


def definitional_metrics(scores, thresholds, top_k):
    """Precision@k straight from its definition; missing ranks count as failures."""
    out = {}
    aps = []
    for s in thresholds:
        total = Fraction(0)
        for k in range(1, top_k + 1):
            total += Fraction(sum(1 for x in scores[:k] if x > s), k)
        aps.append(total / top_k)
        out[f"AP_{s:g}"] = float(aps[-1])
    out["AP"] = float(sum(aps) / len(aps))
    top1 = [Fraction(1 if len(scores) and scores[0] > s else 0) for s in thresholds]
    for s, v in zip(thresholds, top1):
        out[f"AP_{s:g}_top1"] = float(v)
    out["AP_top1"] = float(sum(top1) / len(top1))
    return out


def brute_nms(points, conf, inst, radius, cap):
    order = sorted(range(len(conf)), key=lambda i: (-conf[i], i))
    kept = []
    for i in order:
        if inst[i] >= 0 and sum(1 for j in kept if inst[j] == inst[i]) >= cap:
            continue
        if any(np.sum((points[i] - points[j]) ** 2) <= radius ** 2 for j in kept):
            continue
        kept.append(i)
    return kept


def test_hand_case():
    m = ap_metrics([0.9, 0.9, 0.1], EvalConfig(top_k=3))
    assert m["AP_0.4"] == float(Fraction(8, 9))
    assert m["AP_0.4_top1"] == 1.0


def test_precision_at_k():
    assert precision_at_k([0.9, 0.1, 0.5], 2, 0.4) == 0.5
    assert precision_at_k([0.9], 3, 0.4) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        precision_at_k([0.1], 0, 0.4)


def test_threshold_is_strict():
    assert ap_metrics([0.4], EvalConfig(top_k=1))["AP_0.4"] == 0.0


def test_empty_scores():
    m = ap_metrics([], EvalConfig())
    assert all(v == 0.0 for v in m.values())
    assert list(m) == metric_names()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=70), st.integers(1, 60))
def test_metrics_match_definition(scores, top_k):
    cfg = EvalConfig(top_k=top_k)
    assert ap_metrics(scores, cfg) == definitional_metrics(scores, cfg.thresholds, top_k)


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(thresholds=(0.8, 0.2))
    with pytest.raises(ValueError):
        EvalConfig(top_k=0)


def test_predictions_validation():
    with pytest.raises(ValueError):
        Predictions(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        Predictions(np.zeros((1, 3)), [[0, 0, 1.0]], [np.nan])


def test_nms_adversarial_duplicates(rng):
    cfg = EvalConfig()
    # 40 copies per spot, 30 spots on one object, plus unassociated ones
    spots = rng.uniform(-0.3, 0.3, size=(30, 3))
    pts = np.repeat(spots, 40, axis=0) + rng.normal(scale=0.002, size=(1200, 3))
    conf = rng.permutation(np.repeat(np.arange(600) / 600, 2))
    inst = np.where(np.arange(1200) < 1000, 0, -1)
    preds = Predictions(pts, np.tile([0, 0, 1.0], (1200, 1)), conf)
    kept = nms(preds, inst, cfg)
    assert kept.tolist() == brute_nms(pts, conf, inst, cfg.nms_radius, cfg.per_object_cap)
    d = np.linalg.norm(pts[kept][:, None] - pts[kept][None], axis=2)
    assert (d[np.triu_indices(len(kept), 1)] > cfg.nms_radius).all()
    assert np.sum(inst[kept] == 0) <= 10
    assert np.all(np.diff(conf[kept]) <= 0)


def test_nms_cap_per_object():
    pts = np.column_stack([np.arange(30) * 0.1, np.zeros(30), np.zeros(30)])
    preds = Predictions(pts, np.tile([0, 0, 1.0], (30, 1)), np.linspace(1, 0, 30))
    kept = nms(preds, np.repeat([0, 1, 2], 10) % 2, EvalConfig(per_object_cap=4))
    assert len(kept) == 8


def test_ground_truth_scores_well(smooth_geometry):
    geom = smooth_geometry
    inst = geom.scene.instances[0]
    # top face center of the box
    p = inst.pose.apply([0, 0, 0.025])
    preds = Predictions([p, p + [0, 0, 0.2]], [[0, 0, 1.0]] * 2, [1.0, 0.5])
    s = score_predictions(preds, geom)
    assert s[0] > 0.9 and s[1] == 0.0
    rep = evaluate_scene(geom, preds, EvalConfig(top_k=2))
    assert rep.counts["unassociated"] == 1
    assert rep.metrics["AP_0.8"] == pytest.approx(0.75)


def test_reject_collisions(smooth_geometry):
    inst = smooth_geometry.scene.instances[0]
    p = inst.pose.apply([0, 0, -0.025])
    preds = Predictions([p], [[0, 0, -1.0]], [1.0])
    assert score_predictions(preds, smooth_geometry, config=EvalConfig(reject_collisions=True))[0] == 0.0


def test_split_with_failures(smooth_geometry, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("# frame: world\n1 2 3\n")
    inst = smooth_geometry.scene.instances[0]
    good = Predictions([inst.pose.apply([0, 0, 0.025])], [[0, 0, 1.0]], [1.0])
    rep = evaluate_split([smooth_geometry] * 3, [good, str(bad), str(tmp_path / "missing.txt")],
                         EvalConfig(top_k=1))
    assert [r.ok for r in rep.scenes] == [True, False, False]
    assert "bad.txt:2" in rep.scenes[1].error
    assert rep.aggregate["AP"] == pytest.approx(rep.scenes[0].metrics["AP"] / 3)
    assert aggregate_reports([]) == {k: 0.0 for k in metric_names()}
    d = rep.to_dict()
    assert d["scenes"][2]["ok"] is False


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_rank_only_dependence(seed, factor):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.1, 0.1, size=(80, 3))
    conf = rng.uniform(size=80)
    inst = rng.integers(-1, 4, size=80)
    a = Predictions(pts, np.tile([0, 0, 1.0], (80, 1)), conf)
    b = Predictions(pts, a.normals, conf * factor)
    assert np.array_equal(nms(a, inst), nms(b, inst))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=60))
def test_ap_non_increasing_in_threshold(scores):
    m = ap_metrics(scores)
    values = [m[f"AP_{s:g}"] for s in (0.2, 0.4, 0.6, 0.8)]
    assert values == sorted(values, reverse=True)


def test_evaluation_is_pure(smooth_geometry, rng):
    pts = smooth_geometry.association_cloud[0][::500][:60]
    preds = Predictions(pts, np.tile([0, 0, 1.0], (len(pts), 1)), rng.uniform(size=len(pts)))
    a = evaluate_scene(smooth_geometry, preds)
    b = evaluate_scene(smooth_geometry, preds)
    assert a.metrics == b.metrics and a.scores == b.scores


def test_empty_prediction_file(smooth_geometry, tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("# frame: world\n")
    rep = evaluate_split([smooth_geometry], [str(path)])
    assert rep.scenes[0].ok and all(v == 0.0 for v in rep.scenes[0].metrics.values())
