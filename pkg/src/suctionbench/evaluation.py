"""Benchmark evaluation: association, analytic scoring, NMS and Precision@k metrics.

Metric values are computed with exact rational arithmetic and rounded to
float once, so they do not depend on summation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .scene import CollisionParams, SceneGeometry
from .seal import CupModel, SealParams, seal_scores
from .wrench import WrenchParams, wrench_scores


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = (0.2, 0.4, 0.6, 0.8)
    top_k: int = 50
    per_object_cap: int = 10
    nms_radius: float = 0.02
    association_distance: float = 0.05
    # score predictions whose gripper cylinder hits the scene as 0
    reject_collisions: bool = False

    def __post_init__(self):
        th = tuple(float(s) for s in self.thresholds)
        if not th or list(th) != sorted(th) or not all(0 < s < 1 for s in th):
            raise ValueError("thresholds must be sorted and inside (0, 1)")
        object.__setattr__(self, "thresholds", th)
        if self.top_k < 1 or self.per_object_cap < 1:
            raise ValueError("top_k and per_object_cap must be positive")
        if not (self.nms_radius >= 0 and self.association_distance > 0):
            raise ValueError("nms_radius must be >= 0 and association_distance > 0")


@dataclass(frozen=True, eq=False)
class Predictions:
    """World-frame suction predictions with ranking confidences."""

    points: np.ndarray
    normals: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not (len(p) == len(n) == len(c)):
            raise ValueError("prediction arrays must have equal length")
        if not (np.isfinite(p).all() and np.isfinite(n).all() and np.isfinite(c).all()):
            raise ValueError("predictions must be finite")
        if len(n) and np.abs(np.linalg.norm(n, axis=1) - 1).max() > 1e-6:
            raise ValueError("prediction directions must be unit length")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "confidence", c)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))

    def take(self, idx):
        return Predictions(self.points[idx], self.normals[idx], self.confidence[idx])

    def transformed(self, T):
        return Predictions(T.apply(self.points), T.apply_directions(self.normals), self.confidence)


def associate(points, geometry: SceneGeometry, max_distance=0.05):
    """Instance index of the nearest object surface per point, or -1 when farther than max_distance."""
    inst, _ = geometry.associate(points, max_distance)
    return inst


def score_predictions(preds: Predictions, geometry: SceneGeometry, instances=None, cup: CupModel = CupModel(),
                      seal: SealParams = SealParams(), wrench: WrenchParams = WrenchParams(),
                      config: EvalConfig = EvalConfig(), collision: CollisionParams | None = None):
    """Analytic S = S_seal * S_wrench of each prediction against its associated object."""
    scene = geometry.scene
    if instances is None:
        instances = associate(preds.points, geometry, config.association_distance)
    scores = np.zeros(len(preds))
    wp = WrenchParams(wrench.radius, wrench.k, wrench.mass, wrench.g, scene.gravity)
    coms = geometry.instance_coms
    for k in np.unique(instances[instances >= 0]):
        rows = np.flatnonzero(instances == k)
        inst = scene.instances[k]
        inv = inst.pose.inverse()
        local_p = inv.apply(preds.points[rows])
        local_u = inv.apply_directions(preds.normals[rows])
        s_seal = seal_scores(geometry.mesh_index(inst.object_id), local_p, local_u, cup, seal)["score"]
        s_wrench = wrench_scores(preds.points[rows], preds.normals[rows], coms[k], wp)
        scores[rows] = s_seal * s_wrench
    if config.reject_collisions and len(preds):
        hit = geometry.check_collisions(preds.points, preds.normals, collision)
        scores[hit] = 0.0
    return scores


def nms(preds: Predictions, instances, config: EvalConfig = EvalConfig()):
    """Greedy suppression by confidence; returns kept indices in rank order.

    A prediction is dropped when it lies within nms_radius of a kept one,
    or when its object already holds per_object_cap kept predictions.
    Unassociated predictions (instance -1) are never capped.
    """
    order = np.argsort(-preds.confidence, kind="stable")
    kept = []
    kept_pts = np.zeros((0, 3))
    per_obj = {}
    r2 = config.nms_radius ** 2
    for i in order:
        k = int(instances[i])
        if k >= 0 and per_obj.get(k, 0) >= config.per_object_cap:
            continue
        if len(kept_pts) and np.min(np.sum((kept_pts - preds.points[i]) ** 2, axis=1)) <= r2:
            continue
        kept.append(int(i))
        kept_pts = np.vstack([kept_pts, preds.points[i]])
        if k >= 0:
            per_obj[k] = per_obj.get(k, 0) + 1
    return np.array(kept, dtype=np.int64)


def ground_truth_predictions(annotation, geometry: SceneGeometry, config: EvalConfig = EvalConfig(), n=None):
    """Collision-free annotated suctions as predictions, confidence = label score.

    The same greedy suppression as the evaluator picks a diverse top-n
    (n defaults to top_k), so feeding them back should score near perfect.
    """
    ok = np.flatnonzero(annotation.collision_free)
    preds = Predictions(annotation.points[ok], annotation.normals[ok], annotation.score[ok])
    kept = nms(preds, associate(preds.points, geometry, config.association_distance), config)
    return preds.take(kept[: n or config.top_k])


# ---------------------------------------------------------------------------
# metrics

def _positives(scores, s):
    """Running count of entries scoring strictly above s."""
    return np.cumsum(np.asarray(scores, dtype=np.float64) > s)


def precision_at_k(scores, k: int, s: float) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = np.asarray(scores, dtype=np.float64)[:k]
    return int(np.sum(scores > s)) / k


def _ap_fraction(scores, s, top_k) -> Fraction:
    hits = _positives(np.asarray(scores)[:top_k], s)
    counts = np.concatenate([hits, np.full(top_k - len(hits), hits[-1] if len(hits) else 0)]).astype(np.int64)
    # sum_k counts[k] / k over a common denominator
    L = math.lcm(*range(1, top_k + 1))
    num = sum(int(c) * (L // k) for k, c in enumerate(counts, start=1))
    return Fraction(num, L * top_k)


def metric_names(config: EvalConfig = EvalConfig()):
    names = [f"AP_{s:g}" for s in config.thresholds] + ["AP"]
    names += [f"AP_{s:g}_top1" for s in config.thresholds] + ["AP_top1"]
    return names


def ap_metrics(scores, config: EvalConfig = EvalConfig()) -> dict:
    """AP_s, AP, AP_s-top1 and AP-top1 of a ranked score list."""
    scores = np.asarray(scores, dtype=np.float64)
    ap = {s: _ap_fraction(scores, s, config.top_k) for s in config.thresholds}
    top1 = {s: Fraction(int(len(scores) > 0 and scores[0] > s)) for s in config.thresholds}
    n = len(config.thresholds)
    out = {f"AP_{s:g}": float(ap[s]) for s in config.thresholds}
    out["AP"] = float(sum(ap.values()) / n)
    out.update({f"AP_{s:g}_top1": float(top1[s]) for s in config.thresholds})
    out["AP_top1"] = float(sum(top1.values()) / n)
    return out


# ---------------------------------------------------------------------------
# reports

@dataclass
class SceneReport:
    name: str
    metrics: dict
    counts: dict = field(default_factory=dict)
    error: str | None = None
    scores: list = field(default_factory=list)

    @property
    def ok(self):
        return self.error is None


@dataclass
class EvalReport:
    scenes: list
    aggregate: dict
    config: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        return {
            "config": {
                "thresholds": list(self.config.thresholds),
                "top_k": self.config.top_k,
                "per_object_cap": self.config.per_object_cap,
                "nms_radius_m": self.config.nms_radius,
                "association_distance_m": self.config.association_distance,
                "reject_collisions": self.config.reject_collisions,
            },
            "aggregate": self.aggregate,
            "scenes": [
                {"name": r.name, "ok": r.ok, "error": r.error, "metrics": r.metrics, "counts": r.counts}
                for r in self.scenes
            ],
        }


def zero_metrics(config: EvalConfig = EvalConfig()):
    return {k: 0.0 for k in metric_names(config)}


def evaluate_scene(geometry: SceneGeometry, preds: Predictions, config: EvalConfig = EvalConfig(), name="scene",
                   cup: CupModel = CupModel(), seal: SealParams = SealParams(),
                   wrench: WrenchParams = WrenchParams()) -> SceneReport:
    instances = associate(preds.points, geometry, config.association_distance)
    kept = nms(preds, instances, config)
    ranked = kept[: config.top_k]
    sub = preds.take(ranked)
    scores = score_predictions(sub, geometry, instances[ranked], cup, seal, wrench, config)
    counts = {
        "predictions": len(preds),
        "kept": int(len(kept)),
        "suppressed": int(len(preds) - len(kept)),
        "unassociated": int(np.sum(instances < 0)),
        "evaluated": int(len(ranked)),
    }
    return SceneReport(name, ap_metrics(scores, config), counts, None, [float(s) for s in scores])


def aggregate_reports(reports, config: EvalConfig = EvalConfig()):
    """Exact mean of each metric over scenes; failed scenes contribute zeros."""
    if not reports:
        return zero_metrics(config)
    out = {}
    for key in metric_names(config):
        total = sum(Fraction(r.metrics.get(key, 0.0)) for r in reports)
        out[key] = float(total / len(reports))
    return out


def evaluate_split(scenes, predictions, config: EvalConfig = EvalConfig(), names=None, cup: CupModel = CupModel(),
                   seal: SealParams = SealParams(), wrench: WrenchParams = WrenchParams()) -> EvalReport:
    """Evaluate one prediction source per scene.

    `scenes` holds Scene or SceneGeometry objects; `predictions` holds
    Predictions objects or prediction-file paths. A file that is missing or
    malformed yields a failure entry with zero metrics and the split goes on.
    """
    from .fileio import PredictionFileError, read_predictions

    if len(scenes) != len(predictions):
        raise ValueError("need exactly one prediction source per scene")
    names = names or [f"scene_{i:03d}" for i in range(len(scenes))]
    reports = []
    for name, sc, src in zip(names, scenes, predictions):
        geom = sc if isinstance(sc, SceneGeometry) else SceneGeometry(sc)
        try:
            preds = src if isinstance(src, Predictions) else read_predictions(src, geom.scene)
        except (OSError, PredictionFileError, ValueError) as exc:
            reports.append(SceneReport(name, zero_metrics(config), {}, f"{type(exc).__name__}: {exc}"))
            continue
        reports.append(evaluate_scene(geom, preds, config, name, cup, seal, wrench))
    return EvalReport(reports, aggregate_reports(reports, config), config)

