"""Repeatability over pixel thresholds, and 2D-vs-3D informedness.

A pair is repeated at threshold eps when its candidate, projected into the
reference image, lands strictly closer than eps pixels to the reference
detection's pixel centre. The repeated reference keys under 2D and 3D
pre-selection feed a set-intersection ROC: agreement counts as true positive,
2D-only repeats as false positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import PairSet
from .raster import Camera


class MetricError(ValueError):
    pass


class EmptyDenominator(MetricError):
    pass


class NoDefinedScenes(MetricError):
    pass


class GridMismatch(MetricError):
    pass


class EmptyCurve(MetricError):
    pass


DEFAULT_EPSILONS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class EpsilonGrid:
    thresholds: tuple = DEFAULT_EPSILONS

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if not t:
            raise ValueError("epsilon grid is empty")
        if any(x <= 0 for x in t):
            raise ValueError(f"epsilon thresholds must be positive: {t}")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"epsilon thresholds must be strictly increasing: {t}")
        for required in (1.5, 2.0):
            if required not in t:
                raise ValueError(f"epsilon grid must contain {required}: {t}")

    def __iter__(self):
        return iter(self.thresholds)

    def __len__(self):
        return len(self.thresholds)

    @property
    def max(self) -> float:
        return self.thresholds[-1]

    def index(self, eps: float) -> int:
        return self.thresholds.index(float(eps))


@dataclass(frozen=True)
class RepeatabilityResult:
    scene_index: int
    detector: str
    mode: str
    thresholds: tuple
    repeated_count: tuple
    denominator: int
    rate: tuple
    repeated_ref_keys: tuple  # per threshold: frozenset of (u, v)
    pair_distances: tuple = field(default=(), repr=False)

    @property
    def defined(self) -> bool:
        return self.denominator > 0


@dataclass(frozen=True)
class InformednessPoint:
    epsilon: float
    tpr: float
    fpr: float
    informedness: float
    tpr_degenerate: bool = False
    fpr_degenerate: bool = False


def pair_pixel_distances(pairs: PairSet, camera: Camera) -> np.ndarray:
    """Pixel distance from each pair's projected candidate to its reference pixel centre."""
    if not pairs.pairs:
        return np.zeros(0)
    cand = np.array([p.cand.world for p in pairs.pairs], dtype=np.float64)
    centre = np.array([(p.ref.u + 0.5, p.ref.v + 0.5) for p in pairs.pairs])
    uv, z = camera.project(cand)
    du = uv[:, 0] - centre[:, 0]
    dv = uv[:, 1] - centre[:, 1]
    d = np.sqrt(du * du + dv * dv)
    d[~(z > camera.near)] = np.inf
    return d


def classify_repeated(pairs: PairSet, camera: Camera, grid: EpsilonGrid = EpsilonGrid(), *,
                      scene_index: int = 0, detector: str = "", strict: bool = False
                      ) -> RepeatabilityResult:
    """Count repeated pairs per threshold (strict ``<``).

    With no points on one side the scene is undefined: its rates are reported
    as 0 and ``defined`` is False, or EmptyDenominator is raised if ``strict``.
    """
    denom = min(pairs.ref_count, pairs.cand_count)
    if denom == 0 and strict:
        raise EmptyDenominator(f"scene {scene_index}: no points to compare "
                               f"(ref {pairs.ref_count}, cand {pairs.cand_count})")
    dist = pair_pixel_distances(pairs, camera)
    keys = [p.ref.key for p in pairs.pairs]
    counts, rates, sets = [], [], []
    for eps in grid:
        hit = dist < eps
        n = int(hit.sum())
        counts.append(n)
        rates.append(n / denom if denom else 0.0)
        sets.append(frozenset(k for k, h in zip(keys, hit) if h))
    return RepeatabilityResult(scene_index, detector, pairs.mode.label, tuple(grid),
                               tuple(counts), denom, tuple(rates), tuple(sets),
                               tuple(float(x) for x in dist))


@dataclass(frozen=True)
class AggregateRepeatability:
    thresholds: tuple
    mean_rate: tuple
    n_defined: int
    n_excluded: int


def aggregate_repeatability(results) -> AggregateRepeatability:
    """Mean rate per threshold over defined scenes."""
    results = list(results)
    defined = [r for r in results if r.defined]
    if not defined:
        raise NoDefinedScenes(f"none of {len(results)} scenes has a defined repeatability")
    thresholds = defined[0].thresholds
    if any(r.thresholds != thresholds for r in defined):
        raise GridMismatch("scene results use different epsilon grids")
    means = tuple(math.fsum(r.rate[k] for r in defined) / len(defined)
                  for k in range(len(thresholds)))
    return AggregateRepeatability(thresholds, means, len(defined), len(results) - len(defined))


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def informedness_from_sets(thresholds, sets2d, sets3d) -> list[InformednessPoint]:
    """tpr/fpr/informedness per threshold from repeated-key sets under both modes.

    The reference sets are those at the largest threshold; an empty reference
    set makes its ratio 0 and is flagged. A false positive is a 2D repeat that
    3D pre-selection never confirms, i.e. one outside the 3D reference set.
    Subtracting the 3D set at the same threshold instead would let a key count
    as false at a small threshold and true at a larger one, so fpr could fall
    with growing threshold and exceed 1.
    """
    r2, r3 = sets2d[-1], sets3d[-1]
    tp_den = len(r2 & r3)
    fp_den = len(r2 - r3)
    out = []
    for eps, s2, s3 in zip(thresholds, sets2d, sets3d):
        tpr, tdeg = _ratio(len(s2 & s3), tp_den)
        fpr, fdeg = _ratio(len(s2 - r3), fp_den)
        out.append(InformednessPoint(float(eps), tpr, fpr, tpr - fpr, tdeg, fdeg))
    return out


def informedness_curve(result2d: RepeatabilityResult, result3d: RepeatabilityResult,
                       grid: EpsilonGrid | None = None) -> list[InformednessPoint]:
    if result2d.thresholds != result3d.thresholds or (
            grid is not None and tuple(grid) != result2d.thresholds):
        raise GridMismatch("2D and 3D results must share the same epsilon grid")
    return informedness_from_sets(result2d.thresholds, result2d.repeated_ref_keys,
                                  result3d.repeated_ref_keys)


def pooled_informedness(pairs_of_results) -> list[InformednessPoint]:
    """Pool repeated-key sets over many scenes (keys tagged by scene) before taking ratios."""
    pairs_of_results = list(pairs_of_results)
    if not pairs_of_results:
        raise EmptyCurve("no scenes to pool")
    thresholds = pairs_of_results[0][0].thresholds
    n = len(thresholds)
    s2 = [set() for _ in range(n)]
    s3 = [set() for _ in range(n)]
    for tag, (r2, r3) in enumerate(pairs_of_results):
        if r2.thresholds != thresholds or r3.thresholds != thresholds:
            raise GridMismatch("pooled scenes use different epsilon grids")
        for k in range(n):
            s2[k].update((tag, key) for key in r2.repeated_ref_keys[k])
            s3[k].update((tag, key) for key in r3.repeated_ref_keys[k])
    return informedness_from_sets(thresholds, s2, s3)


def mean_curve(curves) -> list[InformednessPoint]:
    """Point-wise mean of per-scene curves."""
    curves = list(curves)
    if not curves:
        raise EmptyCurve("no curves to average")
    out = []
    for pts in zip(*curves):
        tpr = math.fsum(p.tpr for p in pts) / len(pts)
        fpr = math.fsum(p.fpr for p in pts) / len(pts)
        out.append(InformednessPoint(pts[0].epsilon, tpr, fpr, tpr - fpr))
    return out


def roc_auc(curve) -> float:
    """Trapezoidal area under (fpr, tpr), closed with (0,0) and (1,1)."""
    curve = list(curve)
    if not curve:
        raise EmptyCurve("ROC curve has no points")
    xs = [0.0] + [p.fpr for p in curve] + [1.0]
    ys = [0.0] + [p.tpr for p in curve] + [1.0]
    return math.fsum((x1 - x0) * (y0 + y1) / 2 for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:]))


def best_epsilon(curve) -> tuple[float, float]:
    """(eps, informedness) at the maximum informedness; ties go to the smaller eps."""
    best = max(curve, key=lambda p: (p.informedness, -p.epsilon))
    return best.epsilon, best.informedness
