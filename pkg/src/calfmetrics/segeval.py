"""Segmentation scoring against ground truth and cross-method comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InsufficientGroups, ShapeError
from .stats import anova_oneway, bonferroni, tukey_hsd

METRIC_NAMES = ("iou", "dice", "pixel_accuracy")


@dataclass
class SegScores:
    """Overlap scores for one predicted/truth mask pair, each in [0, 1]."""

    iou: float
    dice: float
    pixel_accuracy: float


def score_masks(pred: np.ndarray, truth: np.ndarray) -> SegScores:
    """IoU, dice and pixel accuracy of a predicted mask against truth.

    Two empty masks score 1 on all metrics: correctly predicting absence is
    not an error.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    inter = int((pred & truth).sum())
    union = int((pred | truth).sum())
    total = pred.size
    if union == 0:
        return SegScores(1.0, 1.0, 1.0)
    iou = inter / union
    dice = 2.0 * inter / (pred.sum() + truth.sum())
    accuracy = (inter + int((~pred & ~truth).sum())) / total
    return SegScores(float(iou), float(dice), float(accuracy))


@dataclass
class MethodMetricRow:
    """One metric's comparison across methods (a row of the report table)."""

    metric: str
    means: list[float]
    sds: list[float]
    p: float
    p_adjusted: float
    eta2: float
    letters: list[str]


@dataclass
class MethodComparison:
    methods: list[str]
    n_scores: list[int]
    rows: list[MethodMetricRow]


def compare_methods(
    scores: dict[str, list[SegScores]], alpha: float = 0.05
) -> MethodComparison:
    """ANOVA + Tukey letters per overlap metric across segmentation methods.

    The ANOVA p-value per metric is Bonferroni-adjusted for the three
    metrics tested. Methods whose letters overlap are not significantly
    different at alpha.
    """
    methods = list(scores.keys())
    if len(methods) < 2:
        raise InsufficientGroups("compare_methods needs at least 2 methods")
    for name in methods:
        if len(scores[name]) < 2:
            raise InsufficientGroups(f"method {name!r} has fewer than 2 scores")

    rows = []
    for metric in METRIC_NAMES:
        groups = [
            np.array([getattr(s, metric) for s in scores[name]]) for name in methods
        ]
        means = [float(g.mean()) for g in groups]
        sds = [float(g.std(ddof=1)) for g in groups]
        try:
            anova = anova_oneway(groups)
            p, eta2 = anova.p, anova.eta2
            letters = tukey_hsd(groups, alpha).letters
        except DegenerateInput:
            # all scores identical across every method: nothing to separate
            p, eta2 = 1.0, 0.0
            letters = ["a"] * len(methods)
        rows.append(
            MethodMetricRow(
                metric=metric,
                means=means,
                sds=sds,
                p=p,
                p_adjusted=bonferroni(p, len(METRIC_NAMES)),
                eta2=eta2,
                letters=letters,
            )
        )
    return MethodComparison(methods, [len(scores[m]) for m in methods], rows)
