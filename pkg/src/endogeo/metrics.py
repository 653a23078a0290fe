"""Depth evaluation metrics with optional median scaling.

Every statistic averages only over pixels valid in both maps that also hold
finite positive values in both; the count used is reported as ``n_valid``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap, EmptyOverlap, ShapeMismatch, ZeroMedian

__all__ = ["MetricsReport", "median_scale", "compute_metrics"]


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    rmse_log: float
    abs_rel: float
    sq_rel: float
    a1: float
    a2: float
    a3: float
    n_valid: int

    def __post_init__(self):
        if not (self.a1 <= self.a2 <= self.a3):
            raise ValueError(
                f"threshold accuracies must be nested: {self.a1}, {self.a2}, {self.a3}"
            )

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "a1": self.a1,
            "a2": self.a2,
            "a3": self.a3,
            "n_valid": self.n_valid,
        }


def _overlap(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    if pred.data.shape != gt.data.shape:
        raise ShapeMismatch(
            f"prediction {pred.data.shape} vs ground truth {gt.data.shape}"
        )
    valid = (
        pred.mask
        & gt.mask
        & np.isfinite(pred.data)
        & np.isfinite(gt.data)
        & (pred.data > 0.0)
        & (gt.data > 0.0)
    )
    if not valid.any():
        raise EmptyOverlap("no pixel is valid in both maps")
    return valid


def median_scale(pred: DepthMap, gt: DepthMap) -> DepthMap:
    """Rescale the prediction by median(gt) / median(pred) over the overlap.

    The scale is computed on the shared valid pixels; the whole map is then
    multiplied, preserving the validity mask.
    """
    valid = _overlap(pred, gt)
    med_p = float(np.median(pred.data[valid]))
    med_g = float(np.median(gt.data[valid]))
    if med_p == 0.0 or med_g == 0.0:
        raise ZeroMedian(f"medians {med_p} (pred), {med_g} (gt)")
    return DepthMap(pred.data * (med_g / med_p), pred.validity_mask)


def compute_metrics(
    pred: DepthMap, gt: DepthMap, apply_median_scaling: bool = False
) -> MetricsReport:
    """RMSE, RMSE log, AbsRel, SqRel, and threshold accuracies a1..a3.

    a_k is the fraction of pixels with max(pred/gt, gt/pred) < 1.25**k.
    """
    if apply_median_scaling:
        pred = median_scale(pred, gt)
    valid = _overlap(pred, gt)
    p = pred.data[valid]
    g = gt.data[valid]
    r = p - g
    rmse = float(np.sqrt(np.mean(r**2)))
    rmse_log = float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2)))
    abs_rel = float(np.mean(np.abs(r) / g))
    sq_rel = float(np.mean(r**2 / g))
    thresh = np.maximum(p / g, g / p)
    a1 = float(np.mean(thresh < 1.25))
    a2 = float(np.mean(thresh < 1.25**2))
    a3 = float(np.mean(thresh < 1.25**3))
    return MetricsReport(
        rmse=rmse,
        rmse_log=rmse_log,
        abs_rel=abs_rel,
        sq_rel=sq_rel,
        a1=a1,
        a2=a2,
        a3=a3,
        n_valid=int(valid.sum()),
    )
