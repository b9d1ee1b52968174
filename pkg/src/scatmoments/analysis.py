"""Diagnostics built on scattering output: slope fits, a stationarity-across-
scales check, and an intermittency classification of the second-order decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scattering import NormalizedScattering

__all__ = [
    "SlopeFit",
    "fit_log2_slope",
    "stationarity_across_scales",
    "intermittency_summary",
]


@dataclass(frozen=True)
class SlopeFit:
    """Ordinary least squares fit of log2(value) against an integer index."""

    slope: float
    intercept: float
    stderr: float
    range: tuple[int, int]


def fit_log2_slope(curve: dict, index_range=None) -> SlopeFit:
    """OLS of ``log2(curve[i])`` on ``i`` over ``index_range`` (inclusive).

    Raises
    ------
    ValueError
        Fewer than 3 points in range, or a nonpositive value among them.
    """
    if index_range is None:
        keys = sorted(curve)
    else:
        lo, hi = index_range
        keys = [k for k in sorted(curve) if lo <= k <= hi]
    if len(keys) < 3:
        raise ValueError(f"need at least 3 points, have {len(keys)}")
    vals = np.array([curve[k] for k in keys], dtype=float)
    if np.any(vals <= 0):
        bad = keys[int(np.argmin(vals))]
        raise ValueError(f"nonpositive value at index {bad}")
    x = np.array(keys, dtype=float)
    y = np.log2(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    n = len(keys)
    if n > 2:
        sxx = np.sum((x - x.mean()) ** 2)
        stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))
    else:
        stderr = 0.0
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        range=(int(keys[0]), int(keys[-1])),
    )


@dataclass(frozen=True)
class StationarityReport:
    """Spread of second-order curves across starting scales, per scale gap."""

    spread_by_gap: dict[int, float]
    threshold: float
    passed: bool


def stationarity_across_scales(
    ns: NormalizedScattering, gap_range=None, threshold: float = 0.3
) -> StationarityReport:
    """Test whether normalized second-order moments depend on the gap only.

    Self-similar inputs (deterministic or stochastic) produce curves
    ``log2 S(j1, j1+l)`` that coincide for every ``j1``; a spread above
    ``threshold`` (in log2 units) at some gap ``l`` flags a violation.
    This is a necessary condition, so the report states failure only.

    Raises
    ------
    ValueError
        If no gap has at least two distinct starting scales.
    """
    by_gap: dict[int, list[float]] = {}
    for (j1, j2), v in ns.order2_norm.items():
        gap = j2 - j1
        if gap_range is not None and not (gap_range[0] <= gap <= gap_range[1]):
            continue
        if v > 0:
            by_gap.setdefault(gap, []).append(np.log2(v))
    spread = {
        l: float(max(vals) - min(vals))
        for l, vals in sorted(by_gap.items())
        if len(vals) >= 2
    }
    if not spread:
        raise ValueError("need at least two starting scales per gap")
    return StationarityReport(
        spread_by_gap=spread,
        threshold=threshold,
        passed=bool(max(spread.values()) < threshold),
    )


@dataclass(frozen=True)
class IntermittencyReport:
    """Second-order tail behavior with a descriptive label."""

    tail_slope: float
    tail_stderr: float
    sum_sq_by_scale: dict[int, float]
    classification: str


def intermittency_summary(
    ns: NormalizedScattering, gap_range=None
) -> IntermittencyReport:
    """Classify the decay of second-order moments along the scale gap.

    A slope near -1/2 is the wide-band Gaussian signature; a flat tail is
    the cascade/jump signature; anything between is labelled intermediate.
    ``sum_sq_by_scale`` reports ``sum_l S(j, j+l)^2`` per starting scale,
    an aggregate burst-energy diagnostic.  Labels are descriptive, not a
    hypothesis test.  ``gap_range`` defaults to the tail (gaps of 3 and
    up), skipping the wavelet-dominated transient at small gaps.
    """
    if not ns.order2_norm:
        raise ValueError("second-order entries required")
    if gap_range is None:
        largest = max(j2 - j1 for j1, j2 in ns.order2_norm)
        # Tail gaps only, but keep at least 3 points when available.
        gap_range = (min(3, max(1, largest - 2)), largest)
    by_gap: dict[int, list[float]] = {}
    sum_sq: dict[int, float] = {}
    for (j1, j2), v in ns.order2_norm.items():
        l = j2 - j1
        sum_sq[j1] = sum_sq.get(j1, 0.0) + v * v
        if not gap_range[0] <= l <= gap_range[1]:
            continue
        if v > 0:
            by_gap.setdefault(l, []).append(v)
    curve = {l: float(np.median(vals)) for l, vals in by_gap.items()}
    fit = fit_log2_slope(curve)
    if fit.slope < -0.4:
        label = "gaussian-like"
    elif fit.slope > -0.1:
        label = "highly-intermittent"
    else:
        label = "intermediate"
    return IntermittencyReport(
        tail_slope=fit.slope,
        tail_stderr=fit.stderr,
        sum_sq_by_scale=sum_sq,
        classification=label,
    )
