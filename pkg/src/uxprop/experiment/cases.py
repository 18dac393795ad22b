"""Label a (sigma^2, mue_lin, mue_mc) curve with one of the propagation regimes.

Only low-regime points (sigma^2 <= 1e-2) are used. The checks run in order:

* ``Case2_ZeroThreshold``: max mue_lin < 1e-12 and mue_mc < 1e-10 wherever
  sigma <= 1e-3;
* ``Case3_Plateau``: mue_lin spans at least 4 decades while
  max(mue_mc) / min(mue_mc) < 10;
* ``Case1_Aligned``: log-log slope of mue_mc against sigma^2 in [0.8, 1.2]
  and median(mue_mc / mue_lin) in [1/3, 3];

and anything else is ``Unclassified``.
"""

from dataclasses import asdict, dataclass

import numpy as np

CASE1 = "Case1_Aligned"
CASE2 = "Case2_ZeroThreshold"
CASE3 = "Case3_Plateau"
UNCLASSIFIED = "Unclassified"

LOW_REGIME_MAX_SIGMA_SQ = 1e-2
MIN_POINTS = 4
ZERO_LIN = 1e-12
ZERO_MC = 1e-10
ZERO_SIGMA_SQ = 1e-6
PLATEAU_LIN_DECADES = 4.0
PLATEAU_MC_RATIO = 10.0
SLOPE_WINDOW = (0.8, 1.2)
RATIO_BAND = (1 / 3, 3.0)


@dataclass(frozen=True)
class CaseLabel:
    label: str
    loglog_slope_mc: float
    loglog_slope_lin: float
    median_ratio: float
    plateau_span: float
    lin_span_decades: float

    def to_dict(self):
        return asdict(self)


def loglog_slope(x, y):
    """Least-squares slope of log10(y) on log10(x); NaN unless all values are positive."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) < 2 or np.any(x <= 0) or np.any(~(y > 0)):
        return float("nan")
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


def _span(values):
    values = np.asarray(values)
    if np.any(~(values > 0)):
        return float("nan")
    return float(values.max() / values.min())


def classify_case(curve):
    """``curve`` is a sequence of ``(sigma_sq, mue_lin, mue_mc)`` triples."""
    pts = np.asarray(curve, dtype=np.float64).reshape(-1, 3)
    pts = pts[pts[:, 0] <= LOW_REGIME_MAX_SIGMA_SQ * (1 + 1e-9)]
    if len(pts) < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} low-regime points, got {len(pts)}")
    pts = pts[np.argsort(pts[:, 0])]
    s2, lin, mc = pts.T

    slope_mc = loglog_slope(s2, mc)
    slope_lin = loglog_slope(s2, lin)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = float(np.median(mc / lin)) if np.all(lin > 0) else float("nan")
    mc_span = _span(mc)
    lin_span = _span(lin)
    lin_decades = float(np.log10(lin_span)) if lin_span == lin_span else float("nan")

    small = s2 <= ZERO_SIGMA_SQ * (1 + 1e-9)
    if lin.max() < ZERO_LIN and small.any() and np.all(mc[small] < ZERO_MC):
        label = CASE2
    elif lin_decades >= PLATEAU_LIN_DECADES and mc_span < PLATEAU_MC_RATIO:
        label = CASE3
    elif (SLOPE_WINDOW[0] <= slope_mc <= SLOPE_WINDOW[1]
          and RATIO_BAND[0] <= ratio <= RATIO_BAND[1]):
        label = CASE1
    else:
        label = UNCLASSIFIED
    return CaseLabel(label, slope_mc, slope_lin, ratio, mc_span, lin_decades)


def synthetic_fixtures():
    """Three constructed curves, one per regime, over the default low sigmas."""
    s2 = np.array([1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2])
    return {
        CASE1: list(zip(s2, s2, s2)),
        CASE2: list(zip(s2, np.zeros_like(s2), np.full_like(s2, 1e-14))),
        CASE3: list(zip(s2, s2, np.full_like(s2, 0.3))),
    }
