"""Conformal machinery for exchangeable samples.

Full-conformal p-values with the mean-deviation residual, their inversion
into intervals, split-conformal thresholds, and the binary supervised
conformal set built on a one-parameter logistic working model.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import expit

from .intervals import IntervalSet, LabelSet

# slack for float comparisons of 1/(n+1) against a level such as alpha/N
_LEVEL_SLACK = 1e-12


def as_sample(values, name: str = "sample") -> np.ndarray:
    """Validate a nonempty vector of finite reals and return it as floats."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def full_coverage_guaranteed(n: int, level: float) -> bool:
    """True when the smallest attainable p-value 1/(n+1) already reaches ``level``.

    In that regime every candidate passes the test and the conformal set is
    the whole space, regardless of the data.
    """
    return 1.0 / (n + 1) >= level - _LEVEL_SLACK


def _mean_pvalues_sorted(ys: np.ndarray, center: float, y) -> np.ndarray:
    # ys sorted ascending; center = mean(ys).
    # The augmented mean is center + (y - center)/(m+1) and the candidate's own
    # residual is m|y - center|/(m+1); writing both relative to the sample mean
    # keeps pi(center) == 1 exact in floating point.
    m = ys.size
    y = np.asarray(y, dtype=float)
    aug_mean = center + (y - center) / (m + 1)
    own = np.abs(y - center) * (m / (m + 1))
    # a few ulps of slack so exact ties (|Y_i - mean| == own) are not lost to
    # rounding of the boundary (with m = 1 every candidate is such a tie); the
    # floor covers subnormal inputs, where relative slack underflows
    fi = np.finfo(float)
    slack = np.maximum(8.0 * fi.eps * (np.abs(aug_mean) + own), fi.tiny)
    below = np.searchsorted(ys, aug_mean - own + slack, side="right")
    above = m - np.searchsorted(ys, aug_mean + own - slack, side="left")
    count = np.where(own > 0, np.minimum(below + above, m), m)
    return (count + 1) / (m + 1)


def conformal_pvalue_mean(sample, y: float) -> float:
    """Full-conformal p-value of ``y`` under the residual |Y_i - augmented mean|.

    The count runs over all m+1 augmented points, the candidate included, so
    the result lies in [1/(m+1), 1].

    >>> conformal_pvalue_mean([0.0, 1.0, 2.0], 10.0)
    0.25
    """
    ys = np.sort(as_sample(sample))
    return float(_mean_pvalues_sorted(ys, float(ys.mean()), y))


def mean_pvalue_function(sample) -> Callable[[float], float]:
    """Return a fast vectorized p-value function for a fixed sample."""
    ys = np.sort(as_sample(sample))
    center = float(ys.mean())
    return lambda y: _mean_pvalues_sorted(ys, center, y)


def invert_unimodal(pvalue: Callable[[float], float], center: float, alpha: float,
                    scale: float, tol: float = 1e-6) -> IntervalSet:
    """Invert a p-value function that is unimodal about ``center``.

    Steps outward from ``center`` with doubling steps until the p-value drops
    below ``alpha`` (or the step exceeds ``2**16 * scale``, in which case that
    side is unbounded), then bisects down to ``tol``. The returned endpoints
    are the innermost probes known to satisfy ``pvalue >= alpha``, so every
    point of the returned interval passes the test.
    """
    if pvalue(center) < alpha:
        return IntervalSet.empty()
    scale = float(scale) if scale > 0 else 1.0
    cap = 2.0 ** 16 * scale
    ends = []
    for sign in (-1.0, 1.0):
        inside, step = center, scale
        outside = None
        while True:
            probe = center + sign * step
            if pvalue(probe) < alpha:
                outside = probe
                break
            inside = probe
            if step >= cap:
                break
            step *= 2.0
        if outside is None:
            ends.append(sign * np.inf)
            continue
        while abs(outside - inside) > tol:
            mid = 0.5 * (inside + outside)
            if pvalue(mid) >= alpha:
                inside = mid
            else:
                outside = mid
        ends.append(inside)
    return IntervalSet([(ends[0], ends[1])])


def conformal_interval_mean(sample, alpha: float, tol: float = 1e-6) -> IntervalSet:
    """Full-conformal prediction interval {y : pi(y) >= alpha}.

    The p-value is unimodal about the sample mean, so the set is a single
    interval containing it. When ``alpha <= 1/(m+1)`` the set is the whole
    line.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    ys = np.sort(as_sample(sample))
    if full_coverage_guaranteed(ys.size, alpha):
        return IntervalSet.whole_line()
    center = float(ys.mean())
    scale = float(ys[-1] - ys[0]) + 1.0

    def pvalue(y):
        return float(_mean_pvalues_sorted(ys, center, y))

    return invert_unimodal(pvalue, center, alpha, scale, tol)


def split_conformal_threshold(scores, alpha: float) -> float:
    """Return the ceil(n(1-alpha))-th smallest score.

    Raises ``ValueError`` when that rank exceeds n, i.e. ``alpha`` is too small
    for the number of calibration scores and the caller has to fall back to
    the full support.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    s = as_sample(scores, "scores")
    n = s.size
    rank = math.ceil(n * (1.0 - alpha) - 1e-12)
    if rank > n:
        raise ValueError(f"alpha={alpha} too small for {n} scores (rank {rank} > n)")
    rank = max(rank, 1)
    return float(np.partition(s, rank - 1)[rank - 1])


def _default_fitter():
    from .working_models import LogisticFitter

    return LogisticFitter()


def binary_conformal_pvalues(x, y, x_star: float, fitter=None) -> tuple[float, float]:
    """Conformal p-values (pi(0), pi(1)) for the label attached to ``x_star``.

    For each candidate label the pair (x_star, label) is appended, the
    one-parameter logistic model is refit on the augmented data and the
    residuals |mu_hat(x_i) - y_i| are ranked against the candidate's.
    """
    x = as_sample(x, "x")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != x.shape:
        raise ValueError("x and y must have the same length")
    fitter = fitter if fitter is not None else _default_fitter()
    xa = np.append(x, float(x_star))
    out = []
    for label in (0.0, 1.0):
        ya = np.append(y, label)
        theta = fitter(xa, ya)
        resid = np.abs(expit(theta * xa) - ya)
        out.append(float(np.mean(resid >= resid[-1])))
    return out[0], out[1]


def binary_conformal_set(x, y, x_star: float, alpha: float, fitter=None) -> LabelSet:
    """Labels in {0, 1} whose conformal p-value is at least ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = np.asarray(x).size
    if full_coverage_guaranteed(n, alpha):
        return LabelSet.full()
    p0, p1 = binary_conformal_pvalues(x, y, x_star, fitter)
    return LabelSet(p0 >= alpha, p1 >= alpha)
