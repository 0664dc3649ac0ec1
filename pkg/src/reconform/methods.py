"""Prediction sets for grouped (random-effects) data.

Predicting a new observation from a new group: naive pooling, subsampling one
observation per group, random sets built from per-group working-model level
sets (mean and KDE variants), and the CDF-band method. Supervised binary
counterparts of the first three. Predicting a new observation on an existing
group: within-group conformal with group-mean or James-Stein residuals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .conformal import (as_sample, binary_conformal_set, conformal_interval_mean,
                        full_coverage_guaranteed, invert_unimodal,
                        split_conformal_threshold)
from .intervals import IntervalSet, LabelSet
from .kde2d import Kde2d, mass_level, region_theta_scan, select_bandwidth
from .working_models import (LevelSetPair, LogisticFitter,
                             gaussian_level_interval, gaussian_level_radius,
                             james_stein, split_level_set,
                             split_level_sets_matrix, split_thresholds,
                             split_threshold)

log = logging.getLogger(__name__)

# density-threshold grids searched when building the (theta, t) region
GAUSS_T_GRID = np.round(np.arange(1, 399) * 0.001, 3)   # 0.001 .. 0.398
LOGIT_T_GRID = np.round(np.arange(0, 101) * 0.01, 2)    # 0.00 .. 1.00


class GroupedSample:
    """k groups of observations stored flat, with optional covariates.

    ``y`` and ``x`` hold all observations back to back; ``sizes[j]`` is the
    number of observations in group j.
    """

    def __init__(self, y, sizes, x=None):
        self.y = np.asarray(y, dtype=float).ravel()
        self.sizes = np.asarray(sizes, dtype=np.int64).ravel()
        self.x = None if x is None else np.asarray(x, dtype=float).ravel()
        if self.sizes.size < 1 or np.any(self.sizes < 1):
            raise ValueError("need at least one group and every group nonempty")
        if self.sizes.sum() != self.y.size:
            raise ValueError("group sizes do not add up to the number of observations")
        if self.x is not None and self.x.size != self.y.size:
            raise ValueError("x and y must have the same length")
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])

    @classmethod
    def from_groups(cls, groups, x_groups=None) -> "GroupedSample":
        groups = [as_sample(g, "group") for g in groups]
        sizes = [g.size for g in groups]
        x = None if x_groups is None else np.concatenate(
            [np.asarray(g, dtype=float).ravel() for g in x_groups])
        return cls(np.concatenate(groups), sizes, x)

    @classmethod
    def from_matrix(cls, Y, X=None) -> "GroupedSample":
        Y = np.asarray(Y, dtype=float)
        sizes = np.full(Y.shape[0], Y.shape[1])
        return cls(Y.ravel(), sizes, None if X is None else np.asarray(X).ravel())

    @property
    def k(self) -> int:
        return int(self.sizes.size)

    @property
    def supervised(self) -> bool:
        return self.x is not None

    @property
    def balanced(self) -> bool:
        return bool(np.all(self.sizes == self.sizes[0]))

    def group(self, j: int) -> np.ndarray:
        return self.y[self.offsets[j]:self.offsets[j + 1]]

    def group_x(self, j: int) -> np.ndarray:
        return self.x[self.offsets[j]:self.offsets[j + 1]]

    @property
    def groups(self) -> list[np.ndarray]:
        return [self.group(j) for j in range(self.k)]

    def matrix(self):
        """(k, n) views of y (and x) for balanced data, else ``None``."""
        if not self.balanced:
            return None
        n = int(self.sizes[0])
        Y = self.y.reshape(self.k, n)
        return Y if self.x is None else (Y, self.x.reshape(self.k, n))

    def group_means(self) -> np.ndarray:
        return np.add.reduceat(self.y, self.offsets[:-1]) / self.sizes

    def draw_one_per_group(self, rng: np.random.Generator) -> np.ndarray:
        """Indices of one uniformly chosen observation in each group."""
        return self.offsets[:-1] + rng.integers(0, self.sizes)

    def __repr__(self) -> str:
        kind = "supervised" if self.supervised else "unsupervised"
        return f"GroupedSample(k={self.k}, n={self.y.size}, {kind})"


def _need(data: GroupedSample, supervised: bool):
    if data.supervised != supervised:
        want = "supervised (x, y)" if supervised else "unsupervised"
        raise ValueError(f"method expects {want} data")


# --------------------------------------------------------------------------
# unsupervised, new group

def naive_unsup(data: GroupedSample, alpha: float) -> IntervalSet:
    """Pool every observation and treat the pooled sample as exchangeable."""
    _need(data, False)
    return conformal_interval_mean(data.y, alpha)


def subsample_unsup(data: GroupedSample, alpha: float, n_subsamples: int,
                    rng: np.random.Generator) -> IntervalSet:
    """Intersection of N conformal sets, each from one draw per group at level 1 - alpha/N."""
    _need(data, False)
    if n_subsamples < 1:
        raise ValueError("n_subsamples must be >= 1")
    level = alpha / n_subsamples
    if full_coverage_guaranteed(data.k, level):
        return IntervalSet.whole_line()
    out = IntervalSet.whole_line()
    for _ in range(n_subsamples):
        draws = data.y[data.draw_one_per_group(rng)]
        out = out & conformal_interval_mean(draws, level)
    return out


def level_set_pairs(data: GroupedSample, delta: float,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split-fitted (theta_hat_j, t_j) for every group under the N(theta, 1) model."""
    if np.any(data.sizes < 2):
        raise ValueError("every group needs at least 2 observations")
    M = data.matrix()
    if M is not None:
        return split_level_sets_matrix(M, delta, rng)
    pairs = [split_level_set(g, delta, rng) for g in data.groups]
    return (np.array([p.theta_hat for p in pairs]), np.array([p.t for p in pairs]))


def _pair_pvalues(theta, t, cand_theta, cand_t):
    """Conformal p-values of candidate pairs under the standardized mean residual.

    ``theta``/``t`` are the k observed pairs (already centered); candidate
    arrays broadcast together. Means and sds are of the augmented sample.
    """
    k = theta.size
    ct, cc = np.broadcast_arrays(np.asarray(cand_theta, float), np.asarray(cand_t, float))
    tiny = np.finfo(float).eps

    def stats(obs, cand):
        mean = (obs.sum() + cand) / (k + 1)
        ss = (obs @ obs) + cand * cand - (k + 1) * mean * mean
        sd = np.sqrt(np.maximum(ss, 0.0) / k)
        return mean, np.where(sd > 0, sd, tiny)

    m1, s1 = stats(theta, ct)
    m2, s2 = stats(t, cc)
    r_cand = np.abs(ct - m1) / s1 + np.abs(cc - m2) / s2
    r_obs = (np.abs(theta - m1[..., None]) / s1[..., None]
             + np.abs(t - m2[..., None]) / s2[..., None])
    return (1.0 + np.sum(r_obs >= r_cand[..., None], axis=-1)) / (k + 1)


def mean_region_bounds(theta, t, t_grid, epsilon: float,
                       tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Min and max theta with pair p-value >= epsilon, for each t on ``t_grid``.

    For fixed t the p-value peaks at theta = mean of the observed theta_hat
    values; the search steps outward from there with doubling steps and
    bisects the boundary, vectorized across the grid. Rows where even the
    peak fails get NaN bounds (empty slice of the region).
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    c1, c2 = theta.mean(), t.mean()
    th, tc, grid = theta - c1, t - c2, t_grid - c2
    scale = theta.std() if theta.std() > 0 else 1.0

    alive = _pair_pvalues(th, tc, 0.0, grid) >= epsilon
    lo = np.full(grid.size, np.nan)
    hi = np.full(grid.size, np.nan)
    if not alive.any():
        return lo, hi
    g = grid[alive]
    for sign, out in ((-1.0, lo), (1.0, hi)):
        inside = np.zeros(g.size)
        outside = np.full(g.size, np.nan)
        step = scale
        for _ in range(40):
            todo = np.isnan(outside)
            if not todo.any():
                break
            probe = sign * step
            fail = todo & (_pair_pvalues(th, tc, probe, g) < epsilon)
            outside = np.where(fail, probe, outside)
            inside = np.where(todo & ~fail, probe, inside)
            step *= 2.0
        unbounded = np.isnan(outside)
        outside = np.where(unbounded, inside, outside)
        while np.max(np.abs(outside - inside)) > tol * scale:
            mid = 0.5 * (inside + outside)
            ok = _pair_pvalues(th, tc, mid, g) >= epsilon
            inside = np.where(ok, mid, inside)
            outside = np.where(ok, outside, mid)
        vals = np.where(unbounded, sign * np.inf, inside + c1)
        out[alive] = vals
    return lo, hi


def randomset_mean_unsup(data: GroupedSample, delta: float, epsilon: float,
                         rng: np.random.Generator,
                         t_grid=GAUSS_T_GRID) -> IntervalSet:
    """Random-set method with the standardized mean-deviation residual on (theta, t).

    Each group contributes a level set {y : phi(y - theta_j) > t_j} calibrated
    to 1 - delta; a 1 - epsilon conformal region B for a future pair is
    built on a grid of t values and the union of the level sets over B is
    returned.
    """
    _need(data, False)
    if data.k < 2:
        raise ValueError("random-set method needs k >= 2 groups")
    if full_coverage_guaranteed(data.k, epsilon):
        return IntervalSet.whole_line()
    theta, t = level_set_pairs(data, delta, rng)
    if np.ptp(theta) == 0 and np.ptp(t) == 0:
        # zero spread: the region collapses onto the single observed pair
        return gaussian_level_interval(LevelSetPair(float(theta[0]), float(t[0])))
    lo, hi = mean_region_bounds(theta, t, t_grid, epsilon)
    keep = ~np.isnan(lo)
    if not keep.any():
        log.debug("random-set region B is empty on the t grid")
        return IntervalSet.empty()
    r = gaussian_level_radius(np.asarray(t_grid, float)[keep])
    return IntervalSet.from_arrays(lo[keep] - r, hi[keep] + r)


def randomset_kde_unsup(data: GroupedSample, delta: float, epsilon: float,
                        rng: np.random.Generator, t_grid=GAUSS_T_GRID,
                        theta_step: float = 0.01,
                        bandwidth=select_bandwidth) -> IntervalSet:
    """Random-set method with B = {(theta, t) : KDE >= b_eps}.

    For each theta on a 0.01 grid the smallest qualifying t gives the widest
    level set; the union of those intervals is returned.
    """
    _need(data, False)
    if data.k < 4:
        raise ValueError("KDE random-set method needs k >= 4 groups")
    if full_coverage_guaranteed(data.k, epsilon):
        return IntervalSet.whole_line()
    theta, t = level_set_pairs(data, delta, rng)
    pts = np.column_stack([theta, t])
    kde = Kde2d(pts, bandwidth(pts))
    level = mass_level(kde, epsilon)
    th, tmin = region_theta_scan(kde, level, t_grid, theta_step)
    if th.size == 0:
        log.debug("KDE region B is empty")
        return IntervalSet.empty()
    r = gaussian_level_radius(tmin)
    ok = ~np.isnan(r)
    return IntervalSet.from_arrays(th[ok] - r[ok], th[ok] + r[ok])


# --------------------------------------------------------------------------
# CDF band (Method III, split-conformal form)

def _ecdf_support(groups):
    """Sorted support and values of the equally weighted average of group ECDFs."""
    vals = np.concatenate(groups)
    w = np.concatenate([np.full(g.size, 1.0 / (g.size * len(groups))) for g in groups])
    order = np.argsort(vals, kind="stable")
    vals, w = vals[order], w[order]
    cdf = np.cumsum(w)
    # collapse ties so each support point carries the cdf after all its mass
    last = np.append(vals[1:] != vals[:-1], True)
    vals, cdf = vals[last], cdf[last]
    cdf[-1] = 1.0
    return vals, np.minimum(cdf, 1.0)


def _step_eval(support, cdf, y):
    idx = np.searchsorted(support, y, side="right")
    return np.where(idx > 0, cdf[np.maximum(idx - 1, 0)], 0.0)


def ks_distance_to(support, cdf, sample) -> float:
    """sup_y |ECDF(sample)(y) - F(y)| for a step cdf given on ``support``."""
    s = np.sort(sample)
    pts = np.union1d(support, s)
    f_bar = _step_eval(support, cdf, pts)
    f_j = np.searchsorted(s, pts, side="right") / s.size
    return float(np.max(np.abs(f_j - f_bar)))


# ECDF levels are averages of multiples of 1/n, so radii and band values carry
# rounding noise of a few ulps; comparisons against them use this tolerance
_CDF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CdfBand:
    """Band {F : KS(F, base) <= radius} around a step cdf."""

    support: np.ndarray
    base_cdf: np.ndarray
    radius: float
    beta: float
    gamma: float

    def base(self, y):
        return _step_eval(self.support, self.base_cdf, y)

    def lower(self, y):
        return np.maximum(self.base(y) - self.radius, 0.0)

    def upper(self, y):
        return np.minimum(self.base(y) + self.radius, 1.0)

    def upper_inverse(self, q: float) -> float:
        """sup{y : upper(y) <= q}."""
        c = q - self.radius
        if q >= 1.0:
            return np.inf
        if c < 0:
            return -np.inf
        idx = np.searchsorted(self.base_cdf, c + _CDF_TOL, side="right")
        return float(self.support[idx]) if idx < self.support.size else np.inf

    def lower_inverse(self, q: float) -> float:
        """inf{y : lower(y) >= q}."""
        c = q + self.radius
        if q <= 0.0:
            return -np.inf
        if c > 1.0:
            return np.inf
        idx = np.searchsorted(self.base_cdf, c - _CDF_TOL, side="left")
        return float(self.support[idx]) if idx < self.support.size else np.inf

    def interval(self) -> IntervalSet:
        a = self.upper_inverse(self.beta / 2.0)
        b = self.lower_inverse(1.0 - self.beta / 2.0)
        return IntervalSet([(a, b)])


def fit_cdf_band(data: GroupedSample, beta: float, gamma: float,
                 rng: np.random.Generator | None = None) -> CdfBand:
    """Split-conformal CDF band.

    Groups are split in half (randomly when ``rng`` is given); the average
    ECDF of the first half is the band center and the gamma-calibrated KS
    distance of the second half's ECDFs to it is the radius.
    """
    _need(data, False)
    k = data.k
    if k < 4:
        raise ValueError(f"cdf band needs k >= 4 groups, got {k}")
    order = np.arange(k) if rng is None else rng.permutation(k)
    k1 = (k + 1) // 2
    fit_groups = [data.group(j) for j in order[:k1]]
    support, cdf = _ecdf_support(fit_groups)
    resid = np.array([ks_distance_to(support, cdf, data.group(j)) for j in order[k1:]])
    try:
        radius = split_conformal_threshold(resid, gamma)
    except ValueError:
        radius = 1.0
    if radius >= 1.0:
        log.warning("cdf band radius >= 1: the band is vacuous")
    return CdfBand(support, cdf, float(radius), beta, gamma)


def cdf_band(data: GroupedSample, beta: float, gamma: float,
             rng: np.random.Generator | None = None) -> IntervalSet:
    """Interval [a, b] with a = u^-1(beta/2), b = l^-1(1 - beta/2) of the CDF band."""
    band = fit_cdf_band(data, beta, gamma, rng)
    if band.radius >= 1.0:
        return IntervalSet.whole_line()
    return band.interval()


# --------------------------------------------------------------------------
# supervised, binary labels

def naive_sup(data: GroupedSample, x_star: float, alpha: float,
              fitter=None) -> LabelSet:
    _need(data, True)
    return binary_conformal_set(data.x, data.y, x_star, alpha, fitter)


def subsample_sup(data: GroupedSample, x_star: float, alpha: float,
                  n_subsamples: int, rng: np.random.Generator,
                  fitter=None) -> LabelSet:
    _need(data, True)
    if n_subsamples < 1:
        raise ValueError("n_subsamples must be >= 1")
    level = alpha / n_subsamples
    if full_coverage_guaranteed(data.k, level):
        return LabelSet.full()
    out = LabelSet.full()
    for _ in range(n_subsamples):
        idx = data.draw_one_per_group(rng)
        out = out & binary_conformal_set(data.x[idx], data.y[idx], x_star, level, fitter)
    return out


def _cond_prob(theta, x, y):
    p1 = expit(theta * x)
    return np.where(y > 0.5, p1, 1.0 - p1)


def logistic_level_set_pairs(data: GroupedSample, delta: float,
                             rng: np.random.Generator,
                             fitter=None) -> tuple[np.ndarray, np.ndarray]:
    """Split-fitted (theta_hat_j, t_j) per group for the logistic working model.

    t_j is calibrated on the held-out half from the conditional probabilities
    p(y_i | x_i; theta_hat_j).
    """
    fitter = fitter if fitter is not None else LogisticFitter()
    if np.any(data.sizes < 2):
        raise ValueError("every group needs at least 2 observations")
    mats = data.matrix()
    if mats is not None and hasattr(fitter, "fit_batch"):
        Y, X = mats
        k, n = Y.shape
        perm = rng.permuted(np.broadcast_to(np.arange(n), (k, n)), axis=1)
        Xs = np.take_along_axis(X, perm, axis=1)
        Ys = np.take_along_axis(Y, perm, axis=1)
        n1 = (n + 1) // 2
        theta = fitter.fit_batch(Xs[:, :n1], Ys[:, :n1])
        probs = _cond_prob(theta[:, None], Xs[:, n1:], Ys[:, n1:])
        return theta, split_thresholds(probs, delta)
    theta = np.empty(data.k)
    t = np.empty(data.k)
    for j in range(data.k):
        x, y = data.group_x(j), data.group(j)
        perm = rng.permutation(y.size)
        n1 = (y.size + 1) // 2
        i1, i2 = perm[:n1], perm[n1:]
        theta[j] = fitter(x[i1], y[i1])
        t[j] = split_threshold(_cond_prob(theta[j], x[i2], y[i2]), delta)
    return theta, t


def randomset_sup(data: GroupedSample, x_star: float, delta: float,
                  epsilon: float, rng: np.random.Generator, variant: str = "mean",
                  fitter=None, t_grid=LOGIT_T_GRID,
                  theta_step: float = 0.01) -> LabelSet:
    """Supervised random-set method: labels y with p(y | x_star; theta) > t for some (theta, t) in B."""
    _need(data, True)
    if variant not in ("mean", "kde"):
        raise ValueError(f"variant must be 'mean' or 'kde', got {variant!r}")
    min_k = 2 if variant == "mean" else 4
    if data.k < min_k:
        raise ValueError(f"{variant} random-set method needs k >= {min_k}")
    if full_coverage_guaranteed(data.k, epsilon):
        return LabelSet.full()
    theta, t = logistic_level_set_pairs(data, delta, rng, fitter)
    t_grid = np.asarray(t_grid, dtype=float)
    if variant == "mean":
        lo, hi = mean_region_bounds(theta, t, t_grid, epsilon)
        keep = ~np.isnan(lo)
        if not keep.any():
            log.debug("supervised random-set region B is empty")
            return LabelSet()
        # p(y | x; theta) is monotone in theta, so its max over [lo, hi] is at an end
        ends = np.stack([lo[keep], hi[keep]])
        p1 = expit(np.clip(ends, -1e300, 1e300) * x_star)
        tk = t_grid[keep]
        has1 = bool(np.any(p1.max(axis=0) > tk))
        has0 = bool(np.any((1.0 - p1).max(axis=0) > tk))
        return LabelSet(has0, has1)
    pts = np.column_stack([theta, t])
    kde = Kde2d(pts, select_bandwidth(pts))
    level = mass_level(kde, epsilon)
    th, tmin = region_theta_scan(kde, level, t_grid, theta_step)
    if th.size == 0:
        log.debug("supervised KDE region B is empty")
        return LabelSet()
    p1 = expit(th * x_star)
    return LabelSet(bool(np.any(1.0 - p1 > tmin)), bool(np.any(p1 > tmin)))


# --------------------------------------------------------------------------
# a new observation on an existing group

def within_group_conformal(data: GroupedSample, group_index: int, alpha: float,
                           estimator: str = "mean", sigma2: float | None = None,
                           n_per_group: float | None = None,
                           tol: float = 1e-6) -> IntervalSet:
    """Full conformal set for a new observation of group ``group_index``.

    The residual is |Y_i - mu_hat| over the group's augmented data, with
    mu_hat the augmented group mean (``estimator="mean"``) or that group's
    James-Stein estimate recomputed after augmenting (``"james-stein"``,
    which needs the within-group variance ``sigma2``).
    """
    _need(data, False)
    if not 0 <= group_index < data.k:
        raise IndexError(f"group_index {group_index} out of range for k={data.k}")
    ys = data.group(group_index)
    m = ys.size
    if estimator == "mean":
        return conformal_interval_mean(ys, alpha, tol)
    if estimator not in ("james-stein", "js"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if data.k < 4:
        raise ValueError("James-Stein residuals need k >= 4 groups")
    if sigma2 is None:
        raise ValueError("James-Stein residuals need the within-group variance sigma2")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if full_coverage_guaranteed(m, alpha):
        return IntervalSet.whole_line()
    n_eff = float(m) if n_per_group is None else float(n_per_group)
    means = data.group_means()
    s = ys.sum()

    def mu_hat(y):
        mm = means.copy()
        mm[group_index] = (s + y) / (m + 1)
        return james_stein(mm, sigma2, n_eff)[group_index]

    def pvalue(y):
        mu = mu_hat(y)
        own = abs(y - mu)
        return (1.0 + np.count_nonzero(np.abs(ys - mu) >= own)) / (m + 1)

    # the p-value equals 1 where y coincides with its own shrunken estimate
    center = float(means[group_index])
    for _ in range(200):
        nxt = float(mu_hat(center))
        if abs(nxt - center) <= 1e-13 * (1.0 + abs(center)):
            center = nxt
            break
        center = nxt
    scale = float(np.ptp(ys)) + 1.0
    return invert_unimodal(pvalue, center, alpha, scale, tol)
