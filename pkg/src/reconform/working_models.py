"""Parametric working models and the level sets built from them.

Contents: the unit-variance Gaussian location model, the intercept-free
one-parameter logistic model (maximum likelihood or MAP under a Student-t
prior), calibrated level-set thresholds, the split construction of a
(theta_hat, t) pair for one group, and positive-part James-Stein shrinkage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .conformal import as_sample
from .intervals import IntervalSet

SQRT_2PI = math.sqrt(2.0 * math.pi)
# peak of the N(theta, 1) density
GAUSS_PEAK = 1.0 / SQRT_2PI


class SeparationError(RuntimeError):
    """The logistic likelihood has no finite maximizer."""


class ConvergenceError(RuntimeError):
    """The optimizer failed to reach the gradient tolerance."""


@dataclass(frozen=True)
class GaussianModel:
    theta_hat: float

    def density(self, y):
        return gaussian_density(y, self.theta_hat)


@dataclass(frozen=True)
class LogisticModel:
    theta_hat: float

    def prob_one(self, x):
        return expit(self.theta_hat * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TPrior:
    """Student-t prior on the logistic slope (defaults: Cauchy, scale 2.5)."""

    df: float = 1.0
    scale: float = 2.5
    location: float = 0.0

    def __post_init__(self):
        if not self.df > 0:
            raise ValueError(f"df must be positive, got {self.df}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def logpdf(self, theta):
        z2 = ((np.asarray(theta, dtype=float) - self.location) / self.scale) ** 2
        return -0.5 * (self.df + 1.0) * np.log1p(z2 / self.df)

    def grad(self, theta):
        d = np.asarray(theta, dtype=float) - self.location
        return -(self.df + 1.0) * d / (self.df * self.scale ** 2 + d * d)

    def hess(self, theta):
        d = np.asarray(theta, dtype=float) - self.location
        a = self.df * self.scale ** 2
        return -(self.df + 1.0) * (a - d * d) / (a + d * d) ** 2


@dataclass(frozen=True)
class LevelSetPair:
    theta_hat: float
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"density threshold must be positive, got {self.t}")


def gaussian_density(y, theta):
    z = np.asarray(y, dtype=float) - theta
    return np.exp(-0.5 * z * z) / SQRT_2PI


def fit_gaussian_mean(sample) -> GaussianModel:
    """Maximum-likelihood location of the N(theta, 1) model."""
    return GaussianModel(float(np.mean(as_sample(sample))))


def gaussian_level_radius(t):
    """Half-width r with {y : phi(y - theta) >= t} = [theta - r, theta + r].

    NaN where ``t`` exceeds the density peak (empty level set).
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = -2.0 * np.log(t * SQRT_2PI)
    arg = np.where(np.abs(arg) < 1e-14, 0.0, arg)
    with np.errstate(invalid="ignore"):
        return np.where(arg >= 0, np.sqrt(np.maximum(arg, 0.0)), np.nan)


def gaussian_level_interval(pair: LevelSetPair) -> IntervalSet:
    """Closed level set {y : N(theta_hat, 1) density >= t}."""
    r = float(gaussian_level_radius(pair.t))
    if np.isnan(r):
        return IntervalSet.empty()
    return IntervalSet([(pair.theta_hat - r, pair.theta_hat + r)])


def level_set_threshold(density_values, beta: float) -> float:
    """Order statistic Z_(floor(n*beta)) of the fitted densities.

    The set {p >= threshold} then carries asymptotic mass 1 - beta even under a
    misspecified working model.
    """
    z = as_sample(density_values, "density_values")
    m = math.floor(z.size * beta + 1e-12)
    if m < 1:
        raise ValueError(f"floor(n*beta) = 0 for n={z.size}, beta={beta}; "
                         "increase n or beta")
    return float(np.partition(z, m - 1)[m - 1])


def split_threshold(values, delta: float) -> float:
    """Smallest value whose at-or-below count exceeds (n+1)*delta - 1.

    Calibrates the density threshold t on the held-out half so that
    {p > t} keeps about 1 - delta of the group's mass.
    """
    return float(split_thresholds(np.asarray(values, dtype=float)[None, :], delta)[0])


def split_thresholds(values: np.ndarray, delta: float) -> np.ndarray:
    """Row-wise :func:`split_threshold` for a (groups, n) array."""
    s = np.sort(values, axis=1)
    k, n = s.shape
    # count[r] = #{l : s[l] <= s[r]}, i.e. one past the last index of s[r]'s tie run
    last_of_run = np.ones_like(s, dtype=bool)
    last_of_run[:, :-1] = s[:, 1:] != s[:, :-1]
    idx = np.where(last_of_run, np.arange(1, n + 1)[None, :], n + 1)
    count = np.minimum.accumulate(idx[:, ::-1], axis=1)[:, ::-1]
    thr = (n + 1) * delta - 1.0
    first = np.argmax(count > thr, axis=1)
    return s[np.arange(k), first]


def _split_indices(n: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    n1 = (n + 1) // 2
    return perm[:n1], perm[n1:]


def split_level_set(group, delta: float, rng: np.random.Generator) -> LevelSetPair:
    """Fit theta_hat on a random half of ``group`` and calibrate t on the rest.

    The fitting half receives the extra element when the size is odd.
    """
    y = as_sample(group, "group")
    if y.size < 2:
        raise ValueError("split_level_set needs a group of size >= 2")
    i1, i2 = _split_indices(y.size, rng)
    theta = float(y[i1].mean())
    t = split_threshold(gaussian_density(y[i2], theta), delta)
    return LevelSetPair(theta, t)


def split_level_sets_matrix(Y: np.ndarray, delta: float,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`split_level_set` for equal-sized groups (rows of ``Y``)."""
    k, n = Y.shape
    if n < 2:
        raise ValueError("split_level_set needs groups of size >= 2")
    perm = rng.permuted(np.broadcast_to(np.arange(n), (k, n)), axis=1)
    Ys = np.take_along_axis(Y, perm, axis=1)
    n1 = (n + 1) // 2
    theta = Ys[:, :n1].mean(axis=1)
    t = split_thresholds(gaussian_density(Ys[:, n1:], theta[:, None]), delta)
    return theta, t


# --------------------------------------------------------------------------
# logistic working model

def _separated(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> bool:
    s = (2.0 * y - 1.0) * x
    live = w > 0
    return not (np.any(s[live] > 0) and np.any(s[live] < 0))


def _logpost(theta, X, Y, W, prior):
    # log p(y | x) = -softplus(-(2y - 1) * eta), written out because it is
    # noticeably faster than np.logaddexp on large pooled samples
    z = (1.0 - 2.0 * Y) * (theta[:, None] * X)
    ll = -np.sum(W * (np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))), axis=1)
    if prior is not None:
        ll = ll + prior.logpdf(theta)
    return ll


def _grad_hess(theta, X, Y, W, prior):
    p = expit(theta[:, None] * X)
    g = np.sum(W * X * (Y - p), axis=1)
    h = -np.sum(W * X * X * p * (1.0 - p), axis=1)
    if prior is not None:
        g = g + prior.grad(theta)
        h = h + prior.hess(theta)
    return g, h


def _golden_max(f, lo: np.ndarray, hi: np.ndarray, tol: float = 1e-10,
                max_iter: int = 200) -> np.ndarray:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.astype(float).copy(), hi.astype(float).copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a < tol):
            break
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - invphi * (b - a)
        d_new = a + invphi * (b - a)
        c, d = c_new, d_new
        fc, fd = f(c), f(d)
    return 0.5 * (a + b)


def fit_logistic_batch(X, Y, W=None, prior: TPrior | None = TPrior(),
                       theta0=None, grad_tol: float = 1e-8,
                       max_iter: int = 100) -> np.ndarray:
    """Fit one slope per row of ``X``/``Y`` by damped Newton iteration.

    ``W`` is an optional 0/1 (or general nonnegative) weight array, used to
    pad ragged groups. With ``prior=None`` this is maximum likelihood and a
    row whose labels are perfectly separated by the sign of x raises
    :class:`SeparationError`. With a prior the objective always has a finite
    maximizer. Rows that Newton cannot settle fall back to golden-section
    search on [-1e3, 1e3].
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    W = np.ones_like(X) if W is None else np.atleast_2d(np.asarray(W, dtype=float))
    k = X.shape[0]
    if prior is None:
        for j in range(k):
            if _separated(X[j], Y[j], W[j]):
                raise SeparationError(
                    f"row {j}: labels are separated by the sign of x; "
                    "the maximum-likelihood slope is infinite")
    if theta0 is None:
        theta = np.full(k, prior.location if prior is not None else 0.0)
    else:
        theta = np.broadcast_to(np.asarray(theta0, dtype=float), (k,)).copy()

    obj = _logpost(theta, X, Y, W, prior)
    done = np.zeros(k, dtype=bool)
    for _ in range(max_iter):
        g, h = _grad_hess(theta, X, Y, W, prior)
        done |= np.abs(g) < grad_tol
        if done.all():
            break
        # ascent direction; plain gradient step where the objective is not concave
        step = np.where(h < 0, -g / np.where(h < 0, h, -1.0), np.clip(g, -1.0, 1.0))
        step = np.where(done, 0.0, step)
        scale = np.ones(k)
        accepted = done.copy()
        new_theta, new_obj = theta.copy(), obj.copy()
        for _ in range(60):
            cand = theta + scale * step
            cobj = _logpost(cand, X, Y, W, prior)
            ok = ~accepted & (cobj >= obj - 1e-12 * np.abs(obj))
            new_theta = np.where(ok, cand, new_theta)
            new_obj = np.where(ok, cobj, new_obj)
            accepted |= ok
            if accepted.all():
                break
            scale = np.where(accepted, scale, 0.5 * scale)
        tiny = np.abs(new_theta - theta) <= 1e-13 * (1.0 + np.abs(theta))
        done |= tiny & accepted
        theta, obj = new_theta, new_obj

    g, _ = _grad_hess(theta, X, Y, W, prior)
    bad = ~done & ~(np.abs(g) < grad_tol)
    if np.any(bad):
        rows = np.flatnonzero(bad)

        def f(th):
            return _logpost(th, X[rows], Y[rows], W[rows], prior)

        lo = np.full(rows.size, -1e3)
        theta[rows] = _golden_max(f, lo, -lo)
        if prior is None and np.any(np.abs(theta[rows]) > 999.0):
            raise ConvergenceError("logistic MLE did not converge")
    return theta


def fit_logistic_map(x, y, prior: TPrior | None = TPrior()) -> LogisticModel:
    """Fit P(Y=1|x) = expit(theta*x) by penalized maximum likelihood.

    ``prior=None`` gives the plain MLE, which raises on separated data.
    """
    x = as_sample(x, "x")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != x.shape:
        raise ValueError("x and y must have the same length")
    if prior is None and not np.any(x != 0):
        raise SeparationError("all x are zero; the slope is not identified")
    return LogisticModel(float(fit_logistic_batch(x[None, :], y[None, :], prior=prior)[0]))


@dataclass(frozen=True)
class LogisticFitter:
    """Callable fitter returning the slope; ``prior=None`` means plain MLE."""

    prior: TPrior | None = TPrior()

    def __call__(self, x, y) -> float:
        return fit_logistic_map(x, y, self.prior).theta_hat

    def fit_batch(self, X, Y, W=None) -> np.ndarray:
        return fit_logistic_batch(X, Y, W, prior=self.prior)


# --------------------------------------------------------------------------
# shrinkage

def james_stein(group_means, sigma2: float, n_per_group: float) -> np.ndarray:
    """Positive-part James-Stein shrinkage of group means toward their grand mean.

    Each mean is assumed to have sampling variance ``sigma2 / n_per_group``.
    Requires at least four groups. When all means coincide the grand mean is
    returned for every group.
    """
    m = as_sample(group_means, "group_means")
    k = m.size
    if k < 4:
        raise ValueError(f"James-Stein shrinkage needs >= 4 groups, got {k}")
    if sigma2 < 0 or n_per_group <= 0:
        raise ValueError("sigma2 must be >= 0 and n_per_group > 0")
    grand = m.mean()
    dev = m - grand
    S = float(dev @ dev)
    if S == 0.0:
        return np.full(k, grand)
    factor = max(0.0, 1.0 - (k - 3) * (sigma2 / n_per_group) / S)
    return grand + factor * dev
