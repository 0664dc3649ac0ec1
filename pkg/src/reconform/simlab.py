"""Simulation designs, a seeded replicate runner and coverage summaries.

Every trial draws from its own generator seeded by ``SeedSequence([seed,
trial])``, so a run is fully determined by (design, method, n_trials, seed)
and trials can be executed in any order or concurrently.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .conformal import full_coverage_guaranteed
from .intervals import LabelSet
from .methods import (GroupedSample, cdf_band, naive_sup, naive_unsup,
                      randomset_kde_unsup, randomset_mean_unsup, randomset_sup,
                      subsample_sup, subsample_unsup, within_group_conformal)
from .working_models import ConvergenceError, SeparationError

log = logging.getLogger(__name__)

METHODS = ("naive", "subsample", "randomset", "cdfband")
VARIANTS = ("mean", "kde")
# exceptions that mark a trial as failed instead of aborting the run
TRIAL_ERRORS = (ValueError, FloatingPointError, ConvergenceError,
                SeparationError, np.linalg.LinAlgError)


def _sizes(k: int, n_j) -> tuple[int, ...]:
    if isinstance(n_j, (int, np.integer)):
        sizes = (int(n_j),) * k
    else:
        sizes = tuple(int(v) for v in n_j)
    if len(sizes) != k:
        raise ValueError(f"n_j has {len(sizes)} entries but k={k}")
    if any(s < 1 for s in sizes):
        raise ValueError("n_j entries must be positive")
    return sizes


@dataclass(frozen=True)
class UnsupDesign:
    """theta_j ~ N(mu, tau^2), Y_ji ~ N(theta_j, sigma^2), j = 1..k.

    ``n_j`` is either a common group size or one size per group.
    """

    k: int
    n_j: int | tuple[int, ...] = 500
    mu: float = 0.0
    tau: float = 1.0
    sigma: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if not (self.tau > 0 and self.sigma > 0):
            raise ValueError("tau and sigma must be positive")
        object.__setattr__(self, "n_j", self.n_j if isinstance(self.n_j, int)
                           else _sizes(self.k, self.n_j))
        _sizes(self.k, self.n_j)

    @property
    def sizes(self) -> tuple[int, ...]:
        return _sizes(self.k, self.n_j)

    @property
    def supervised(self) -> bool:
        return False

    @property
    def design_id(self) -> str:
        if self.label:
            return self.label
        n = self.n_j if isinstance(self.n_j, int) else "ragged"
        return (f"unsup(k={self.k},n={n},mu={self.mu:g},tau={self.tau:g},"
                f"sigma={self.sigma:g})")

    @property
    def n_per_group(self):
        return self.n_j if isinstance(self.n_j, int) else min(self.n_j)


@dataclass(frozen=True)
class SupDesign:
    """theta_j ~ N(mu, tau^2), X ~ N(0, 1), P(Y = 1 | X) = expit(theta_j X)."""

    k: int
    n_j: int | tuple[int, ...] = 500
    mu: float = 0.0
    tau: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "n_j", self.n_j if isinstance(self.n_j, int)
                           else _sizes(self.k, self.n_j))
        _sizes(self.k, self.n_j)

    @property
    def sizes(self) -> tuple[int, ...]:
        return _sizes(self.k, self.n_j)

    @property
    def supervised(self) -> bool:
        return True

    @property
    def design_id(self) -> str:
        if self.label:
            return self.label
        n = self.n_j if isinstance(self.n_j, int) else "ragged"
        return f"sup(k={self.k},n={n},mu={self.mu:g},tau={self.tau:g})"

    @property
    def n_per_group(self):
        return self.n_j if isinstance(self.n_j, int) else min(self.n_j)


def pathological_design(convention: str = "sd") -> UnsupDesign:
    """k = 20 groups, one of 1000 observations and nineteen of 5.

    The group means are N(0, 10) and the observations N(mu_j, .1). With
    ``convention="sd"`` the numbers are standard deviations (tau = 10,
    sigma = 0.1); with ``"variance"`` they are variances.
    """
    if convention == "sd":
        tau, sigma = 10.0, 0.1
    elif convention == "variance":
        tau, sigma = math.sqrt(10.0), math.sqrt(0.1)
    else:
        raise ValueError(f"convention must be 'sd' or 'variance', got {convention!r}")
    return UnsupDesign(20, (1000,) + (5,) * 19, 0.0, tau, sigma,
                       label=f"pathological({convention})")


def gen_unsup(design: UnsupDesign, rng: np.random.Generator):
    """Draw one data set and a held-out observation from a fresh group.

    Returns ``(data, theta_new, y_new)``.
    """
    sizes = np.asarray(design.sizes)
    theta = design.mu + design.tau * rng.standard_normal(design.k)
    y = np.repeat(theta, sizes) + design.sigma * rng.standard_normal(sizes.sum())
    theta_new = design.mu + design.tau * rng.standard_normal()
    y_new = theta_new + design.sigma * rng.standard_normal()
    return GroupedSample(y, sizes), float(theta_new), float(y_new)


def gen_sup(design: SupDesign, rng: np.random.Generator):
    """Draw one supervised data set and a held-out (x*, theta*, y*).

    Returns ``(data, x_star, theta_star, y_star)``.
    """
    sizes = np.asarray(design.sizes)
    theta = design.mu + design.tau * rng.standard_normal(design.k)
    total = int(sizes.sum())
    x = rng.standard_normal(total)
    eta = np.repeat(theta, sizes) * x
    y = (rng.random(total) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    x_star = float(rng.standard_normal())
    theta_star = float(design.mu + design.tau * rng.standard_normal())
    y_star = int(rng.random() < 1.0 / (1.0 + math.exp(-theta_star * x_star)))
    return GroupedSample(y, sizes, x), x_star, theta_star, y_star


def gen_within(design: UnsupDesign, rng: np.random.Generator, group: int = 0):
    """Draw one data set and a new observation of an existing group.

    Returns ``(data, y_new)`` with ``y_new ~ N(theta_group, sigma^2)``.
    """
    sizes = np.asarray(design.sizes)
    theta = design.mu + design.tau * rng.standard_normal(design.k)
    y = np.repeat(theta, sizes) + design.sigma * rng.standard_normal(sizes.sum())
    y_new = theta[group] + design.sigma * rng.standard_normal()
    return GroupedSample(y, sizes), float(y_new)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, keyed on (seed, trial)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


@dataclass(frozen=True)
class MethodSpec:
    """Which prediction-set construction to run and with what levels.

    ``name`` is one of naive, subsample, randomset, cdfband. ``variant``
    selects mean or kde for randomset. ``n_subsamples`` is N for
    subsampling; ``beta``/``gamma`` are the cdf band levels.
    """

    name: str
    alpha: float = 0.1
    n_subsamples: int = 1
    delta: float = 0.05
    epsilon: float = 0.05
    variant: str = "mean"
    beta: float = 0.05
    gamma: float = 0.05

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.name!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for fname in ("alpha", "delta", "epsilon", "beta", "gamma"):
            v = getattr(self, fname)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{fname} must be in (0, 1), got {v}")
        if self.n_subsamples < 1:
            raise ValueError(f"N must be >= 1, got {self.n_subsamples}")

    @property
    def method_id(self) -> str:
        if self.name == "naive":
            return f"naive(alpha={self.alpha:g})"
        if self.name == "subsample":
            return f"subsample(alpha={self.alpha:g},N={self.n_subsamples})"
        if self.name == "randomset":
            return (f"randomset-{self.variant}(delta={self.delta:g},"
                    f"epsilon={self.epsilon:g})")
        return f"cdfband(beta={self.beta:g},gamma={self.gamma:g})"

    def guaranteed_full(self, design) -> bool:
        """Whether the set is the whole space by arithmetic alone."""
        k = design.k
        if self.name == "naive":
            return full_coverage_guaranteed(sum(design.sizes), self.alpha)
        if self.name == "subsample":
            return full_coverage_guaranteed(k, self.alpha / self.n_subsamples)
        if self.name == "randomset":
            return full_coverage_guaranteed(k, self.epsilon)
        n2 = k - (k + 1) // 2
        return math.ceil(n2 * (1.0 - self.gamma) - 1e-12) > n2


@dataclass(frozen=True)
class TrialResult:
    covered: bool
    set_size: float
    guaranteed_full: bool = False
    incorrect_covered: bool | None = None
    failed: bool = False


@dataclass(frozen=True)
class ExperimentSummary:
    """Aggregate of one (design, method) run.

    ``coverage`` is (number of covered trials) / ``n_trials``; a failed
    trial counts as not covered and is reported in ``failures``.
    ``mean_size`` averages the finite set sizes only and ``unbounded_rate``
    is the share of completed trials whose set had infinite size.
    """

    design_id: str
    method_id: str
    params: dict
    n_trials: int
    coverage: float
    incorrect_coverage: float | None
    mean_size: float
    unbounded_rate: float
    full_coverage_flag: bool
    failures: int
    seed: int
    mc_se: float
    data_digest: str = ""
    covered_count: int = 0
    incorrect_count: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _build_set(design, method: MethodSpec, rng, draw):
    if design.supervised:
        data, x_star, _, y_star = draw
        if method.name == "naive":
            s = naive_sup(data, x_star, method.alpha)
        elif method.name == "subsample":
            s = subsample_sup(data, x_star, method.alpha, method.n_subsamples, rng)
        elif method.name == "randomset":
            s = randomset_sup(data, x_star, method.delta, method.epsilon, rng,
                              variant=method.variant)
        else:
            raise ValueError("cdfband has no supervised form")
        return s, y_star
    data, _, y_new = draw
    if method.name == "naive":
        s = naive_unsup(data, method.alpha)
    elif method.name == "subsample":
        s = subsample_unsup(data, method.alpha, method.n_subsamples, rng)
    elif method.name == "randomset":
        fn = randomset_mean_unsup if method.variant == "mean" else randomset_kde_unsup
        s = fn(data, method.delta, method.epsilon, rng)
    else:
        s = cdf_band(data, method.beta, method.gamma, rng)
    return s, y_new


def _digest_draw(draw) -> bytes:
    h = hashlib.sha256()
    data = draw[0]
    h.update(data.y.tobytes())
    h.update(data.sizes.tobytes())
    if data.x is not None:
        h.update(data.x.tobytes())
    h.update(np.asarray(draw[1:], dtype=float).tobytes())
    return h.digest()


def _one_trial(design, method: MethodSpec, seed: int, trial: int,
               full: bool) -> tuple[TrialResult, bytes]:
    rng = trial_rng(seed, trial)
    draw = gen_sup(design, rng) if design.supervised else gen_unsup(design, rng)
    digest = _digest_draw(draw)
    try:
        s, target = _build_set(design, method, rng, draw)
    except TRIAL_ERRORS as exc:
        log.debug("trial %d failed: %s", trial, exc)
        return TrialResult(False, float("nan"), full, None, True), digest
    if isinstance(s, LabelSet):
        return TrialResult(target in s, float(s.size), full,
                           (1 - target) in s), digest
    return TrialResult(s.contains(target), s.size, full), digest


def _map_trials(fn: Callable[[int], object], n_trials: int, threads: int) -> list:
    if threads <= 1 or n_trials == 1:
        return [fn(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials)))


def summarize(results: Sequence[TrialResult], *, design_id: str, method_id: str,
              params: dict, seed: int, full_flag: bool,
              digest: str = "") -> ExperimentSummary:
    """Reduce per-trial results, in trial order, into an ExperimentSummary."""
    n = len(results)
    if n == 0:
        raise ValueError("need at least one trial")
    done = [r for r in results if not r.failed]
    covered = sum(1 for r in done if r.covered)
    cov = covered / n
    inc_vals = [r.incorrect_covered for r in done if r.incorrect_covered is not None]
    has_inc = any(r.incorrect_covered is not None for r in results)
    inc_count = sum(1 for v in inc_vals if v) if has_inc else None
    inc = inc_count / n if has_inc else None
    sizes = np.array([r.set_size for r in done], dtype=float)
    finite = sizes[np.isfinite(sizes)]
    mean_size = float(finite.mean()) if finite.size else float("inf")
    unbounded = float(np.mean(np.isinf(sizes))) if sizes.size else 0.0
    return ExperimentSummary(design_id, method_id, dict(params), n, cov, inc,
                             mean_size, unbounded, bool(full_flag),
                             n - len(done), int(seed),
                             math.sqrt(cov * (1.0 - cov) / n), digest,
                             covered, inc_count)


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def run_experiment(design, method: MethodSpec, n_trials: int, seed: int,
                   threads: int = 1) -> ExperimentSummary:
    """Run ``n_trials`` independent replicates and summarize them.

    Trials may run on ``threads`` worker threads; results are reduced in
    trial order so the summary does not depend on scheduling.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be positive, got {n_trials}")
    seed = _check_seed(seed)
    if method.name == "cdfband" and design.supervised:
        raise ValueError("cdfband needs an unsupervised design")
    full = method.guaranteed_full(design)
    out = _map_trials(lambda i: _one_trial(design, method, seed, i, full),
                      n_trials, threads)
    h = hashlib.sha256()
    for _, d in out:
        h.update(d)
    params = {f: getattr(design, f) for f in ("k", "n_j", "mu", "tau", "sigma")
              if hasattr(design, f)}
    params["n_j"] = design.n_per_group if isinstance(design.n_j, int) else list(design.n_j)
    params.update(asdict(method))
    return summarize([r for r, _ in out], design_id=design.design_id,
                     method_id=method.method_id, params=params, seed=seed,
                     full_flag=full, digest=h.hexdigest())


# --------------------------------------------------------------------------
# Shrinkage comparison within an observed group

SHRINKAGE_SIGMA2 = {1: 1.0, 2: 100.0}


def shrinkage_experiment(setup: int, k_grid: Sequence[int], n_trials: int,
                         seed: int, alpha: float = 0.1, n_j: int = 10,
                         threads: int = 1) -> list[tuple[ExperimentSummary, ExperimentSummary]]:
    """Paired comparison of group-mean and James-Stein residuals.

    Set-up 1 uses within-group variance 1 and set-up 2 uses 100; group means
    are N(0, 1). Each trial predicts a new observation of group 0 with both
    estimators on the same data. Returns one (mean, james-stein) pair of
    summaries per k.
    """
    if setup not in SHRINKAGE_SIGMA2:
        raise ValueError(f"setup must be 1 or 2, got {setup}")
    seed = _check_seed(seed)
    sigma2 = SHRINKAGE_SIGMA2[setup]
    out = []
    for k in k_grid:
        if k < 4:
            raise ValueError(f"James-Stein comparison needs k >= 4, got {k}")
        design = UnsupDesign(int(k), n_j, 0.0, 1.0, math.sqrt(sigma2),
                             label=f"shrinkage-setup{setup}(k={k},n={n_j})")
        full = full_coverage_guaranteed(n_j, alpha)

        def trial(i, design=design):
            rng = trial_rng(seed, i)
            data, y_new = gen_within(design, rng)
            h = hashlib.sha256(data.y.tobytes() + np.float64(y_new).tobytes()).digest()
            res = []
            for est in ("mean", "james-stein"):
                try:
                    s = within_group_conformal(data, 0, alpha, estimator=est,
                                               sigma2=sigma2, n_per_group=n_j)
                    res.append(TrialResult(s.contains(y_new), s.size, full))
                except TRIAL_ERRORS as exc:
                    log.debug("shrinkage trial %d failed: %s", i, exc)
                    res.append(TrialResult(False, float("nan"), full, None, True))
            return res, h

        rows = _map_trials(trial, n_trials, threads)
        h = hashlib.sha256()
        for _, d in rows:
            h.update(d)
        digest = h.hexdigest()
        params = {"setup": setup, "k": int(k), "n_j": n_j, "sigma2": sigma2,
                  "alpha": alpha}
        pair = tuple(
            summarize([r[0][i] for r in rows], design_id=design.design_id,
                      method_id=f"within-{est}(alpha={alpha:g})",
                      params={**params, "estimator": est}, seed=seed,
                      full_flag=full, digest=digest)
            for i, est in enumerate(("mean", "james-stein")))
        out.append(pair)
    return out
