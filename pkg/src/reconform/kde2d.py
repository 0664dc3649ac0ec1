"""Bivariate Gaussian KDE over (theta_hat, t) pairs and its mass-level regions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def select_bandwidth(points) -> np.ndarray:
    """Diagonal normal-reference (Scott) bandwidth matrix for 2-D data.

    h_i = sd_i * k**(-1/6); the returned matrix is diag(h_1**2, h_2**2).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (k, 2)")
    k = pts.shape[0]
    if k < 4:
        raise ValueError(f"bandwidth selection needs >= 4 points, got {k}")
    sd = pts.std(axis=0, ddof=1)
    if not np.all(sd > 0):
        raise ValueError("degenerate point cloud: zero variance in a coordinate")
    h = sd * k ** (-1.0 / 6.0)
    return np.diag(h ** 2)


@dataclass(frozen=True, eq=False)
class Kde2d:
    points: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        H = np.asarray(self.bandwidth, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (k, 2)")
        if np.unique(pts, axis=0).shape[0] < 2:
            raise ValueError("KDE needs at least two distinct points")
        if H.shape != (2, 2) or not np.allclose(H, H.T):
            raise ValueError("bandwidth must be a symmetric 2x2 matrix")
        if not (H[0, 0] > 0 and H[1, 1] > 0 and np.linalg.det(H) > 0):
            raise ValueError("bandwidth must be positive definite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bandwidth", H)

    @classmethod
    def fit(cls, points, selector=select_bandwidth) -> "Kde2d":
        return cls(np.asarray(points, dtype=float), selector(points))

    @property
    def diagonal(self) -> bool:
        return self.bandwidth[0, 1] == 0.0

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.bandwidth))

    def density(self, theta, t) -> np.ndarray:
        """Density at broadcast query coordinates."""
        theta, t = np.broadcast_arrays(np.asarray(theta, dtype=float),
                                       np.asarray(t, dtype=float))
        q = np.stack([theta.ravel(), t.ravel()], axis=1)
        Hinv = np.linalg.inv(self.bandwidth)
        norm = 1.0 / (2.0 * np.pi * np.sqrt(np.linalg.det(self.bandwidth)))
        out = np.empty(q.shape[0])
        step = max(1, 2_000_000 // self.points.shape[0])
        for s in range(0, q.shape[0], step):
            d = q[s:s + step, None, :] - self.points[None, :, :]
            quad = np.einsum("qki,ij,qkj->qk", d, Hinv, d)
            out[s:s + step] = norm * np.exp(-0.5 * quad).mean(axis=1)
        return out.reshape(theta.shape)

    def grid_density(self, theta_grid, t_grid) -> np.ndarray:
        """Density on the product grid, shape (len(theta_grid), len(t_grid))."""
        theta_grid = np.asarray(theta_grid, dtype=float)
        t_grid = np.asarray(t_grid, dtype=float)
        if not self.diagonal:
            TH, TT = np.meshgrid(theta_grid, t_grid, indexing="ij")
            return self.density(TH, TT)
        h1, h2 = self.sd
        # separable kernel: K = A_theta @ A_t.T / k
        a = np.exp(-0.5 * ((theta_grid[:, None] - self.points[None, :, 0]) / h1) ** 2)
        b = np.exp(-0.5 * ((t_grid[:, None] - self.points[None, :, 1]) / h2) ** 2)
        k = self.points.shape[0]
        return (a @ b.T) / (k * 2.0 * np.pi * h1 * h2)


def density_at(kde: Kde2d, point) -> float:
    theta, t = point
    return float(kde.density(theta, t))


@dataclass(frozen=True)
class MassLevel:
    b_eps: float
    theta_bounds: tuple[float, float]
    t_bounds: tuple[float, float]
    resolution: int
    grid_mass: float = field(default=1.0)


def _grid(kde: Kde2d, resolution: int, pad: float):
    sd = kde.sd
    lo = kde.points.min(axis=0) - pad * sd
    hi = kde.points.max(axis=0) + pad * sd
    th = np.linspace(lo[0], hi[0], resolution)
    tt = np.linspace(lo[1], hi[1], resolution)
    return th, tt


def mass_level(kde: Kde2d, eps: float, resolution: int = 200,
               pad: float = 4.0) -> MassLevel:
    """Density level b_eps whose super-level set holds 1 - eps of the mass.

    Cell densities on a ``resolution`` x ``resolution`` grid covering the
    points padded by ``pad`` kernel sds are sorted descending and their
    Riemann masses accumulated (normalized by the grid total) until 1 - eps
    is reached; the last included density is b_eps.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    th, tt = _grid(kde, resolution, pad)
    dens = kde.grid_density(th, tt).ravel()
    area = (th[1] - th[0]) * (tt[1] - tt[0])
    order = np.sort(dens)[::-1]
    cum = np.cumsum(order) * area
    total = cum[-1]
    idx = int(np.searchsorted(cum, (1.0 - eps) * total, side="left"))
    idx = min(idx, order.size - 1)
    return MassLevel(float(order[idx]), (float(th[0]), float(th[-1])),
                     (float(tt[0]), float(tt[-1])), resolution, float(total))


def region_theta_scan(kde: Kde2d, level, t_grid, theta_step: float = 0.01,
                      resolution: int = 200, pad: float = 4.0
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Minimum t on ``t_grid`` inside {K >= b_eps} for each theta on a 0.01 grid.

    The theta grid spans the region's theta-extent (located on the coarse
    mass grid, padded by one coarse cell). Theta values with no qualifying t
    are dropped. ``level`` is a :class:`MassLevel` or a bare density level.
    Returns ``(thetas, t_min)``.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if isinstance(level, MassLevel):
        b = level.b_eps
        th = np.linspace(*level.theta_bounds, level.resolution)
        tt = np.linspace(*level.t_bounds, level.resolution)
    else:
        b = float(level)
        th, tt = _grid(kde, resolution, pad)
    coarse = kde.grid_density(th, tt)
    inside = np.flatnonzero((coarse >= b).any(axis=1))
    if inside.size == 0:
        return np.empty(0), np.empty(0)
    dth = th[1] - th[0]
    lo = th[inside[0]] - dth
    hi = th[inside[-1]] + dth
    start = np.floor(lo / theta_step) * theta_step
    n = int(np.ceil((hi - start) / theta_step)) + 1
    thetas = start + theta_step * np.arange(n)
    dens = kde.grid_density(thetas, t_grid)
    ok = dens >= b
    has = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    return thetas[has], t_grid[first[has]]
