import numpy as np
import pytest
from scipy import stats

from reconform.kde2d import (Kde2d, MassLevel, density_at, mass_level,
                             region_theta_scan, select_bandwidth)


@pytest.fixture
def cloud():
    rng = np.random.default_rng(0)
    return np.column_stack([rng.normal(0, 1, 60), rng.normal(0.2, 0.05, 60)])


def mixture_oracle(points, H, q):
    return np.mean([stats.multivariate_normal(p, H).pdf(q) for p in points], axis=0)


def test_scott_bandwidth(cloud):
    H = select_bandwidth(cloud)
    sd = cloud.std(axis=0, ddof=1)
    assert np.allclose(np.diag(H), (sd * 60 ** (-1 / 6)) ** 2)
    assert H[0, 1] == 0.0


def test_bandwidth_errors():
    with pytest.raises(ValueError):
        select_bandwidth(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        select_bandwidth(np.column_stack([np.arange(5.0), np.ones(5)]))


def test_density_matches_mixture(cloud):
    kde = Kde2d.fit(cloud)
    q = np.array([[0.0, 0.2], [1.0, 0.25], [-2.0, 0.1]])
    expected = mixture_oracle(cloud, kde.bandwidth, q)
    assert np.allclose(kde.density(q[:, 0], q[:, 1]), expected)
    assert density_at(kde, (0.0, 0.2)) == pytest.approx(expected[0])


def test_full_bandwidth_density():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(20, 2))
    H = np.array([[0.3, 0.1], [0.1, 0.2]])
    kde = Kde2d(pts, H)
    assert not kde.diagonal
    q = rng.normal(size=(5, 2))
    assert np.allclose(kde.density(q[:, 0], q[:, 1]), mixture_oracle(pts, H, q))


def test_grid_density_separable_equals_general(cloud):
    kde = Kde2d.fit(cloud)
    th = np.linspace(-3, 3, 31)
    tt = np.linspace(0, 0.4, 21)
    TH, TT = np.meshgrid(th, tt, indexing="ij")
    assert np.allclose(kde.grid_density(th, tt), kde.density(TH, TT))


def test_integrates_to_one(cloud):
    kde = Kde2d.fit(cloud)
    lev = mass_level(kde, 0.05)
    # Riemann sum over the padded grid misses only the far tails
    assert lev.grid_mass == pytest.approx(1.0, abs=0.01)


def test_mass_level_monte_carlo(cloud):
    kde = Kde2d.fit(cloud)
    lev = mass_level(kde, 0.1)
    rng = np.random.default_rng(2)
    idx = rng.integers(0, len(cloud), 20_000)
    draws = cloud[idx] + rng.normal(size=(20_000, 2)) * kde.sd
    inside = kde.density(draws[:, 0], draws[:, 1]) >= lev.b_eps
    assert inside.mean() == pytest.approx(0.9, abs=0.02)


def test_mass_level_bad_eps(cloud):
    with pytest.raises(ValueError):
        mass_level(Kde2d.fit(cloud), 1.0)


def test_region_scan_brute_force(cloud):
    kde = Kde2d.fit(cloud)
    lev = mass_level(kde, 0.05)
    t_grid = np.round(np.arange(1, 399) * 0.001, 3)
    th, tmin = region_theta_scan(kde, lev, t_grid)
    assert np.allclose(np.diff(th), 0.01)
    for i in range(0, th.size, 17):
        d = kde.density(np.full(t_grid.size, th[i]), t_grid)
        assert tmin[i] == t_grid[np.argmax(d >= lev.b_eps)]
    # theta values just outside the scanned range are not in the region
    for edge in (th[0] - 0.01, th[-1] + 0.01):
        assert not np.any(kde.density(np.full(t_grid.size, edge), t_grid) >= lev.b_eps)


def test_region_scan_with_bare_level(cloud):
    kde = Kde2d.fit(cloud)
    th, _ = region_theta_scan(kde, 1e9, np.linspace(0, 0.4, 11))
    assert th.size == 0


def test_degenerate_cloud():
    with pytest.raises(ValueError):
        Kde2d(np.ones((5, 2)), np.eye(2))


def test_bad_bandwidth(cloud):
    with pytest.raises(ValueError):
        Kde2d(cloud, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        Kde2d(cloud, np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_mass_level_is_frozen(cloud):
    lev = mass_level(Kde2d.fit(cloud), 0.05)
    assert isinstance(lev, MassLevel) and lev.resolution == 200
