"""Quantile interval from a conformal band of group CDFs.

Half the groups build an average empirical CDF; the other half calibrate
how far an individual group's CDF may stray from it. The interval runs
between quantiles of the band. When the calibrated radius exceeds beta/2
the band cannot pin down a quantile and the interval is the whole line.

    python demos/cdf_band.py
"""

import numpy as np

from reconform.methods import GroupedSample, fit_cdf_band


def main():
    rng = np.random.default_rng(1)
    data = GroupedSample.from_matrix(rng.normal(size=(100, 500)))
    for beta in (0.05, 0.2, 0.4):
        band = fit_cdf_band(data, beta, 0.05, rng)
        iv = band.interval()
        print(f"beta={beta:<4} radius={band.radius:.4f} interval={iv}")


if __name__ == "__main__":
    main()
