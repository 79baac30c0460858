"""Independent brute-force references used by the test-suite."""
import math

import numpy as np
from scipy.integrate import simpson

from qdpair import FWHM_PER_SIGMA


def convolve_numeric(f, d, sigma, t_max, h=0.1):
    """Direct quadrature of int_0^t_max f(t) N(d - t; 0, sigma) dt on an ``h`` grid."""
    t = np.arange(0.0, t_max + h / 2, h)
    ft = f(t)
    out = []
    for di in np.atleast_1d(d):
        g = np.exp(-((di - t) ** 2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
        out.append(simpson(ft * g, x=t))
    return np.array(out)


def numeric_model(i, j, d, params, h=0.1):
    from qdpair.cascade import theory_coincidence

    sigma = params.jitter_2p_fwhm / FWHM_PER_SIGMA
    t_max = max(np.max(d), 0) + 14 * sigma
    return convolve_numeric(lambda t: theory_coincidence(i, j, t, params), d, sigma, t_max, h)


def all_pairs_histogram(ta, tb, window, bin_width, start, n_bins):
    """O(N^2) correlation histogram."""
    counts = np.zeros(n_bins, dtype=np.int64)
    for a in ta:
        for b in tb:
            d = int(b) - int(a)
            if abs(d) <= window:
                k = (d - start) // bin_width
                if 0 <= k < n_bins:
                    counts[k] += 1
    return counts


def all_pairs_histogram_dense(ta, tb, window, bin_width, start, n_bins, block=512):
    """Same as ``all_pairs_histogram`` but forms every difference with numpy broadcasting."""
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    counts = np.zeros(n_bins, dtype=np.int64)
    for i in range(0, ta.size, block):
        d = (tb[None, :] - ta[i : i + block, None]).ravel()
        d = d[np.abs(d) <= window]
        k = (d - start) // bin_width
        k = k[(k >= 0) & (k < n_bins)]
        counts += np.bincount(k, minlength=n_bins)
    return counts
