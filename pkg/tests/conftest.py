import numpy as np
from scipy import stats


def poisson_chi_square_pvalue(samples: np.ndarray, mean: float,
                              min_expected: float = 5.0) -> float:
    """Goodness-of-fit p-value of integer samples against Poisson(mean).

    Tail bins are pooled until every expected count reaches min_expected.
    """
    n = len(samples)
    hi = int(samples.max())
    observed = np.bincount(samples, minlength=hi + 1).astype(float)
    k = np.arange(hi + 1)
    expected = n * stats.poisson.pmf(k, mean)
    expected[-1] = n * stats.poisson.sf(hi - 1, mean)  # pool the upper tail

    # Pool sparse bins from both ends toward the center.
    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_bins[-1] += acc_o
        exp_bins[-1] += acc_e
    obs_arr, exp_arr = np.array(obs_bins), np.array(exp_bins)
    exp_arr *= obs_arr.sum() / exp_arr.sum()  # remove truncation mismatch
    return stats.chisquare(obs_arr, exp_arr).pvalue
