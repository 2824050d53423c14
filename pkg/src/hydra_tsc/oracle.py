"""Slow reference implementation used only by the test suite.

Everything here is plain Python loops over lists and deliberately shares no
convolution, differencing or counting code with :mod:`hydra_tsc.transform`.
Keep instances small (tens of series, a few hundred timepoints).
"""

from .exceptions import BankMismatch
from .transform import FeatureLayout, FeatureMatrix

import numpy as np


def oracle_difference(x):
    return [x[t + 1] - x[t] for t in range(len(x) - 1)]


def oracle_convolve(x, w, dilation):
    """Explicitly padded dilated cross-correlation."""
    m = len(w)
    pad = (m // 2) * dilation
    padded = [0.0] * pad + [float(v) for v in x] + [0.0] * pad
    out = []
    for t in range(len(x)):
        acc = 0.0
        for j in range(m):
            acc += float(w[j]) * padded[t + j * dilation]
        out.append(acc)
    return out


def oracle_count(responses, clip):
    """Return dict channel -> per-kernel list for one group."""
    k = len(responses)
    counts = {name: [0.0] * k for name in ("max_soft", "max_hard", "min_soft", "min_hard")}
    for t in range(len(responses[0])):
        best, worst = 0, 0
        for kk in range(k):
            if responses[kk][t] > responses[best][t]:
                best = kk
            if responses[kk][t] < responses[worst][t]:
                worst = kk
        top, bottom = responses[best][t], responses[worst][t]
        if not clip or top > 0:
            counts["max_hard"][best] += 1.0
            counts["max_soft"][best] += top
        if not clip or bottom < 0:
            counts["min_hard"][worst] += 1.0
            counts["min_soft"][worst] += bottom
    return counts


def _oracle_channels(config):
    names = []
    if config.count_max in ("soft", "both"):
        names.append("max_soft")
    if config.count_max in ("hard", "both"):
        names.append("max_hard")
    if config.count_min in ("soft", "both"):
        names.append("min_soft")
    if config.count_min in ("hard", "both"):
        names.append("min_hard")
    return names


def oracle_transform(data, bank, config=None):
    config = bank.config if config is None else config
    series = data.series if hasattr(data, "series") else data
    series = [[float(v) for v in row] for row in series]
    if series and len(series[0]) != bank.input_len:
        raise BankMismatch("series length does not match the bank")
    channels = _oracle_channels(config)
    d, g, k, _ = bank.weights.shape
    cutoff = g // 2 if config.use_diff else g
    rows = []
    for x in series:
        dx = oracle_difference(x)
        row = []
        for di in range(d):
            for grp in range(g):
                src = x if grp < cutoff else dx
                responses = [
                    oracle_convolve(src, bank.weights[di, grp, kk], bank.dilations[di])
                    for kk in range(k)
                ]
                counts = oracle_count(responses, config.clip)
                for name in channels:
                    row.extend(counts[name])
        rows.append(row)
    layout = FeatureLayout(tuple(bank.dilations), g, k, tuple(channels))
    values = np.array(rows, dtype=np.float64).reshape(len(rows), layout.n_features)
    return FeatureMatrix(values, layout)
