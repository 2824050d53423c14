"""Dilated convolution with grouped kernels, followed by competitive counting.

For every series, dilation and group, each timepoint's maximum and minimum
response among the group's ``k`` kernels is located, and the winning
kernels are counted, either by incrementing ("hard") or by accumulating the
winning response ("soft").

Feature layout is dilation-major, then group, then channel
(``max_soft, max_hard, min_soft, min_hard``, restricted to the channels the
config enables), then kernel.
"""

from __future__ import annotations

import csv
from contextlib import contextmanager
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from . import container
from .data_io import TimeSeriesDataset
from .exceptions import BankMismatch, ParseError, SeriesTooShort
from .kernel_bank import KERNEL_LENGTH, HydraConfig, KernelBank

__all__ = [
    "ALL_CHANNELS",
    "FeatureLayout",
    "FeatureMatrix",
    "first_difference",
    "convolve_dilated",
    "count_group",
    "transform",
    "raw_counts",
    "select_channels",
    "save_features",
    "load_features",
    "write_features_csv",
]

ALL_CHANNELS = ("max_soft", "max_hard", "min_soft", "min_hard")
_HALF = KERNEL_LENGTH // 2


@dataclass(frozen=True)
class FeatureLayout:
    dilations: tuple
    g: int
    k: int
    channels: tuple

    @property
    def n_features(self) -> int:
        return len(self.dilations) * self.g * len(self.channels) * self.k

    @property
    def shape(self) -> tuple:
        return (len(self.dilations), self.g, len(self.channels), self.k)

    def feature_names(self) -> list:
        return [
            f"d{dil}_g{grp}_{chan}_{kk}"
            for dil in self.dilations
            for grp in range(self.g)
            for chan in self.channels
            for kk in range(self.k)
        ]

    def to_dict(self) -> dict:
        return {
            "dilations": list(self.dilations),
            "g": self.g,
            "k": self.k,
            "channels": list(self.channels),
        }

    @classmethod
    def from_config(cls, bank: KernelBank, config: HydraConfig) -> "FeatureLayout":
        return cls(bank.dilations, config.g, config.k, config.channels)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Transform output: ``values`` has shape (n, F) in canonical order."""

    values: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.layout.n_features:
            raise BankMismatch(
                f"values have shape {self.values.shape}, layout needs {self.layout.n_features} columns"
            )

    @property
    def F(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def blocks(self) -> np.ndarray:
        """View as (n, d, g, channels, k)."""
        return self.values.reshape((self.n,) + self.layout.shape)

    def channel(self, name) -> np.ndarray:
        """(n, d, g, k) block for one channel."""
        return self.blocks()[:, :, :, self.layout.channels.index(name), :]


def first_difference(x):
    """``y[t] = x[t + 1] - x[t]`` along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise SeriesTooShort("first difference needs at least 2 timepoints")
    return x[..., 1:] - x[..., :-1]


def convolve_dilated(x, w, dilation):
    """Zero-padded dilated cross-correlation; output has the length of ``x``.

    ``y[t] = sum_j w[j] * x[t + (j - 4) * dilation]`` with out-of-range
    samples read as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (KERNEL_LENGTH,):
        raise ValueError(f"kernel must have {KERNEL_LENGTH} weights")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    L = x.shape[-1]
    pad = _HALF * dilation
    padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)])
    y = np.zeros(x.shape, dtype=np.float64)
    for j in range(KERNEL_LENGTH):
        start = j * dilation
        y += w[j] * padded[..., start : start + L]
    return y


def count_group(responses, config: HydraConfig):
    """Count one group's winning kernels over all timepoints.

    Parameters
    ----------
    responses : array of shape (k, L)
        Convolution outputs of the group's kernels.
    config : HydraConfig
        Supplies the counting modes and clipping.

    Returns
    -------
    ndarray of shape (len(config.channels) * k,)
        Channel-major, kernel-minor. Ties go to the lowest kernel index.
    """
    responses = np.asarray(responses, dtype=np.float64)
    k, L = responses.shape
    t = np.arange(L)
    out = {}
    for side, pick in (("max", np.argmax), ("min", np.argmin)):
        winner = pick(responses, axis=0)
        value = responses[winner, t]
        if config.clip:
            keep = value > 0 if side == "max" else value < 0
            winner, value = winner[keep], value[keep]
        out[f"{side}_soft"] = np.bincount(winner, weights=value, minlength=k).astype(np.float64)
        out[f"{side}_hard"] = np.bincount(winner, minlength=k).astype(np.float64)
    return np.concatenate([out[c] for c in config.channels])


@njit(parallel=True, cache=True)
def _count_kernel(X, Xd, W, dilations, cutoff, clip):
    n = X.shape[0]
    d, g, k, m = W.shape
    half = m // 2
    out = np.zeros((n, d, g, 4, k))
    for i in prange(n):
        resp = np.empty((k, X.shape[1]))
        for di in range(d):
            dil = dilations[di]
            for grp in range(g):
                if grp < cutoff:
                    src = X[i]
                else:
                    src = Xd[i]
                L = src.shape[0]
                for kk in range(k):
                    r = resp[kk]
                    r[:L] = 0.0
                    # taps accumulate in index order; the oracle relies on it
                    for j in range(m):
                        w = W[di, grp, kk, j]
                        off = (j - half) * dil
                        lo = max(0, -off)
                        hi = min(L, L - off)
                        for t in range(lo, hi):
                            r[t] += w * src[t + off]
                o = out[i, di, grp]
                for t in range(L):
                    amax = 0
                    amin = 0
                    vmax = resp[0, t]
                    vmin = vmax
                    for kk in range(1, k):
                        v = resp[kk, t]
                        if v > vmax:
                            vmax = v
                            amax = kk
                        if v < vmin:
                            vmin = v
                            amin = kk
                    if (not clip) or vmax > 0.0:
                        o[0, amax] += vmax
                        o[1, amax] += 1.0
                    if (not clip) or vmin < 0.0:
                        o[2, amin] += vmin
                        o[3, amin] += 1.0
    return out


@contextmanager
def _num_threads(threads):
    if threads is None:
        yield
        return
    previous = numba.get_num_threads()
    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


def _check_input(data, bank):
    series = data.series if isinstance(data, TimeSeriesDataset) else np.asarray(data, dtype=np.float64)
    if series.ndim != 2:
        raise BankMismatch("expected a 2-D (n, L) array of series")
    if series.shape[1] != bank.input_len:
        raise BankMismatch(
            f"series length {series.shape[1]} does not match bank input length {bank.input_len}"
        )
    if not np.all(np.isfinite(series)):
        raise BankMismatch("series contain non-finite values")
    # a writable C-contiguous copy keeps numba on one compiled signature
    return np.array(series, dtype=np.float64, order="C", copy=True)


def raw_counts(data, bank: KernelBank, clip=False, batch_size=256, threads=None):
    """All four channels as an (n, d, g, 4, k) array in ``ALL_CHANNELS`` order."""
    X = _check_input(data, bank)
    Xd = np.ascontiguousarray(first_difference(X))
    W = np.array(bank.weights, order="C", copy=True)
    dilations = np.asarray(bank.dilations, dtype=np.int64)
    d, g, k, _ = W.shape
    out = np.empty((X.shape[0], d, g, 4, k))
    with _num_threads(threads):
        for start in range(0, X.shape[0], batch_size):
            stop = start + batch_size
            out[start:stop] = _count_kernel(
                X[start:stop], Xd[start:stop], W, dilations, bank.diff_group_cutoff, bool(clip)
            )
    return out


def select_channels(counts, bank: KernelBank, config: HydraConfig) -> FeatureMatrix:
    """Arrange :func:`raw_counts` output into the canonical feature matrix."""
    index = [ALL_CHANNELS.index(c) for c in config.channels]
    layout = FeatureLayout.from_config(bank, config)
    values = counts[:, :, :, index, :].reshape(counts.shape[0], -1)
    return FeatureMatrix(np.ascontiguousarray(values), layout)


def transform(data, bank: KernelBank, config: HydraConfig = None, threads=None) -> FeatureMatrix:
    """Transform a dataset (or an (n, L) array) into count features.

    ``config`` defaults to the bank's config; it may differ from it only in
    counting options, clipping and batch size.
    """
    config = bank.config if config is None else config
    if (config.k, config.g, config.use_diff) != (bank.config.k, bank.config.g, bank.config.use_diff):
        raise BankMismatch("config k/g/use_diff do not match the kernel bank")
    counts = raw_counts(data, bank, clip=config.clip, batch_size=config.batch_size, threads=threads)
    return select_channels(counts, bank, config)


def save_features(features: FeatureMatrix, path, manifest=None):
    payload = {"layout": features.layout.to_dict(), "values": features.values}
    container.save(path, "features", payload, manifest)


def load_features(path) -> FeatureMatrix:
    payload, _ = container.load(path, "features")
    try:
        layout = payload["layout"]
        layout = FeatureLayout(
            tuple(layout["dilations"]), int(layout["g"]), int(layout["k"]), tuple(layout["channels"])
        )
        values = np.asarray(payload["values"], dtype=np.float64).reshape(-1, layout.n_features)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed features document: {exc}") from None
    return FeatureMatrix(values, layout)


def write_features_csv(features: FeatureMatrix, path, manifest=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in container.manifest_lines(manifest):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(features.layout.feature_names())
        for row in features.values:
            writer.writerow([repr(float(v)) for v in row])
