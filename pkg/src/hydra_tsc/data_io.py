"""Loading, writing and resampling univariate time series datasets.

Two on-disk formats are supported:

``.ts``
    The UCR/UEA format. Lines starting with ``@`` or ``#`` are metadata or
    comments; each data line is ``v1,v2,...,vL:label``.
``.tsv``
    One series per row, ``label<TAB>v1<TAB>...<TAB>vL``.

A label of ``?`` marks an unlabeled series. Missing values are rejected.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import BankMismatch, DegenerateLabels, LengthMismatch, ParseError

__all__ = [
    "TimeSeriesDataset",
    "ResamplePlan",
    "load_dataset",
    "load_split",
    "write_dataset",
    "stratified_resample",
    "znormalize",
]

UNLABELED = "?"


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Fixed-length labeled series.

    Attributes
    ----------
    name : str
    series : ndarray of shape (n, L), float64, read-only
    labels : ndarray of shape (n,), int64, or None for unlabeled data
    class_names : tuple of str
        ``class_names[c]`` is the original label of class index ``c``.
    """

    name: str
    series: np.ndarray
    labels: Optional[np.ndarray]
    class_names: tuple

    def __post_init__(self):
        series = np.array(self.series, dtype=np.float64, copy=True)
        if series.ndim != 2:
            raise LengthMismatch("series must be a 2-D (n, L) array")
        series.flags.writeable = False
        object.__setattr__(self, "series", series)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True)
            if labels.shape != (series.shape[0],):
                raise LengthMismatch("labels must have one entry per series")
            if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
                raise DegenerateLabels("label index outside [0, n_classes)")
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n(self) -> int:
        return self.series.shape[0]

    @property
    def L(self) -> int:
        return self.series.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, index, name=None) -> "TimeSeriesDataset":
        index = np.asarray(index)
        return TimeSeriesDataset(
            name=self.name if name is None else name,
            series=self.series[index],
            labels=None if self.labels is None else self.labels[index],
            class_names=self.class_names,
        )

    def with_series(self, series) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.name, series, self.labels, self.class_names)


@dataclass(frozen=True)
class ResamplePlan:
    """Identifies one stratified resample of a train/test split.

    ``resample_id == 0`` is the original split. ``train_size`` and
    ``test_size`` are optional; when given they must match the split being
    resampled.
    """

    seed: int = 0
    resample_id: int = 0
    train_size: Optional[int] = None
    test_size: Optional[int] = None

    def __post_init__(self):
        if self.resample_id < 0:
            raise ValueError("resample_id must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ts":
        return "ts"
    if ext in (".tsv", ".txt", ".tab"):
        return "tsv"
    raise ParseError(f"cannot infer format from extension {ext!r}; pass format=")


def _parse_value(token, lineno):
    token = token.strip()
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"cannot parse value {token!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r} (missing values are not supported)", lineno)
    return value


def _read_raw(path, format=None):
    """Return (rows, labels, name) without any label mapping."""
    fmt = format or _infer_format(path)
    if fmt not in ("ts", "tsv"):
        raise ParseError(f"unknown format {fmt!r}")
    name = os.path.splitext(os.path.basename(str(path)))[0]
    for suffix in ("_TRAIN", "_TEST"):
        if name.upper().endswith(suffix):
            name = name[: -len(suffix)]

    rows, labels, linenos = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if fmt == "ts":
                if line[0] in "@#":
                    if line.lower().startswith("@problemname"):
                        parts = line.split(None, 1)
                        if len(parts) == 2:
                            name = parts[1].strip()
                    continue
                if ":" not in line:
                    raise ParseError("data line has no ':label' suffix", lineno)
                values, label = line.rsplit(":", 1)
                if ":" in values:
                    raise ParseError("multivariate series are not supported", lineno)
                tokens = values.split(",")
            else:
                fields = line.split("\t")
                label, tokens = fields[0], fields[1:]
                if not tokens:
                    raise ParseError("row has a label but no values", lineno)
            rows.append([_parse_value(t, lineno) for t in tokens])
            labels.append(label.strip())
            linenos.append(lineno)

    if not rows:
        raise ParseError(f"no data rows in {path}")
    length = len(rows[0])
    for row, lineno in zip(rows, linenos):
        if len(row) != length:
            raise LengthMismatch(
                f"line {lineno}: series has length {len(row)}, expected {length}"
            )
    return np.asarray(rows, dtype=np.float64), labels, name


def _sort_labels(labels):
    try:
        return sorted(labels, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(labels)


def _map_labels(raw, class_names):
    known = [lab for lab in raw if lab != UNLABELED]
    if not known:
        return None
    if len(known) != len(raw):
        raise ParseError("file mixes labeled and unlabeled ('?') rows")
    index = {c: i for i, c in enumerate(class_names)}
    try:
        return np.array([index[lab] for lab in raw], dtype=np.int64)
    except KeyError as exc:
        raise ParseError(f"label {exc.args[0]!r} is not a known class") from None


def _class_names_for(*label_lists):
    names = {lab for labels in label_lists for lab in labels if lab != UNLABELED}
    ordered = _sort_labels(names)
    if len(ordered) < 2:
        raise DegenerateLabels(f"need at least 2 classes, found {len(ordered)}")
    return tuple(ordered)


def znormalize(series, eps=1e-8):
    """Per-series z-normalisation. Constant series map to zeros."""
    series = np.asarray(series, dtype=np.float64)
    mean = series.mean(axis=-1, keepdims=True)
    std = series.std(axis=-1, keepdims=True)
    return (series - mean) / np.maximum(std, eps)


def load_dataset(path, format=None, class_names=None, normalize=False, name=None, expected_length=None):
    """Load and validate a dataset from ``path``.

    Parameters
    ----------
    path : path-like
    format : {"ts", "tsv"}, optional
        Inferred from the file extension when omitted.
    class_names : sequence of str, optional
        Map labels onto this fixed class list instead of deriving one from
        the file. Use it for test files and for predicting with a fitted
        model. Without it the file must contain at least two classes.
    normalize : bool, default=False
        Apply per-series z-normalisation after loading.
    expected_length : int, optional
        Raise :class:`BankMismatch` unless the series have this length
        (checked before labels are mapped).

    Raises
    ------
    LengthMismatch, ParseError, DegenerateLabels, BankMismatch
    """
    series, raw, parsed_name = _read_raw(path, format)
    if expected_length is not None and series.shape[1] != expected_length:
        raise BankMismatch(
            f"series have length {series.shape[1]}, expected {expected_length}"
        )
    if class_names is None:
        if all(lab == UNLABELED for lab in raw):
            class_names = ()
        else:
            class_names = _class_names_for(raw)
    labels = _map_labels(raw, class_names)
    if normalize:
        series = znormalize(series)
    return TimeSeriesDataset(name or parsed_name, series, labels, tuple(class_names))


def load_split(train_path, test_path, format=None, normalize=False, name=None):
    """Load a train/test pair sharing one class mapping (union of labels)."""
    train_x, train_raw, parsed_name = _read_raw(train_path, format)
    test_x, test_raw, _ = _read_raw(test_path, format)
    if train_x.shape[1] != test_x.shape[1]:
        raise LengthMismatch(
            f"train length {train_x.shape[1]} != test length {test_x.shape[1]}"
        )
    class_names = _class_names_for(train_raw, test_raw)
    if normalize:
        train_x, test_x = znormalize(train_x), znormalize(test_x)
    name = name or parsed_name
    train = TimeSeriesDataset(name, train_x, _map_labels(train_raw, class_names), class_names)
    test = TimeSeriesDataset(name, test_x, _map_labels(test_raw, class_names), class_names)
    if train.labels is None:
        raise DegenerateLabels("training data must be labeled")
    return train, test


def write_dataset(dataset: TimeSeriesDataset, path, format=None):
    """Write ``dataset`` so that :func:`load_dataset` reads back identical values."""
    fmt = format or _infer_format(path)
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "ts":
            fh.write(f"@problemName {dataset.name}\n")
            fh.write("@univariate true\n@equalLength true\n")
            fh.write(f"@seriesLength {dataset.L}\n")
            fh.write("@classLabel true " + " ".join(dataset.class_names) + "\n")
            fh.write("@data\n")
        for i, row in enumerate(dataset.series):
            label = (
                UNLABELED if dataset.labels is None else dataset.class_names[dataset.labels[i]]
            )
            values = [repr(float(v)) for v in row]
            if fmt == "ts":
                fh.write(",".join(values) + ":" + label + "\n")
            else:
                fh.write("\t".join([label] + values) + "\n")


def stratified_resample(train, test, plan: ResamplePlan):
    """Reshuffle the pooled data into a new split of the original sizes.

    Per-class training counts are preserved, so the resample is stratified.
    Resample 0 returns the inputs unchanged.
    """
    if train.L != test.L:
        raise LengthMismatch(f"train length {train.L} != test length {test.L}")
    if train.class_names != test.class_names:
        raise DegenerateLabels("train and test use different class mappings")
    if train.labels is None or test.labels is None:
        raise DegenerateLabels("resampling requires labeled train and test data")
    if plan.train_size is not None and plan.train_size != train.n:
        raise ValueError(f"plan train_size {plan.train_size} != {train.n}")
    if plan.test_size is not None and plan.test_size != test.n:
        raise ValueError(f"plan test_size {plan.test_size} != {test.n}")
    if plan.resample_id == 0:
        return train, test

    series = np.concatenate([train.series, test.series])
    labels = np.concatenate([train.labels, test.labels])
    counts = train.class_counts()
    rng = np.random.default_rng([plan.seed, plan.resample_id])
    chosen = []
    for c in range(train.n_classes):
        members = np.flatnonzero(labels == c)
        chosen.append(rng.permutation(members)[: counts[c]])
    train_idx = np.sort(np.concatenate(chosen))
    test_mask = np.ones(len(labels), dtype=bool)
    test_mask[train_idx] = False
    test_idx = np.flatnonzero(test_mask)

    def build(idx):
        return TimeSeriesDataset(train.name, series[idx], labels[idx], train.class_names)

    return build(train_idx), build(test_idx)
