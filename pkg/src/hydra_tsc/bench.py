"""Multi-resample accuracy runs, sensitivity grids and mean-rank tables.

Results go to an append-only CSV keyed by (dataset, resample, variant), so
an interrupted sweep can be restarted and only the missing rows are
computed.
"""

from __future__ import annotations

import csv
import logging
import os
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import container
from .classifier import DEFAULT_ALPHAS, predict
from .data_io import ResamplePlan, TimeSeriesDataset, load_split, stratified_resample
from .exceptions import HydraError, NoCommonDatasets, ParseError
from .kernel_bank import HydraConfig, generate_bank
from .model import HydraModel, fit_model
from .transform import raw_counts, select_channels

log = logging.getLogger(__name__)

__all__ = [
    "SCHEMA_VERSION",
    "RESULTS_HEADER",
    "DatasetSpec",
    "ExperimentResult",
    "RankTable",
    "ResultsStore",
    "SensitivityAxes",
    "read_dataset_list",
    "read_results",
    "variant_name",
    "run_experiment",
    "run_variants",
    "kg_lattice",
    "grid_configs",
    "sensitivity_grid",
    "accuracy_table",
    "mean_rank",
    "write_rank_csv",
]

SCHEMA_VERSION = 1
RESULTS_HEADER = ["dataset", "resample", "variant", "accuracy", "transform_s", "train_s", "test_s"]


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    train_path: str
    test_path: str

    def load(self, normalize=False):
        return load_split(self.train_path, self.test_path, normalize=normalize, name=self.name)


def _resolve(root, name):
    for ext in (".ts", ".tsv"):
        train = os.path.join(root, name, f"{name}_TRAIN{ext}")
        test = os.path.join(root, name, f"{name}_TEST{ext}")
        if os.path.exists(train) and os.path.exists(test):
            return DatasetSpec(name, train, test)
    for ext in (".ts", ".tsv"):
        train = os.path.join(root, f"{name}_TRAIN{ext}")
        test = os.path.join(root, f"{name}_TEST{ext}")
        if os.path.exists(train) and os.path.exists(test):
            return DatasetSpec(name, train, test)
    # left for run_experiment to record as a per-dataset failure
    return DatasetSpec(name, os.path.join(root, name, f"{name}_TRAIN.ts"), os.path.join(root, name, f"{name}_TEST.ts"))


def read_dataset_list(path, root=None) -> list:
    """Parse a dataset list file.

    Each non-blank, non-``#`` line is either ``Name`` (looked up under
    ``root`` as ``Name/Name_TRAIN.ts`` or ``Name_TRAIN.ts``, ``.tsv`` also
    accepted) or ``Name train_path test_path``.
    """
    root = root or os.path.dirname(os.path.abspath(path))
    specs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) == 1:
                specs.append(_resolve(root, parts[0]))
            elif len(parts) == 3:
                train, test = (p if os.path.isabs(p) else os.path.join(root, p) for p in parts[1:])
                specs.append(DatasetSpec(parts[0], train, test))
            else:
                raise ParseError("expected 'Name' or 'Name train_path test_path'", lineno)
    return specs


@dataclass(frozen=True)
class ExperimentResult:
    dataset: str
    resample_id: int
    variant: str
    accuracy: float
    transform_seconds: float = 0.0
    train_seconds: float = 0.0
    test_seconds: float = 0.0

    @property
    def key(self):
        return (self.dataset, self.resample_id, self.variant)

    def row(self):
        return [
            self.dataset,
            str(self.resample_id),
            self.variant,
            repr(float(self.accuracy)),
            f"{self.transform_seconds:.6f}",
            f"{self.train_seconds:.6f}",
            f"{self.test_seconds:.6f}",
        ]

    @classmethod
    def from_row(cls, row):
        if len(row) != len(RESULTS_HEADER):
            raise ParseError(f"results row has {len(row)} fields, expected {len(RESULTS_HEADER)}")
        return cls(row[0], int(row[1]), row[2], float(row[3]), float(row[4]), float(row[5]), float(row[6]))


def _data_lines(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def read_results(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema_version="):
            raise ParseError(f"{path} has no schema header")
        version = int(first.strip().split("=", 1)[1])
        if version != SCHEMA_VERSION:
            raise ParseError(f"{path} uses results schema {version}, expected {SCHEMA_VERSION}")
        reader = csv.reader(_data_lines(fh))
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ParseError(f"{path} has unexpected header {header}")
        return [ExperimentResult.from_row(row) for row in reader if row]


class ResultsStore:
    """Append-only results CSV with a schema-version header.

    ``path=None`` keeps results in memory only.
    """

    def __init__(self, path=None, manifest=None):
        self.path = path
        self.results = {}
        if path is None:
            return
        if os.path.exists(path) and os.path.getsize(path) > 0:
            for result in read_results(path):
                self.results[result.key] = result
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(f"# schema_version={SCHEMA_VERSION}\n")
                for line in container.manifest_lines(manifest):
                    fh.write(line + "\n")
                csv.writer(fh, lineterminator="\n").writerow(RESULTS_HEADER)

    def __contains__(self, key):
        return key in self.results

    def append(self, result: ExperimentResult):
        self.results[result.key] = result
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(result.row())


def variant_name(config: HydraConfig) -> str:
    """Descriptor of everything in the config except seed and batch size."""
    return (
        f"k{config.k}_g{config.g}_max-{config.count_max}_min-{config.count_min}"
        f"_{'diff' if config.use_diff else 'nodiff'}_{'clip' if config.clip else 'noclip'}"
    )


def _load(item, normalize):
    if isinstance(item, DatasetSpec):
        return item.name, item.load(normalize)
    train, test = item
    return train.name, (train, test)


def _accuracy(predicted, labels):
    return float(np.count_nonzero(predicted == labels)) / labels.shape[0]


def _ordered(results, keys):
    return [results[k] for k in keys if k in results]


def run_experiment(
    datasets,
    config: HydraConfig,
    resamples: int = 30,
    results_path=None,
    classifier="auto",
    resample_seed=0,
    normalize_input=False,
    threads=None,
    failures=None,
    manifest=None,
) -> list:
    """Fit and score ``config`` on every (dataset, resample).

    Parameters
    ----------
    datasets : list of DatasetSpec or (train, test) dataset pairs
    resamples : int
        Resample ids ``0 .. resamples-1``; id 0 is the original split.
    results_path : path-like, optional
        Append-only CSV. Rows already present are skipped, not recomputed.
    failures : list, optional
        Receives ``(dataset, message)`` for datasets that could not be run.
        Failures are logged and never abort the sweep.
    """
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    store = ResultsStore(results_path, manifest)
    variant = variant_name(config)
    keys = []
    for item in datasets:
        name = item.name if isinstance(item, DatasetSpec) else item[0].name
        wanted = [(name, r, variant) for r in range(resamples)]
        keys.extend(wanted)
        if all(k in store for k in wanted):
            continue
        try:
            name, (train, test) = _load(item, normalize_input)
            for resample_id in range(resamples):
                if (name, resample_id, variant) in store:
                    continue
                plan = ResamplePlan(seed=resample_seed, resample_id=resample_id)
                tr, te = stratified_resample(train, test, plan)
                t0 = time.perf_counter()
                bank = generate_bank(config, tr.L)
                probe = HydraModel(bank, None, tr.class_names)
                f_train = probe.features(tr, threads)
                f_test = probe.features(te, threads)
                t1 = time.perf_counter()
                model = fit_model(tr, config, classifier, features=f_train, bank=bank)
                t2 = time.perf_counter()
                accuracy = _accuracy(predict(model.classifier, f_test), te.labels)
                t3 = time.perf_counter()
                store.append(
                    ExperimentResult(name, resample_id, variant, accuracy, t1 - t0, t2 - t1, t3 - t2)
                )
        except (HydraError, OSError, ValueError) as exc:
            log.warning("dataset %s failed: %s", name, exc)
            if failures is not None:
                failures.append((name, str(exc)))
    return _ordered(store.results, keys)


@dataclass(frozen=True)
class SensitivityAxes:
    """Factors of a full-factorial sensitivity grid."""

    kg: tuple = ((8, 64),)
    counting: tuple = (("soft", "hard"),)
    clip: tuple = (False,)
    use_diff: tuple = (True,)


def kg_lattice(ks=(1, 2, 4, 8, 16), totals=(16, 64, 256, 512)) -> list:
    """(k, g) pairs with ``k * g`` in ``totals`` and integer ``g >= 1``."""
    cells = []
    for total in totals:
        for k in ks:
            if k <= total and total % k == 0:
                cells.append((k, total // k))
    return cells


def grid_configs(axes: SensitivityAxes, base: HydraConfig = None) -> list:
    """Expand ``axes`` into configs.

    A single group cannot be split between the series and its difference,
    so cells with odd ``g`` and ``use_diff`` run without the difference;
    duplicates that result are dropped.
    """
    base = base or HydraConfig()
    configs, seen = [], set()
    for k, g in axes.kg:
        for count_max, count_min in axes.counting:
            for clip in axes.clip:
                for use_diff in axes.use_diff:
                    if use_diff and g % 2:
                        warnings.warn(f"g={g} is odd; running k={k}/g={g} without the difference")
                        use_diff = False
                    config = base.replace(
                        k=k, g=g, count_max=count_max, count_min=count_min, clip=clip, use_diff=use_diff
                    )
                    name = variant_name(config)
                    if name not in seen:
                        seen.add(name)
                        configs.append(config)
    return configs


def run_variants(
    datasets,
    configs,
    runs: int = 10,
    results_path=None,
    alphas=DEFAULT_ALPHAS,
    normalize_input=False,
    threads=None,
    failures=None,
    manifest=None,
) -> list:
    """Score each config with seeds ``0 .. runs-1`` on the original splits.

    The ``resample_id`` of each result holds the run (seed) index. Configs
    that differ only in counting modes share one transform per seed.
    """
    store = ResultsStore(results_path, manifest)
    groups = defaultdict(list)
    for config in configs:
        groups[(config.k, config.g, config.use_diff, config.clip)].append(config)
    keys = []
    for item in datasets:
        name = item.name if isinstance(item, DatasetSpec) else item[0].name
        wanted = [(name, run, variant_name(c)) for c in configs for run in range(runs)]
        keys.extend(wanted)
        if all(k in store for k in wanted):
            continue
        try:
            name, (train, test) = _load(item, normalize_input)
            for run in range(runs):
                for members in groups.values():
                    todo = [c for c in members if (name, run, variant_name(c)) not in store]
                    if not todo:
                        continue
                    t0 = time.perf_counter()
                    bank = generate_bank(todo[0].replace(seed=run), train.L)
                    clip = todo[0].clip
                    counts_train = raw_counts(train.series, bank, clip, todo[0].batch_size, threads)
                    counts_test = raw_counts(test.series, bank, clip, todo[0].batch_size, threads)
                    shared = time.perf_counter() - t0
                    for config in todo:
                        config = config.replace(seed=run)
                        cbank = bank.with_config(config)
                        f_train = select_channels(counts_train, cbank, config)
                        f_test = select_channels(counts_test, cbank, config)
                        t1 = time.perf_counter()
                        model = fit_model(train, config, "auto", alphas=alphas, features=f_train, bank=cbank)
                        t2 = time.perf_counter()
                        accuracy = _accuracy(predict(model.classifier, f_test), test.labels)
                        t3 = time.perf_counter()
                        store.append(
                            ExperimentResult(
                                name, run, variant_name(config), accuracy, shared, t2 - t1, t3 - t2
                            )
                        )
        except (HydraError, OSError, ValueError) as exc:
            log.warning("dataset %s failed: %s", name, exc)
            if failures is not None:
                failures.append((name, str(exc)))
    return _ordered(store.results, keys)


def sensitivity_grid(datasets, axes: SensitivityAxes, runs=10, base=None, **kwargs):
    """Run the full factorial grid; return (results, mean accuracy table)."""
    configs = grid_configs(axes, base)
    results = run_variants(datasets, configs, runs=runs, **kwargs)
    return results, accuracy_table(results)


def accuracy_table(results) -> dict:
    """variant -> dataset -> arithmetic mean accuracy over resamples/runs."""
    grouped = defaultdict(lambda: defaultdict(list))
    for r in sorted(results, key=lambda r: r.key):
        grouped[r.variant][r.dataset].append(r.accuracy)
    return {
        variant: {dataset: sum(accs) / len(accs) for dataset, accs in per.items()}
        for variant, per in grouped.items()
    }


@dataclass(frozen=True, eq=False)
class RankTable:
    variants: tuple
    datasets: tuple
    ranks: np.ndarray  # (n_datasets, n_variants); 1 = most accurate
    mean_rank: dict = field(default_factory=dict)

    def rows(self):
        return [(v, self.mean_rank[v], len(self.datasets)) for v in self.variants]


def mean_rank(table: dict) -> RankTable:
    """Rank variants per dataset (ties averaged) and average over datasets.

    ``table`` maps variant -> dataset -> accuracy. Only datasets present
    for every variant are used.
    """
    variants = tuple(sorted(table))
    if not variants:
        raise NoCommonDatasets("no variants given")
    all_sets = [set(table[v]) for v in variants]
    common = set.intersection(*all_sets)
    if not common:
        raise NoCommonDatasets("no dataset has results for every variant")
    if any(s != common for s in all_sets):
        warnings.warn("some datasets lack results for every variant and were dropped")
    datasets = tuple(sorted(common))
    acc = np.array([[table[v][d] for v in variants] for d in datasets])
    ranks = np.vstack([rankdata(-row, method="average") for row in acc])
    means = ranks.mean(axis=0)
    return RankTable(variants, datasets, ranks, {v: float(m) for v, m in zip(variants, means)})


def write_rank_csv(table: RankTable, path, manifest=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in container.manifest_lines(manifest):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "mean_rank", "n_datasets"])
        for variant, rank, n in table.rows():
            writer.writerow([variant, repr(rank), n])


def write_accuracy_matrix(table: dict, path, manifest=None):
    """Per-dataset accuracy matrix (datasets x variants) for external analysis."""
    variants = sorted(table)
    datasets = sorted({d for per in table.values() for d in per})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in container.manifest_lines(manifest):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset"] + variants)
        for d in datasets:
            writer.writerow([d] + [repr(table[v][d]) if d in table[v] else "" for v in variants])
