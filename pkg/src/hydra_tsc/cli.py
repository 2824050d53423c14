"""Command-line interface: ``hydra-tsc {fit,predict,transform,benchmark,sensitivity}``.

Exit codes: 0 success, 2 input/data error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings

from . import __version__, container
from .bench import (
    SensitivityAxes,
    accuracy_table,
    grid_configs,
    mean_rank,
    read_dataset_list,
    run_experiment,
    run_variants,
    write_accuracy_matrix,
    write_rank_csv,
)
from .classifier import LogisticProtocol
from .data_io import load_dataset
from .exceptions import ConfigError, HydraError
from .kernel_bank import COUNT_MODES, HydraConfig, generate_bank, load_bank, save_bank
from .model import fit_model, load_model, predict_dataset, save_model
from .transform import save_features, transform, write_features_csv

CONFIG_FLAGS = ("k", "g", "seed", "count_max", "count_min", "clip", "use_diff", "batch_size")
OTHER_SETTINGS = ("normalize_input", "threads", "classifier", "validation_size", "minibatch", "lr", "max_epochs")


def _add_config_flags(p):
    group = p.add_argument_group("transform configuration")
    group.add_argument("--config", metavar="JSON", help="JSON file of defaults; flags override it")
    group.add_argument("--k", type=int, default=None, help="kernels per group (default 8)")
    group.add_argument("--g", type=int, default=None, help="groups per dilation (default 64)")
    group.add_argument("--seed", type=int, default=None, help="kernel RNG seed (default 0)")
    group.add_argument("--count-max", choices=COUNT_MODES, default=None,
                       help="counting for the maximum response (default soft)")
    group.add_argument("--count-min", choices=COUNT_MODES, default=None,
                       help="counting for the minimum response (default hard)")
    group.add_argument("--clip", action="store_const", const=True, default=None,
                       help="count max only if > 0 and min only if < 0 (default off)")
    group.add_argument("--no-diff", dest="use_diff", action="store_const", const=False, default=None,
                       help="do not use the first-order difference (default: half the groups use it)")
    group.add_argument("--batch-size", type=int, default=None, help="series per transform batch (default 256)")
    group.add_argument("--normalize-input", action="store_const", const=True, default=None,
                       help="z-normalise each input series (default off)")
    group.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")


def _add_classifier_flags(p):
    group = p.add_argument_group("classifier")
    group.add_argument("--classifier", choices=("auto", "ridge", "logistic"), default=None,
                       help="auto = ridge up to 10,000 training examples, logistic above (default auto)")
    group.add_argument("--validation-size", type=int, default=None, help="logistic validation examples (default 2048)")
    group.add_argument("--minibatch", type=int, default=None, help="logistic minibatch size (default 256)")
    group.add_argument("--lr", type=float, default=None, help="initial Adam learning rate (default 1e-4)")
    group.add_argument("--max-epochs", type=int, default=None, help="logistic epoch cap (default 100)")


def _build_parser():
    parser = argparse.ArgumentParser(prog="hydra-tsc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="transform a training set and fit a classifier")
    p.add_argument("train", help="training data (.ts or .tsv)")
    p.add_argument("model_out", help="model file to write (JSON)")
    _add_config_flags(p)
    _add_classifier_flags(p)

    p = sub.add_parser("predict", help="predict with a fitted model")
    p.add_argument("model", help="model file written by 'fit'")
    p.add_argument("data", help="data to classify (.ts or .tsv; label '?' = unlabeled)")
    p.add_argument("out_csv", help="predictions CSV to write")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")

    p = sub.add_parser("transform", help="write count features for a dataset")
    p.add_argument("data", help="input data (.ts or .tsv)")
    p.add_argument("out", help="features file: .csv, or .json for the container format")
    p.add_argument("--bank", help="existing bank file; otherwise one is generated from the flags")
    p.add_argument("--save-bank", metavar="PATH", help="also write the bank used")
    _add_config_flags(p)

    for name, help_text in (
        ("benchmark", "accuracy over stratified resamples of several datasets"),
        ("sensitivity", "full-factorial hyperparameter grid over several runs"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--datasets", required=True, help="dataset list file")
        p.add_argument("--data-root", help="directory for bare dataset names (default: list file's directory)")
        p.add_argument("--results", required=True, help="results CSV (appended to; existing rows are skipped)")
        p.add_argument("--ranks", help="rank table CSV to write")
        p.add_argument("--matrix", help="per-dataset accuracy matrix CSV to write")
        _add_config_flags(p)
        if name == "benchmark":
            _add_classifier_flags(p)
            p.add_argument("--resamples", type=int, default=30, help="resamples per dataset (default 30)")
            p.add_argument("--resample-seed", type=int, default=0, help="seed for resample generation (default 0)")
        else:
            p.add_argument("--runs", type=int, default=10, help="runs (seeds 0..runs-1) per cell (default 10)")
            p.add_argument("--kg", action="append", metavar="KxG",
                           help="k/g cell such as 8x64; repeatable (default 8x64)")
            p.add_argument("--counting", action="append", metavar="MAX:MIN",
                           help="counting modes such as soft:hard; repeatable (default soft:hard)")
            p.add_argument("--clip-values", default="false", help="comma list of true/false (default false)")
            p.add_argument("--diff-values", default="true", help="comma list of true/false (default true)")
    return parser


def _resolve_settings(args):
    """Merge built-in defaults, the optional JSON config file and flags."""
    settings = HydraConfig().to_dict()
    settings.update(normalize_input=False, threads=1)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(from_file) - set(CONFIG_FLAGS) - set(OTHER_SETTINGS)
        if unknown:
            raise ConfigError(f"unknown keys in config file: {sorted(unknown)}")
        settings.update(from_file)
    for key in CONFIG_FLAGS + OTHER_SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _config_from(settings):
    fields = {k: settings[k] for k in CONFIG_FLAGS if k in settings}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return HydraConfig(**fields)


def _protocol_from(settings):
    overrides = {
        k: settings[k]
        for k in ("validation_size", "minibatch", "lr", "max_epochs")
        if settings.get(k) is not None
    }
    return LogisticProtocol(**overrides)


def _manifest(args, settings, config=None):
    flags = {k: v for k, v in vars(args).items() if k != "verbose"}
    out = {"command": args.command, "flags": flags, "settings": settings}
    if config is not None:
        out["config"] = config.to_dict()
    return out


def cmd_fit(args):
    settings = _resolve_settings(args)
    config = _config_from(settings)
    protocol = _protocol_from(settings)
    train = load_dataset(args.train, normalize=False)
    if train.labels is None:
        raise ConfigError("training data must be labeled")
    t0 = time.perf_counter()
    model = fit_model(
        train,
        config,
        classifier=settings.get("classifier") or "auto",
        normalize_input=bool(settings["normalize_input"]),
        protocol=protocol,
        threads=settings["threads"],
    )
    t1 = time.perf_counter()
    _, _, accuracy = predict_dataset(model, train, settings["threads"])
    t2 = time.perf_counter()
    save_model(model, args.model_out, _manifest(args, settings, config))
    print(f"classifier: {model.classifier.kind}")
    print(f"features: {model.classifier.weights.shape[1]}")
    print(f"train accuracy: {accuracy:.6f}")
    print(f"fit seconds: {t1 - t0:.3f}")
    print(f"predict seconds: {t2 - t1:.3f}")
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    data = load_dataset(args.data, class_names=model.class_names, expected_length=model.bank.input_len)
    predicted, scores, accuracy = predict_dataset(model, data, args.threads)
    manifest = {"command": "predict", "flags": vars(args), "config": model.config.to_dict()}
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        for line in container.manifest_lines(manifest):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "predicted_label"] + [f"score_{c}" for c in range(scores.shape[1])])
        for i, (label, row) in enumerate(zip(predicted, scores)):
            writer.writerow([i, model.class_names[label]] + [repr(float(s)) for s in row])
    if accuracy is not None:
        print(f"accuracy: {accuracy:.6f}")
    print(f"predictions: {data.n} written to {args.out_csv}")
    return 0


def cmd_transform(args):
    settings = _resolve_settings(args)
    data = load_dataset(args.data, normalize=bool(settings["normalize_input"]))
    if args.bank:
        bank = load_bank(args.bank)
        config = bank.config
    else:
        config = _config_from(settings)
        bank = generate_bank(config, data.L)
    features = transform(data, bank, threads=settings["threads"])
    manifest = _manifest(args, settings, config)
    if args.out.lower().endswith(".json"):
        save_features(features, args.out, manifest)
    else:
        write_features_csv(features, args.out, manifest)
    if args.save_bank:
        save_bank(bank, args.save_bank, manifest)
    print(f"features: {features.n} x {features.F} written to {args.out}")
    return 0


def _parse_bools(text):
    out = []
    for token in text.split(","):
        token = token.strip().lower()
        if token not in ("true", "false"):
            raise ConfigError(f"expected true/false, got {token!r}")
        out.append(token == "true")
    return tuple(out)


def _parse_kg(values):
    cells = []
    for value in values or ["8x64"]:
        try:
            k, g = (int(x) for x in value.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--kg expects KxG such as 8x64, got {value!r}") from None
        cells.append((k, g))
    return tuple(cells)


def _parse_counting(values):
    pairs = []
    for value in values or ["soft:hard"]:
        parts = value.split(":")
        if len(parts) != 2 or any(p not in COUNT_MODES for p in parts):
            raise ConfigError(f"--counting expects MAX:MIN with modes {COUNT_MODES}, got {value!r}")
        pairs.append(tuple(parts))
    return tuple(pairs)


def _finish_tables(args, results, manifest):
    table = accuracy_table(results)
    if args.matrix:
        write_accuracy_matrix(table, args.matrix, manifest)
    if args.ranks and table:
        ranks = mean_rank(table)
        write_rank_csv(ranks, args.ranks, manifest)
        for variant, rank, n in ranks.rows():
            print(f"{variant}: mean rank {rank:.4f} over {n} datasets")


def cmd_benchmark(args):
    settings = _resolve_settings(args)
    config = _config_from(settings)
    datasets = read_dataset_list(args.datasets, args.data_root)
    manifest = _manifest(args, settings, config)
    failures = []
    results = run_experiment(
        datasets,
        config,
        resamples=args.resamples,
        results_path=args.results,
        classifier=settings.get("classifier") or "auto",
        resample_seed=args.resample_seed,
        normalize_input=bool(settings["normalize_input"]),
        threads=settings["threads"],
        failures=failures,
        manifest=manifest,
    )
    for name, message in failures:
        print(f"failed: {name}: {message}", file=sys.stderr)
    print(f"results: {len(results)} rows in {args.results}")
    _finish_tables(args, results, manifest)
    return 0


def cmd_sensitivity(args):
    settings = _resolve_settings(args)
    base = _config_from(settings)
    axes = SensitivityAxes(
        kg=_parse_kg(args.kg),
        counting=_parse_counting(args.counting),
        clip=_parse_bools(args.clip_values),
        use_diff=_parse_bools(args.diff_values),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        configs = grid_configs(axes, base)
    datasets = read_dataset_list(args.datasets, args.data_root)
    manifest = _manifest(args, settings, base)
    manifest["variants"] = [c.to_dict() for c in configs]
    failures = []
    results = run_variants(
        datasets,
        configs,
        runs=args.runs,
        results_path=args.results,
        normalize_input=bool(settings["normalize_input"]),
        threads=settings["threads"],
        failures=failures,
        manifest=manifest,
    )
    for name, message in failures:
        print(f"failed: {name}: {message}", file=sys.stderr)
    print(f"results: {len(results)} rows in {args.results}")
    _finish_tables(args, results, manifest)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "transform": cmd_transform,
    "benchmark": cmd_benchmark,
    "sensitivity": cmd_sensitivity,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    # numba probes an optional threading backend and warns when it is too old
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    try:
        return COMMANDS[args.command](args)
    except HydraError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TypeError, ValueError) as exc:
        # e.g. wrong types in a JSON config file
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
