"""End-to-end model: kernel bank + transform + linear classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .classifier import (
    DEFAULT_ALPHAS,
    LogisticProtocol,
    choose_classifier,
    fit_logistic,
    fit_ridge,
    model_from_payload,
    model_to_payload,
    predict_scores,
)
from .data_io import TimeSeriesDataset, znormalize
from .exceptions import BankMismatch, DegenerateLabels, ParseError
from .kernel_bank import HydraConfig, KernelBank, generate_bank
from .transform import transform

__all__ = ["HydraModel", "fit_model", "predict_dataset", "save_model", "load_model"]


@dataclass(frozen=True, eq=False)
class HydraModel:
    bank: KernelBank
    classifier: object
    class_names: tuple
    normalize_input: bool = False

    @property
    def config(self) -> HydraConfig:
        return self.bank.config

    def features(self, data, threads=None):
        series = data.series if isinstance(data, TimeSeriesDataset) else np.asarray(data)
        if series.ndim != 2 or series.shape[1] != self.bank.input_len:
            raise BankMismatch(
                f"model was fitted on series of length {self.bank.input_len}, "
                f"got {series.shape[-1]}"
            )
        if self.normalize_input:
            series = znormalize(series)
        return transform(series, self.bank, threads=threads)

    def predict_scores(self, data, threads=None) -> np.ndarray:
        return predict_scores(self.classifier, self.features(data, threads))

    def predict(self, data, threads=None) -> np.ndarray:
        return np.argmax(self.predict_scores(data, threads), axis=1)


def fit_model(
    train: TimeSeriesDataset,
    config: HydraConfig = None,
    classifier="auto",
    normalize_input=False,
    alphas=DEFAULT_ALPHAS,
    protocol: LogisticProtocol = None,
    threads=None,
    features=None,
    bank=None,
) -> HydraModel:
    """Generate a bank for ``train``, transform it and fit a classifier.

    ``features`` and ``bank`` may be supplied to reuse an earlier transform
    of the same data.
    """
    if train.labels is None:
        raise DegenerateLabels("training data must be labeled")
    config = config or HydraConfig()
    bank = generate_bank(config, train.L) if bank is None else bank
    model = HydraModel(bank, None, train.class_names, normalize_input)
    if features is None:
        features = model.features(train, threads)
    kind = choose_classifier(train.n, classifier)
    if kind == "ridge":
        clf = fit_ridge(features, train.labels, alphas=alphas, n_classes=train.n_classes)
    else:
        clf = fit_logistic(features, train.labels, protocol, n_classes=train.n_classes)
    return HydraModel(bank, clf, train.class_names, normalize_input)


def predict_dataset(model: HydraModel, data: TimeSeriesDataset, threads=None):
    """Return (predicted class indices, scores, accuracy or None)."""
    scores = model.predict_scores(data, threads)
    predicted = np.argmax(scores, axis=1)
    accuracy = None
    if data.labels is not None:
        accuracy = float(np.count_nonzero(predicted == data.labels)) / data.n
    return predicted, scores, accuracy


def save_model(model: HydraModel, path, manifest=None):
    payload = {
        "bank": model.bank.to_payload(),
        "classifier": model_to_payload(model.classifier),
        "class_names": list(model.class_names),
        "normalize_input": model.normalize_input,
    }
    container.save(path, "model", payload, manifest)


def load_model(path) -> HydraModel:
    payload, _ = container.load(path, "model")
    try:
        bank = KernelBank.from_payload(payload["bank"])
        clf = model_from_payload(payload["classifier"])
        class_names = tuple(payload["class_names"])
        normalize_input = bool(payload["normalize_input"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed model document: {exc}") from None
    if clf.weights.shape[0] != len(class_names):
        raise ParseError("classifier and class list disagree")
    return HydraModel(bank, clf, class_names, normalize_input)
