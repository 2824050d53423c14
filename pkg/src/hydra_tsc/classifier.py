"""Feature standardisation and the two linear classifiers.

Ridge regression (one-vs-rest onto +/-1 targets, regularisation chosen by
closed-form leave-one-out error) is used for ordinary training sets;
minibatch softmax regression trained with Adam and a plateau schedule
takes over for large ones.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .exceptions import BankMismatch, InsufficientData, NonFiniteInput, ParseError

__all__ = [
    "DEFAULT_ALPHAS",
    "LOGISTIC_THRESHOLD",
    "ScalerStats",
    "RidgeModel",
    "LogisticModel",
    "LogisticProtocol",
    "PlateauSchedule",
    "fit_scaler",
    "fit_ridge",
    "ridge_loo_errors",
    "fit_logistic",
    "softmax_loss_and_grad",
    "predict",
    "predict_scores",
    "choose_classifier",
    "model_to_payload",
    "model_from_payload",
]

DEFAULT_ALPHAS = tuple(np.logspace(-3, 3, 10).tolist())
LOGISTIC_THRESHOLD = 10_000
STDEV_FLOOR = 1e-8


def _as_array(features):
    values = getattr(features, "values", features)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise BankMismatch("features must be a 2-D (n, F) array")
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("features contain NaN or infinite values")
    return values


def choose_classifier(n_train: int, requested: str = "auto") -> str:
    if requested not in ("auto", "ridge", "logistic"):
        raise ValueError(f"unknown classifier {requested!r}")
    if requested != "auto":
        return requested
    return "ridge" if n_train <= LOGISTIC_THRESHOLD else "logistic"


@dataclass(frozen=True, eq=False)
class ScalerStats:
    mean: np.ndarray
    stdev: np.ndarray

    def apply(self, features) -> np.ndarray:
        values = _as_array(features)
        if values.shape[1] != self.mean.shape[0]:
            raise BankMismatch(
                f"expected {self.mean.shape[0]} features, got {values.shape[1]}"
            )
        return (values - self.mean) / self.stdev


def fit_scaler(train_features) -> ScalerStats:
    """Per-feature mean and population standard deviation (floored)."""
    values = _as_array(train_features)
    if values.shape[0] < 2:
        raise InsufficientData("need at least 2 examples to fit a scaler")
    mean = values.mean(axis=0)
    stdev = np.maximum(values.std(axis=0), STDEV_FLOOR)
    return ScalerStats(mean, stdev)


def _targets(labels, n_classes):
    Y = -np.ones((labels.shape[0], n_classes))
    Y[np.arange(labels.shape[0]), labels] = 1.0
    return Y


def _check_labels(labels, n, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise BankMismatch("one label per example required")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels outside [0, n_classes)")
    return labels, max(int(n_classes), 2)


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray  # (C, F)
    intercepts: np.ndarray  # (C,)
    alpha: float
    scaler: ScalerStats
    alphas: tuple = DEFAULT_ALPHAS
    loo_errors: tuple = ()

    kind = "ridge"


def ridge_loo_errors(X, Y, alphas):
    """Leave-one-out residuals for every alpha from one SVD.

    ``X`` is used as given (no scaling); an unpenalised intercept is
    included. Returns an array of shape (len(alphas), n, C) with entries
    ``y_i - yhat_{-i}``.
    """
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    s2 = s**2
    UtY = U.T @ Yc
    out = np.empty((len(alphas), n, Y.shape[1]))
    for i, alpha in enumerate(alphas):
        shrink = s2 / (s2 + alpha)
        hat_diag = 1.0 / n + (U**2) @ shrink
        residual = Yc - U @ (shrink[:, None] * UtY)
        out[i] = residual / (1.0 - hat_diag)[:, None]
    return out


def fit_ridge(train_features, labels, alphas=DEFAULT_ALPHAS, n_classes=None, scaler=None) -> RidgeModel:
    """Standardise, choose alpha by leave-one-out error, refit on everything.

    Parameters
    ----------
    train_features : FeatureMatrix or array of shape (n, F)
        Raw (unscaled) features.
    labels : array of shape (n,)
    alphas : sequence of float
        Candidate regularisation strengths. Ties go to the first one.
    n_classes : int, optional
        Total number of classes, if some are absent from ``labels``.
    """
    values = _as_array(train_features)
    labels, n_classes = _check_labels(labels, values.shape[0], n_classes)
    scaler = fit_scaler(values) if scaler is None else scaler
    X = scaler.apply(values)
    Y = _targets(labels, n_classes)
    alphas = tuple(float(a) for a in alphas)
    if not alphas or min(alphas) <= 0:
        raise ValueError("alphas must be positive")

    loo = ridge_loo_errors(X, Y, alphas)
    errors = (loo**2).mean(axis=(1, 2))
    best = int(np.argmin(errors))
    alpha = alphas[best]

    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    U, s, Vt = np.linalg.svd(X - x_mean, full_matrices=False)
    coef = Vt.T @ ((s / (s**2 + alpha))[:, None] * (U.T @ (Y - y_mean)))
    intercepts = y_mean - x_mean @ coef
    return RidgeModel(
        weights=np.ascontiguousarray(coef.T),
        intercepts=intercepts,
        alpha=alpha,
        scaler=scaler,
        alphas=alphas,
        loo_errors=tuple(errors.tolist()),
    )


@dataclass(frozen=True)
class LogisticProtocol:
    """Training schedule for the minibatch softmax classifier.

    Defaults follow the large-dataset protocol: 2,048 validation examples,
    minibatches of 256, Adam with learning rate 1e-4 halved after 50
    updates without improvement, early stop after 100 (never during the
    first epoch).
    """

    validation_size: int = 2048
    minibatch: int = 256
    lr: float = 1e-4
    lr_patience: int = 50
    stop_patience: int = 100
    max_epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0


class PlateauSchedule:
    """Learning-rate halving and early stopping on a validation loss stream.

    Call :meth:`step` once per update with that update's validation loss.
    Update indices in :attr:`events` are 1-based.
    """

    def __init__(self, lr, lr_patience=50, stop_patience=100):
        self.lr = lr
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.best = math.inf
        self.best_update = 0
        self.update = 0
        self.since_best = 0
        self.since_lr = 0
        self.events = []

    def step(self, loss, first_epoch_done) -> dict:
        self.update += 1
        improved = loss < self.best
        if improved:
            self.best = loss
            self.best_update = self.update
            self.since_best = 0
            self.since_lr = 0
        else:
            self.since_best += 1
            self.since_lr += 1
        if first_epoch_done and self.since_best >= self.stop_patience:
            self.events.append({"event": "stop", "update": self.update})
            return {"improved": improved, "stop": True}
        if self.since_lr >= self.lr_patience:
            self.lr /= 2.0
            self.since_lr = 0
            self.events.append({"event": "halve_lr", "update": self.update, "lr": self.lr})
        return {"improved": improved, "stop": False}


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray  # (C, F)
    intercepts: np.ndarray  # (C,)
    scaler: ScalerStats
    protocol: LogisticProtocol = field(default_factory=LogisticProtocol)
    training_log: dict = field(default_factory=dict)

    kind = "logistic"


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def softmax_loss_and_grad(W, b, X, y):
    """Mean multinomial cross-entropy and its gradient.

    ``W`` has shape (C, F), ``b`` (C,), ``X`` (n, F).
    """
    n = X.shape[0]
    Z = X @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(Z).sum(axis=1))
    loss = float(np.mean(log_norm - Z[np.arange(n), y]))
    P = np.exp(Z - log_norm[:, None])
    P[np.arange(n), y] -= 1.0
    P /= n
    return loss, P.T @ X, P.sum(axis=0)


def _loss(W, b, X, y):
    Z = X @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    return float(np.mean(np.log(np.exp(Z).sum(axis=1)) - Z[np.arange(X.shape[0]), y]))


def fit_logistic(train_features, labels, protocol: Optional[LogisticProtocol] = None, n_classes=None) -> LogisticModel:
    """Minibatch softmax regression with Adam and validation-based scheduling.

    A seeded random subset of ``protocol.validation_size`` examples is held
    out. The returned parameters are those with the lowest validation loss
    seen after any update.

    Raises
    ------
    InsufficientData
        If there are no more examples than the validation set needs.
    """
    protocol = protocol or LogisticProtocol()
    values = _as_array(train_features)
    n = values.shape[0]
    labels, n_classes = _check_labels(labels, n, n_classes)
    if n <= protocol.validation_size:
        raise InsufficientData(
            f"{n} training examples; logistic regression needs more than "
            f"the {protocol.validation_size} used for validation"
        )

    rng = np.random.default_rng(protocol.seed)
    order = rng.permutation(n)
    val_idx, fit_idx = order[: protocol.validation_size], order[protocol.validation_size :]
    scaler = fit_scaler(values[fit_idx]) if fit_idx.size >= 2 else fit_scaler(values)
    X = scaler.apply(values)
    X_val, y_val = X[val_idx], labels[val_idx]

    F = X.shape[1]
    W = np.zeros((n_classes, F))
    b = np.zeros(n_classes)
    mW, vW = np.zeros_like(W), np.zeros_like(W)
    mb, vb = np.zeros_like(b), np.zeros_like(b)
    best_W, best_b = W.copy(), b.copy()

    schedule = PlateauSchedule(protocol.lr, protocol.lr_patience, protocol.stop_patience)
    per_epoch = math.ceil(fit_idx.size / protocol.minibatch)
    epoch_losses, update_losses = [], []
    stopped = False
    step = 0
    for epoch in range(protocol.max_epochs):
        batches = rng.permutation(fit_idx)
        for start in range(0, batches.size, protocol.minibatch):
            batch = batches[start : start + protocol.minibatch]
            _, gW, gb = softmax_loss_and_grad(W, b, X[batch], labels[batch])
            step += 1
            c1 = 1.0 - protocol.beta1**step
            c2 = 1.0 - protocol.beta2**step
            for param, grad, m, v in ((W, gW, mW, vW), (b, gb, mb, vb)):
                m *= protocol.beta1
                m += (1.0 - protocol.beta1) * grad
                v *= protocol.beta2
                v += (1.0 - protocol.beta2) * grad**2
                param -= schedule.lr * (m / c1) / (np.sqrt(v / c2) + protocol.epsilon)
            val_loss = _loss(W, b, X_val, y_val)
            update_losses.append(val_loss)
            outcome = schedule.step(val_loss, first_epoch_done=step >= per_epoch)
            if outcome["improved"]:
                best_W[...] = W
                best_b[...] = b
            if outcome["stop"]:
                stopped = True
                break
        epoch_losses.append(val_loss)
        if stopped:
            break

    log = {
        "epoch_val_loss": epoch_losses,
        "update_val_loss": update_losses,
        "events": schedule.events,
        "updates": schedule.update,
        "updates_per_epoch": per_epoch,
        "best_update": schedule.best_update,
        "best_val_loss": schedule.best,
        "stop_update": schedule.update if stopped else None,
    }
    return LogisticModel(best_W, best_b, scaler, protocol, log)


def predict_scores(model, features) -> np.ndarray:
    """Decision values (ridge) or class probabilities (logistic), shape (n, C)."""
    values = _as_array(features)
    if values.shape[1] != model.weights.shape[1]:
        raise BankMismatch(
            f"model expects {model.weights.shape[1]} features, got {values.shape[1]}"
        )
    scores = model.scaler.apply(values) @ model.weights.T + model.intercepts
    if model.kind == "logistic":
        scores = _softmax(scores)
    return scores


def predict(model, features) -> np.ndarray:
    """Class indices; ties resolve to the lowest class index."""
    return np.argmax(predict_scores(model, features), axis=1)


def model_to_payload(model) -> dict:
    payload = {
        "kind": model.kind,
        "weights": model.weights,
        "intercepts": model.intercepts,
        "scaler": {"mean": model.scaler.mean, "stdev": model.scaler.stdev},
    }
    if model.kind == "ridge":
        payload.update(alpha=model.alpha, alphas=list(model.alphas), loo_errors=list(model.loo_errors))
    else:
        payload.update(protocol=asdict(model.protocol), training_log=model.training_log)
    return payload


def model_from_payload(payload):
    try:
        scaler = ScalerStats(
            np.asarray(payload["scaler"]["mean"], dtype=np.float64),
            np.asarray(payload["scaler"]["stdev"], dtype=np.float64),
        )
        weights = np.asarray(payload["weights"], dtype=np.float64)
        intercepts = np.asarray(payload["intercepts"], dtype=np.float64)
        if weights.ndim != 2 or weights.shape != (intercepts.shape[0], scaler.mean.shape[0]):
            raise ParseError("classifier arrays have inconsistent shapes")
        if payload["kind"] == "ridge":
            return RidgeModel(
                weights,
                intercepts,
                float(payload["alpha"]),
                scaler,
                tuple(payload["alphas"]),
                tuple(payload["loo_errors"]),
            )
        if payload["kind"] == "logistic":
            return LogisticModel(
                weights,
                intercepts,
                scaler,
                LogisticProtocol(**payload["protocol"]),
                payload["training_log"],
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed classifier: {exc}") from None
    raise ParseError(f"unknown classifier kind {payload.get('kind')!r}")
