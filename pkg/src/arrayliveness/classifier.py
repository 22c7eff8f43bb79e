"""Feed-forward liveness classifier and biometric evaluation metrics.

Scores are P(authentic). A row is accepted as authentic iff its score is at
or above the model threshold.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

MODEL_VERSION = 1
HIDDEN_SIZES = (64, 32, 16)
AUTHENTIC, SPOOF = 1, 0


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class Layer:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray


@dataclass
class Model:
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    layers: list[Layer]
    threshold: float = 0.5
    config_hash: str = ""

    @property
    def n_features(self) -> int:
        return len(self.scaler_mean)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.scaler_mean) / self.scaler_std


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward_logit(model: Model, X: np.ndarray) -> np.ndarray:
    h = model.standardize(X)
    for layer in model.layers[:-1]:
        h = np.maximum(h @ layer.weights + layer.bias, 0.0)
    out = model.layers[-1]
    return (h @ out.weights + out.bias)[:, 0]


def predict_scores(model: Model, X, config_hash: str | None = None) -> np.ndarray:
    """Scores in (0, 1) for each feature row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    if config_hash is not None and config_hash != model.config_hash:
        raise ValueError(
            f"feature config hash {config_hash} does not match the model's {model.config_hash}"
        )
    return _sigmoid(forward_logit(model, X))


def predict(model: Model, x, config_hash: str | None = None) -> tuple[float, str]:
    """Score and label for a single feature vector."""
    score = float(predict_scores(model, np.reshape(x, (1, -1)), config_hash)[0])
    return score, ("authentic" if score >= model.threshold else "spoof")


# --- metrics -----------------------------------------------------------------

def operating_points(auth_scores, spoof_scores):
    """(thresholds, far, frr) at every distinct score plus +inf.

    At threshold t, a spoof is falsely accepted when score >= t and an
    authentic sample is falsely rejected when score < t.
    """
    auth = np.sort(np.asarray(auth_scores, dtype=np.float64))
    spoof = np.sort(np.asarray(spoof_scores, dtype=np.float64))
    thr = np.unique(np.concatenate([auth, spoof]))
    thr = np.append(thr, np.inf)
    far = (len(spoof) - np.searchsorted(spoof, thr, side="left")) / len(spoof)
    frr = np.searchsorted(auth, thr, side="left") / len(auth)
    return thr, far, frr


def _lower_hull(points: np.ndarray) -> np.ndarray:
    """Lower-left convex hull of ROC points sorted by increasing far."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.asarray(hull)


def compute_eer(auth_scores, spoof_scores) -> float:
    """Equal error rate on the convex hull of the (far, frr) operating points.

    Consecutive hull vertices are joined linearly and the crossing with
    far == frr is returned; the hull contains (0, 1) and (1, 0), so the
    result never exceeds 0.5.
    """
    if len(auth_scores) == 0 or len(spoof_scores) == 0:
        raise ValueError("EER needs both authentic and spoof scores")
    _, far, frr = operating_points(auth_scores, spoof_scores)
    pts = np.column_stack([far, frr])
    pts = np.vstack([pts, [[0.0, 1.0], [1.0, 0.0]]])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    hull = _lower_hull(pts[order])
    for (x1, y1), (x2, y2) in zip(hull[:-1], hull[1:]):
        d1, d2 = x1 - y1, x2 - y2
        if d1 <= 0 <= d2:
            if d2 == d1:
                return float(x1)
            lam = -d1 / (d2 - d1)
            return float(x1 + lam * (x2 - x1))
    raise AssertionError("hull does not cross the diagonal")


def eer_threshold(auth_scores, spoof_scores) -> float:
    """Threshold between adjacent distinct scores minimising max(far, frr).

    Ties go to the smallest |far - frr|, then to the lower threshold.
    """
    scores = np.unique(np.concatenate([auth_scores, spoof_scores]))
    if len(scores) == 1:
        return float(scores[0])
    cands = np.concatenate([[scores[0] - 1e-12], 0.5 * (scores[:-1] + scores[1:]), [scores[-1] + 1e-12]])
    auth = np.sort(auth_scores)
    spoof = np.sort(spoof_scores)
    far = (len(spoof) - np.searchsorted(spoof, cands, side="left")) / len(spoof)
    frr = np.searchsorted(auth, cands, side="left") / len(auth)
    key = np.lexsort((np.abs(far - frr), np.maximum(far, frr)))
    return float(np.clip(cands[key[0]], 1e-12, 1.0 - 1e-12))


@dataclass
class EvaluationReport:
    accuracy: float
    far: float | None
    frr: float | None
    trr: float | None
    eer: float | None
    tp: int
    tn: int
    fp: int
    fn: int
    threshold_used: float
    roc: list = field(default_factory=list)
    note: str = ""

    def to_dict(self, include_roc: bool = False) -> dict:
        d = {
            "accuracy": self.accuracy,
            "far": self.far,
            "frr": self.frr,
            "trr": self.trr,
            "eer": self.eer,
            "counts": {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn},
            "threshold_used": self.threshold_used,
        }
        if self.note:
            d["note"] = self.note
        if include_roc:
            d["roc"] = [list(r) for r in self.roc]
        return d


def evaluate_scores(scores, y, threshold: float) -> EvaluationReport:
    """Metrics for scores against labels (1 = authentic, 0 = spoof).

    tp counts accepted authentic rows, tn rejected spoofs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if len(scores) == 0:
        raise ValueError("cannot evaluate an empty set")
    accepted = scores >= threshold
    auth, spoof = y == AUTHENTIC, y == SPOOF
    tp = int(np.sum(accepted & auth))
    fn = int(np.sum(~accepted & auth))
    fp = int(np.sum(accepted & spoof))
    tn = int(np.sum(~accepted & spoof))
    far = fp / (fp + tn) if spoof.any() else None
    frr = fn / (tp + fn) if auth.any() else None
    trr = None if far is None else 1.0 - far
    eer, roc = None, []
    if auth.any() and spoof.any():
        eer = compute_eer(scores[auth], scores[spoof])
        thr, fars, frrs = operating_points(scores[auth], scores[spoof])
        roc = [(float(t), float(a), float(r)) for t, a, r in zip(thr, fars, frrs)]
    return EvaluationReport(
        accuracy=(tp + tn) / len(y), far=far, frr=frr, trr=trr, eer=eer,
        tp=tp, tn=tn, fp=fp, fn=fn, threshold_used=float(threshold), roc=roc,
    )


def evaluate(model: Model, X, y, config_hash: str | None = None) -> EvaluationReport:
    return evaluate_scores(predict_scores(model, X, config_hash), y, model.threshold)


# --- training ----------------------------------------------------------------

def stratified_split(y, val_fraction: float, rng: np.random.Generator):
    """Seeded per-class shuffle; returns (train_idx, val_idx)."""
    y = np.asarray(y)
    train, val = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(val_fraction * len(idx)))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _init_layers(sizes, rng) -> list[Layer]:
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / n_in)  # He-uniform for ReLU
        layers.append(Layer(rng.uniform(-bound, bound, (n_in, n_out)), np.zeros(n_out)))
    return layers


def _bce(logit, y):
    # log(1 + e^z) - y z, stable
    return np.mean(np.logaddexp(0.0, logit) - y * logit)


def _backward(layers, X, y):
    acts = [X]
    h = X
    for layer in layers[:-1]:
        h = np.maximum(h @ layer.weights + layer.bias, 0.0)
        acts.append(h)
    logit = (h @ layers[-1].weights + layers[-1].bias)[:, 0]
    delta = ((_sigmoid(logit) - y) / len(y))[:, None]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ layers[i].weights.T) * (acts[i] > 0)
    return grads


def train(X, y, seed: int = 0, val_fraction: float = 0.3, learning_rate: float = 1e-3,
          batch_size: int = 32, max_epochs: int = 500, patience: int = 25,
          hidden_sizes=HIDDEN_SIZES, min_rows_per_class: int = 20, min_val_accuracy: float = 0.7,
          config_hash: str = "") -> tuple[Model, EvaluationReport]:
    """Fit the detector; returns the best-validation model and its validation report."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    for cls, name in ((AUTHENTIC, "authentic"), (SPOOF, "spoof")):
        n = int(np.sum(y == cls))
        if n < min_rows_per_class:
            raise ValueError(f"need >= {min_rows_per_class} {name} rows, got {n}")
    if set(np.unique(y)) - {AUTHENTIC, SPOOF}:
        raise ValueError("labels must be 1 (authentic) or 0 (spoof)")

    rng = np.random.default_rng(seed)
    tr, va = stratified_split(y, val_fraction, rng)
    mean = X[tr].mean(axis=0)
    std = X[tr].std(axis=0)
    std[std <= 1e-12] = 1.0
    Xtr, ytr = (X[tr] - mean) / std, y[tr].astype(np.float64)
    Xva, yva = (X[va] - mean) / std, y[va].astype(np.float64)

    sizes = (X.shape[1], *hidden_sizes, 1)
    layers = _init_layers(sizes, rng)
    m = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]
    v = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    def val_loss():
        model = Model(np.zeros(X.shape[1]), np.ones(X.shape[1]), layers)
        return _bce(forward_logit(model, Xva), yva)

    best_loss, best_layers, stale = val_loss(), _copy_layers(layers), 0
    for _epoch in range(max_epochs):
        order = rng.permutation(len(Xtr))
        for start in range(0, len(order), batch_size):
            b = order[start : start + batch_size]
            grads = _backward(layers, Xtr[b], ytr[b])
            step += 1
            c1, c2 = 1.0 - beta1 ** step, 1.0 - beta2 ** step
            for i, (gw, gb) in enumerate(grads):
                mw, mb = m[i]
                vw, vb = v[i]
                mw = beta1 * mw + (1 - beta1) * gw
                mb = beta1 * mb + (1 - beta1) * gb
                vw = beta2 * vw + (1 - beta2) * gw * gw
                vb = beta2 * vb + (1 - beta2) * gb * gb
                m[i], v[i] = (mw, mb), (vw, vb)
                layers[i].weights -= learning_rate * (mw / c1) / (np.sqrt(vw / c2) + eps)
                layers[i].bias -= learning_rate * (mb / c1) / (np.sqrt(vb / c2) + eps)
        loss = val_loss()
        if loss < best_loss:
            best_loss, best_layers, stale = loss, _copy_layers(layers), 0
        else:
            stale += 1
            if stale >= patience:
                break

    model = Model(mean, std, best_layers, 0.5, config_hash)
    val_scores = predict_scores(model, X[va])
    model.threshold = eer_threshold(val_scores[y[va] == AUTHENTIC], val_scores[y[va] == SPOOF])
    report = evaluate_scores(val_scores, y[va], model.threshold)
    if report.accuracy < min_val_accuracy:
        raise TrainingError(
            f"training diverged: validation accuracy {report.accuracy:.3f} < {min_val_accuracy}"
        )
    return model, report


def _copy_layers(layers):
    return [Layer(l.weights.copy(), l.bias.copy()) for l in layers]


# --- serialization -----------------------------------------------------------

def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ModelFormatError("non-finite value in model")
    return format(x, ".17g")


def _nums(a) -> str:
    return "[" + ",".join(_num(x) for x in np.asarray(a).ravel()) + "]"


def _payload_text(model: Model) -> str:
    layers = ",".join(
        '{"rows":%d,"cols":%d,"weights":%s,"bias":%s}'
        % (l.weights.shape[0], l.weights.shape[1], _nums(l.weights), _nums(l.bias))
        for l in model.layers
    )
    return (
        '{"version":%d,"config_hash":%s,"scaler":{"mean":%s,"std":%s},"layers":[%s],"threshold":%s}'
        % (MODEL_VERSION, json.dumps(model.config_hash), _nums(model.scaler_mean),
           _nums(model.scaler_std), layers, _num(model.threshold))
    )


def dumps_model(model: Model) -> str:
    payload = _payload_text(model)
    digest = hashlib.sha256(payload.encode()).hexdigest()
    return '{"model":%s,"digest":"%s"}\n' % (payload, digest)


def loads_model(text: str) -> Model:
    try:
        doc = json.loads(text)
        payload = doc["model"]
        digest = doc["digest"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"unreadable model file ({exc})") from exc
    if payload.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {payload.get('version')!r}")
    try:
        layers = []
        for l in payload["layers"]:
            w = np.asarray(l["weights"], dtype=np.float64).reshape(l["rows"], l["cols"])
            layers.append(Layer(w, np.asarray(l["bias"], dtype=np.float64)))
        model = Model(
            np.asarray(payload["scaler"]["mean"], dtype=np.float64),
            np.asarray(payload["scaler"]["std"], dtype=np.float64),
            layers,
            float(payload["threshold"]),
            str(payload["config_hash"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model payload ({exc})") from exc
    if hashlib.sha256(_payload_text(model).encode()).hexdigest() != digest:
        raise ModelFormatError("model digest mismatch; file is corrupted")
    return model


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


# --- estimator ---------------------------------------------------------------

class LivenessClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`train`; class 1 is authentic, 0 spoof."""

    def __init__(self, hidden_layer_sizes=HIDDEN_SIZES, learning_rate=1e-3, batch_size=32,
                 max_epochs=500, patience=25, val_fraction=0.3, random_state=0, config_hash=""):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.random_state = random_state
        self.config_hash = config_hash

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.model_, self.validation_report_ = train(
            X, y, seed=self.random_state, val_fraction=self.val_fraction,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            hidden_sizes=tuple(self.hidden_layer_sizes), config_hash=self.config_hash,
        )
        self.classes_ = np.array([SPOOF, AUTHENTIC])
        self.n_features_in_ = X.shape[1]
        self.threshold_ = self.model_.threshold
        return self

    @classmethod
    def from_model(cls, model: Model) -> "LivenessClassifier":
        est = cls(hidden_layer_sizes=tuple(l.weights.shape[1] for l in model.layers[:-1]),
                  config_hash=model.config_hash)
        est.model_ = model
        est.classes_ = np.array([SPOOF, AUTHENTIC])
        est.n_features_in_ = model.n_features
        est.threshold_ = model.threshold
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return predict_scores(self.model_, check_array(X))

    def predict_proba(self, X):
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= self.model_.threshold).astype(int)

    def evaluate(self, X, y) -> EvaluationReport:
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_array(X), y)
