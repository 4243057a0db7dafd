"""Feed-forward attacker-ID classifier: 3 ReLU hidden layers of 50 units, softmax output.

Trained with Adam on softmax cross-entropy. Standardization statistics of the
training features are stored with the weights and reapplied at prediction.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .binfmt import CheckpointError, take
from .metrics import ZERO_STD

MAGIC = b"ACLF"
VERSION = 1
HIDDEN = (50, 50, 50)


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    hidden: tuple = HIDDEN
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


class MLPParams:
    """Weights, biases, class labels and the frozen input standardization."""

    def __init__(self, weights, biases, labels, mean, std):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.labels = tuple(labels)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.weights[-1].shape[1] != len(self.labels):
            raise ValueError("output width must equal the number of classes")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("inconsistent layer widths")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def equal(self, other: "MLPParams") -> bool:
        same = lambda xs, ys: len(xs) == len(ys) and all(np.array_equal(a, b) for a, b in zip(xs, ys))
        return (self.labels == other.labels and same(self.weights, other.weights)
                and same(self.biases, other.biases) and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std))

    @classmethod
    def zeros(cls, input_dim, labels, hidden=HIDDEN):
        widths = (input_dim, *hidden, len(labels))
        return cls(
            [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
            [np.zeros(b) for b in widths[1:]],
            labels, np.zeros(input_dim), np.ones(input_dim),
        )


@dataclass(frozen=True, eq=False)
class ClassifierReport:
    labels: tuple
    confusion: np.ndarray
    accuracy: float
    recall: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n": int(self.confusion.sum()),
            "labels": list(self.labels),
            "recall": {lab: float(r) for lab, r in zip(self.labels, self.recall)},
            "random_baseline": 1.0 / len(self.labels),
        }


def _standardize(X, mean, std):
    safe = np.where(std < ZERO_STD, 1.0, std)
    Z = (X - mean) / safe
    Z[:, std < ZERO_STD] = 0.0
    return Z


def _logits(p: MLPParams, Z, keep=False):
    acts = [Z]
    h = Z
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    out = h @ p.weights[-1] + p.biases[-1]
    return (out, acts) if keep else out


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def train_classifier(features, labels, cfg: ClassifierConfig = ClassifierConfig(), label_order=None) -> MLPParams:
    """Mini-batch Adam on softmax cross-entropy; deterministic by ``cfg.seed``."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    y_raw = list(labels)
    if len(y_raw) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {len(y_raw)} labels")
    classes = tuple(label_order) if label_order is not None else tuple(sorted(set(y_raw), key=str))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[v] for v in y_raw])

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    Z = _standardize(X, mean, std)

    rng = np.random.default_rng(cfg.seed)
    widths = (X.shape[1], *cfg.hidden, len(classes))
    weights = [rng.standard_normal((a, b)) * np.sqrt(2.0 / a) for a, b in zip(widths[:-1], widths[1:])]
    biases = [np.zeros(b) for b in widths[1:]]
    p = MLPParams(weights, biases, classes, mean, std)
    tensors = p.weights + p.biases
    m1 = [np.zeros_like(t) for t in tensors]
    m2 = [np.zeros_like(t) for t in tensors]
    n_layers = len(p.weights)
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits, acts = _logits(p, Z[idx], keep=True)
            d = _softmax(logits)
            d[np.arange(idx.size), y[idx]] -= 1.0
            d /= idx.size
            gw, gb = [None] * n_layers, [None] * n_layers
            for k in range(n_layers - 1, -1, -1):
                gw[k] = acts[k].T @ d
                gb[k] = d.sum(axis=0)
                if k:
                    d = (d @ p.weights[k].T) * (acts[k] > 0)
            t += 1
            for j, (param, g) in enumerate(zip(tensors, gw + gb)):
                m1[j] = cfg.beta1 * m1[j] + (1 - cfg.beta1) * g
                m2[j] = cfg.beta2 * m2[j] + (1 - cfg.beta2) * g * g
                step = cfg.learning_rate * (m1[j] / (1 - cfg.beta1 ** t))
                param -= step / (np.sqrt(m2[j] / (1 - cfg.beta2 ** t)) + cfg.adam_eps)
    return p


def predict_proba(p: MLPParams, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != p.input_dim:
        raise ValueError(f"input dimension {X.shape[1]} does not match classifier input {p.input_dim}")
    return _softmax(_logits(p, _standardize(X, p.mean, p.std)))


def predict(p: MLPParams, x):
    """(label, probabilities) for a single feature vector; ties go to the lowest class index."""
    probs = predict_proba(p, x)[0]
    return p.labels[int(np.argmax(probs))], probs


def evaluate(p: MLPParams, features, labels) -> ClassifierReport:
    """Accuracy, confusion matrix (rows = true class) and per-class recall."""
    labels = list(labels)
    if not labels:
        raise ValueError("empty test set")
    pred = np.argmax(predict_proba(p, features), axis=1)
    return report_from_predictions(labels, [p.labels[i] for i in pred], p.labels)


def report_from_predictions(true, predicted, label_order) -> ClassifierReport:
    index = {c: i for i, c in enumerate(label_order)}
    k = len(label_order)
    conf = np.zeros((k, k), dtype=np.int64)
    for t, q in zip(true, predicted):
        if t not in index:
            raise ValueError(f"test label {t!r} unknown to the classifier")
        conf[index[t], index[q]] += 1
    totals = conf.sum(axis=1)
    recall = np.divide(np.diag(conf), totals, out=np.zeros(k), where=totals > 0)
    return ClassifierReport(tuple(label_order), conf, float(np.trace(conf) / conf.sum()), recall)


def write_report(report: ClassifierReport, csv_path, json_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["true\\pred", *report.labels])
        for lab, row in zip(report.labels, report.confusion):
            out.writerow([lab, *row.tolist()])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Checkpoints: b"ACLF", u32 version, u32 n_widths, u32 widths[], u32 label
# byte lengths + UTF-8 labels, then f64 mean, std, and per layer weight, bias.

def save_classifier(p: MLPParams, path) -> None:
    widths = (p.input_dim, *(w.shape[1] for w in p.weights))
    encoded = [lab.encode("utf-8") for lab in map(str, p.labels)]
    parts = [MAGIC, struct.pack("<II", VERSION, len(widths)), struct.pack(f"<{len(widths)}I", *widths)]
    for e in encoded:
        parts += [struct.pack("<I", len(e)), e]
    parts += [p.mean.astype("<f8").tobytes(), p.std.astype("<f8").tobytes()]
    for w, b in zip(p.weights, p.biases):
        parts += [np.ascontiguousarray(w, dtype="<f8").tobytes(), b.astype("<f8").tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_classifier(path) -> MLPParams:
    with open(path, "rb") as fh:
        buf = fh.read()
    head, pos = take(buf, 0, 4, "magic")
    if head != MAGIC:
        raise CheckpointError(f"bad magic {head!r}, expected {MAGIC!r}")
    raw, pos = take(buf, pos, 8, "version")
    version, n = struct.unpack("<II", raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})", VERSION, version)
    if n < 2:
        raise CheckpointError("dimension table needs at least input and output widths")
    raw, pos = take(buf, pos, 4 * n, "dimension table")
    widths = struct.unpack(f"<{n}I", raw)
    labels = []
    for _ in range(widths[-1]):
        raw, pos = take(buf, pos, 4, "label length")
        (k,) = struct.unpack("<I", raw)
        raw, pos = take(buf, pos, k, "label")
        labels.append(raw.decode("utf-8"))

    def floats(count, what):
        nonlocal pos
        raw, pos = take(buf, pos, 8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    mean = floats(widths[0], "mean")
    std = floats(widths[0], "std")
    weights, biases = [], []
    for a, b in zip(widths[:-1], widths[1:]):
        weights.append(floats(a * b, "weights").reshape(a, b))
        biases.append(floats(b, "biases"))
    if pos != len(buf):
        raise CheckpointError(f"dimension mismatch: {len(buf) - pos} trailing bytes")
    return MLPParams(weights, biases, labels, mean, std)
