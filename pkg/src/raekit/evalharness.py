"""Third-party stand-in classifier and the utility/privacy report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .dataio import InferencePartition, WindowSet
from .rae import ModelFormatError, TrainedRae, load_network, save_network

CATEGORIES = ("W", "B", "G")
LISTS = (("white", "W"), ("black", "B"), ("gray", "G"))


@dataclass
class Classifier:
    network: nncore.Network
    classes: np.ndarray
    k: int
    d: int
    config: dict = field(default_factory=dict)

    def logits_input(self, windows):
        x = np.asarray(windows.values if isinstance(windows, WindowSet) else windows, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (self.k, self.d):
            raise nncore.ShapeError(f"window shape {x.shape[1:]} != classifier shape {(self.k, self.d)}")
        return x.reshape(len(x), -1)

    def predict_proba(self, windows):
        return self.network.forward(self.logits_input(windows))

    def predict(self, windows):
        return self.classes[np.argmax(self.predict_proba(windows), axis=1)]


def classifier_sizes(inp, n_classes):
    return [inp, max(inp // 4, 1), max(inp // 16, 1), n_classes]


def train_classifier(train: WindowSet, epochs=30, batch_size=128, seed=0, learning_rate=1e-3) -> Classifier:
    """Dense softmax classifier with two selu hidden layers (inp/4, inp/16)."""
    if len(train) == 0:
        raise ValueError("empty training set")
    classes = np.unique(train.labels)
    if len(classes) < 2:
        raise ValueError(f"need at least two classes to train a classifier, got {classes.tolist()}")
    x = train.flat()
    onehot = (train.labels[:, None] == classes[None, :]).astype(np.float64)
    net = nncore.Network.build(classifier_sizes(x.shape[1], len(classes)), ["selu", "selu", "softmax"], seed=seed)
    history = nncore.fit(net, x, onehot, "categorical_cross_entropy", epochs=epochs, batch_size=batch_size,
                         seed=seed + 1, learning_rate=learning_rate)
    net.round_to_float32()
    cfg = {"epochs": epochs, "batch_size": batch_size, "seed": seed, "learning_rate": learning_rate,
           "history": [repr(float(h)) for h in history]}
    return Classifier(net, classes, train.k, train.d, cfg)


def predict(clf: Classifier, windows):
    return clf.predict(windows)


def save_classifier(clf: Classifier, path):
    meta = {"kind": "classifier", "k": clf.k, "d": clf.d, "classes": clf.classes.tolist(), "config": clf.config}
    save_network(path, clf.network, meta)


def load_classifier(path) -> Classifier:
    net, meta = load_network(path)
    if meta.get("kind") != "classifier":
        raise ModelFormatError(f"{path}: not a classifier (kind={meta.get('kind')!r})")
    return Classifier(net, np.array(meta["classes"], dtype=np.int64), meta["k"], meta["d"], meta.get("config", {}))


# --- metrics ----------------------------------------------------------------

def per_class_f1(predictions, truths, class_id):
    """F1 for one class, or None when the class has no support in ``truths``."""
    p = np.asarray(predictions) == class_id
    t = np.asarray(truths) == class_id
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    if tp + fn == 0:
        return None
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


def f1_per_list(predictions, truths, partition: InferencePartition):
    """Macro F1 over the classes of each list; NaN for a list with no scored class."""
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths differ in length")
    out = {}
    for name, _ in LISTS:
        scores = [per_class_f1(predictions, truths, c) for c in sorted(getattr(partition, name))]
        scores = [s for s in scores if s is not None]
        out[name] = float(np.mean(scores)) if scores else float("nan")
    return out


def category_confusion(predictions, truths, partition: InferencePartition):
    """3x3 counts indexed by (true category, predicted category) in W, B, G order."""
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    index = {c: i for i, c in enumerate(CATEGORIES)}
    mat = np.zeros((3, 3), dtype=np.int64)
    for p, t in zip(predictions, truths):
        mat[index[partition.category(t)], index[partition.category(p)]] += 1
    return mat


@dataclass
class EvalReport:
    original_f1: dict
    transformed_f1: dict
    original_confusion: np.ndarray
    transformed_confusion: np.ndarray
    n_windows: int

    def rows(self):
        for cond, scores in (("original", self.original_f1), ("transformed", self.transformed_f1)):
            for name, _ in LISTS:
                yield cond, name, scores[name]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["condition", "list", "f1"])
        for cond, name, val in self.rows():
            writer.writerow([cond, name, f"{val:.6f}"])
        return buf.getvalue()

    def to_text(self):
        lines = [f"{'list':<8}{'OF1':>10}{'TF1':>10}", "-" * 28]
        for name, _ in LISTS:
            lines.append(f"{name:<8}{100 * self.original_f1[name]:>10.2f}{100 * self.transformed_f1[name]:>10.2f}")
        lines.append("")
        for title, mat in (("original", self.original_confusion), ("transformed", self.transformed_confusion)):
            lines.append(f"category confusion ({title}); rows = true, columns = predicted")
            lines.append("     " + "".join(f"{c:>8}" for c in CATEGORIES))
            for c, row in zip(CATEGORIES, mat):
                lines.append(f"  {c}  " + "".join(f"{v:>8d}" for v in row))
            lines.append("")
        return "\n".join(lines)


def confusion_csv(mat):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["true\\predicted", *CATEGORIES])
    for c, row in zip(CATEGORIES, mat):
        writer.writerow([c, *[int(v) for v in row]])
    return buf.getvalue()


def evaluate_pipeline(clf: Classifier, rae: TrainedRae, test: WindowSet, partition=None) -> EvalReport:
    """Classify the test windows before and after the replacement transform."""
    partition = partition or rae.partition
    orig_pred = clf.predict(test.values)
    trans_pred = clf.predict(rae.transform(test.values))
    return EvalReport(
        f1_per_list(orig_pred, test.labels, partition),
        f1_per_list(trans_pred, test.labels, partition),
        category_confusion(orig_pred, test.labels, partition),
        category_confusion(trans_pred, test.labels, partition),
        len(test),
    )
