"""Independent reference computations used by several test modules."""

import numpy as np
import pytest

from raekit import nncore


def finite_difference_grads(net, x, t, loss_kind, h=1e-5):
    """Central differences of the mean loss w.r.t. every parameter entry."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = nncore.loss_eval(loss_kind, net.forward(x), t)
            p[i] = orig - h
            down = nncore.loss_eval(loss_kind, net.forward(x), t)
            p[i] = orig
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    """Largest |a - n| / max(|a|, |n|) over all entries.

    Entries where both magnitudes are under ``floor`` are compared on an
    absolute scale instead, since their finite differences are pure
    round-off.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def brute_force_windows(T, d, w):
    return [i for i in range(T) if i + d <= T and i % w == 0]


def histogram_majority(labels):
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


def brute_force_f1(preds, truths, classes):
    """Per-list macro F1 by explicit counting; classes without truth support are skipped."""
    scores = []
    for c in classes:
        tp = sum(1 for p, t in zip(preds, truths) if p == c and t == c)
        fp = sum(1 for p, t in zip(preds, truths) if p == c and t != c)
        fn = sum(1 for p, t in zip(preds, truths) if p != c and t == c)
        if tp + fn == 0:
            continue
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn)
        scores.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return sum(scores) / len(scores) if scores else float("nan")


# (output activation, loss) pairs where the loss is defined on the output range
VALID_HEADS = [
    ("linear", "mse"),
    ("selu", "mse"),
    ("tanh", "mse"),
    ("sigmoid", "mse"),
    ("softmax", "mse"),
    ("sigmoid", "binary_cross_entropy"),
    ("softmax", "binary_cross_entropy"),
    ("softmax", "categorical_cross_entropy"),
    ("sigmoid", "categorical_cross_entropy"),
]


def random_case(seed):
    """A random net of 1-3 layers (<= 16 units), a batch and a matching target."""
    rng = np.random.default_rng(seed)
    head, loss = VALID_HEADS[seed % len(VALID_HEADS)]
    depth = int(rng.integers(1, 4))
    sizes = [int(s) for s in rng.integers(2, 17, size=depth + 1)]
    hidden = list(rng.choice(nncore.ACTIVATIONS, size=depth - 1))
    # make sure every activation shows up as a hidden layer somewhere in the sweep
    if depth > 1:
        hidden[0] = nncore.ACTIVATIONS[seed % len(nncore.ACTIVATIONS)]
    net = nncore.Network.build(sizes, hidden + [head], rng=rng)
    for p in net.parameters():
        p += rng.normal(0, 0.1, size=p.shape)
    x = rng.normal(size=(int(rng.integers(1, 6)), sizes[0]))
    n_out = sizes[-1]
    if loss == "mse":
        t = rng.normal(size=(len(x), n_out))
    elif loss == "binary_cross_entropy":
        t = rng.uniform(size=(len(x), n_out))
    else:
        t = rng.dirichlet(np.ones(n_out), size=len(x))
    return net, x, t, loss, [*hidden, head]


# acceptance verdict lines, collected for the terminal summary
ACCEPTANCE_KEY = pytest.StashKey[list]()
