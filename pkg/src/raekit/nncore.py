"""Small dense neural-network engine with hand-written backpropagation.

Batches are 2-D arrays of shape (rows, features).  A layer stores its weight
matrix as (out, in) so the affine map is ``x @ W.T + b``.  Everything runs in
float64; callers that persist parameters round them to float32 themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

ACTIVATIONS = ("linear", "selu", "sigmoid", "softmax", "tanh")
LOSSES = ("mse", "binary_cross_entropy", "categorical_cross_entropy")

# clamp for log() in the cross-entropies
LOG_EPS = 1e-12


class ShapeError(ValueError):
    pass


def _check_activation(kind):
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def _sigmoid(v):
    # split by sign so exp() never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _softmax(v):
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def apply_activation(kind: str, v) -> np.ndarray:
    """Apply an activation elementwise (softmax works along the last axis)."""
    _check_activation(kind)
    v = np.asarray(v, dtype=np.float64)
    if kind == "linear":
        return v.copy()
    if kind == "selu":
        neg = SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(v, 0.0))
        return np.where(v > 0, SELU_LAMBDA * v, neg)
    if kind == "sigmoid":
        return _sigmoid(v)
    if kind == "tanh":
        return np.tanh(v)
    return _softmax(v)


def activation_backward(kind: str, pre: np.ndarray, out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Map dL/d(out) to dL/d(pre) for one activation."""
    if kind == "linear":
        return grad_out
    if kind == "selu":
        deriv = np.where(pre > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(pre, 0.0)))
        return grad_out * deriv
    if kind == "sigmoid":
        return grad_out * out * (1.0 - out)
    if kind == "tanh":
        return grad_out * (1.0 - out * out)
    # softmax Jacobian-vector product, row by row
    dot = np.sum(grad_out * out, axis=-1, keepdims=True)
    return out * (grad_out - dot)


def _check_pair(predicted, target):
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeError(f"prediction shape {predicted.shape} != target shape {target.shape}")
    if predicted.ndim == 1:
        predicted = predicted[None, :]
        target = target[None, :]
    return predicted, target


def loss_eval(kind: str, predicted, target) -> float:
    """Mean loss over the batch.

    ``mse`` averages over every element, the binary cross-entropy over every
    element, and the categorical cross-entropy over rows.
    """
    p, t = _check_pair(predicted, target)
    if kind == "mse":
        return float(np.mean((p - t) ** 2))
    if kind == "binary_cross_entropy":
        pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
        return float(-np.mean(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)))
    if kind == "categorical_cross_entropy":
        pc = np.clip(p, LOG_EPS, 1.0)
        return float(-np.mean(np.sum(t * np.log(pc), axis=-1)))
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def loss_grad(kind: str, predicted, target) -> np.ndarray:
    """Gradient of :func:`loss_eval` with respect to the prediction."""
    p, t = _check_pair(predicted, target)
    if kind == "mse":
        return 2.0 * (p - t) / p.size
    if kind == "binary_cross_entropy":
        pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
        return (pc - t) / (pc * (1.0 - pc)) / p.size
    if kind == "categorical_cross_entropy":
        pc = np.clip(p, LOG_EPS, 1.0)
        return -t / pc / p.shape[0]
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def init_weights(shape, seed=None, rng=None) -> np.ndarray:
    """Glorot-uniform matrix of ``shape`` = (fan_out, fan_in)."""
    fan_out, fan_in = shape
    if fan_out < 1 or fan_in < 1:
        raise ShapeError(f"weight shape must be positive, got {shape}")
    if rng is None:
        rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        _check_activation(self.activation)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"weights {self.weights.shape} and bias {self.bias.shape} are inconsistent"
            )

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    out: list = field(default_factory=list)


class Network:
    """An ordered stack of dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer output {a.out_dim} does not feed layer input {b.in_dim}")

    @classmethod
    def build(cls, sizes, activations, seed=None, rng=None):
        """Glorot-initialised network; ``sizes`` includes the input width."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        if rng is None:
            rng = np.random.default_rng(seed)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            layers.append(DenseLayer(init_weights((n_out, n_in), rng=rng), np.zeros(n_out), act))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def sizes(self):
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self):
        """Flat list [W0, b0, W1, b1, ...]; the arrays are live references."""
        params = []
        for layer in self.layers:
            params.extend((layer.weights, layer.bias))
        return params

    def copy(self):
        return Network(
            [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def round_to_float32(self):
        for layer in self.layers:
            layer.weights[...] = layer.weights.astype(np.float32)
            layer.bias[...] = layer.bias.astype(np.float32)

    def forward(self, batch, cache=None):
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"batch shape {x.shape} does not match input width {self.in_dim}")
        for layer in self.layers:
            pre = x @ layer.weights.T + layer.bias
            out = apply_activation(layer.activation, pre)
            if cache is not None:
                cache.inputs.append(x)
                cache.pre.append(pre)
                cache.out.append(out)
            x = out
        return x

    __call__ = forward

    def backprop(self, batch, target, loss_kind="mse"):
        """Return (loss, gradients) with gradients aligned to :meth:`parameters`."""
        cache = ForwardCache()
        pred = self.forward(batch, cache)
        target = np.asarray(target, dtype=np.float64)
        if target.ndim == 1:
            target = target[None, :]
        loss = loss_eval(loss_kind, pred, target)

        last = self.layers[-1].activation
        if loss_kind == "binary_cross_entropy" and last == "sigmoid":
            delta = (pred - target) / pred.size
        elif loss_kind == "categorical_cross_entropy" and last == "softmax":
            delta = (pred - target) / pred.shape[0]
        else:
            delta = activation_backward(last, cache.pre[-1], pred, loss_grad(loss_kind, pred, target))

        grads, _ = self._backward(cache, delta)
        return loss, grads

    def _backward(self, cache, delta):
        """Walk back from dL/d(pre-activation of the last layer)."""
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            grads[2 * i] = delta.T @ cache.inputs[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            upstream = delta @ layer.weights
            if i > 0:
                prev = self.layers[i - 1]
                delta = activation_backward(prev.activation, cache.pre[i - 1], cache.out[i - 1], upstream)
        return grads, upstream

    def backward_from(self, batch, grad_pre_last):
        """Parameter and input gradients given dL/d(last pre-activation).

        Returns (output, grads, input_grad).  Used when the loss lives outside
        this network, e.g. a generator scored by a discriminator.
        """
        cache = ForwardCache()
        out = self.forward(batch, cache)
        grads, dx = self._backward(cache, np.asarray(grad_pre_last, dtype=np.float64))
        return out, grads, dx

    def output_delta(self, batch, grad_out):
        """Convert dL/d(output) into dL/d(last pre-activation) for this batch."""
        cache = ForwardCache()
        out = self.forward(batch, cache)
        return activation_backward(self.layers[-1].activation, cache.pre[-1], out, grad_out)


def forward(net: Network, batch) -> np.ndarray:
    return net.forward(batch)


def backprop(net: Network, batch, target, loss_kind="mse"):
    return net.backprop(batch, target, loss_kind)[1]


class Optimizer:
    """SGD or Adam over a fixed parameter list, updated in place."""

    def __init__(self, params, kind="adam", learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.params = params
        self.kind = kind
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError("gradient list does not match parameter list")
        self.step_count += 1
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.learning_rate * g
            return
        t = self.step_count
        corr1 = 1.0 - self.beta1**t
        corr2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + self.epsilon)


def adam_step(state: Optimizer, params, gradients):
    """Functional wrapper: apply one update of ``state`` to ``params``."""
    state.params = params
    state.step(gradients)
    return params


def iterate_minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class DivergenceError(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


def fit(net: Network, inputs, targets, loss_kind="mse", epochs=30, batch_size=128, seed=0,
        optimizer="adam", learning_rate=1e-3, on_epoch=None):
    """Minibatch training loop; returns the per-epoch mean training loss."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise ValueError("cannot train on an empty set")
    if len(inputs) != len(targets):
        raise ShapeError("inputs and targets differ in length")
    rng = np.random.default_rng(seed)
    opt = Optimizer(net.parameters(), optimizer, learning_rate)
    history = []
    for epoch in range(1, epochs + 1):
        total = 0.0
        for idx in iterate_minibatches(len(inputs), batch_size, rng):
            loss, grads = net.backprop(inputs[idx], targets[idx], loss_kind)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / len(inputs))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history
