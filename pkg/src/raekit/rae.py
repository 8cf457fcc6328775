"""Replacement autoencoder: topology, training pairs, training, persistence."""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nncore
from .dataio import InferencePartition, NormStats, WindowSet, denormalize_windows, normalize_windows

PROFILES = {
    "deep": (2, 8, 16, 8, 2),
    "shallow": (2, 3, 4, 3, 2),
}

MODEL_MAGIC = b"RAEMODEL"
MODEL_VERSION = 1


class TopologyError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RaeTopology:
    input_dim: int
    hidden: tuple
    hidden_activation: str = "selu"
    boundary_activation: str = "linear"

    def __post_init__(self):
        if any(h < 1 for h in self.hidden) or self.input_dim < 1:
            raise TopologyError(f"layer sizes must be >= 1: {self.input_dim}, {self.hidden}")
        if tuple(self.hidden) != tuple(reversed(self.hidden)):
            raise TopologyError(f"hidden sizes must be palindromic: {self.hidden}")

    @property
    def sizes(self):
        return [self.input_dim, *self.hidden, self.input_dim]

    @property
    def activations(self):
        return [self.hidden_activation] * len(self.hidden) + [self.boundary_activation]


def build_rae_topology(k, d, profile="deep") -> RaeTopology:
    if k < 1 or d < 1:
        raise TopologyError("k and d must be >= 1")
    if profile not in PROFILES:
        raise TopologyError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    inp = k * d
    hidden = tuple(inp // div for div in PROFILES[profile])
    if min(hidden) < 1:
        raise TopologyError(f"input size {inp} is too small for the {profile} profile: {hidden}")
    return RaeTopology(inp, hidden)


@dataclass
class ReplacementPairs:
    """Aligned source/target stacks; ``target_labels`` records where targets came from."""

    inputs: np.ndarray
    targets: np.ndarray
    input_labels: np.ndarray
    target_labels: np.ndarray

    def __len__(self):
        return len(self.inputs)


def build_replacement_pairs(W: WindowSet, B: WindowSet, G: WindowSet, seed=0) -> ReplacementPairs:
    """White and gray windows map to themselves, each black window to a random gray one.

    Gray targets are drawn uniformly with replacement, once, before training.
    """
    if len(B) and not len(G):
        raise ConfigurationError("black-listed windows need at least one gray-listed window to replace them")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, len(G), size=len(B)) if len(B) else np.zeros(0, dtype=np.int64)
    parts = [p for p in (W, G, B) if len(p)]
    if not parts:
        raise ConfigurationError("no windows to pair")
    inputs = np.concatenate([p.values for p in parts])
    targets = np.concatenate([p.values for p in parts if p is not B] + ([G.values[pick]] if len(B) else []))
    in_labels = np.concatenate([p.labels for p in parts])
    tgt_labels = np.concatenate([p.labels for p in parts if p is not B] + ([G.labels[pick]] if len(B) else []))
    return ReplacementPairs(inputs, targets, in_labels, tgt_labels)


@dataclass
class TrainedRae:
    network: nncore.Network
    norm: NormStats
    partition: InferencePartition
    k: int
    d: int
    topology: RaeTopology
    history: list = field(default_factory=list)
    format_version: int = MODEL_VERSION

    def transform(self, windows):
        """Normalized (n, k, d) windows in, transformed windows out."""
        x = np.asarray(windows, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != (self.k, self.d):
            raise nncore.ShapeError(f"window shape {x.shape[1:]} != model shape {(self.k, self.d)}")
        z = self.network.forward(x.reshape(len(x), -1)).reshape(x.shape)
        return z[0] if single else z

    def transform_raw(self, windows):
        """Raw-unit windows in, raw-unit transformed windows out."""
        return denormalize_windows(self.transform(normalize_windows(windows, self.norm)), self.norm)


def train_rae(pairs: ReplacementPairs, topology: RaeTopology, norm: NormStats, partition: InferencePartition,
              epochs=30, batch_size=128, seed=0, learning_rate=1e-3, on_epoch=None) -> TrainedRae:
    """Minimize the mean replacement error over the pairs.

    The final parameters are rounded to float32 so a saved model behaves
    exactly like the in-memory one.
    """
    if len(pairs) == 0:
        raise ConfigurationError("no training pairs")
    n, k, d = pairs.inputs.shape
    if k * d != topology.input_dim:
        raise TopologyError(f"windows are {k}x{d} but the topology expects {topology.input_dim} inputs")
    net = nncore.Network.build(topology.sizes, topology.activations, seed=seed)
    history = nncore.fit(
        net, pairs.inputs.reshape(n, -1), pairs.targets.reshape(n, -1), "mse",
        epochs=epochs, batch_size=batch_size, seed=seed + 1, learning_rate=learning_rate, on_epoch=on_epoch,
    )
    net.round_to_float32()
    return TrainedRae(net, norm, partition, k, d, topology, history)


def transform_window(model: TrainedRae, window, raw=False):
    return model.transform_raw(window) if raw else model.transform(window)


def identity_model(k, d, norm: NormStats, partition: InferencePartition) -> TrainedRae:
    """A one-layer linear identity map, handy as a no-op baseline."""
    net = nncore.Network([nncore.DenseLayer(np.eye(k * d), np.zeros(k * d), "linear")])
    topo = RaeTopology(k * d, ())
    return TrainedRae(net, norm, partition, k, d, topo)


# --- model container -------------------------------------------------------

def save_network(path, network: nncore.Network, metadata: dict, magic=MODEL_MAGIC):
    """magic(8) | u32 version | u32 meta_len | meta json | f32 params | u32 crc32(payload)"""
    meta = dict(metadata)
    meta["layers"] = [
        {"in": l.in_dim, "out": l.out_dim, "activation": l.activation} for l in network.layers
    ]
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [struct.pack("<I", len(meta_bytes)), meta_bytes]
    for layer in network.layers:
        chunks.append(layer.weights.astype("<f4").tobytes())
        chunks.append(layer.bias.astype("<f4").tobytes())
    payload = b"".join(chunks)
    Path(path).write_bytes(magic + struct.pack("<I", MODEL_VERSION) + payload + struct.pack("<I", zlib.crc32(payload)))


def load_network(path, magic=MODEL_MAGIC):
    blob = Path(path).read_bytes()
    if len(blob) < 20 or blob[:8] != magic:
        raise ModelFormatError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != MODEL_VERSION:
        raise ModelVersionError(f"{path}: format version {version} is not supported (expected {MODEL_VERSION})")
    payload = blob[12:-4]
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise ModelFormatError(f"{path}: checksum mismatch")
    (meta_len,) = struct.unpack_from("<I", payload, 0)
    meta = json.loads(payload[4:4 + meta_len].decode("utf-8"))
    off = 4 + meta_len
    layers = []
    for layer in meta["layers"]:
        n_w = layer["out"] * layer["in"]
        w = np.frombuffer(payload, "<f4", n_w, off).reshape(layer["out"], layer["in"])
        off += 4 * n_w
        b = np.frombuffer(payload, "<f4", layer["out"], off)
        off += 4 * layer["out"]
        layers.append(nncore.DenseLayer(w.astype(np.float64), b.astype(np.float64), layer["activation"]))
    if off != len(payload):
        raise ModelFormatError(f"{path}: trailing bytes after parameters")
    return nncore.Network(layers), meta


def save_model(model: TrainedRae, path):
    meta = {
        "kind": "rae",
        "k": model.k,
        "d": model.d,
        "topology": {
            "input_dim": model.topology.input_dim,
            "hidden": list(model.topology.hidden),
            "hidden_activation": model.topology.hidden_activation,
            "boundary_activation": model.topology.boundary_activation,
        },
        "partition": model.partition.to_dict(),
        "norm": model.norm.to_dict(),
        "history": [repr(float(h)) for h in model.history],
    }
    save_network(path, model.network, meta)


def load_model(path) -> TrainedRae:
    net, meta = load_network(path)
    if meta.get("kind") != "rae":
        raise ModelFormatError(f"{path}: not a replacement autoencoder (kind={meta.get('kind')!r})")
    topo = meta["topology"]
    return TrainedRae(
        net,
        NormStats.from_dict(meta["norm"]),
        InferencePartition.from_dict(meta["partition"]),
        meta["k"],
        meta["d"],
        RaeTopology(topo["input_dim"], tuple(topo["hidden"]), topo["hidden_activation"], topo["boundary_activation"]),
        [float(h) for h in meta.get("history", [])],
    )
