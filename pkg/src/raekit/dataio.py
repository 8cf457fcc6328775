"""Loading, cleaning, windowing and partitioning multichannel time series."""

from __future__ import annotations

import json
import math
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset or archive file."""


class DataError(ValueError):
    """Data that cannot be processed (e.g. a channel with no values)."""


class PartitionError(ValueError):
    pass


@dataclass
class RawSeries:
    """``values`` is (T, k) with NaN for missing slots; ``labels`` is (T,)."""

    values: np.ndarray
    labels: np.ndarray
    sample_rate: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or len(self.values) != len(self.labels):
            raise DataFormatError("values must be (T, k) and match the label count")
        if (self.labels < 0).any():
            raise DataFormatError("labels must be non-negative")

    @property
    def k(self):
        return self.values.shape[1]

    def __len__(self):
        return len(self.labels)


@dataclass
class WindowSet:
    """Stack of windows, ``values`` shaped (n, k, d), with one label each."""

    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 3 or len(self.values) != len(self.labels):
            raise DataFormatError(f"bad window stack shape {self.values.shape}")

    def __len__(self):
        return len(self.labels)

    @property
    def k(self):
        return self.values.shape[1]

    @property
    def d(self):
        return self.values.shape[2]

    def flat(self):
        return self.values.reshape(len(self), -1)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet(self.values[idx], self.labels[idx])

    @classmethod
    def empty(cls, k, d):
        return cls(np.zeros((0, k, d)), np.zeros(0, dtype=np.int64))

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        return cls(np.concatenate([p.values for p in parts]), np.concatenate([p.labels for p in parts]))


@dataclass
class InferencePartition:
    white: frozenset = field(default_factory=frozenset)
    black: frozenset = field(default_factory=frozenset)
    gray: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.white = frozenset(int(c) for c in self.white)
        self.black = frozenset(int(c) for c in self.black)
        self.gray = frozenset(int(c) for c in self.gray)
        for a, b in ((self.white, self.black), (self.white, self.gray), (self.black, self.gray)):
            overlap = a & b
            if overlap:
                raise PartitionError(f"class ids {sorted(overlap)} appear in more than one list")

    @property
    def classes(self):
        return sorted(self.white | self.black | self.gray)

    def category(self, label):
        """Return 'W', 'B' or 'G' for a class id."""
        label = int(label)
        if label in self.white:
            return "W"
        if label in self.black:
            return "B"
        if label in self.gray:
            return "G"
        raise PartitionError(f"class id {label} is not in any inference list")

    def to_dict(self):
        return {"white": sorted(self.white), "black": sorted(self.black), "gray": sorted(self.gray)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("white", ()), d.get("black", ()), d.get("gray", ()))


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: tuple = ()

    def to_dict(self):
        # repr() round-trips float64 exactly
        return {
            "mean": [repr(float(x)) for x in self.mean],
            "std": [repr(float(x)) for x in self.std],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array([float(x) for x in d["mean"]]), np.array([float(x) for x in d["std"]]))


def _parse_field(text, lineno):
    text = text.strip()
    if text == "" or text.lower() == "nan":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"line {lineno}: cannot parse value {text!r}") from None


def load_csv(path, k, sample_rate=None) -> RawSeries:
    """Read ``label,ch1,...,chk`` records; blank or ``NaN`` fields are missing."""
    values, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) != k + 1:
                raise DataFormatError(
                    f"line {lineno}: expected {k + 1} fields (label + {k} channels), got {len(fields)}"
                )
            try:
                label = int(fields[0])
            except ValueError:
                raise DataFormatError(f"line {lineno}: bad label {fields[0]!r}") from None
            labels.append(label)
            values.append([_parse_field(f, lineno) for f in fields[1:]])
    return RawSeries(np.array(values, dtype=np.float64).reshape(-1, k), np.array(labels), sample_rate)


def write_csv(series: RawSeries, path, fmt="%.6f"):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, row in zip(series.labels, series.values):
            cells = ["" if math.isnan(v) else fmt % v for v in row]
            fh.write(f"{int(label)}," + ",".join(cells) + "\n")


def decimate(series: RawSeries, factor) -> RawSeries:
    """Keep every ``factor``-th record (e.g. 3 for 98 Hz -> ~30 Hz)."""
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    rate = series.sample_rate / factor if series.sample_rate else None
    return RawSeries(series.values[::factor], series.labels[::factor], rate)


def interpolate_missing(series: RawSeries) -> RawSeries:
    """Fill gaps per channel: linear inside, nearest value held at the edges."""
    values = series.values.copy()
    idx = np.arange(len(values))
    for ch in range(series.k):
        col = values[:, ch]
        present = ~np.isnan(col)
        if not present.any():
            raise DataError(f"channel {ch} has no values")
        if present.all():
            continue
        # np.interp holds the end values outside the known range
        col[~present] = np.interp(idx[~present], idx[present], col[present])
    return RawSeries(values, series.labels.copy(), series.sample_rate)


def fit_normalizer(data) -> NormStats:
    """Per-channel mean and population std.

    ``data`` may be a RawSeries, a (T, k) array, or a WindowSet (all samples
    of all windows are pooled).  Zero-variance channels get std 1 and are
    listed in ``zero_variance``.
    """
    if isinstance(data, RawSeries):
        arr = data.values
    elif isinstance(data, WindowSet):
        arr = data.values.transpose(0, 2, 1).reshape(-1, data.k)
    else:
        arr = np.asarray(data, dtype=np.float64)
    if np.isnan(arr).any():
        raise DataError("interpolate missing values before fitting the normalizer")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    flat = tuple(int(i) for i in np.flatnonzero(std == 0))
    if flat:
        warnings.warn(f"zero-variance channels {list(flat)}; using std=1", stacklevel=2)
        std = np.where(std == 0, 1.0, std)
    return NormStats(mean, std, flat)


def apply_normalizer(data, stats: NormStats):
    if isinstance(data, RawSeries):
        return RawSeries((data.values - stats.mean) / stats.std, data.labels.copy(), data.sample_rate)
    if isinstance(data, WindowSet):
        return WindowSet(normalize_windows(data.values, stats), data.labels.copy())
    return (np.asarray(data, dtype=np.float64) - stats.mean) / stats.std


def normalize_windows(values, stats: NormStats):
    """Normalize window stacks shaped (..., k, d)."""
    return (np.asarray(values, dtype=np.float64) - stats.mean[:, None]) / stats.std[:, None]


def denormalize_windows(values, stats: NormStats):
    return np.asarray(values, dtype=np.float64) * stats.std[:, None] + stats.mean[:, None]


def majority_label(labels):
    """Most frequent label; ties go to the smallest class id."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels)
    return int(np.argmax(counts))


def window_starts(T, d, w):
    if d < 1 or w < 1:
        raise ValueError("window size and step must be positive")
    if T < d:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, T - d + 1, w, dtype=np.int64)


def segment_windows(series: RawSeries, d=30, w=3) -> WindowSet:
    """Slide a length-``d`` window with step ``w``; label by majority vote.

    A series shorter than ``d`` yields an empty set with ``too_short=True``.
    """
    if np.isnan(series.values).any():
        raise DataError("series still has missing values")
    starts = window_starts(len(series), d, w)
    if len(starts) == 0:
        out = WindowSet.empty(series.k, d)
        out.too_short = True
        return out
    idx = starts[:, None] + np.arange(d)[None, :]
    values = series.values[idx].transpose(0, 2, 1)  # (n, k, d)
    labels = np.array([majority_label(series.labels[i]) for i in idx])
    out = WindowSet(values, labels)
    out.too_short = False
    return out


def partition_windows(windows: WindowSet, partition: InferencePartition):
    """Split into (W, B, G) window sets."""
    unknown = sorted(set(windows.labels.tolist()) - set(partition.classes))
    if unknown:
        raise PartitionError(f"label {unknown[0]} is not in any inference list (unlisted: {unknown})")
    parts = []
    for ids in (partition.white, partition.black, partition.gray):
        mask = np.isin(windows.labels, sorted(ids))
        parts.append(windows.subset(np.flatnonzero(mask)))
    return tuple(parts)


def downsample_class(windows: WindowSet, class_id, keep_fraction, seed=0) -> WindowSet:
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    members = np.flatnonzero(windows.labels == class_id)
    keep_n = int(round(keep_fraction * len(members)))
    rng = np.random.default_rng(seed)
    kept = rng.choice(members, size=keep_n, replace=False) if keep_n < len(members) else members
    mask = windows.labels != class_id
    mask[kept] = True
    return windows.subset(np.flatnonzero(mask))


def split_train_test(windows: WindowSet, train_fraction=0.8, seed=0):
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(windows)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return windows.subset(np.sort(order[:n_train])), windows.subset(np.sort(order[n_train:]))


# --- synthetic benchmark ---------------------------------------------------

@dataclass
class SyntheticConfig:
    white: tuple = (1, 2, 3)
    black: tuple = (4, 5)
    gray: tuple = (0,)
    k: int = 6
    windows_per_class: int = 300
    d: int = 30
    w: int = 3
    bouts_per_class: int = 6
    # gray (idle) classes get this many times more records, like a Null class
    gray_weight: int = 20
    sample_rate: float = 30.0
    noise: float = 0.15
    seed: int = 0
    # shifts every class's offsets; a different value acts as a different user
    user_shift: float = 0.0

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("white", "black", "gray"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


def _class_profile(class_id, k, rng, is_gray):
    """Draw the waveform parameters of one class."""
    if is_gray:
        # idle / null activity: small slow drift around a resting offset
        return {
            "offset": rng.uniform(-0.5, 0.5, k),
            "freq": np.full(k, rng.uniform(0.1, 0.3)),
            "amp": rng.uniform(0.1, 0.2, k),
            "phase": rng.uniform(0, 2 * np.pi, k),
            "harm": np.zeros(k),
        }
    return {
        "offset": rng.uniform(-1.5, 1.5, k),
        "freq": np.full(k, 0.6 + 0.45 * class_id + rng.uniform(-0.1, 0.1)),
        "amp": rng.uniform(0.6, 1.4, k),
        "phase": rng.uniform(0, 2 * np.pi, k),
        "harm": rng.uniform(0.0, 0.4, k),
    }


def gen_synthetic(config: SyntheticConfig) -> RawSeries:
    """Labelled series whose classes are distinct sinusoid mixtures plus noise.

    Each class contributes ``(windows_per_class - 1) * w + d`` records (times
    ``gray_weight`` for gray classes), cut into ``bouts_per_class`` bouts each
    that are interleaved in a seeded order.
    """
    cfg = config
    for name in ("white", "black", "gray"):
        if len(getattr(cfg, name)) < 1:
            raise ValueError(f"need at least one {name}-listed class")
    rng = np.random.default_rng(cfg.seed)
    # class shapes come from a fixed stream so that two users share activities
    shape_rng = np.random.default_rng(12345)
    gray = set(cfg.gray)
    class_ids = sorted(set(cfg.white) | set(cfg.black) | gray)
    profiles = {c: _class_profile(c, cfg.k, shape_rng, c in gray) for c in class_ids}
    user_rng = np.random.default_rng(1000 + int(round(cfg.user_shift * 1000)))
    if cfg.user_shift:
        for c in class_ids:
            profiles[c]["offset"] = profiles[c]["offset"] + cfg.user_shift * user_rng.choice([-1.0, 1.0], cfg.k)

    bouts = []
    for c in class_ids:
        n_win = cfg.windows_per_class * (cfg.gray_weight if c in gray else 1)
        per_class = (n_win - 1) * cfg.w + cfg.d
        cuts = np.linspace(0, per_class, cfg.bouts_per_class + 1).astype(int)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b > a:
                bouts.append((c, b - a))
    order = rng.permutation(len(bouts))

    values, labels = [], []
    for i in order:
        c, n = bouts[i]
        p = profiles[c]
        t = np.arange(n)[:, None] / cfg.sample_rate
        phase = p["phase"] + rng.uniform(0, 2 * np.pi)
        omega = 2 * np.pi * p["freq"]
        amp = p["amp"] * rng.uniform(0.9, 1.1)
        sig = p["offset"] + amp * np.sin(omega * t + phase) + p["harm"] * np.sin(2 * omega * t + 2 * phase)
        sig = sig + rng.normal(0.0, cfg.noise, size=sig.shape)
        values.append(sig)
        labels.append(np.full(n, c))
    return RawSeries(np.concatenate(values), np.concatenate(labels), cfg.sample_rate)


# --- prepared-window archive -------------------------------------------------

WINDOWS_MAGIC = b"RAEWINDS"
WINDOWS_VERSION = 1


def save_windows(windows: WindowSet, path, metadata=None):
    """Write a window stack as float32 with a JSON metadata block and CRC32.

    Layout: magic(8) | u32 version | u32 meta_len | meta | f32[n*k*d] | i32[n] | u32 crc
    """
    meta = dict(metadata or {})
    meta.update({"n": len(windows), "k": windows.k, "d": windows.d})
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = b"".join([
        struct.pack("<I", len(meta_bytes)),
        meta_bytes,
        windows.values.astype("<f4").tobytes(),
        windows.labels.astype("<i4").tobytes(),
    ])
    head = WINDOWS_MAGIC + struct.pack("<I", WINDOWS_VERSION)
    Path(path).write_bytes(head + payload + struct.pack("<I", zlib.crc32(payload)))


def load_windows(path):
    """Return (WindowSet, metadata dict)."""
    blob = Path(path).read_bytes()
    if len(blob) < 20 or blob[:8] != WINDOWS_MAGIC:
        raise DataFormatError(f"{path}: not a window archive")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != WINDOWS_VERSION:
        raise DataFormatError(f"{path}: unsupported window archive version {version}")
    payload, (crc,) = blob[12:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise DataFormatError(f"{path}: checksum mismatch")
    (meta_len,) = struct.unpack_from("<I", payload, 0)
    meta = json.loads(payload[4:4 + meta_len].decode("utf-8"))
    n, k, d = meta["n"], meta["k"], meta["d"]
    off = 4 + meta_len
    vals = np.frombuffer(payload, dtype="<f4", count=n * k * d, offset=off).reshape(n, k, d)
    off += 4 * n * k * d
    labels = np.frombuffer(payload, dtype="<i4", count=n, offset=off)
    return WindowSet(vals.astype(np.float64), labels.astype(np.int64)), meta
