"""File-based experiment stages.  Each stage reads its inputs from and writes
its artifacts to the configured output directory, so stages can be rerun or
tested one at a time."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import dataio, evalharness, rae, threatgan
from .dataio import InferencePartition, NormStats, WindowSet

log = logging.getLogger(__name__)

DATA_CSV = "data.csv"
OTHER_USER_CSV = "other_user.csv"
TRAIN_WINDOWS = "train.raewin"
TEST_WINDOWS = "test.raewin"
TRANSFORMED_WINDOWS = "test_transformed.raewin"
RAE_MODEL = "rae.model"
CLASSIFIER_MODEL = "classifier.model"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"
CONFUSION_ORIGINAL = "confusion_original.csv"
CONFUSION_TRANSFORMED = "confusion_transformed.csv"
ATTACK_SAME = "attack_same_user.csv"
ATTACK_CROSS = "attack_cross_user.csv"


def out_dir(cfg) -> Path:
    path = Path(cfg["output_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def partition_of(cfg) -> InferencePartition:
    return InferencePartition.from_dict(cfg["partition"])


def synthetic_config(cfg, **overrides) -> dataio.SyntheticConfig:
    part = cfg["partition"]
    fields = dict(cfg["data"].get("synthetic") or {})
    fields.update(overrides)
    fields.update(
        white=part["white"], black=part["black"], gray=part["gray"],
        k=cfg["data"]["k"], d=cfg["windowing"]["d"], w=cfg["windowing"]["w"],
        sample_rate=cfg["data"].get("sample_rate", 30.0),
    )
    return dataio.SyntheticConfig.from_dict(fields)


def gen_data(cfg):
    """Write the synthetic user (and the second user for the cross-user attack)."""
    out = out_dir(cfg)
    paths = [out / DATA_CSV]
    dataio.write_csv(dataio.gen_synthetic(synthetic_config(cfg)), paths[0])
    other = (cfg["attack"].get("other_user") or {}).get("synthetic")
    if other is not None:
        paths.append(out / OTHER_USER_CSV)
        dataio.write_csv(dataio.gen_synthetic(synthetic_config(cfg, **other)), paths[1])
    return paths


def _data_csv(cfg):
    if cfg["data"]["source"] == "csv":
        return Path(cfg["data"]["csv"])
    return out_dir(cfg) / DATA_CSV


def windows_from_csv(cfg, path) -> WindowSet:
    """Load, decimate, interpolate, window and optionally downsample one recording."""
    data = cfg["data"]
    series = dataio.load_csv(path, data["k"], data.get("sample_rate"))
    if data.get("decimate", 1) > 1:
        series = dataio.decimate(series, data["decimate"])
    series = dataio.interpolate_missing(series)
    windows = dataio.segment_windows(series, cfg["windowing"]["d"], cfg["windowing"]["w"])
    if getattr(windows, "too_short", False):
        raise dataio.DataError(f"{path}: recording is shorter than one window")
    down = data.get("downsample")
    if down:
        windows = dataio.downsample_class(windows, down["class"], down["keep_fraction"], down.get("seed", 0))
    # archives hold float32; round now so fitted statistics match what is stored
    windows.values = windows.values.astype(np.float32).astype(np.float64)
    return windows


def prepare(cfg):
    """CSV -> train/test window archives in raw units, with train-fitted statistics."""
    out = out_dir(cfg)
    windows = windows_from_csv(cfg, _data_csv(cfg))
    dataio.partition_windows(windows, partition_of(cfg))  # fail early on unlisted labels
    train, test = dataio.split_train_test(windows, cfg["split"]["train_fraction"], cfg["split"]["seed"])
    stats = dataio.fit_normalizer(train)
    meta = {"norm": stats.to_dict(), "partition": cfg["partition"]}
    dataio.save_windows(train, out / TRAIN_WINDOWS, dict(meta, split="train"))
    dataio.save_windows(test, out / TEST_WINDOWS, dict(meta, split="test"))
    log.info("prepared %d train / %d test windows", len(train), len(test))
    return out / TRAIN_WINDOWS, out / TEST_WINDOWS


def load_archive(path):
    """Return (raw windows, normalized windows, stats)."""
    windows, meta = dataio.load_windows(path)
    stats = NormStats.from_dict(meta["norm"])
    return windows, dataio.apply_normalizer(windows, stats), stats


def train_rae_stage(cfg):
    out = out_dir(cfg)
    _, train, stats = load_archive(out / TRAIN_WINDOWS)
    part = partition_of(cfg)
    W, B, G = dataio.partition_windows(train, part)
    rc = cfg["rae"]
    pairs = rae.build_replacement_pairs(W, B, G, seed=rc["pair_seed"])
    topo = rae.build_rae_topology(train.k, train.d, rc["profile"])
    model = rae.train_rae(pairs, topo, stats, part, epochs=rc["epochs"], batch_size=rc["batch_size"],
                          seed=rc["seed"], learning_rate=rc["learning_rate"])
    rae.save_model(model, out / RAE_MODEL)
    return out / RAE_MODEL


def transform_stage(cfg, source=None, dest=None):
    """Apply the trained autoencoder to an archive; output stays in raw units."""
    out = out_dir(cfg)
    model = rae.load_model(out / RAE_MODEL)
    raw, meta = dataio.load_windows(source or out / TEST_WINDOWS)
    transformed = WindowSet(model.transform_raw(raw.values), raw.labels)
    dest = dest or out / TRANSFORMED_WINDOWS
    dataio.save_windows(transformed, dest, dict(meta, transformed=True))
    return dest


def train_classifier_stage(cfg):
    out = out_dir(cfg)
    _, train, _ = load_archive(out / TRAIN_WINDOWS)
    cc = cfg["classifier"]
    clf = evalharness.train_classifier(train, epochs=cc["epochs"], batch_size=cc["batch_size"], seed=cc["seed"],
                                       learning_rate=cc["learning_rate"])
    evalharness.save_classifier(clf, out / CLASSIFIER_MODEL)
    return out / CLASSIFIER_MODEL


def evaluate_stage(cfg, figures=True):
    out = out_dir(cfg)
    if not (out / CLASSIFIER_MODEL).exists():
        train_classifier_stage(cfg)
    clf = evalharness.load_classifier(out / CLASSIFIER_MODEL)
    model = rae.load_model(out / RAE_MODEL)
    _, test, _ = load_archive(out / TEST_WINDOWS)
    report = evalharness.evaluate_pipeline(clf, model, test, partition_of(cfg))
    paths = {
        "report_csv": out / REPORT_CSV,
        "report_txt": out / REPORT_TXT,
        "confusion_original": out / CONFUSION_ORIGINAL,
        "confusion_transformed": out / CONFUSION_TRANSFORMED,
    }
    paths["report_csv"].write_text(report.to_csv(), encoding="utf-8")
    paths["report_txt"].write_text(report.to_text() + "\n", encoding="utf-8")
    paths["confusion_original"].write_text(evalharness.confusion_csv(report.original_confusion), encoding="utf-8")
    paths["confusion_transformed"].write_text(evalharness.confusion_csv(report.transformed_confusion), encoding="utf-8")
    if figures:
        from . import plots

        paths.update(plots.evaluation_figures(report, out))
    return report, paths


def _gray_raw(windows: WindowSet, part: InferencePartition):
    return dataio.partition_windows(windows, part)[2]


def attack_stage(cfg, figures=True):
    """Same-user and cross-user discriminator attacks on the replaced sections."""
    out = out_dir(cfg)
    part = partition_of(cfg)
    ac = cfg["attack"]
    gan_cfg = threatgan.GanConfig.from_dict(ac.get("gan", {}))
    model = rae.load_model(out / RAE_MODEL)
    train_raw, _, _ = load_archive(out / TRAIN_WINDOWS)
    test_raw, _, _ = load_archive(out / TEST_WINDOWS)
    _, black_test, gray_test = dataio.partition_windows(test_raw, part)
    if not len(black_test):
        raise ValueError("the test split has no black-listed windows to attack")
    real = gray_test.values
    fake = model.transform_raw(black_test.values)

    same_gan = threatgan.train_gan(_gray_raw(train_raw, part), gan_cfg)
    reports = {"same_user": threatgan.attack_report(same_gan, real, fake, "same_user", ac["n_generated"], ac["seed"])}
    paths = {"same_user": out / ATTACK_SAME}
    paths["same_user"].write_text(reports["same_user"].to_csv(), encoding="utf-8")

    other = ac.get("other_user") or {}
    other_csv = other.get("csv") or (out / OTHER_USER_CSV if other.get("synthetic") is not None else None)
    if other_csv is not None:
        other_windows = windows_from_csv(cfg, other_csv)
        other_train, _ = dataio.split_train_test(other_windows, cfg["split"]["train_fraction"], cfg["split"]["seed"])
        cross_gan = threatgan.train_gan(_gray_raw(other_train, part), gan_cfg)
        reports["cross_user"] = threatgan.attack_report(cross_gan, real, fake, "cross_user")
        paths["cross_user"] = out / ATTACK_CROSS
        paths["cross_user"].write_text(reports["cross_user"].to_csv(), encoding="utf-8")
    if figures:
        from . import plots

        paths.update(plots.attack_figures(reports, out))
    return reports, paths


def run_all(cfg, attack=False, figures=True):
    """gen-data (synthetic only) -> prepare -> train-rae -> train-classifier -> evaluate [-> attack]."""
    if cfg["data"]["source"] == "synthetic":
        gen_data(cfg)
    prepare(cfg)
    train_rae_stage(cfg)
    train_classifier_stage(cfg)
    report, paths = evaluate_stage(cfg, figures)
    if attack:
        reports, more = attack_stage(cfg, figures)
        paths.update(more)
        return report, reports, paths
    return report, None, paths
