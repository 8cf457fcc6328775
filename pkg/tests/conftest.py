import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from types import SimpleNamespace

import numpy as np
import pytest

from raekit import dataio, evalharness, pipeline, rae
from raekit.config import load_config


def build_benchmark(cfg):
    """Default synthetic benchmark trained in memory (no files)."""
    raw = dataio.gen_synthetic(pipeline.synthetic_config(cfg))
    windows = dataio.segment_windows(raw, cfg["windowing"]["d"], cfg["windowing"]["w"])
    windows.values = windows.values.astype(np.float32).astype(np.float64)
    train_raw, test_raw = dataio.split_train_test(windows, cfg["split"]["train_fraction"], cfg["split"]["seed"])
    stats = dataio.fit_normalizer(train_raw)
    train = dataio.apply_normalizer(train_raw, stats)
    test = dataio.apply_normalizer(test_raw, stats)
    part = pipeline.partition_of(cfg)
    W, B, G = dataio.partition_windows(train, part)
    rc = cfg["rae"]
    model = rae.train_rae(
        rae.build_replacement_pairs(W, B, G, seed=rc["pair_seed"]),
        rae.build_rae_topology(train.k, train.d, rc["profile"]),
        stats, part, epochs=rc["epochs"], batch_size=rc["batch_size"], seed=rc["seed"],
    )
    cc = cfg["classifier"]
    clf = evalharness.train_classifier(train, epochs=cc["epochs"], batch_size=cc["batch_size"], seed=cc["seed"])
    return SimpleNamespace(cfg=cfg, part=part, stats=stats, train=train, test=test,
                           train_raw=train_raw, test_raw=test_raw, model=model, clf=clf)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture(scope="session")
def benchmark(default_cfg):
    return build_benchmark(default_cfg)


def pytest_terminal_summary(terminalreporter, config):
    from oracles import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
