"""Shared fixtures: a small on-disk benchmark for fast pipeline tests."""
from __future__ import annotations

import os

import numpy as np
import pytest

from anyshot import synth
from anyshot.config import load_config

TINY_SEED = 9
TINY_OVERRIDES = [
    "train.m = 12",
    "train.epochs = 2",
    "finetune.epochs = 2",
    "finetune.batch = 32",
    "finetune.k = 2",
    "itq.bits = 8",
    "itq.iterations = 10",
    "eval.settings = zero_shot",
    "prune.ratios = 0.0, 0.5",
]


@pytest.fixture(scope="session")
def tiny_benchmark(tmp_path_factory):
    """Small benchmark files plus a config tuned for ~second-long runs."""
    root = tmp_path_factory.mktemp("tinybench")
    paths = synth.write_benchmark(
        str(root), seed=TINY_SEED, d=24, per_class=8, text_dim=10
    )
    with open(paths["config"], "a", encoding="utf-8") as fh:
        fh.write("\n".join(TINY_OVERRIDES) + "\n")
    return paths


@pytest.fixture(scope="session")
def tiny_config(tiny_benchmark):
    return load_config(tiny_benchmark["config"])


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def file_bytes():
    return read_bytes


def pytest_configure(config):
    os.environ.setdefault("ANYSHOT_THREADS", "2")
