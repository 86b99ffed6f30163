"""Shared fixtures: desk-scale datasets and trained surrogate models.

Training is deterministic (fixed seeds) but takes several minutes; set
RTHDG_TEST_CACHE=1 to reuse artifacts from tests/_cache across runs while
iterating locally. The cache is off by default so a fresh checkout always
exercises the full pipeline.
"""

import os
import time
from pathlib import Path

import pytest

from rthdg.datagen import (DiscretizationConfig, SamplerConfig,
                           generate_dataset, load_dataset, save_dataset)
from rthdg.surrogate import init_mlp, load_model, save_model, train

DESK_P = 3
DESK_NA = 8
DESK_DISC = DiscretizationConfig(p=DESK_P, n_a=DESK_NA, p_a=0, omega=1.0,
                                 g_asym=0.8)
DESK_SAMPLER = SamplerConfig(p_x=DESK_P, p_y=DESK_P, c_sm=2.0, a_sigma=10.0)

# tuned desk-scale protocols (see README): the short spec default plateaus
# near 3e-3 test MAE; these reach the accuracy the acceptance gates need
CAPACITY_SCHEDULE = ((1500, 1e-3), (1000, 1e-4), (500, 1e-5))
CAPACITY_BATCH = 16
ACCURACY_SCHEDULE = ((1200, 1e-3), (800, 1e-4), (500, 1e-5))
ACCURACY_BATCH = 8
ACCURACY_N_SAMP = 500

_CACHE_DIR = Path(__file__).parent / "_cache"


def _cache_enabled():
    return os.environ.get("RTHDG_TEST_CACHE", "0") == "1"


@pytest.fixture(scope="session")
def fixture_times():
    """Wall-clock cost of the trained fixtures, for budget accounting."""
    return {}


@pytest.fixture(scope="session")
def desk_dataset(fixture_times):
    """200-sample labeled dataset at the desk discretization (seed 42)."""
    if _cache_enabled():
        path = _CACHE_DIR / "desk_dataset.npz"
        if path.exists():
            return load_dataset(path, expect=DESK_DISC)
    t0 = time.perf_counter()
    ds = generate_dataset(DESK_SAMPLER, DESK_DISC, 200, seed=42)
    fixture_times["desk_dataset"] = time.perf_counter() - t0
    if _cache_enabled():
        _CACHE_DIR.mkdir(exist_ok=True)
        save_dataset(ds, _CACHE_DIR / "desk_dataset.npz")
    return ds


def _train_model(n_layers, dataset, schedule, batch_size, tag, fixture_times):
    if _cache_enabled():
        path = _CACHE_DIR / f"{tag}.bin"
        if path.exists():
            return load_model(path)
    t0 = time.perf_counter()
    model = init_mlp(DESK_P, DESK_P, DESK_NA, 0, n_layers=n_layers, seed=0)
    state = train(model, dataset, schedule=schedule, batch_size=batch_size, seed=0)
    model.meta["test_mae"] = state.history[-1]["test_mae"]
    model.meta["train_mae_history"] = [h["train_mae"] for h in state.history]
    model.meta["schedule"] = [list(s) for s in schedule]
    model.meta["dataset_fingerprint"] = dataset.meta.get("fingerprint")
    fixture_times[tag] = time.perf_counter() - t0
    if _cache_enabled():
        _CACHE_DIR.mkdir(exist_ok=True)
        save_model(model, _CACHE_DIR / f"{tag}.bin")
    return model


@pytest.fixture(scope="session")
def capacity_models(desk_dataset, fixture_times):
    """1-, 2-, and 4-layer networks trained on the 200-sample desk dataset."""
    return {nl: _train_model(nl, desk_dataset, CAPACITY_SCHEDULE,
                             CAPACITY_BATCH, f"capacity_{nl}layer", fixture_times)
            for nl in (1, 2, 4)}


@pytest.fixture(scope="session")
def accuracy_model(fixture_times):
    """4-layer network trained on a 500-sample desk dataset (solution-accuracy grade)."""
    if _cache_enabled() and (_CACHE_DIR / "accuracy.bin").exists():
        return load_model(_CACHE_DIR / "accuracy.bin")
    t0 = time.perf_counter()
    ds = generate_dataset(DESK_SAMPLER, DESK_DISC, ACCURACY_N_SAMP, seed=42)
    fixture_times["accuracy_dataset"] = time.perf_counter() - t0
    return _train_model(4, ds, ACCURACY_SCHEDULE, ACCURACY_BATCH,
                        "accuracy", fixture_times)
