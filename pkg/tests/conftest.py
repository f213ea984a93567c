"""Shared fixtures; the trained surrogate pair is session-scoped because
training takes tens of seconds and several suites exercise it."""

from __future__ import annotations

import pytest

from dabdesign.fixtures import fixture_converter
from dabdesign.physics import DISABLED_RINGING, SamplingGrid
from dabdesign.surrogate import (
    SurrogatePair,
    TrainingConfig,
    generate_dataset,
    sample_operating_points,
    train_pair,
)

SURROGATE_GRID_SAMPLES = 256
SURROGATE_EPOCHS = 320


@pytest.fixture(scope="session")
def converter():
    return fixture_converter()


@pytest.fixture(scope="session")
def surrogate_grid(converter):
    return SamplingGrid.for_converter(converter, SURROGATE_GRID_SAMPLES)


@pytest.fixture(scope="session")
def trained_pair(converter, surrogate_grid) -> SurrogatePair:
    """Physics-informed pair trained on ten mixed-strategy oracle waveforms."""
    points = sample_operating_points(converter, 10, seed=0, grid=surrogate_grid,
                                     strategy_pool=("SPS", "TPS"))
    training = generate_dataset(converter, points, surrogate_grid,
                                DISABLED_RINGING, seed=0)
    cfg = TrainingConfig(epochs=SURROGATE_EPOCHS, seed=0, lambda_phys=1.0)
    return train_pair(training, converter, cfg)
