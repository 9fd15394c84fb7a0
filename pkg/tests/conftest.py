from __future__ import annotations

import pytest

from ftc.modelio.client import CachedModel
from ftc.modelio.oracle import OracleClassifier, OracleWorld
from ftc.rewrite import EchoGenerator
from ftc.worldgen import SynthesisConfig, annotate, synthesize


@pytest.fixture(scope="session")
def small_world():
    world, instances = synthesize(SynthesisConfig(n_per_label=40, seed=7))
    return world, annotate(world, instances)


@pytest.fixture(scope="session")
def world(small_world) -> OracleWorld:
    return small_world[0]


@pytest.fixture(scope="session")
def instances(small_world):
    return small_world[1]


@pytest.fixture()
def oracle_model(world) -> CachedModel:
    # In-process stand-in for the HTTP pair; no cache so calls stay visible.
    return CachedModel(None, OracleClassifier(world), EchoGenerator())
