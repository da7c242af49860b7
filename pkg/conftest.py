"""Shared fixtures: small grids and run configurations"""

import copy

import numpy as np
import pytest

from kwk.models import Grid, RunConfig

BASE_CONFIG = {
    "grid": {"dims": [12, 12], "spacing": [0.25, 0.25]},
    "media": {"rho0": 1.0, "c0": 1.0, "BoverA": 5.0},
    "absorption": {"kind": "none", "y": 1.5},
    "solver": {"dt": 0.05, "t_end": 0.5},
    "initial": {"sigma0": {"kind": "gaussian", "amplitude": 1e-3, "width": 0.5}},
    "probes": {"cells": [[3, 3], [6, 8]]},
}


def _merge(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture
def config_dict():
    """Build a config dict from the small 2-D base, nested keys merged"""
    def build(**overrides) -> dict:
        return _merge(BASE_CONFIG, overrides)
    return build


@pytest.fixture
def make_config(config_dict):
    def build(**overrides) -> RunConfig:
        return RunConfig.model_validate(config_dict(**overrides))
    return build


@pytest.fixture
def grid2d() -> Grid:
    return Grid(dims=(8, 6), spacing=(0.5, 0.25))


@pytest.fixture
def grid1d() -> Grid:
    return Grid(dims=(16,), spacing=(1.0 / 16,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _thread_cap(monkeypatch):
    monkeypatch.setenv("KWK_THREADS", "2")
