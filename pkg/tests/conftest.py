"""Shared fixtures: small synthetic tables sized for fast unit tests."""
import numpy as np
import pytest

from yieldbench.dataio import default_synth_spec, generate_synthetic, temporal_split


@pytest.fixture(scope="session")
def small_spec():
    # weeks=16 keeps d at 7 + 96; too short for the default CNN arch,
    # which is exercised separately with weeks >= 20
    return default_synth_spec(n_regions=10, years=range(2014, 2020), weeks=16, seed=3)


@pytest.fixture(scope="session")
def small_table(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture(scope="session")
def small_split(small_table):
    return temporal_split(small_table, test_year=2019)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
