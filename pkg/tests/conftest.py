"""Pytest configuration and fixtures."""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path for imports
src_path = Path(__file__).parent.parent / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from secure_cra_isac import conic_kernel, results  # noqa: E402
from secure_cra_isac.harness import (  # noqa: E402
    DictionarySpec,
    generate_realization,
    load_builtin,
    problem_config,
    realization_rngs,
    scheme_dictionary,
)


@pytest.fixture(autouse=True)
def reset_singletons():
    """Module-level backend and result tracker start fresh in every test."""
    conic_kernel.configure_backend(None)
    results._result_tracker = None
    yield
    conic_kernel.configure_backend(None)
    results._result_tracker = None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return load_builtin("tiny_scenario")


@pytest.fixture
def tiny_channels(tiny_config):
    return generate_realization(tiny_config, realization_rngs(11)[0])


@pytest.fixture
def tiny_dictionary(tiny_config):
    return scheme_dictionary(tiny_config)


@pytest.fixture
def tiny_problem(tiny_config):
    return problem_config(tiny_config)


@pytest.fixture
def small_config(tiny_config):
    """Slightly larger than tiny: two Bobs, four antennas, four modes."""
    return replace(
        tiny_config,
        N=4,
        M=16,
        K=2,
        C=2,
        L=3,
        eps_bob_db=(5.0, 5.0),
        eps_eve_db=(-20.0, -20.0),
        dictionary=DictionarySpec(p_pat=2, p_pol=2),
    )
