#!/usr/bin/env python3
"""
Test configuration and fixtures for the triangle local limit toolkit
"""

import os
import uuid

import numpy as np
import pytest
from click.testing import CliRunner

from src.graph_core import GraphParams, complete_graph, cycle_graph, empty_graph, sample_gnp
from src.ledger import RunLedger

# Quieter logs for test runs
os.environ.setdefault("GNP_LLT_LOG_LEVEL", "WARNING")

# Exact values at p = 0.5 from full enumeration
PINNED_DELTA = {6: 0.1814993512622792, 7: 0.1780739214121706}
PINNED_DELTA_ARGMAX = {6: 0, 7: 2}
PINNED_MOD2_DEV_N7 = 0.01239013671875
EXACT_TALLY = {
    3: [7, 1],
    4: [41, 16, 6, 0, 1],
    5: [388, 290, 195, 70, 40, 30, 0, 10, 0, 0, 1],
}


@pytest.fixture(scope="function")
def test_ledger_path(tmp_path):
    """Return a path to a fresh ledger file"""
    # Unique per test so parallel runs don't collide
    return str(tmp_path / f"test_runs_{uuid.uuid4()}.duckdb")


@pytest.fixture(scope="function")
def ledger(test_ledger_path):
    """Create a RunLedger on a temporary file"""
    run_ledger = RunLedger(db_path=test_ledger_path)
    yield run_ledger
    run_ledger.close()


@pytest.fixture(scope="function")
def runner():
    """Return a click CliRunner"""
    return CliRunner()


@pytest.fixture(scope="function")
def k4():
    """Complete graph on 4 vertices"""
    return complete_graph(4)


@pytest.fixture(scope="function")
def c5():
    """5-cycle"""
    return cycle_graph(5)


@pytest.fixture(scope="function")
def empty6():
    """Empty graph on 6 vertices"""
    return empty_graph(6)


@pytest.fixture(scope="function")
def random64():
    """One G(64, 0.5) sample"""
    return sample_gnp(GraphParams(n=64, p=0.5, seed=11, sample_index=3))


@pytest.fixture(scope="function")
def rng():
    """Seeded numpy generator for building fixtures"""
    return np.random.default_rng(20240601)
