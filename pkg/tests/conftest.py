"""Shared fixtures: the 20-entity catalog stack and a loopback-only network guard."""

from __future__ import annotations

import socket
from pathlib import Path

import pytest

from qintent.catalog import load_catalog_file, load_taxonomy
from qintent.disambiguation import load_whitelist
from qintent.pipeline import PipelineConfig, PipelineDeps
from qintent.reasoner import (
    FixtureSearchTool,
    PolicyContext,
    ScriptedEngine,
    load_policy,
    load_scripted_rules,
)
from qintent.retrieval import HashEncoder, build_index

FIXTURES = Path(__file__).parent / "fixtures"

_LOOPBACK = ("127.0.0.1", "localhost", "::1")
_real_connect = socket.socket.connect


def _guarded_connect(self, address):
    host = address[0] if isinstance(address, tuple) else address
    if isinstance(host, (bytes, str)) and any(str(host) == lb for lb in _LOOPBACK):
        return _real_connect(self, address)
    raise RuntimeError(f"network access blocked by test guard: {address!r}")


@pytest.fixture(scope="session", autouse=True)
def no_network_guard():
    """Any socket connection leaving loopback fails the suite."""
    socket.socket.connect = _guarded_connect
    yield
    socket.socket.connect = _real_connect


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy(FIXTURES / "taxonomy.json")


@pytest.fixture(scope="session")
def store(taxonomy):
    return load_catalog_file(FIXTURES / "catalog.jsonl", taxonomy)


@pytest.fixture(scope="session")
def encoder():
    return HashEncoder(dimension=64, seed=7)


@pytest.fixture(scope="session")
def index(store, encoder):
    return build_index(store, encoder)


@pytest.fixture(scope="session")
def search_tool():
    return FixtureSearchTool.from_file(FIXTURES / "search_fixtures.json")


@pytest.fixture(scope="session")
def scripted_rules():
    return load_scripted_rules(FIXTURES / "scripted_rules.json")


@pytest.fixture(scope="session")
def engine(scripted_rules):
    return ScriptedEngine(scripted_rules)


@pytest.fixture(scope="session")
def empty_whitelist(taxonomy):
    return load_whitelist(FIXTURES / "whitelist_empty.json", taxonomy)


@pytest.fixture(scope="session")
def policy(taxonomy):
    return load_policy(FIXTURES / "policy.json", taxonomy)


@pytest.fixture()
def deps(store, index, encoder, engine, search_tool, empty_whitelist):
    return PipelineDeps(
        store=store,
        index=index,
        encoder=encoder,
        engine=engine,
        tool=search_tool,
        whitelist=empty_whitelist,
        policy=PolicyContext.empty(),
        config=PipelineConfig(),
    )
