import json
from pathlib import Path

import pytest

from distobs import load_model

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def pendubot_path():
    return FIXTURES / "pendubot.json"


@pytest.fixture(scope="session")
def pendubot_gains_path():
    return FIXTURES / "pendubot_gains.json"


@pytest.fixture(scope="session")
def pendubot(pendubot_path):
    """(model, sensors, graph, config) for the six-compartment fixture."""
    return load_model(pendubot_path)


@pytest.fixture(scope="session")
def pendubot_doc(pendubot_path):
    with open(pendubot_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture()
def broken_pendubot_path(pendubot_doc, tmp_path):
    """Fixture variant with the edge from agent 4 to agent 1 removed."""
    doc = json.loads(json.dumps(pendubot_doc))
    doc["adjacency"][0][3] = 0.0
    path = tmp_path / "broken.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path
