import os
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
TOPOLOGY_DIR = REPO_ROOT / "scenarios" / "topologies"
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture(scope="session")
def abilene_text() -> str:
    return (TOPOLOGY_DIR / "Abilene.gml").read_text()


@pytest.fixture(scope="session")
def linear_text() -> str:
    return (TOPOLOGY_DIR / "LinearSample.gml").read_text()


def dataset_dir() -> Path | None:
    """Full Topology Zoo snapshot, when the operator has supplied one."""
    candidates = []
    env = os.environ.get("MIRAGESIM_DATASET")
    if env:
        candidates.append(Path(env))
    candidates.append(REPO_ROOT / "data" / "topology-zoo")
    for c in candidates:
        if c.is_dir() and any(c.glob("*.gml")):
            return c
    return None
