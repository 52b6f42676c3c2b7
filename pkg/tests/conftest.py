import json
import random
from pathlib import Path

import pytest

from asyncdial.backends import MockBackend
from asyncdial.clock import VirtualKernel
from asyncdial.orchestrator import DialogueEngine
from asyncdial.rtdb import SpotCatalog, SpotRecord, ingest_catalog
from asyncdial.sim import default_catalog, script_from_dict

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def catalog():
    """The packaged 120-spot demo catalog."""
    return default_catalog()


@pytest.fixture(scope="session")
def five_catalog():
    """Tiny catalog with hand-countable frequencies."""
    return ingest_catalog(str(FIXTURES / "spots_five.jsonl"))


def load_persona(name: str) -> dict:
    from importlib import resources

    source = resources.files("asyncdial").joinpath("data", "persona_%s.json" % name)
    return json.loads(source.read_text(encoding="utf-8"))


@pytest.fixture
def happy_script():
    return script_from_dict(load_persona("happy"))


@pytest.fixture
def stale_script():
    return script_from_dict(load_persona("stale"))


def make_engine(catalog, **kwargs):
    """Engine on a fresh virtual kernel; returns (kernel, engine)."""
    kernel = VirtualKernel()
    backend = kwargs.pop("backend", None) or MockBackend()
    engine = DialogueEngine(kernel, backend, catalog, **kwargs)
    return kernel, engine


def random_catalog(rng: random.Random, max_spots: int = 200) -> SpotCatalog:
    """Small randomized catalog for oracle sweeps."""
    categories = {
        "Seeing": ["temple", "garden", "castle", "museum", "bridge"],
        "Eating": ["ramen", "sushi", "bakery", "tempura"],
        "Playing": ["hiking", "boating", "cycling"],
    }
    n = rng.randint(1, max_spots)
    spots = []
    for i in range(n):
        metadata = {}
        for cat, pool in categories.items():
            take = rng.randint(0, min(3, len(pool)))
            if take:
                metadata[cat] = frozenset(rng.sample(pool, take))
        if not metadata:
            metadata = {"Seeing": frozenset(["temple"])}
        spots.append(
            SpotRecord(
                spot_id="r%03d" % i,
                name="Spot %d" % i,
                description="synthetic spot %d" % i,
                metadata=metadata,
                lat=35.0 + i * 1e-4,
                lon=135.0 + i * 1e-4,
            )
        )
    return SpotCatalog(spots)
