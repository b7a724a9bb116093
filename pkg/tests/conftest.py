import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scalarplan.domains import GeneratorSpec, generate


@pytest.fixture(scope="session")
def commute():
    return generate(GeneratorSpec("getting-to-work"))


@pytest.fixture(scope="session")
def staircase():
    return generate(GeneratorSpec("coord-interesting"))


@pytest.fixture(scope="session")
def pathological():
    return generate(GeneratorSpec("coord-pathological"))


@pytest.fixture(scope="session")
def two_optima():
    return generate(GeneratorSpec("strong-eps-example"))


def random_model(seed, states=None, actions=3, secondary=2):
    import numpy as np
    rng = np.random.default_rng(seed + 777)
    if states is None:
        states = int(rng.integers(6, 41))
    return generate(GeneratorSpec(
        "random", states=states, actions_per_state=actions,
        secondary=secondary, seed=seed))
