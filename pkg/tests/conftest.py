import pytest

from plankern.synth import GenConfig, synth_generate


@pytest.fixture(scope="session")
def plans():
    """Default-sized synthetic corpus shared across test modules."""
    return synth_generate(GenConfig(count=80, seed=7))


@pytest.fixture(scope="session")
def small_plans():
    """3-5 room plans, cheap enough for exhaustive oracles."""
    return synth_generate(GenConfig(count=120, seed=19, rooms_min=3, rooms_max=5))
