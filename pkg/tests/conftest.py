import pytest

from owah.bench import build_episode
from owah.worldsim import furnish, load_template


@pytest.fixture(scope="session")
def t1():
    return load_template("t1")


@pytest.fixture(scope="session")
def t1_skeleton(t1):
    return furnish(t1)


def make_episode_state(template_id: str, seed: int, task: str | None = None):
    """Apartment plus its sampled goal, the way the benchmark builds them."""
    return build_episode(template_id, seed, task)


@pytest.fixture()
def snack_episode():
    return make_episode_state("t1", 11, task="get_snacks")
