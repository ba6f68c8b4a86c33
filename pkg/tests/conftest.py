import pytest

from nnda.config import load_config


@pytest.fixture
def small_manifest():
    """A seconds-scale experiment used by the pipeline tests."""

    def make(*extra, seed=1):
        sets = ["cycles.spin_up=100", "cycles.training=150", "cycles.hindcast=12",
                "training.max_epochs=15", "letkf.ensemble_size=10", *extra]
        return load_config(None, sets, seed)

    return make
