import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def random_rgb(rng, h=None, w=None, max_side=16):
    h = h or int(rng.integers(1, max_side + 1))
    w = w or int(rng.integers(1, max_side + 1))
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """20 synthetic pairs at clearly separable strength."""
    from fcid.synth import synth_generate

    out = tmp_path_factory.mktemp("corpus")
    synth_generate(out, 20, strength=0.8, seed=3, size=32)
    return out
