import numpy as np
import pytest

from hlseg.core import hlnet, modelio
from hlseg.utils.synth import generate_skin_dataset, make_blobs


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def default_store():
    return hlnet.init_weights(hlnet.HLNetConfig(), seed=42)


@pytest.fixture(scope="session")
def default_model(default_store):
    return hlnet.build(default_store)


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory, default_store):
    path = tmp_path_factory.mktemp("weights") / "hlnet.hlnw"
    modelio.save(default_store, path)
    return path


@pytest.fixture(scope="session")
def skin_dataset(tmp_path_factory):
    """500 synthetic portraits, five tones, seed 42."""
    return generate_skin_dataset(tmp_path_factory.mktemp("skin"), count=500, size=96, seed=42)


@pytest.fixture(scope="session")
def small_skin_dataset(tmp_path_factory):
    return generate_skin_dataset(tmp_path_factory.mktemp("skin_small"), count=25, size=48, seed=3)


@pytest.fixture
def blobs():
    return make_blobs(n=200, seed=7)
