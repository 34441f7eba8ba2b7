import pytest

from app.schemas import BenignProfile, DatasetSizes, HyperParams
from app.services.pipeline import fit_bundle
from app.synth.datasets import make_datasets
from app.synth.registry import ScenarioRegistry
from tests.helpers import SMALL_DIMS


@pytest.fixture
def profile():
    return BenignProfile()


@pytest.fixture(scope='session')
def fast_hyper():
    return HyperParams(batch_size=64, learning_rate=2e-3, dropout_ratio=0.1, weight_decay=1e-6, epochs=3, seed=7)


@pytest.fixture(scope='session')
def small_datasets():
    sizes = DatasetSizes(train=2000, threshold=500, validation=400, test=400)
    return make_datasets(BenignProfile(), ScenarioRegistry.default_scenarios(), sizes, seed=11)


@pytest.fixture(scope='session')
def small_bundle(small_datasets, fast_hyper):
    return fit_bundle(small_datasets['train'], small_datasets['threshold'], fast_hyper, SMALL_DIMS)
