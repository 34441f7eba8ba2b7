"""
Поведение полной модели на синтетическом трафике.

Долгие тесты: запуск через pytest -m slow.
"""
import numpy as np
import pytest

from app.core.config import FEATURE_NAMES
from app.schemas import BenignProfile, DatasetSizes, HyperParams
from app.services.detection import evaluate
from app.services.feature_encode import raw_matrix
from app.services.interpretation import sample_base_flows, significant_features, sweep_flows, sweep_summary
from app.services.pipeline import detect_frame, fit_bundle, malicious_mask
from app.services.reporting import analyze_frame, clean_false_positive_rate, noise_tolerance_curve
from app.synth.datasets import generate_malicious, make_datasets
from app.synth.registry import ScenarioRegistry


pytestmark = pytest.mark.slow

WL_GRID_POINT = 5049


@pytest.fixture(scope='module')
def profile():
    return BenignProfile()


@pytest.fixture(scope='module')
def datasets(profile):
    return make_datasets(profile, ScenarioRegistry.default_scenarios(), DatasetSizes(), seed=2019)


@pytest.fixture(scope='module')
def hyper():
    return HyperParams(batch_size=64, learning_rate=2e-3, dropout_ratio=0.1, weight_decay=1e-6, epochs=3, seed=2019)


@pytest.fixture(scope='module')
def bundle(datasets, hyper):
    return fit_bundle(datasets['train'], datasets['threshold'], hyper)


def _category_recall(bundle, profile, category, n=5000):
    frame = generate_malicious(category, profile, n, seed=77)
    verdicts = detect_frame(bundle, frame)
    return evaluate(verdicts, frame['label'].tolist()).recall


def test_non_wl_dst_port_is_detected(bundle, datasets, profile):
    assert _category_recall(bundle, profile, 'non_wl_dst_port') >= 0.99

    test = datasets['test']
    assert clean_false_positive_rate(detect_frame(bundle, test), test) <= 0.01


def test_non_wl_protocol_is_detected(bundle, profile):
    assert _category_recall(bundle, profile, 'non_wl_protocol') >= 0.99


def test_small_payload_pair_is_a_blind_spot(bundle, profile):
    frame = generate_malicious('small_payload_pair', profile, 500, seed=78)
    analysis = analyze_frame(bundle, frame)

    recall = evaluate(analysis.verdicts, frame['label'].tolist()).recall
    assert recall <= 0.5
    size_columns = [FEATURE_NAMES.index('sMaxPktSz'), FEATURE_NAMES.index('sMinPktSz')]
    assert analysis.shares[:, size_columns].sum(axis=1).mean() < 0.10


def test_dst_port_sweep_separates_wl_group(bundle, datasets):
    frame = datasets['test']
    benign = frame[~malicious_mask(frame)].reset_index(drop=True)
    verdicts = detect_frame(bundle, benign)
    indices = sample_base_flows(verdicts, 100, seed=2019)
    bases = raw_matrix(benign)[indices]

    grid = list(range(0, 65536, 51))
    sweeps = sweep_flows(bundle.model, bundle.threshold.t_det, bases, bundle.norm_stats, 'dst_port', grid)
    summary = sweep_summary(sweeps)

    wl = grid.index(WL_GRID_POINT)
    assert summary.median[wl] < 0.3
    others = np.delete(summary.median, wl)
    assert np.all(others > 0.9)

    # Подстановка собственного значения не меняет ошибку
    dport = FEATURE_NAMES.index('Dport')
    for sweep, base in zip(sweeps[:10], bases[:10]):
        identity = sweep_flows(
            bundle.model, bundle.threshold.t_det, base[None, :], bundle.norm_stats, 'dst_port', [int(base[dport])],
        )[0]
        assert identity.errors[0] == sweep.base_error


def test_multi_feature_detections_have_several_significant_features(bundle, profile):
    frame = generate_malicious('multi_feature_subtle', profile, 500, seed=79)
    analysis = analyze_frame(bundle, frame)
    detected = np.flatnonzero(analysis.detected)

    assert len(detected) > 0
    counts = [len(significant_features(analysis.report(int(i)))) for i in detected]
    assert np.mean(np.array(counts) >= 2) >= 0.9


def test_noise_tolerance_curve(profile, hyper):
    rates = [0.0, 0.005, 0.02]
    rows = noise_tolerance_curve(
        profile, ScenarioRegistry.default_scenarios(['non_wl_dst_port']), DatasetSizes(), rates, hyper, seed=2019,
    )

    assert [row.noise_rate for row in rows] == rates
    for row in rows[:2]:
        assert row.recall >= 0.99
        assert row.fpr <= 0.01
    recalls = [row.recall for row in rows]
    assert all(later <= earlier for earlier, later in zip(recalls, recalls[1:]))
