import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from app.core.config import AnomalyCategory, FEATURE_NAMES
from app.core.exceptions import DataError
from app.schemas import BenignProfile, DatasetSizes, RawFeatureVector
from app.synth.benign import frequent_values, generate_benign
from app.synth.datasets import generate_malicious, make_datasets
from app.synth.registry import ScenarioRegistry


def _deviations(profile, frame):
    return [profile.deviating_features(RawFeatureVector.from_mapping(row)) for row in frame.to_dict('records')]


def test_generate_benign_is_deterministic(profile):
    first = generate_benign(profile, 500, seed=3)
    second = generate_benign(profile, 500, seed=3)
    pd.testing.assert_frame_equal(first, second)
    assert not first.equals(generate_benign(profile, 500, seed=4))


def test_noise_flows_are_labelled_benign(profile):
    frame = generate_benign(profile.model_copy(update={'noise_rate': 0.02}), 1000, seed=5)

    assert (frame['label'] == 'benign').all()
    assert (frame['category'] != '').sum() == 20
    assert set(frame.loc[frame['category'] != '', 'category']) <= {c.value for c in AnomalyCategory}


def test_noise_free_flows_stay_inside_profile(profile):
    clean = profile.model_copy(update={'noise_rate': 0.0})
    frame = generate_benign(clean, 2000, seed=6)

    assert (frame['category'] == '').all()
    assert all(not deviating for deviating in _deviations(clean, frame))


@pytest.mark.parametrize('category', [c.value for c in AnomalyCategory])
def test_scenario_deviates_only_in_its_features(profile, category):
    scenario_class = ScenarioRegistry.get_class(category)
    frame = generate_malicious(category, profile, 300, seed=8)

    assert (frame['label'] == 'malicious').all()
    assert (frame['category'] == category).all()
    for deviating in _deviations(profile, frame):
        assert deviating
        assert deviating <= set(scenario_class.DEVIATING_FEATURES)


def test_multi_feature_deviates_in_all_three(profile):
    frame = generate_malicious(AnomalyCategory.MULTI_FEATURE_SUBTLE, profile, 200, seed=9)
    assert all(deviating == {'Sport', 'sTtl', 'SrcPkts'} for deviating in _deviations(profile, frame))


def test_make_datasets_layout(profile):
    sizes = DatasetSizes(train=300, threshold=100, validation=120, test=121)
    datasets = make_datasets(profile, ScenarioRegistry.default_scenarios(), sizes, seed=2)

    assert {split: len(frame) for split, frame in datasets.items()} == {
        'train': 300, 'threshold': 100, 'validation': 120, 'test': 121,
    }
    assert (datasets['threshold']['category'] == '').all()
    for split in ('validation', 'test'):
        frame = datasets[split]
        malicious = frame['label'] == 'malicious'
        assert malicious.sum() == len(frame) // 2
        assert frame.loc[malicious, 'src_ip'].str.startswith('198.18.').all()
        assert frame.loc[~malicious, 'src_ip'].str.startswith('10.').all()
        assert frame['flow_id'].is_unique
        assert frame['flow_id'].iloc[0] == f'{split}-0000000'
        assert set(FEATURE_NAMES) <= set(frame.columns)


def test_make_datasets_is_deterministic(profile):
    sizes = DatasetSizes(train=50, threshold=20, validation=20, test=20)
    scenarios = ScenarioRegistry.default_scenarios(['port_zero', 'bl_src_port'])
    first = make_datasets(profile, scenarios, sizes, seed=12)
    second = make_datasets(profile, scenarios, sizes, seed=12)
    for split in first:
        pd.testing.assert_frame_equal(first[split], second[split])
    assert set(first['test'].loc[first['test']['label'] == 'malicious', 'category']) == {'port_zero', 'bl_src_port'}


def test_registry_rejects_unknown_category(profile):
    with pytest.raises(DataError):
        ScenarioRegistry.get_class('syn_flood')
    with pytest.raises(DataError):
        ScenarioRegistry.default_scenarios(['syn_flood'])
    assert len(ScenarioRegistry.categories()) == len(AnomalyCategory)


def test_profile_from_file(tmp_path):
    path = tmp_path / 'profile.env'
    path.write_text(
        'WL_DST_PORTS=5000:0.5,27015:0.5\n'
        'PROTOCOLS=17:1.0\n'
        'TTL_RANGE=50-100\n'
        'SIZE_CLUSTERS=74-80/70-74:1.0\n'
        'NOISE_RATE=0\n'
    )
    profile = BenignProfile.from_file(path)

    assert profile.wl_dst_ports == {5000: 0.5, 27015: 0.5}
    assert profile.protocols == {17: 1.0}
    assert profile.ttl_range == (50, 100)
    assert profile.size_clusters[0].max_range == (74, 80)
    assert profile.noise_rate == 0.0


def test_profile_file_errors(tmp_path):
    unknown = tmp_path / 'unknown.env'
    unknown.write_text('COLOR=blue\n')
    with pytest.raises(ValueError):
        BenignProfile.from_file(unknown)

    weights = tmp_path / 'weights.env'
    weights.write_text('PROTOCOLS=17:0.5\n')
    with pytest.raises(ValidationError):
        BenignProfile.from_file(weights)


def test_frequent_values():
    frame = pd.DataFrame({
        'Dport': [5000] * 6 + [80] * 3 + [22],
        'sMaxPktSz': [74] * 8 + [60] * 2,
        'sMinPktSz': [74] * 8 + [56] * 2,
    })
    table = frequent_values(frame, 'Dport', min_share=0.2)
    assert table['value'].tolist() == [5000, 80]
    assert table['share'].tolist() == pytest.approx([0.6, 0.3])

    pairs = frequent_values(frame, 'size_pair')
    assert pairs['value'].tolist() == ['74:74', '60:56']
    with pytest.raises(DataError):
        frequent_values(frame, 'missing')


def test_benign_ports_follow_profile(profile):
    frame = generate_benign(profile.model_copy(update={'noise_rate': 0.0}), 4000, seed=10)
    udp = frame[frame['Proto'] == 17]
    share = (udp['Sport'] == 3074).mean()
    assert share == pytest.approx(0.75, abs=0.03)
    assert set(np.unique(frame['Dport'])) == {5000}
