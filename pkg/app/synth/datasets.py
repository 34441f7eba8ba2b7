from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from app.core.config import AnomalyCategory, FlowLabel
from app.core.exceptions import DataError
from app.core.seeds import derive_seed, make_rng
from app.schemas import AttackScenario, BenignProfile, DatasetSizes
from app.synth.benign import (
    finalize_columns, flow_table, generate_benign, ip_addresses, sample_benign_columns,
)
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)

SPLITS = ('train', 'threshold', 'validation', 'test')
ATTACK_IP_PREFIX = '198.18'
BENIGN_IP_PREFIX = '10'


def generate_malicious(
    scenario: Union[AttackScenario, AnomalyCategory, str],
    profile: BenignProfile,
    n: int,
    seed: int,
    id_prefix: Optional[str] = None,
) -> pd.DataFrame:
    """n потоков атаки: нормальные потоки с отклонениями по признакам сценария"""
    generator = ScenarioRegistry.get_scenario(scenario, profile)
    if n < 1:
        raise DataError(f'Число потоков должно быть >= 1, получено {n}')

    rng = make_rng(seed, 'malicious', generator.name.value)
    columns = sample_benign_columns(profile, n, rng)
    generator.apply(columns, rng)
    categories = np.full(n, generator.name.value, dtype=object)
    return flow_table(
        finalize_columns(columns),
        id_prefix or generator.name.value,
        FlowLabel.MALICIOUS,
        categories,
        ip_prefix=ATTACK_IP_PREFIX,
    )


def _split_counts(total: int, parts: int) -> List[int]:
    return [total // parts + (1 if i < total % parts else 0) for i in range(parts)]


def mixed_split(
    split: str,
    profile: BenignProfile,
    scenarios: Sequence[AttackScenario],
    n: int,
    seed: int,
) -> pd.DataFrame:
    """Половина потоков - атаки (поровну по сценариям), половина - нормальные"""
    if not scenarios:
        raise DataError('Не задано ни одного сценария атаки')
    n_malicious = n // 2
    parts = [generate_benign(profile, n - n_malicious, derive_seed(seed, 'synth', split, 'benign'))]
    for scenario, count in zip(scenarios, _split_counts(n_malicious, len(scenarios))):
        if count:
            parts.append(generate_malicious(
                scenario, profile, count, derive_seed(seed, 'synth', split, scenario.category.value),
            ))

    frame = pd.concat(parts, ignore_index=True)
    order = make_rng(seed, 'synth', split, 'order').permutation(len(frame))
    return frame.iloc[order].reset_index(drop=True)


def _assign_identity(frame: pd.DataFrame, split: str) -> pd.DataFrame:
    """Идентификаторы split-NNNNNNN и уникальные адреса источника по номеру строки"""
    frame = frame.copy()
    n = len(frame)
    frame['flow_id'] = [f'{split}-{i:07d}' for i in range(n)]
    attack = (frame['label'] == FlowLabel.MALICIOUS.value).to_numpy()
    addresses = ip_addresses(BENIGN_IP_PREFIX, n)
    addresses[attack] = ip_addresses(ATTACK_IP_PREFIX, n)[attack]
    frame['src_ip'] = addresses
    return frame


def make_datasets(
    profile: BenignProfile,
    scenarios: Sequence[AttackScenario],
    sizes: DatasetSizes,
    seed: int,
) -> Dict[str, pd.DataFrame]:
    """
    Четыре выборки: train (нормальные + шум), threshold (только нормальные),
    validation и test (половина атак, половина нормальных).
    Каждая выборка генерируется от своего подсида.
    """
    datasets = {
        'train': generate_benign(profile, sizes.train, derive_seed(seed, 'synth', 'train')),
        'threshold': generate_benign(
            profile.model_copy(update={'noise_rate': 0.0}),
            sizes.threshold,
            derive_seed(seed, 'synth', 'threshold'),
        ),
        'validation': mixed_split('validation', profile, scenarios, sizes.validation, seed),
        'test': mixed_split('test', profile, scenarios, sizes.test, seed),
    }
    datasets = {split: _assign_identity(frame, split) for split, frame in datasets.items()}
    for split, frame in datasets.items():
        logger.info(
            'Выборка %s: потоков %s, атак %s',
            split, len(frame), int((frame['label'] == FlowLabel.MALICIOUS.value).sum()),
        )
    return datasets
