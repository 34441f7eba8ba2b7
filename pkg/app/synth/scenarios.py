from typing import Set

import numpy as np

from app.core.config import AnomalyCategory, PROTO_UDP, PROTOCOL_BINS, MAX_PORT, PORT_GROUP_SIZE
from app.schemas import port_group
from app.synth.base import Columns, ScenarioGeneratorBase
from app.synth.registry import ScenarioRegistry


def _sample_excluding(
    rng: np.random.Generator,
    low: int,
    high: int,
    n: int,
    excluded: Set[int],
    key=lambda values: values,
) -> np.ndarray:
    """Равномерно из [low, high], пока key(значение) не попадет в excluded"""
    values = rng.integers(low, high + 1, size=n)
    bad = np.isin(key(values), list(excluded))
    while bad.any():
        values[bad] = rng.integers(low, high + 1, size=int(bad.sum()))
        bad = np.isin(key(values), list(excluded))
    return values


def _port_groups(ports: np.ndarray) -> np.ndarray:
    return (ports - 1) // PORT_GROUP_SIZE + 1


@ScenarioRegistry.register_scenario()
class NonWlDstPortScenario(ScenarioGeneratorBase):
    """UDP потоки с портом назначения вне WL групп"""
    NAME = AnomalyCategory.NON_WL_DST_PORT
    MAIN_FEATURES = ('Dport',)
    DEVIATING_FEATURES = ('Dport',)

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        wl_groups = {port_group(port) for port in self.profile.wl_dst_ports}
        columns['Proto'] = np.full(n, PROTO_UDP)
        columns['Dport'] = _sample_excluding(rng, 1, MAX_PORT, n, wl_groups, key=_port_groups)


@ScenarioRegistry.register_scenario()
class NonWlProtocolScenario(ScenarioGeneratorBase):
    """Протокол вне профиля; для протоколов без портов порты 0"""
    NAME = AnomalyCategory.NON_WL_PROTOCOL
    MAIN_FEATURES = ('Proto',)
    DEVIATING_FEATURES = ('Proto',)

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        columns['Proto'] = _sample_excluding(rng, 0, PROTOCOL_BINS - 1, n, set(self.profile.protocols))


@ScenarioRegistry.register_scenario()
class BlSrcPortScenario(ScenarioGeneratorBase):
    """UDP потоки с портом источника из черного списка (отражение/амплификация)"""
    NAME = AnomalyCategory.BL_SRC_PORT
    MAIN_FEATURES = ('Sport',)
    DEVIATING_FEATURES = ('Sport',)

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        columns['Proto'] = np.full(n, PROTO_UDP)
        columns['Sport'] = rng.choice(np.array(self.scenario.bl_src_ports), size=n)


@ScenarioRegistry.register_scenario()
class PortZeroScenario(ScenarioGeneratorBase):
    """UDP потоки с недопустимым портом 0 у источника или назначения"""
    NAME = AnomalyCategory.PORT_ZERO
    MAIN_FEATURES = ('Sport', 'Dport')
    DEVIATING_FEATURES = ('Sport', 'Dport')

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        columns['Proto'] = np.full(n, PROTO_UDP)
        zero_src = rng.random(n) < 0.5
        columns['Sport'] = np.where(zero_src, 0, columns['Sport'])
        columns['Dport'] = np.where(zero_src, columns['Dport'], 0)


@ScenarioRegistry.register_scenario()
class SmallPayloadPairScenario(ScenarioGeneratorBase):
    """Все пакеты потока 56 или 60 байт; остальные признаки нормальные"""
    NAME = AnomalyCategory.SMALL_PAYLOAD_PAIR
    MAIN_FEATURES = ('sMaxPktSz', 'sMinPktSz')
    DEVIATING_FEATURES = ('sMaxPktSz', 'sMinPktSz')

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        pairs = np.array(self.scenario.small_pairs, dtype=np.int64)
        chosen = pairs[rng.integers(0, len(pairs), size=n)]
        columns['sMaxPktSz'] = chosen[:, 0]
        columns['sMinPktSz'] = chosen[:, 1]


@ScenarioRegistry.register_scenario()
class MultiFeatureSubtleScenario(ScenarioGeneratorBase):
    """Несколько умеренных отклонений: редкий порт источника, низкий TTL, много пакетов"""
    NAME = AnomalyCategory.MULTI_FEATURE_SUBTLE
    MAIN_FEATURES = ('Sport', 'sTtl', 'SrcPkts')
    DEVIATING_FEATURES = ('Sport', 'sTtl', 'SrcPkts')

    # Зарегистрированные (не эфемерные) порты
    SPORT_RANGE = (1024, 49151)

    def apply(self, columns: Columns, rng: np.random.Generator) -> None:
        n = len(columns['Proto'])
        tail_low, tail_high = self.profile.src_port_tail
        ports = [*self.profile.src_ports, *self.scenario.bl_src_ports, *range(tail_low, tail_high + 1)]
        excluded = {port_group(port) for port in ports}
        columns['Proto'] = np.full(n, PROTO_UDP)
        columns['Sport'] = _sample_excluding(rng, *self.SPORT_RANGE, n, excluded, key=_port_groups)
        columns['sTtl'] = rng.integers(self.scenario.subtle_ttl_range[0], self.scenario.subtle_ttl_range[1] + 1, size=n)
        columns['SrcPkts'] = rng.integers(
            self.scenario.subtle_pkts_range[0], self.scenario.subtle_pkts_range[1] + 1, size=n,
        )
