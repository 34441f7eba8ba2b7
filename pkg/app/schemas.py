from typing import Optional, Dict, List, Tuple, Any
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from dotenv import dotenv_values

from app.core.config import (
    AnomalyCategory, FEATURE_NAMES, SCALAR_FEATURES, PORT_PROTOCOLS,
    ENCODING_LAYOUT_VERSION, TCP_OPTION_FLAGS, PORT_GROUP_SIZE, PROTO_TCP,
)


WEIGHT_TOLERANCE = 1e-9

# Опции TCP, которые встречаются в нормальном трафике
BENIGN_TCP_OPTIONS = ('M', 'w', 's', 'T')


def port_group(port: int) -> int:
    """Номер группы из 51 соседнего порта; порт 0 - группа 0"""
    return (port - 1) // PORT_GROUP_SIZE + 1 if port else 0


class PacketRecord(BaseModel):
    """Один входящий пакет из выборки"""
    model_config = ConfigDict(frozen=True)

    timestamp: float = Field(..., ge=0, description="Время, секунды")
    src_ip: str
    dst_ip: str
    src_port: int = Field(0, ge=0, le=65535)
    dst_port: int = Field(0, ge=0, le=65535)
    protocol: int = Field(..., ge=0, le=255)
    packet_size: int = Field(..., ge=0, description="Длина пакета на проводе, байты")
    payload_size: int = Field(..., ge=0)
    ttl: int = Field(..., ge=0, le=255)
    tcp_options: Tuple[bool, ...] = (False,) * len(TCP_OPTION_FLAGS)
    tcp_seq: Optional[int] = Field(None, ge=0)

    @field_validator('tcp_options')
    def validate_tcp_options(cls, v):
        if len(v) != len(TCP_OPTION_FLAGS):
            raise ValueError(f'Ожидалось {len(TCP_OPTION_FLAGS)} флагов TCP опций, получено {len(v)}')
        return v

    @model_validator(mode='after')
    def validate_packet(self):
        if self.payload_size > self.packet_size:
            raise ValueError('payload_size больше packet_size')
        if self.protocol not in PORT_PROTOCOLS and (self.src_port or self.dst_port):
            raise ValueError(f'Порты должны быть 0 для протокола {self.protocol}')
        return self

    @property
    def key(self) -> 'FlowKey':
        return FlowKey(
            src_ip=self.src_ip,
            dst_ip=self.dst_ip,
            src_port=self.src_port,
            dst_port=self.dst_port,
            protocol=self.protocol,
        )


class FlowKey(BaseModel):
    """5-tuple потока; src_ip входит в ключ, но не в признаки модели"""
    model_config = ConfigDict(frozen=True)

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int


class RawFeatureVector(BaseModel):
    """23 признака потока (имена колонок - алиасы)"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    sport: int = Field(..., alias='Sport', ge=0, le=65535)
    dport: int = Field(..., alias='Dport', ge=0, le=65535)
    proto: int = Field(..., alias='Proto', ge=0, le=255)
    src_pkts: int = Field(..., alias='SrcPkts', ge=1)
    src_rate: float = Field(..., alias='SrcRate', ge=0, description="pkt/s")
    src_load: float = Field(..., alias='SrcLoad', ge=0, description="bits/s")
    s_int_pkt: float = Field(..., alias='SIntPkt', ge=0, description="мс")
    s_ttl: int = Field(..., alias='sTtl', ge=0, le=255)
    s_max_pkt_sz: int = Field(..., alias='sMaxPktSz', ge=0)
    s_min_pkt_sz: int = Field(..., alias='sMinPktSz', ge=0)
    src_tcp_base: int = Field(0, alias='SrcTCPBase', ge=0)
    tcp_opt_M: int = Field(0, alias='TcpOpt_M', ge=0, le=1)
    tcp_opt_w: int = Field(0, alias='TcpOpt_w', ge=0, le=1)
    tcp_opt_s: int = Field(0, alias='TcpOpt_s', ge=0, le=1)
    tcp_opt_S: int = Field(0, alias='TcpOpt_S', ge=0, le=1)
    tcp_opt_e: int = Field(0, alias='TcpOpt_e', ge=0, le=1)
    tcp_opt_E: int = Field(0, alias='TcpOpt_E', ge=0, le=1)
    tcp_opt_T: int = Field(0, alias='TcpOpt_T', ge=0, le=1)
    tcp_opt_c: int = Field(0, alias='TcpOpt_c', ge=0, le=1)
    tcp_opt_N: int = Field(0, alias='TcpOpt_N', ge=0, le=1)
    tcp_opt_O: int = Field(0, alias='TcpOpt_O', ge=0, le=1)
    tcp_opt_SS: int = Field(0, alias='TcpOpt_SS', ge=0, le=1)
    tcp_opt_D: int = Field(0, alias='TcpOpt_D', ge=0, le=1)

    @model_validator(mode='after')
    def validate_sizes(self):
        if self.s_min_pkt_sz > self.s_max_pkt_sz:
            raise ValueError('sMinPktSz больше sMaxPktSz')
        return self

    def to_array(self) -> np.ndarray:
        """Значения в порядке FEATURE_NAMES"""
        row = self.model_dump(by_alias=True)
        return np.array([row[name] for name in FEATURE_NAMES], dtype=np.float64)

    def to_row(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True)

    @classmethod
    def from_mapping(cls, row: Dict[str, Any]) -> 'RawFeatureVector':
        values = {}
        for name in FEATURE_NAMES:
            value = row[name]
            values[name] = float(value) if name in ('SrcRate', 'SrcLoad', 'SIntPkt') else int(value)
        return cls.model_validate(values)

    @classmethod
    def from_array(cls, values) -> 'RawFeatureVector':
        return cls.from_mapping(dict(zip(FEATURE_NAMES, values)))


class FeatureRange(BaseModel):
    model_config = ConfigDict(frozen=True)

    min: float
    max: float

    @model_validator(mode='after')
    def validate_range(self):
        if self.min > self.max:
            raise ValueError(f'min {self.min} больше max {self.max}')
        return self


class NormStats(BaseModel):
    """Минимумы и максимумы скалярных признаков на обучающих данных"""
    model_config = ConfigDict(frozen=True)

    layout_version: str = ENCODING_LAYOUT_VERSION
    features: Dict[str, FeatureRange]

    @field_validator('features')
    def validate_features(cls, v):
        missing = [name for name in SCALAR_FEATURES if name not in v]
        if missing:
            raise ValueError(f'Нет статистик для признаков: {missing}')
        return v

    def tmin(self) -> np.ndarray:
        return np.array([self.features[name].min for name in SCALAR_FEATURES], dtype=np.float64)

    def tmax(self) -> np.ndarray:
        return np.array([self.features[name].max for name in SCALAR_FEATURES], dtype=np.float64)


class Threshold(BaseModel):
    """Порог детекции T_det = mu + 3*sigma"""
    model_config = ConfigDict(frozen=True)

    t_det: float
    mu: float
    sigma: float = Field(..., ge=0)
    n_flows: int = Field(..., ge=1)

    @model_validator(mode='after')
    def validate_threshold(self):
        if self.t_det != self.mu + 3 * self.sigma:
            raise ValueError('t_det должен быть равен mu + 3*sigma')
        return self

    @classmethod
    def from_errors(cls, errors) -> 'Threshold':
        errors = np.asarray(errors, dtype=np.float64)
        mu = float(errors.mean())
        sigma = float(errors.std())
        return cls(t_det=mu + 3 * sigma, mu=mu, sigma=sigma, n_flows=int(errors.size))


class Verdict(BaseModel):
    flow_id: str
    error: float
    malicious: bool


class Metrics(BaseModel):
    """Метрики детекции; None - знаменатель равен нулю"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    tnr: Optional[float] = None
    fpr: Optional[float] = None

    def passes_gate(self, gate: float) -> bool:
        """Все ли метрики валидации не ниже gate"""
        if self.tp + self.fn == 0:
            return self.tnr is not None and self.tnr >= gate
        values = (self.precision, self.recall, self.f1)
        return all(value is not None and value >= gate for value in values)


class HyperParams(BaseModel):
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=1e-5, gt=0)
    dropout_ratio: float = Field(default=0.5, ge=0, lt=1)
    weight_decay: float = Field(default=1e-5, ge=0)
    epochs: int = Field(default=2, ge=1)
    seed: int = 2019


class OptimizerConfig(BaseModel):
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class SearchSpace(BaseModel):
    """Диапазоны случайного поиска гиперпараметров"""
    batch_sizes: List[int] = [32, 64, 128, 256]
    learning_rate: Tuple[float, float] = (1e-6, 1e-4)
    dropout_ratios: List[float] = [0.1, 0.2, 0.3, 0.4, 0.5]
    weight_decay: Tuple[float, float] = (1e-7, 1e-4)

    def is_empty(self) -> bool:
        lr_low, lr_high = self.learning_rate
        wd_low, wd_high = self.weight_decay
        return (
            not self.batch_sizes
            or not self.dropout_ratios
            or not (0 < lr_low <= lr_high)
            or not (0 < wd_low <= wd_high)
        )


class TrialRecord(BaseModel):
    index: int
    hyper_params: HyperParams
    metrics: Metrics


class SizeCluster(BaseModel):
    """Кластер пар (sMaxPktSz, sMinPktSz) в профиле нормального трафика"""
    max_range: Tuple[int, int]
    min_range: Tuple[int, int]
    weight: float = Field(..., gt=0)

    @model_validator(mode='after')
    def validate_cluster(self):
        if self.max_range[0] > self.max_range[1] or self.min_range[0] > self.min_range[1]:
            raise ValueError('Неверный диапазон размеров')
        if self.min_range[0] > self.max_range[1]:
            raise ValueError('Минимальный размер не может превышать максимальный')
        return self

    def contains(self, s_max: int, s_min: int) -> bool:
        return (
            self.max_range[0] <= s_max <= self.max_range[1]
            and self.min_range[0] <= s_min <= self.min_range[1]
        )


def _default_size_clusters() -> List[SizeCluster]:
    return [
        SizeCluster(max_range=(74, 80), min_range=(70, 74), weight=0.7),
        SizeCluster(max_range=(400, 512), min_range=(400, 512), weight=0.2),
        SizeCluster(max_range=(74, 512), min_range=(70, 120), weight=0.1),
    ]


class BenignProfile(BaseModel):
    """
    Профиль нормального трафика одного VIP.

    По умолчанию типичный игровой VIP: одна группа WL портов назначения,
    доминирующий порт источника (~75%), почти весь трафик UDP, размеры около (74, 74).
    """
    wl_dst_ports: Dict[int, float] = {5000: 1.0}
    src_ports: Dict[int, float] = {3074: 0.75, 3478: 0.0121}
    src_port_tail: Tuple[int, int] = (49152, 50171)
    protocols: Dict[int, float] = {17: 0.999, 6: 0.001}
    size_clusters: List[SizeCluster] = Field(default_factory=_default_size_clusters)
    ttl_range: Tuple[int, int] = (40, 128)
    pkts_range: Tuple[int, int] = (2, 60)
    pkts_median: float = 6.0
    int_pkt_range_ms: Tuple[float, float] = (5.0, 2000.0)
    tcp_option_rate: float = Field(default=0.5, ge=0, le=1)
    noise_rate: float = Field(default=0.005, ge=0, le=0.05)

    @field_validator('wl_dst_ports', 'protocols')
    def validate_weights(cls, v):
        if not v:
            raise ValueError('Пустой набор весов')
        if any(w < 0 for w in v.values()) or not math.isclose(sum(v.values()), 1.0, abs_tol=WEIGHT_TOLERANCE):
            raise ValueError('Веса должны быть неотрицательными и в сумме давать 1')
        return v

    @field_validator('src_ports')
    def validate_src_ports(cls, v):
        if any(w < 0 for w in v.values()) or sum(v.values()) > 1 + WEIGHT_TOLERANCE:
            raise ValueError('Веса портов источника должны быть неотрицательными и в сумме не больше 1')
        return v

    @field_validator('size_clusters')
    def validate_clusters(cls, v):
        if not v or not math.isclose(sum(c.weight for c in v), 1.0, abs_tol=WEIGHT_TOLERANCE):
            raise ValueError('Веса кластеров размеров должны в сумме давать 1')
        return v

    @model_validator(mode='after')
    def validate_ranges(self):
        for name in ('src_port_tail', 'ttl_range', 'pkts_range', 'int_pkt_range_ms'):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f'Неверный диапазон {name}: {low} > {high}')
        if self.pkts_range[0] < 1:
            raise ValueError('Минимальное число пакетов - 1')
        if not self.pkts_range[0] <= self.pkts_median <= self.pkts_range[1]:
            raise ValueError('pkts_median вне pkts_range')
        return self

    @property
    def src_tail_weight(self) -> float:
        return max(0.0, 1.0 - sum(self.src_ports.values()))

    def deviating_features(self, raw: RawFeatureVector) -> set:
        """Признаки потока, значения которых лежат вне профиля"""
        deviating = set()
        if raw.proto not in self.protocols:
            deviating.add('Proto')
        if raw.proto in PORT_PROTOCOLS:
            wl_groups = {port_group(port) for port in self.wl_dst_ports}
            if raw.dport == 0 or port_group(raw.dport) not in wl_groups:
                deviating.add('Dport')
            tail_low, tail_high = self.src_port_tail
            if raw.sport not in self.src_ports and not tail_low <= raw.sport <= tail_high:
                deviating.add('Sport')
        if not any(cluster.contains(raw.s_max_pkt_sz, raw.s_min_pkt_sz) for cluster in self.size_clusters):
            deviating.update(('sMaxPktSz', 'sMinPktSz'))
        if not self.ttl_range[0] <= raw.s_ttl <= self.ttl_range[1]:
            deviating.add('sTtl')
        if not self.pkts_range[0] <= raw.src_pkts <= self.pkts_range[1]:
            deviating.add('SrcPkts')
        if raw.src_pkts > 1 and not self.int_pkt_range_ms[0] <= raw.s_int_pkt <= self.int_pkt_range_ms[1]:
            deviating.add('SIntPkt')
        row = raw.to_row()
        for flag in TCP_OPTION_FLAGS:
            name = f'TcpOpt_{flag}'
            if row[name] and (raw.proto != PROTO_TCP or flag not in BENIGN_TCP_OPTIONS):
                deviating.add(name)
        if raw.src_tcp_base and raw.proto != PROTO_TCP:
            deviating.add('SrcTCPBase')
        return deviating

    @classmethod
    def from_file(cls, path) -> 'BenignProfile':
        """Загрузить профиль из key-value файла (формат описан в docs/profile_format.md)"""
        values = dotenv_values(path)
        return cls.model_validate(parse_profile_values(values))


class AttackScenario(BaseModel):
    """Сценарий атаки: категория определяет, какие признаки отклоняются от профиля"""
    category: AnomalyCategory
    bl_src_ports: List[int] = [19, 53, 123, 1900, 11211]
    small_pairs: List[Tuple[int, int]] = [(56, 56), (60, 60)]
    subtle_ttl_range: Tuple[int, int] = (1, 10)
    subtle_pkts_range: Tuple[int, int] = (70, 100)


class DatasetSizes(BaseModel):
    train: int = Field(default=50000, ge=1)
    threshold: int = Field(default=10000, ge=1)
    validation: int = Field(default=10000, ge=1)
    test: int = Field(default=10000, ge=1)


class CategoryRow(BaseModel):
    """Строка таблицы детекции по основной аномалии"""
    category: str
    count: int
    detected: int
    recall: Optional[float]
    only_main_count: int
    only_main_frac_of_tp: Optional[float]
    mean_main_ratio_tp: Optional[float] = None
    mean_main_ratio_fn: Optional[float] = None


class FalsePositiveRow(BaseModel):
    kind: str
    count: int
    fraction: Optional[float]


class NoiseCurveRow(BaseModel):
    noise_rate: float
    t_det: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    fpr: Optional[float]


def _parse_weights(text: str, key_type=int) -> Dict:
    weights = {}
    for item in filter(None, (part.strip() for part in text.split(','))):
        key, _, weight = item.partition(':')
        weights[key_type(key)] = float(weight)
    return weights


def _parse_range(text: str, value_type=int) -> Tuple:
    low, _, high = text.partition('-')
    return value_type(low), value_type(high)


def parse_profile_values(values: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Преобразовать строки key-value файла в поля BenignProfile"""
    data: Dict[str, Any] = {}
    for key, raw in values.items():
        if raw is None:
            continue
        key = key.upper()
        if key == 'WL_DST_PORTS':
            data['wl_dst_ports'] = _parse_weights(raw)
        elif key == 'SRC_PORTS':
            data['src_ports'] = _parse_weights(raw)
        elif key == 'SRC_PORT_TAIL':
            data['src_port_tail'] = _parse_range(raw)
        elif key == 'PROTOCOLS':
            data['protocols'] = _parse_weights(raw)
        elif key == 'SIZE_CLUSTERS':
            clusters = []
            for item in filter(None, (part.strip() for part in raw.split(';'))):
                ranges, _, weight = item.partition(':')
                max_part, _, min_part = ranges.partition('/')
                clusters.append({
                    'max_range': _parse_range(max_part),
                    'min_range': _parse_range(min_part),
                    'weight': float(weight),
                })
            data['size_clusters'] = clusters
        elif key == 'TTL_RANGE':
            data['ttl_range'] = _parse_range(raw)
        elif key == 'PKTS_RANGE':
            data['pkts_range'] = _parse_range(raw)
        elif key == 'PKTS_MEDIAN':
            data['pkts_median'] = float(raw)
        elif key == 'INT_PKT_RANGE_MS':
            data['int_pkt_range_ms'] = _parse_range(raw, float)
        elif key == 'TCP_OPTION_RATE':
            data['tcp_option_rate'] = float(raw)
        elif key == 'NOISE_RATE':
            data['noise_rate'] = float(raw)
        else:
            raise ValueError(f'Неизвестный ключ профиля "{key}"')
    return data
