"""
Кодирование потоков во входной вектор модели.

Раскладка вектора (enc-v1):
    [0, 1286)       one-hot группы порта источника
    [1286, 2572)    one-hot группы порта назначения
    [2572, 2828)    one-hot протокола
    [2828, 2848)    нормализованные скалярные признаки в порядке SCALAR_FEATURES
"""
from typing import Dict, Sequence, Union
import logging

import numpy as np
import pandas as pd

from app.core.config import (
    PORT_GROUP_SIZE, PORT_BINS, PROTOCOL_BINS, MAX_PORT, PORT_PROTOCOLS,
    FEATURE_NAMES, SCALAR_FEATURES, ENCODING_LAYOUT_VERSION,
)
from app.core.exceptions import DataError, VersionMismatchError
from app.schemas import RawFeatureVector, NormStats, FeatureRange, port_group


logger = logging.getLogger(__name__)

SRC_PORT_OFFSET = 0
DST_PORT_OFFSET = PORT_BINS
PROTOCOL_OFFSET = 2 * PORT_BINS
SCALAR_OFFSET = PROTOCOL_OFFSET + PROTOCOL_BINS
ENCODED_DIM = SCALAR_OFFSET + len(SCALAR_FEATURES)

_SPORT, _DPORT, _PROTO = (FEATURE_NAMES.index(name) for name in ('Sport', 'Dport', 'Proto'))


def port_bin(port: int, protocol: int) -> int:
    """Индекс группы из 51 порта; 0 - порт 0 или протокол без портов"""
    if not 0 <= port <= MAX_PORT:
        raise DataError(f'Порт вне диапазона 0-{MAX_PORT}: {port}')
    if protocol not in PORT_PROTOCOLS:
        return 0
    return port_group(port)


def port_bins(ports: np.ndarray, protocols: np.ndarray) -> np.ndarray:
    ports = np.asarray(ports, dtype=np.int64)
    protocols = np.asarray(protocols, dtype=np.int64)
    if ports.size and (ports.min() < 0 or ports.max() > MAX_PORT):
        raise DataError(f'Порт вне диапазона 0-{MAX_PORT}')
    has_ports = np.isin(protocols, PORT_PROTOCOLS) & (ports > 0)
    return np.where(has_ports, (ports - 1) // PORT_GROUP_SIZE + 1, 0)


def raw_matrix(flows: Union[pd.DataFrame, Sequence[RawFeatureVector]]) -> np.ndarray:
    """Матрица n x 23 сырых признаков в порядке FEATURE_NAMES"""
    if isinstance(flows, pd.DataFrame):
        missing = [name for name in FEATURE_NAMES if name not in flows.columns]
        if missing:
            raise DataError(f'В таблице потоков нет колонок: {missing}')
        try:
            return flows[list(FEATURE_NAMES)].to_numpy(dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise DataError(f'Нечисловые значения признаков: {e}') from e
    if not flows:
        return np.empty((0, len(FEATURE_NAMES)), dtype=np.float64)
    return np.stack([flow.to_array() for flow in flows])


def fit_normalization(training: Union[pd.DataFrame, Sequence[RawFeatureVector], np.ndarray]) -> NormStats:
    """Min/max скалярных признаков по обучающим потокам"""
    matrix = training if isinstance(training, np.ndarray) else raw_matrix(training)
    if matrix.shape[0] == 0:
        raise DataError('Пустой обучающий набор: нельзя вычислить статистики нормализации')

    scalars = matrix[:, len(FEATURE_NAMES) - len(SCALAR_FEATURES):]
    tmin = scalars.min(axis=0)
    tmax = scalars.max(axis=0)
    return NormStats(features={
        name: FeatureRange(min=float(low), max=float(high))
        for name, low, high in zip(SCALAR_FEATURES, tmin, tmax)
    })


def normalize_scalar(value: float, f_tmin: float, f_tmax: float) -> float:
    # min -> 1, max -> 0; значения вне диапазона не обрезаются
    if f_tmin == f_tmax:
        return 0.0
    return (value - f_tmax) / (f_tmin - f_tmax)


def normalize_scalars(values: np.ndarray, stats: NormStats) -> np.ndarray:
    tmin = stats.tmin()
    tmax = stats.tmax()
    span = tmin - tmax
    constant = span == 0
    result = (values - tmax) / np.where(constant, 1.0, span)
    result[..., constant] = 0.0
    return result


def _check_layout(stats: NormStats) -> None:
    if stats.layout_version != ENCODING_LAYOUT_VERSION:
        raise VersionMismatchError('layout_version', ENCODING_LAYOUT_VERSION, stats.layout_version)


def encode_rows(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    """Векторное кодирование матрицы сырых признаков (n x 23) в n x 2848"""
    _check_layout(stats)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    n = matrix.shape[0]
    protocols = matrix[:, _PROTO].astype(np.int64)
    if n and (protocols.min() < 0 or protocols.max() >= PROTOCOL_BINS):
        raise DataError('Номер протокола вне диапазона 0-255')

    encoded = np.zeros((n, ENCODED_DIM), dtype=np.float64)
    rows = np.arange(n)
    encoded[rows, SRC_PORT_OFFSET + port_bins(matrix[:, _SPORT], protocols)] = 1.0
    encoded[rows, DST_PORT_OFFSET + port_bins(matrix[:, _DPORT], protocols)] = 1.0
    encoded[rows, PROTOCOL_OFFSET + protocols] = 1.0
    encoded[:, SCALAR_OFFSET:] = normalize_scalars(matrix[:, len(FEATURE_NAMES) - len(SCALAR_FEATURES):], stats)
    return encoded


def encode_flow(raw: RawFeatureVector, stats: NormStats) -> np.ndarray:
    return encode_rows(raw.to_array()[None, :], stats)[0]


def encode_frame(frame: pd.DataFrame, stats: NormStats) -> np.ndarray:
    return encode_rows(raw_matrix(frame), stats)


def logical_feature_slices() -> Dict[str, slice]:
    """Диапазоны индексов каждого из 23 признаков во входном векторе"""
    slices = {
        'Sport': slice(SRC_PORT_OFFSET, SRC_PORT_OFFSET + PORT_BINS),
        'Dport': slice(DST_PORT_OFFSET, DST_PORT_OFFSET + PORT_BINS),
        'Proto': slice(PROTOCOL_OFFSET, PROTOCOL_OFFSET + PROTOCOL_BINS),
    }
    for i, name in enumerate(SCALAR_FEATURES):
        slices[name] = slice(SCALAR_OFFSET + i, SCALAR_OFFSET + i + 1)
    return slices


class EncodedFlows:
    """
    Ленивый набор закодированных потоков.

    Хранит только сырые признаки (n x 23) и кодирует строки при обращении,
    плотная матрица n x 2848 не создается.
    """

    def __init__(self, raw: np.ndarray, stats: NormStats):
        _check_layout(stats)
        self.raw = np.asarray(raw, dtype=np.float64)
        if self.raw.ndim != 2 or self.raw.shape[1] != len(FEATURE_NAMES):
            raise DataError(f'Ожидалась матрица n x {len(FEATURE_NAMES)}, получено {self.raw.shape}')
        self.stats = stats

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, stats: NormStats) -> 'EncodedFlows':
        return cls(raw_matrix(frame), stats)

    @property
    def dim(self) -> int:
        return ENCODED_DIM

    def __len__(self) -> int:
        return self.raw.shape[0]

    def __getitem__(self, index) -> np.ndarray:
        if isinstance(index, (int, np.integer)):
            return encode_rows(self.raw[index][None, :], self.stats)[0]
        return encode_rows(self.raw[index], self.stats)
