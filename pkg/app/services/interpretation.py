"""
Интерпретация детекций: атрибуция ошибки по признакам и
контрфактические свипы одного признака по сетке значений.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.autoencoder.model import Autoencoder, iter_reconstructions, reconstruction_errors
from app.core.config import (
    FEATURE_NAMES, SCALAR_FEATURES, SIGNIFICANT_ATTRIBUTION, PORT_GROUP_SIZE, MAX_PORT,
    PROTOCOL_BINS, PORT_PROTOCOLS, settings,
)
from app.core.exceptions import DataError, ModelShapeError
from app.core.seeds import make_rng
from app.schemas import NormStats, RawFeatureVector, Verdict
from app.services.feature_encode import EncodedFlows, logical_feature_slices, normalize_scalars, port_bins


logger = logging.getLogger(__name__)

SIZE_SWEEP_MAX = 512
SUMMARY_COLUMNS = ('grid_value', 'min', 'p2', 'median', 'p98', 'max', 'frac_malicious')

# Имена целей свипа -> колонки признаков
SWEEP_TARGETS: Dict[str, Tuple[str, ...]] = {
    'src_port': ('Sport',),
    'dst_port': ('Dport',),
    'protocol': ('Proto',),
    'size_pair': ('sMaxPktSz', 'sMinPktSz'),
}
GridValue = Union[int, float, Tuple[int, int]]

_SPORT = FEATURE_NAMES.index('Sport')
_DPORT = FEATURE_NAMES.index('Dport')
_PROTO = FEATURE_NAMES.index('Proto')


@dataclass
class AttributionReport:
    flow_id: str
    logical_shares: Dict[str, float]
    element_shares: np.ndarray
    no_error: bool = False

    def share(self, feature: str) -> float:
        return self.logical_shares[feature]

    def to_dict(self) -> Dict:
        return {
            'flow_id': self.flow_id,
            'no_error': self.no_error,
            'shares': dict(self.logical_shares),
        }


def attribute(f_in: np.ndarray, f_out: np.ndarray, flow_id: str = '') -> AttributionReport:
    """Доля квадрата ошибки каждого элемента и каждого из 23 признаков"""
    f_in = np.asarray(f_in, dtype=np.float64)
    f_out = np.asarray(f_out, dtype=np.float64)
    if f_in.shape != f_out.shape:
        raise ModelShapeError(f'Длины не совпадают: {f_in.shape} и {f_out.shape}')

    squared = (f_in - f_out) ** 2
    total = squared.sum()
    if total == 0:
        return AttributionReport(
            flow_id=flow_id,
            logical_shares={name: 0.0 for name in FEATURE_NAMES},
            element_shares=np.zeros_like(squared),
            no_error=True,
        )

    shares = squared / total
    logical = {name: float(shares[part].sum()) for name, part in logical_feature_slices().items()}
    return AttributionReport(flow_id=flow_id, logical_shares=logical, element_shares=shares)


def attribute_batch(f_in: np.ndarray, f_out: np.ndarray) -> np.ndarray:
    """Логические доли для батча: матрица n x 23 в порядке FEATURE_NAMES; нулевая ошибка -> нули"""
    f_in = np.atleast_2d(np.asarray(f_in, dtype=np.float64))
    f_out = np.atleast_2d(np.asarray(f_out, dtype=np.float64))
    if f_in.shape != f_out.shape:
        raise ModelShapeError(f'Формы не совпадают: {f_in.shape} и {f_out.shape}')

    squared = (f_in - f_out) ** 2
    totals = squared.sum(axis=1)
    slices = logical_feature_slices()
    grouped = np.stack([squared[:, slices[name]].sum(axis=1) for name in FEATURE_NAMES], axis=1)
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals[:, None] > 0, grouped / safe[:, None], 0.0)


def attribution_matrix(model: Autoencoder, dataset, chunk: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Логические доли (n x 23) и ошибки реконструкции для всего набора, по блокам"""
    n = len(dataset)
    shares = np.zeros((n, len(FEATURE_NAMES)), dtype=np.float64)
    errors = np.empty(n, dtype=np.float64)
    for start, inputs, outputs in iter_reconstructions(model, dataset, chunk):
        stop = start + inputs.shape[0]
        shares[start:stop] = attribute_batch(inputs, outputs)
        errors[start:stop] = np.mean((inputs - outputs) ** 2, axis=1)
    return shares, errors


def trigger_ratios(report: AttributionReport, error: float, t_det: float) -> Dict[str, float]:
    """share * E / t_det: вклад признака в ошибку в единицах порога"""
    if t_det <= 0:
        return {name: math.inf if share * error > 0 else 0.0 for name, share in report.logical_shares.items()}
    return {name: share * error / t_det for name, share in report.logical_shares.items()}


def single_feature_trigger(report: AttributionReport, error: float, t_det: float) -> Dict[str, bool]:
    """Признак сам по себе вызывает детекцию, если share * E > t_det"""
    return {name: share * error > t_det for name, share in report.logical_shares.items()}


def significant_features(report: AttributionReport, cutoff: float = SIGNIFICANT_ATTRIBUTION) -> Set[str]:
    return {name for name, share in report.logical_shares.items() if share >= cutoff}


def ordered_features(features: Set[str]) -> List[str]:
    return [name for name in FEATURE_NAMES if name in features]


def significant_count_histogram(
    reports: Sequence[AttributionReport],
    cutoff: float = SIGNIFICANT_ATTRIBUTION,
) -> Dict[int, int]:
    """Число детекций по количеству значимых признаков"""
    histogram: Dict[int, int] = {}
    for report in reports:
        count = len(significant_features(report, cutoff))
        histogram[count] = histogram.get(count, 0) + 1
    return dict(sorted(histogram.items()))


def top_k_needed(report: AttributionReport, error: float, t_det: float) -> Optional[int]:
    """
    Минимальное k, при котором k признаков с наибольшей атрибуцией
    сами дают ошибку выше порога; None, если поток не детектирован.
    """
    if not error > t_det:
        return None
    mass = 0.0
    for k, share in enumerate(sorted(report.logical_shares.values(), reverse=True), start=1):
        mass += share * error
        if mass > t_det:
            return k
    return len(report.logical_shares)


# ---------------------------------------------------------------- свипы


@dataclass
class SweepResult:
    base_flow_id: str
    target: str
    grid: List[GridValue]
    errors: np.ndarray
    normalized: np.ndarray
    malicious: np.ndarray
    base_error: float


@dataclass
class SweepSummary:
    target: str
    grid: List[GridValue]
    min: np.ndarray
    p2: np.ndarray
    median: np.ndarray
    p98: np.ndarray
    max: np.ndarray
    frac_malicious: np.ndarray
    n_base: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'grid_value': [format_grid_value(value) for value in self.grid],
            'min': self.min,
            'p2': self.p2,
            'median': self.median,
            'p98': self.p98,
            'max': self.max,
            'frac_malicious': self.frac_malicious,
        }, columns=list(SUMMARY_COLUMNS))


def resolve_target(target: str) -> Tuple[str, ...]:
    if target in SWEEP_TARGETS:
        return SWEEP_TARGETS[target]
    if target in FEATURE_NAMES:
        return (target,)
    raise DataError(f'Неизвестный признак для свипа "{target}"; доступны {sorted(SWEEP_TARGETS)} и {list(FEATURE_NAMES)}')


def default_grid(target: str) -> List[GridValue]:
    features = resolve_target(target)
    if features in (('Sport',), ('Dport',)):
        return list(range(0, MAX_PORT + 1, PORT_GROUP_SIZE))
    if features == ('Proto',):
        return list(range(PROTOCOL_BINS))
    if len(features) == 2:
        sizes = range(SIZE_SWEEP_MAX + 1)
        return [(s_max, s_min) for s_max in sizes for s_min in sizes]
    raise DataError(f'Для признака "{target}" нет сетки по умолчанию, задайте значения явно')


def format_grid_value(value: GridValue) -> str:
    if isinstance(value, tuple):
        return ':'.join(str(part) for part in value)
    return str(value)


def parse_grid(target: str, text: str) -> List[GridValue]:
    """Сетка из строки: 'a,b,c' или 'start:stop:step' (stop включительно); для пар - 'max:min,...'"""
    features = resolve_target(target)
    values: List[GridValue] = []
    for item in filter(None, (part.strip() for part in text.split(','))):
        if len(features) == 2:
            s_max, _, s_min = item.partition(':')
            values.append((int(s_max), int(s_min)))
        elif item.count(':') == 2:
            start, stop, step = (int(part) for part in item.split(':'))
            values.extend(range(start, stop + 1, step))
        else:
            values.append(float(item) if '.' in item or 'e' in item.lower() else int(item))
    if not values:
        raise DataError('Пустая сетка свипа')
    return values


def perturb(base: np.ndarray, target: str, grid: Sequence[GridValue]) -> np.ndarray:
    """Матрица len(grid) x 23: копии базового потока с измененным признаком"""
    features = resolve_target(target)
    rows = np.repeat(np.asarray(base, dtype=np.float64)[None, :], len(grid), axis=0)
    if len(features) == 2:
        pairs = np.asarray(grid, dtype=np.float64).reshape(len(grid), 2)
        rows[:, FEATURE_NAMES.index(features[0])] = pairs[:, 0]
        rows[:, FEATURE_NAMES.index(features[1])] = pairs[:, 1]
        return rows

    column = FEATURE_NAMES.index(features[0])
    rows[:, column] = np.asarray(grid, dtype=np.float64)
    if column == _PROTO:
        # Протоколы без портов кодируются с портом 0
        portless = ~np.isin(rows[:, _PROTO], PORT_PROTOCOLS)
        rows[portless, _SPORT] = 0
        rows[portless, _DPORT] = 0
    return rows


def encoding_keys(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    """Компактный ключ строки, однозначно задающий ее закодированный вектор"""
    protocols = matrix[:, _PROTO].astype(np.int64)
    scalars = normalize_scalars(matrix[:, len(FEATURE_NAMES) - len(SCALAR_FEATURES):], stats)
    return np.column_stack([
        port_bins(matrix[:, _SPORT], protocols),
        port_bins(matrix[:, _DPORT], protocols),
        protocols,
        scalars,
    ]).astype(np.float64)


def unique_errors(model: Autoencoder, matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    """
    Ошибки реконструкции для строк сырых признаков; строки с одинаковым кодированием
    вычисляются один раз и получают одно и то же значение.
    """
    _, first, inverse = np.unique(encoding_keys(matrix, stats), axis=0, return_index=True, return_inverse=True)
    errors = reconstruction_errors(model, EncodedFlows(matrix[first], stats))
    return errors[inverse.reshape(-1)]


def counterfactual_sweep(
    model: Autoencoder,
    t_det: float,
    base: Union[RawFeatureVector, np.ndarray],
    stats: NormStats,
    target: str,
    grid: Optional[Sequence[GridValue]] = None,
    flow_id: str = '',
) -> SweepResult:
    """Ошибки базового потока при замене целевого признака значениями сетки"""
    grid = list(grid) if grid is not None else default_grid(target)
    if not grid:
        raise DataError('Пустая сетка свипа')
    base_row = base.to_array() if isinstance(base, RawFeatureVector) else np.asarray(base, dtype=np.float64)

    # Базовый поток считается вместе с сеткой
    matrix = np.vstack([base_row[None, :], perturb(base_row, target, grid)])
    errors = unique_errors(model, matrix, stats)
    base_error = float(errors[0])
    grid_errors = errors[1:]

    peak = grid_errors.max()
    normalized = grid_errors / peak if peak > 0 else np.zeros_like(grid_errors)
    return SweepResult(
        base_flow_id=flow_id,
        target=target,
        grid=grid,
        errors=grid_errors,
        normalized=normalized,
        malicious=grid_errors > t_det,
        base_error=base_error,
    )


def sweep_flows(
    model: Autoencoder,
    t_det: float,
    bases: np.ndarray,
    stats: NormStats,
    target: str,
    grid: Optional[Sequence[GridValue]] = None,
    flow_ids: Optional[Sequence[str]] = None,
) -> List[SweepResult]:
    grid = list(grid) if grid is not None else default_grid(target)
    flow_ids = flow_ids if flow_ids is not None else [str(i) for i in range(len(bases))]
    logger.info('Свип "%s": базовых потоков %s, точек сетки %s', target, len(bases), len(grid))
    return [
        counterfactual_sweep(model, t_det, base, stats, target, grid, flow_id)
        for base, flow_id in tqdm(list(zip(bases, flow_ids)), desc=f'sweep {target}', disable=not settings.PROGRESS)
    ]


def nearest_rank(sorted_values: np.ndarray, percent: int) -> np.ndarray:
    """Перцентиль по ближайшему рангу вдоль оси 0 отсортированного массива"""
    n = sorted_values.shape[0]
    rank = max(1, -(-percent * n // 100))
    return sorted_values[rank - 1]


def sweep_summary(sweeps: Sequence[SweepResult]) -> SweepSummary:
    if not sweeps:
        raise DataError('Нет свипов для сводки')
    first = sweeps[0]
    for sweep in sweeps[1:]:
        if sweep.target != first.target or sweep.grid != first.grid:
            raise DataError('Свипы имеют разные цели или сетки')

    normalized = np.sort(np.stack([sweep.normalized for sweep in sweeps]), axis=0)
    malicious = np.stack([sweep.malicious for sweep in sweeps])
    return SweepSummary(
        target=first.target,
        grid=list(first.grid),
        min=normalized[0],
        p2=nearest_rank(normalized, 2),
        median=nearest_rank(normalized, 50),
        p98=nearest_rank(normalized, 98),
        max=normalized[-1],
        frac_malicious=malicious.mean(axis=0),
        n_base=len(sweeps),
    )


def sample_base_flows(
    verdicts: Sequence[Verdict],
    n: int,
    seed: int,
    eligible: Optional[np.ndarray] = None,
) -> List[int]:
    """Индексы n случайных потоков с вердиктом benign (в порядке возрастания)"""
    candidates = np.array(
        [i for i, verdict in enumerate(verdicts) if not verdict.malicious and (eligible is None or eligible[i])],
        dtype=np.int64,
    )
    if len(candidates) < n:
        logger.warning('Запрошено %s базовых потоков, доступно только %s', n, len(candidates))
        return candidates.tolist()
    chosen = make_rng(seed, 'sampling').choice(candidates, size=n, replace=False)
    return sorted(int(i) for i in chosen)


def gnuplot_script(summary: SweepSummary, csv_path: str) -> str:
    """Скрипт gnuplot в стиле box-whisker для одномерной сводки"""
    if len(resolve_target(summary.target)) != 1:
        raise DataError('Скрипт gnuplot строится только для одномерных свипов')
    return '\n'.join([
        "set datafile separator ','",
        'set key off',
        f"set title 'Normalized reconstruction errors, {summary.n_base} base flows'",
        f"set xlabel '{summary.target}'",
        "set ylabel 'normalized error'",
        'set yrange [0:1.05]',
        'set boxwidth 0.8 relative',
        'set style fill empty',
        # candlesticks: x, низ ящика, низ уса, верх уса, верх ящика
        f"plot '{csv_path}' every ::1 using 1:3:2:6:5 with candlesticks whiskerbars, \\",
        f"     '{csv_path}' every ::1 using 1:4:4:4:4 with candlesticks lt -1",
        '',
    ])
