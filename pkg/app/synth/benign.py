from typing import Dict, Optional
import logging
import math

import numpy as np
import pandas as pd

from app.core.config import (
    FEATURE_NAMES, TCP_OPTION_FLAGS, PORT_PROTOCOLS, PROTO_TCP, DURATION_EPSILON,
    FLOW_WINDOW_SECONDS, FlowLabel,
)
from app.core.exceptions import DataError
from app.core.seeds import make_rng
from app.schemas import BenignProfile, BENIGN_TCP_OPTIONS
from app.synth.base import Columns
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)

PKTS_LOG_SIGMA = 0.9
VIP_ADDRESS = '203.0.113.10'

# Последний пакет потока должен прийти раньше конца окна
_MAX_DURATION_MS = FLOW_WINDOW_SECONDS * 1000.0 - 1.0


def weighted_choice(rng: np.random.Generator, weights: Dict[int, float], n: int) -> np.ndarray:
    keys = np.array(list(weights.keys()), dtype=np.int64)
    probs = np.array(list(weights.values()), dtype=np.float64)
    return rng.choice(keys, size=n, p=probs / probs.sum())


def ip_addresses(prefix: str, n: int, offset: int = 0) -> np.ndarray:
    """Уникальные адреса вида prefix.x.y.z по номеру потока"""
    index = np.arange(offset, offset + n)
    return np.array(
        [f'{prefix}.{(i >> 16) & 255}.{(i >> 8) & 255}.{i & 255}' for i in index],
        dtype=object,
    )


def sample_src_ports(profile: BenignProfile, rng: np.random.Generator, n: int) -> np.ndarray:
    """Частые порты источника по весам, остаток равномерно по хвосту"""
    frequent = list(profile.src_ports.items())
    ports = rng.integers(profile.src_port_tail[0], profile.src_port_tail[1] + 1, size=n)
    if frequent:
        draws = rng.random(n)
        edges = np.cumsum([weight for _, weight in frequent])
        slot = np.searchsorted(edges, draws, side='right')
        for i, (port, _) in enumerate(frequent):
            ports[slot == i] = port
    return ports


def sample_benign_columns(profile: BenignProfile, n: int, rng: np.random.Generator) -> Columns:
    """Сырые признаки n нормальных потоков (до согласования производных полей)"""
    columns: Columns = {
        'Proto': weighted_choice(rng, profile.protocols, n),
        'Dport': weighted_choice(rng, profile.wl_dst_ports, n),
        'Sport': sample_src_ports(profile, rng, n),
    }

    cluster_weights = np.array([cluster.weight for cluster in profile.size_clusters])
    clusters = rng.choice(len(profile.size_clusters), size=n, p=cluster_weights / cluster_weights.sum())
    s_max = np.zeros(n, dtype=np.int64)
    s_min = np.zeros(n, dtype=np.int64)
    for i, cluster in enumerate(profile.size_clusters):
        members = clusters == i
        count = int(members.sum())
        s_max[members] = rng.integers(cluster.max_range[0], cluster.max_range[1] + 1, size=count)
        s_min[members] = rng.integers(cluster.min_range[0], cluster.min_range[1] + 1, size=count)
    columns['sMaxPktSz'] = s_max
    columns['sMinPktSz'] = s_min

    pkts = np.rint(rng.lognormal(math.log(profile.pkts_median), PKTS_LOG_SIGMA, size=n))
    columns['SrcPkts'] = np.clip(pkts, *profile.pkts_range).astype(np.int64)

    # Межпакетный интервал: лог-равномерно, мс с точностью до микросекунды
    low, high = profile.int_pkt_range_ms
    columns['SIntPkt'] = np.round(np.exp(rng.uniform(math.log(low), math.log(high), size=n)), 3)
    columns['sTtl'] = rng.integers(profile.ttl_range[0], profile.ttl_range[1] + 1, size=n)
    columns['SrcTCPBase'] = rng.integers(1, 2 ** 32, size=n, dtype=np.int64)
    for flag in TCP_OPTION_FLAGS:
        if flag in BENIGN_TCP_OPTIONS:
            columns[f'TcpOpt_{flag}'] = (rng.random(n) < profile.tcp_option_rate).astype(np.int64)
        else:
            columns[f'TcpOpt_{flag}'] = np.zeros(n, dtype=np.int64)
    return columns


def finalize_columns(columns: Columns) -> pd.DataFrame:
    """
    Согласование полей потока и расчет производных признаков.

    Поток задается как первый пакет размера sMaxPktSz и остальные размера
    sMinPktSz с равными интервалами SIntPkt.
    """
    proto = np.asarray(columns['Proto'], dtype=np.int64)
    portless = ~np.isin(proto, PORT_PROTOCOLS)
    tcp = proto == PROTO_TCP

    sport = np.where(portless, 0, columns['Sport']).astype(np.int64)
    dport = np.where(portless, 0, columns['Dport']).astype(np.int64)
    pkts = np.asarray(columns['SrcPkts'], dtype=np.int64)
    s_max = np.asarray(columns['sMaxPktSz'], dtype=np.int64)
    s_min = np.minimum(np.asarray(columns['sMinPktSz'], dtype=np.int64), s_max)
    s_min = np.where(pkts == 1, s_max, s_min)

    gaps = np.maximum(pkts - 1, 1)
    max_gaps = np.floor(_MAX_DURATION_MS / gaps * 1000.0) / 1000.0
    int_pkt = np.where(pkts > 1, np.minimum(columns['SIntPkt'], max_gaps), 0.0)
    duration = (pkts - 1) * int_pkt / 1000.0
    denominator = np.maximum(duration, DURATION_EPSILON)
    total_bytes = s_max + (pkts - 1) * s_min

    frame = pd.DataFrame({
        'Sport': sport,
        'Dport': dport,
        'Proto': proto,
        'SrcPkts': pkts,
        'SrcRate': pkts / denominator,
        'SrcLoad': 8.0 * total_bytes / denominator,
        'SIntPkt': int_pkt,
        'sTtl': np.asarray(columns['sTtl'], dtype=np.int64),
        'sMaxPktSz': s_max,
        'sMinPktSz': s_min,
        'SrcTCPBase': np.where(tcp, columns['SrcTCPBase'], 0).astype(np.int64),
    })
    for flag in TCP_OPTION_FLAGS:
        frame[f'TcpOpt_{flag}'] = np.where(tcp, columns[f'TcpOpt_{flag}'], 0).astype(np.int64)
    return frame[list(FEATURE_NAMES)]


def flow_table(
    features: pd.DataFrame,
    id_prefix: str,
    label: FlowLabel,
    categories: Optional[np.ndarray] = None,
    ip_prefix: str = '10',
) -> pd.DataFrame:
    """Добавить flow_id, колонки FlowKey, label и category к признакам"""
    n = len(features)
    frame = pd.DataFrame({
        'flow_id': [f'{id_prefix}-{i:07d}' for i in range(n)],
        'src_ip': ip_addresses(ip_prefix, n),
        'dst_ip': VIP_ADDRESS,
        'src_port': features['Sport'].to_numpy(),
        'dst_port': features['Dport'].to_numpy(),
        'protocol': features['Proto'].to_numpy(),
    })
    frame = pd.concat([frame, features.reset_index(drop=True)], axis=1)
    frame['label'] = label.value
    frame['category'] = categories if categories is not None else ''
    return frame


def generate_benign(profile: BenignProfile, n: int, seed: int, id_prefix: str = 'benign') -> pd.DataFrame:
    """
    n нормальных потоков по профилю.

    Доля noise_rate заменяется потоками атак, но с меткой benign;
    их категория сохраняется в колонке category.
    """
    if n < 1:
        raise DataError(f'Число потоков должно быть >= 1, получено {n}')

    rng = make_rng(seed, 'benign')
    columns = sample_benign_columns(profile, n, rng)
    categories = np.full(n, '', dtype=object)

    n_noise = int(round(n * profile.noise_rate))
    if n_noise:
        noise_rng = make_rng(seed, 'noise')
        indices = np.sort(noise_rng.choice(n, size=n_noise, replace=False))
        available = ScenarioRegistry.categories()
        for k, category in enumerate(available):
            chosen = indices[k::len(available)]
            if not len(chosen):
                continue
            part = {name: values[chosen].copy() for name, values in columns.items()}
            ScenarioRegistry.get_scenario(category, profile).apply(part, noise_rng)
            for name, values in part.items():
                columns[name] = columns[name].astype(np.result_type(columns[name], values))
                columns[name][chosen] = values
            categories[chosen] = category.value
        logger.debug('Шумовых потоков: %s из %s', n_noise, n)

    return flow_table(finalize_columns(columns), id_prefix, FlowLabel.BENIGN, categories)


def frequent_values(frame: pd.DataFrame, feature: str, min_share: float = 0.01) -> pd.DataFrame:
    """
    Частые значения признака в таблице потоков: value, count, share.

    feature='size_pair' считает пары sMaxPktSz:sMinPktSz.
    """
    if frame.empty:
        return pd.DataFrame(columns=['value', 'count', 'share'])
    if feature == 'size_pair':
        values = frame['sMaxPktSz'].astype(str) + ':' + frame['sMinPktSz'].astype(str)
    elif feature in frame.columns:
        values = frame[feature]
    else:
        raise DataError(f'Нет признака "{feature}"')

    counts = values.value_counts()
    table = pd.DataFrame({'value': counts.index, 'count': counts.to_numpy()})
    table['share'] = table['count'] / len(frame)
    table = table.sort_values(['count', 'value'], ascending=[False, True], kind='mergesort')
    return table[table['share'] >= min_share].reset_index(drop=True)
