from typing import Iterable, List, Sequence, Tuple, Dict, Union, IO
import io
import logging

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.config import (
    FLOW_WINDOW_SECONDS, DURATION_EPSILON, TCP_OPTION_FLAGS, PORT_PROTOCOLS, FEATURE_NAMES,
)
from app.core.exceptions import DataError, PacketFormatError
from app.schemas import PacketRecord, FlowKey, RawFeatureVector


logger = logging.getLogger(__name__)

# Колонки CSV пакетов, порядок фиксирован
PACKET_COLUMNS = (
    'ts', 'src_ip', 'dst_ip', 'src_port', 'dst_port', 'proto',
    'pkt_size', 'payload_size', 'ttl', 'tcp_opts', 'tcp_seq',
)
KEY_COLUMNS = ('src_ip', 'dst_ip', 'src_port', 'dst_port', 'protocol')

_INT_COLUMNS = ('src_port', 'dst_port', 'proto', 'pkt_size', 'payload_size', 'ttl')
_FIELD_BY_COLUMN = {
    'ts': 'timestamp',
    'proto': 'protocol',
    'pkt_size': 'packet_size',
    'tcp_opts': 'tcp_options',
}
_COLUMN_BY_FIELD = {field: column for column, field in _FIELD_BY_COLUMN.items()}

FlowGroup = Tuple[FlowKey, List[PacketRecord]]


def parse_tcp_options(bits: str) -> Tuple[bool, ...]:
    """Строка из 12 символов '0'/'1' в порядке TCP_OPTION_FLAGS"""
    if len(bits) != len(TCP_OPTION_FLAGS) or set(bits) - {'0', '1'}:
        raise ValueError(f'ожидалась строка из {len(TCP_OPTION_FLAGS)} символов 0/1, получено "{bits}"')
    return tuple(bit == '1' for bit in bits)


def format_tcp_options(options: Sequence[bool]) -> str:
    return ''.join('1' if flag else '0' for flag in options)


def _parse_row(row_number: int, row: Dict[str, str]) -> PacketRecord:
    values = {}
    for column in PACKET_COLUMNS:
        raw = row[column].strip()
        field = _FIELD_BY_COLUMN.get(column, column)
        try:
            if column == 'ts':
                values[field] = float(raw)
            elif column in _INT_COLUMNS:
                values[field] = int(raw)
            elif column == 'tcp_opts':
                values[field] = parse_tcp_options(raw) if raw else (False,) * len(TCP_OPTION_FLAGS)
            elif column == 'tcp_seq':
                values[field] = int(raw) if raw else None
            else:
                if not raw:
                    raise ValueError('пустое значение')
                values[field] = raw
        except ValueError as e:
            raise PacketFormatError(row_number, column, str(e)) from e

    # Инварианты, которые зависят от нескольких колонок
    if values['payload_size'] > values['packet_size']:
        raise PacketFormatError(row_number, 'payload_size', 'payload_size больше pkt_size')
    if values['protocol'] not in PORT_PROTOCOLS and (values['src_port'] or values['dst_port']):
        column = 'src_port' if values['src_port'] else 'dst_port'
        raise PacketFormatError(row_number, column, f'порт должен быть 0 для протокола {values["protocol"]}')

    try:
        return PacketRecord(**values)
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error['loc'][0]) if error['loc'] else 'timestamp'
        raise PacketFormatError(row_number, _COLUMN_BY_FIELD.get(field, field), error['msg']) from e


def parse_packet_records(stream: Union[IO[str], IO[bytes], str, bytes]) -> List[PacketRecord]:
    """
    Разбор CSV пакетов.

    Номер строки в ошибках считается по данным (первая строка после заголовка - 1).
    """
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)

    try:
        frame = pd.read_csv(stream, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise PacketFormatError(0, 'header', 'пустой файл') from e
    except pd.errors.ParserError as e:
        raise DataError(f'Ошибка разбора CSV пакетов: {e}') from e

    missing = [column for column in PACKET_COLUMNS if column not in frame.columns]
    if missing:
        raise PacketFormatError(0, missing[0], 'нет колонки в заголовке')

    packets = [
        _parse_row(row_number, row)
        for row_number, row in enumerate(frame[list(PACKET_COLUMNS)].to_dict('records'), start=1)
    ]
    logger.debug('Прочитано пакетов: %s', len(packets))
    return packets


def packets_to_frame(packets: Iterable[PacketRecord]) -> pd.DataFrame:
    """Пакеты в таблицу колонок PACKET_COLUMNS"""
    rows = [
        {
            'ts': repr(packet.timestamp),
            'src_ip': packet.src_ip,
            'dst_ip': packet.dst_ip,
            'src_port': packet.src_port,
            'dst_port': packet.dst_port,
            'proto': packet.protocol,
            'pkt_size': packet.packet_size,
            'payload_size': packet.payload_size,
            'ttl': packet.ttl,
            'tcp_opts': format_tcp_options(packet.tcp_options),
            'tcp_seq': '' if packet.tcp_seq is None else packet.tcp_seq,
        }
        for packet in packets
    ]
    return pd.DataFrame(rows, columns=list(PACKET_COLUMNS))


def thin_packets(packets: Sequence[PacketRecord], every: int) -> List[PacketRecord]:
    """Сэмплирование 1-из-N в порядке прихода"""
    if every < 1:
        raise DataError(f'Шаг сэмплирования должен быть >= 1, получено {every}')
    return list(packets[::every])


def aggregate_flows(
    packets: Sequence[PacketRecord],
    window: float = FLOW_WINDOW_SECONDS,
) -> List[FlowGroup]:
    """Группировка пакетов в 5-tuple потоки; в потоке остаются пакеты первых `window` секунд"""
    ordered = sorted(packets, key=lambda packet: packet.timestamp)
    flows: Dict[FlowKey, List[PacketRecord]] = {}

    for packet in ordered:
        key = packet.key
        group = flows.get(key)
        if group is None:
            flows[key] = [packet]
        elif packet.timestamp < group[0].timestamp + window:
            group.append(packet)

    logger.debug('Пакетов: %s, потоков: %s', len(ordered), len(flows))
    return list(flows.items())


def compute_features(flow: FlowGroup) -> RawFeatureVector:
    key, packets = flow
    if not packets:
        raise DataError(f'Поток {key} не содержит пакетов')

    timestamps = np.array([packet.timestamp for packet in packets], dtype=np.float64)
    sizes = [packet.packet_size for packet in packets]
    count = len(packets)

    duration = float(timestamps[-1] - timestamps[0])
    denominator = max(duration, DURATION_EPSILON)
    int_pkt = float(np.diff(timestamps).mean() * 1000.0) if count > 1 else 0.0

    options = [any(packet.tcp_options[i] for packet in packets) for i in range(len(TCP_OPTION_FLAGS))]
    tcp_base = packets[0].tcp_seq

    values = {
        'Sport': key.src_port,
        'Dport': key.dst_port,
        'Proto': key.protocol,
        'SrcPkts': count,
        'SrcRate': count / denominator,
        'SrcLoad': 8.0 * sum(sizes) / denominator,
        'SIntPkt': int_pkt,
        'sTtl': packets[-1].ttl,
        'sMaxPktSz': max(sizes),
        'sMinPktSz': min(sizes),
        'SrcTCPBase': tcp_base if tcp_base is not None else 0,
    }
    for flag, is_set in zip(TCP_OPTION_FLAGS, options):
        values[f'TcpOpt_{flag}'] = int(is_set)
    return RawFeatureVector.model_validate(values)


def extract_flows(
    packets: Sequence[PacketRecord],
    window: float = FLOW_WINDOW_SECONDS,
    id_prefix: str = 'flow',
) -> pd.DataFrame:
    """Таблица потоков: flow_id, колонки FlowKey и 23 признака"""
    rows = []
    for i, (key, group) in enumerate(aggregate_flows(packets, window)):
        features = compute_features((key, group))
        row = {'flow_id': f'{id_prefix}-{i:07d}'}
        row.update(key.model_dump())
        row.update(features.to_row())
        rows.append(row)

    logger.info('Извлечено потоков: %s из %s пакетов', len(rows), len(packets))
    return pd.DataFrame(rows, columns=['flow_id', *KEY_COLUMNS, *FEATURE_NAMES])


def flow_vectors(frame: pd.DataFrame) -> List[RawFeatureVector]:
    """Строки таблицы потоков в RawFeatureVector (с проверкой инвариантов)"""
    missing = [name for name in FEATURE_NAMES if name not in frame.columns]
    if missing:
        raise DataError(f'В таблице потоков нет колонок: {missing}')
    try:
        return [RawFeatureVector.from_mapping(row) for row in frame[list(FEATURE_NAMES)].to_dict('records')]
    except (ValidationError, ValueError) as e:
        raise DataError(f'Некорректный поток: {e}') from e
