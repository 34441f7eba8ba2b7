from typing import List
import logging

import pandas as pd

from app.core.config import TCP_OPTION_FLAGS, PROTO_TCP, PROTO_UDP
from app.core.seeds import make_rng
from app.schemas import PacketRecord


logger = logging.getLogger(__name__)

# Длина заголовков IP + транспортного уровня
HEADER_SIZES = {PROTO_UDP: 28, PROTO_TCP: 40}
IP_HEADER_SIZE = 20
CAPTURE_SPAN_SECONDS = 3600.0


def flows_to_packets(frame: pd.DataFrame, seed: int) -> List[PacketRecord]:
    """
    Пакеты, из которых compute_features восстанавливает признаки потоков.

    Первый пакет размера sMaxPktSz, остальные sMinPktSz, интервал SIntPkt;
    опции TCP и номер последовательности - на первом пакете.
    """
    rng = make_rng(seed, 'packets')
    starts = (rng.uniform(0.0, CAPTURE_SPAN_SECONDS, size=len(frame)) * 1e6).round() / 1e6
    packets = []

    for start, row in zip(starts, frame.to_dict('records')):
        proto = int(row['protocol'])
        count = int(row['SrcPkts'])
        gap = float(row['SIntPkt']) / 1000.0
        header = HEADER_SIZES.get(proto, IP_HEADER_SIZE)
        options = tuple(bool(row[f'TcpOpt_{flag}']) for flag in TCP_OPTION_FLAGS)
        no_options = (False,) * len(TCP_OPTION_FLAGS)

        for k in range(count):
            size = int(row['sMaxPktSz'] if k == 0 else row['sMinPktSz'])
            packets.append(PacketRecord(
                timestamp=float(start + k * gap),
                src_ip=row['src_ip'],
                dst_ip=row['dst_ip'],
                src_port=int(row['src_port']),
                dst_port=int(row['dst_port']),
                protocol=proto,
                packet_size=size,
                payload_size=max(size - header, 0),
                ttl=int(row['sTtl']),
                tcp_options=options if k == 0 else no_options,
                tcp_seq=int(row['SrcTCPBase']) + k if proto == PROTO_TCP else None,
            ))

    packets.sort(key=lambda packet: packet.timestamp)
    logger.info('Сгенерировано пакетов: %s для %s потоков', len(packets), len(frame))
    return packets
