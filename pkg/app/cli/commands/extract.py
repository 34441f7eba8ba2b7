"""Агрегация пакетов в потоки"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig
from app.core.config import FLOW_WINDOW_SECONDS
from app.repositories.tables import read_packet_csv, write_flow_csv
from app.services.flow_extract import extract_flows, thin_packets


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('extract', help='собрать потоки из CSV пакетов')
    parser.add_argument('--packets', type=Path, required=True, help='CSV пакетов')
    parser.add_argument('--out', type=Path, required=True, help='CSV потоков')
    parser.add_argument(
        '--window', type=float, default=FLOW_WINDOW_SECONDS,
        help='окно агрегации в секундах (%(default)s)',
    )
    parser.add_argument('--thin', type=int, default=1, help='оставить каждый N-й пакет (%(default)s)')
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = RunConfig.build(
        command='extract',
        inputs={'packets': args.packets},
        outputs={'flows': args.out},
        options={'window': args.window, 'thin': args.thin},
    )
    packets = thin_packets(read_packet_csv(config.inputs['packets']), config.options['thin'])
    frame = extract_flows(packets, config.options['window'])
    write_flow_csv(frame, config.outputs['flows'])
    logger.info('Потоков записано: %s в %s', len(frame), config.outputs['flows'])
    return 0
