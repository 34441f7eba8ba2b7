"""Атрибуция ошибки для детектированных потоков"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig
from app.core.config import SIGNIFICANT_ATTRIBUTION
from app.repositories.bundle import load_bundle
from app.repositories.tables import read_flow_csv, write_json
from app.services.reporting import analyze_frame, detection_records


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('attribute', help='доли признаков в ошибке детектированных потоков')
    parser.add_argument('--model', type=Path, required=True, help='файл модели')
    parser.add_argument('--flows', type=Path, required=True, help='CSV потоков')
    parser.add_argument('--out', type=Path, required=True, help='JSON атрибуции')
    parser.add_argument(
        '--cutoff', type=float, default=SIGNIFICANT_ATTRIBUTION,
        help='минимальная доля значимого признака (%(default)s)',
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = RunConfig.build(
        command='attribute',
        inputs={'model': args.model, 'flows': args.flows},
        outputs={'attribution': args.out},
        options={'cutoff': args.cutoff},
    )
    bundle = load_bundle(config.inputs['model'])
    analysis = analyze_frame(bundle, read_flow_csv(config.inputs['flows']))
    t_det = bundle.threshold.t_det
    records = detection_records(analysis, t_det, config.options['cutoff'])
    write_json({
        't_det': t_det,
        'cutoff': config.options['cutoff'],
        'flows': records,
    }, config.outputs['attribution'])
    logger.info('Атрибуция записана для %s детектированных потоков', len(records))
    return 0
