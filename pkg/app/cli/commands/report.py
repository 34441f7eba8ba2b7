"""Сводный отчет по детекциям и кривая устойчивости к шуму"""
import argparse
from pathlib import Path
import logging

import pandas as pd

from app.cli.config import (
    RunConfig, add_hyper_arguments, add_seed_argument, hyper_from_args, parse_float_list, parse_name_list,
)
from app.core.config import SIGNIFICANT_ATTRIBUTION
from app.core.exceptions import UsageError
from app.repositories.bundle import load_bundle
from app.repositories.tables import read_flow_csv, write_json, write_table_csv
from app.schemas import BenignProfile, DatasetSizes, NoiseCurveRow
from app.services.reporting import build_report, noise_tolerance_curve
from app.synth.datasets import SPLITS
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    defaults = DatasetSizes()
    parser = subparsers.add_parser('report', help='отчет по детекциям; опционально кривая устойчивости к шуму')
    parser.add_argument('--model', type=Path, required=True, help='файл модели')
    parser.add_argument('--flows', type=Path, required=True, help='CSV потоков')
    parser.add_argument('--out', type=Path, required=True, help='JSON отчета')
    parser.add_argument(
        '--cutoff', type=float, default=SIGNIFICANT_ATTRIBUTION,
        help='минимальная доля значимого признака (%(default)s)',
    )
    noise = parser.add_argument_group('кривая устойчивости к шуму')
    noise.add_argument('--noise-rates', type=parse_float_list, help='доли шума через запятую, например 0,0.005,0.02')
    noise.add_argument('--noise-out', type=Path, help='CSV кривой (обязателен с --noise-rates)')
    noise.add_argument('--profile', type=Path, help='файл профиля нормального трафика')
    noise.add_argument('--scenarios', type=parse_name_list, help='категории атак через запятую')
    for split in SPLITS:
        noise.add_argument(
            f'--{split}', type=int, default=getattr(defaults, split),
            help=f'потоков в выборке {split} (%(default)s)',
        )
    add_hyper_arguments(parser)
    add_seed_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    inputs = {'model': args.model, 'flows': args.flows}
    outputs = {'report': args.out}
    if args.noise_rates:
        if not args.noise_out:
            raise UsageError('--noise-out обязателен вместе с --noise-rates')
        outputs['noise'] = args.noise_out
        if args.profile:
            inputs['profile'] = args.profile
    config = RunConfig.build(
        command='report',
        seed=args.seed,
        inputs=inputs,
        outputs=outputs,
        hyper=hyper_from_args(args),
        layer_dims=args.layer_dims,
        options={'cutoff': args.cutoff, 'noise_rates': args.noise_rates},
    )

    bundle = load_bundle(config.inputs['model'])
    report = build_report(bundle, read_flow_csv(config.inputs['flows']), config.options['cutoff'])
    write_json(report, config.outputs['report'])

    if 'noise' in config.outputs:
        profile = BenignProfile.from_file(config.inputs['profile']) if 'profile' in config.inputs else BenignProfile()
        rows = noise_tolerance_curve(
            profile,
            ScenarioRegistry.default_scenarios(args.scenarios),
            DatasetSizes(**{split: getattr(args, split) for split in SPLITS}),
            config.options['noise_rates'],
            config.hyper,
            config.seed,
            config.layer_dims,
        )
        table = pd.DataFrame([row.model_dump() for row in rows], columns=list(NoiseCurveRow.model_fields))
        write_table_csv(table, config.outputs['noise'])
    return 0
