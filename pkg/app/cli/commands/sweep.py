"""Контрфактические свипы по одному признаку"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig, add_seed_argument
from app.core.exceptions import DataError
from app.repositories.bundle import load_bundle
from app.repositories.tables import read_flow_csv, write_table_csv
from app.services.feature_encode import raw_matrix
from app.services.interpretation import (
    SUMMARY_COLUMNS, SWEEP_TARGETS, default_grid, gnuplot_script, parse_grid,
    resolve_target, sample_base_flows, sweep_flows, sweep_summary,
)
from app.services.pipeline import detect_frame, flow_ids


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('sweep', help='свип признака по сетке значений для нормальных потоков')
    parser.add_argument('--model', type=Path, required=True, help='файл модели')
    parser.add_argument('--flows', type=Path, required=True, help='CSV потоков-кандидатов')
    parser.add_argument('--out', type=Path, required=True, help='CSV сводки свипа')
    parser.add_argument(
        '--target', required=True,
        help=f'признак: {", ".join(sorted(SWEEP_TARGETS))} или имя признака потока',
    )
    parser.add_argument('--grid', help='значения сетки: "a,b,c", "start:stop:step" или "max:min,..." для size_pair')
    parser.add_argument('--n-base', type=int, default=100, help='число базовых потоков (%(default)s)')
    parser.add_argument('--protocol', type=int, help='брать базовые потоки только с этим протоколом')
    parser.add_argument('--gnuplot', type=Path, help='записать скрипт gnuplot для одномерной сводки')
    add_seed_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    outputs = {'summary': args.out}
    if args.gnuplot:
        outputs['gnuplot'] = args.gnuplot
    config = RunConfig.build(
        command='sweep',
        seed=args.seed,
        inputs={'model': args.model, 'flows': args.flows},
        outputs=outputs,
        options={'target': args.target, 'grid': args.grid, 'n_base': args.n_base, 'protocol': args.protocol},
    )
    target = config.options['target']
    resolve_target(target)
    if config.options['n_base'] < 1:
        raise DataError(f'Число базовых потоков должно быть >= 1, получено {config.options["n_base"]}')
    grid = parse_grid(target, config.options['grid']) if config.options['grid'] else default_grid(target)

    bundle = load_bundle(config.inputs['model'])
    frame = read_flow_csv(config.inputs['flows'])
    verdicts = detect_frame(bundle, frame)
    eligible = None
    if config.options['protocol'] is not None:
        eligible = (frame['Proto'] == config.options['protocol']).to_numpy()
    indices = sample_base_flows(verdicts, config.options['n_base'], config.seed, eligible)
    if not indices:
        raise DataError('Нет потоков с вердиктом benign для свипа')

    ids = flow_ids(frame)
    sweeps = sweep_flows(
        bundle.model,
        bundle.threshold.t_det,
        raw_matrix(frame)[indices],
        bundle.norm_stats,
        target,
        grid,
        [ids[i] for i in indices],
    )
    summary = sweep_summary(sweeps)
    write_table_csv(summary.to_frame(), config.outputs['summary'], SUMMARY_COLUMNS)
    if 'gnuplot' in config.outputs:
        config.outputs['gnuplot'].write_text(gnuplot_script(summary, str(config.outputs['summary'])), encoding='utf-8')
    logger.info('Сводка свипа "%s": %s точек, %s базовых потоков', target, len(grid), summary.n_base)
    return 0
