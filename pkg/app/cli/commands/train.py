"""Обучение модели и расчет порога"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig, add_hyper_arguments, add_seed_argument, hyper_from_args
from app.repositories.bundle import save_bundle
from app.repositories.tables import read_flow_csv
from app.services.pipeline import fit_bundle


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('train', help='обучить автоэнкодер и посчитать порог детекции')
    parser.add_argument('--train', type=Path, required=True, help='CSV обучающих нормальных потоков')
    parser.add_argument('--threshold', type=Path, required=True, help='CSV нормальных потоков для порога')
    parser.add_argument('--out', type=Path, required=True, help='файл модели')
    add_hyper_arguments(parser)
    add_seed_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = RunConfig.build(
        command='train',
        seed=args.seed,
        inputs={'train': args.train, 'threshold': args.threshold},
        outputs={'model': args.out},
        hyper=hyper_from_args(args),
        layer_dims=args.layer_dims,
    )
    bundle = fit_bundle(
        read_flow_csv(config.inputs['train']),
        read_flow_csv(config.inputs['threshold']),
        config.hyper,
        config.layer_dims,
    )
    save_bundle(bundle, config.outputs['model'])
    print(f'final_loss={bundle.metadata.final_loss!r} t_det={bundle.threshold.t_det!r}')
    return 0
