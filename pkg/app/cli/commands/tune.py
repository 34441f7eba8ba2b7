"""Базовая модель и случайный поиск гиперпараметров"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig, add_hyper_arguments, add_seed_argument, hyper_from_args
from app.repositories.bundle import save_bundle
from app.repositories.tables import read_flow_csv, write_json
from app.schemas import SearchSpace
from app.services.tuning import RandomSearchTuner


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('tune', help='проверить базовую модель и при необходимости подобрать гиперпараметры')
    parser.add_argument('--train', type=Path, required=True, help='CSV обучающих нормальных потоков')
    parser.add_argument('--threshold', type=Path, required=True, help='CSV нормальных потоков для порога')
    parser.add_argument('--validation', type=Path, required=True, help='размеченный CSV валидации')
    parser.add_argument('--out', type=Path, required=True, help='файл выбранной модели')
    parser.add_argument('--log', type=Path, required=True, help='JSON журнал испытаний')
    parser.add_argument('--trials', type=int, default=20, help='число испытаний (%(default)s)')
    parser.add_argument('--workers', type=int, default=1, help='потоков для испытаний (%(default)s)')
    add_hyper_arguments(parser)
    add_seed_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = RunConfig.build(
        command='tune',
        seed=args.seed,
        inputs={'train': args.train, 'threshold': args.threshold, 'validation': args.validation},
        outputs={'model': args.out, 'log': args.log},
        hyper=hyper_from_args(args),
        layer_dims=args.layer_dims,
        options={'trials': args.trials, 'workers': args.workers},
    )
    search_space = SearchSpace()
    tuner = RandomSearchTuner(
        train=read_flow_csv(config.inputs['train']),
        threshold=read_flow_csv(config.inputs['threshold']),
        validation=read_flow_csv(config.inputs['validation']),
        search_space=search_space,
        trials=config.options['trials'],
        seed=config.seed,
        base_hyper=config.hyper,
        layer_dims=config.layer_dims,
        workers=config.options['workers'],
    )
    bundle = tuner.run()
    save_bundle(bundle, config.outputs['model'])
    write_json({
        'baseline': tuner.baseline_metrics.model_dump(),
        'search_space': search_space.model_dump(),
        'trials': [record.model_dump() for record in tuner.records],
        'selected': bundle.hyper_params.model_dump(),
    }, config.outputs['log'])
    logger.info('Выбраны гиперпараметры: %s', bundle.hyper_params.model_dump())
    return 0
