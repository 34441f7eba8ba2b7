"""Генерация синтетических выборок train/threshold/validation/test"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig, add_seed_argument, parse_name_list
from app.core.seeds import derive_seed
from app.repositories.tables import atomic_outputs, write_flow_csv, write_packet_csv
from app.schemas import BenignProfile, DatasetSizes
from app.synth.datasets import SPLITS, make_datasets
from app.synth.packets import flows_to_packets
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    defaults = DatasetSizes()
    parser = subparsers.add_parser('synth', help='сгенерировать синтетические выборки потоков')
    parser.add_argument('--out-dir', type=Path, required=True, help='каталог для CSV выборок')
    parser.add_argument('--profile', type=Path, help='файл профиля нормального трафика')
    parser.add_argument(
        '--scenarios', type=parse_name_list,
        help='категории атак через запятую (по умолчанию все зарегистрированные)',
    )
    for split in SPLITS:
        parser.add_argument(
            f'--{split}', type=int, default=getattr(defaults, split),
            help=f'потоков в выборке {split} (%(default)s)',
        )
    parser.add_argument('--packets', action='store_true', help='также записать пакеты каждой выборки')
    add_seed_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    outputs = {split: args.out_dir / f'{split}.csv' for split in SPLITS}
    if args.packets:
        outputs.update({f'{split}_packets': args.out_dir / f'{split}_packets.csv' for split in SPLITS})
    config = RunConfig.build(
        command='synth',
        seed=args.seed,
        inputs={'profile': args.profile} if args.profile else None,
        outputs=outputs,
    )

    profile = BenignProfile.from_file(config.inputs['profile']) if 'profile' in config.inputs else BenignProfile()
    scenarios = ScenarioRegistry.default_scenarios(args.scenarios)
    sizes = DatasetSizes(**{split: getattr(args, split) for split in SPLITS})
    datasets = make_datasets(profile, scenarios, sizes, config.seed)

    names = list(config.outputs)
    with atomic_outputs([config.outputs[name] for name in names]) as temps:
        paths = dict(zip(names, temps))
        for split, frame in datasets.items():
            write_flow_csv(frame, paths[split])
            if args.packets:
                packets = flows_to_packets(frame, derive_seed(config.seed, split))
                write_packet_csv(packets, paths[f'{split}_packets'])

    for name in names:
        logger.info('Записано: %s', config.outputs[name])
    return 0
