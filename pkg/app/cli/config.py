import argparse
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple
import logging
import os

from pydantic import BaseModel, ValidationError, field_validator

from app.autoencoder.model import validate_layer_dims
from app.core.config import DEFAULT_LAYER_DIMS, settings
from app.core.exceptions import DataError, UsageError
from app.schemas import HyperParams


logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """Параметры запуска подкоманды; пути проверяются до начала работы"""
    command: str
    seed: int = settings.SEED
    inputs: Dict[str, Path] = {}
    outputs: Dict[str, Path] = {}
    hyper: Optional[HyperParams] = None
    layer_dims: Tuple[int, ...] = DEFAULT_LAYER_DIMS
    options: Dict[str, Any] = {}

    @field_validator('inputs')
    @classmethod
    def validate_inputs(cls, v):
        for name, path in v.items():
            if not path.is_file():
                raise ValueError(f'Не найден входной файл {name}: {path}')
        return v

    @field_validator('outputs')
    @classmethod
    def validate_outputs(cls, v):
        for name, path in v.items():
            parent = path.parent
            if not parent.is_dir():
                raise ValueError(f'Нет каталога для {name}: {parent}')
            if not os.access(parent, os.W_OK):
                raise ValueError(f'Каталог для {name} недоступен для записи: {parent}')
        return v

    @field_validator('layer_dims')
    @classmethod
    def validate_dims(cls, v):
        validate_layer_dims(v)
        return v

    @classmethod
    def build(cls, **data) -> 'RunConfig':
        try:
            config = cls(**{key: value for key, value in data.items() if value is not None})
        except ValidationError as e:
            error = e.errors()[0]
            raise DataError(str(error.get('ctx', {}).get('error', error['msg']))) from e
        logger.debug('Конфигурация %s: %s', config.command, config.model_dump(mode='json'))
        return config


def add_seed_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=settings.SEED, help='корневой сид (по умолчанию %(default)s)')


def add_hyper_arguments(parser: argparse.ArgumentParser) -> None:
    defaults = HyperParams()
    group = parser.add_argument_group('обучение')
    group.add_argument('--batch', type=int, default=defaults.batch_size, help='размер батча (%(default)s)')
    group.add_argument('--lr', type=float, default=defaults.learning_rate, help='скорость обучения Adam (%(default)s)')
    group.add_argument('--dropout', type=float, default=defaults.dropout_ratio, help='доля dropout (%(default)s)')
    group.add_argument('--decay', type=float, default=defaults.weight_decay, help='weight decay (%(default)s)')
    group.add_argument('--epochs', type=int, default=defaults.epochs, help='число эпох (%(default)s)')
    group.add_argument(
        '--layer-dims', type=parse_int_list, default=DEFAULT_LAYER_DIMS,
        help='размеры слоев через запятую (по умолчанию 2848,512,64,4,64,512,2848)',
    )


def hyper_from_args(args: argparse.Namespace) -> HyperParams:
    try:
        return HyperParams(
            batch_size=args.batch,
            learning_rate=args.lr,
            dropout_ratio=args.dropout,
            weight_decay=args.decay,
            epochs=args.epochs,
            seed=args.seed,
        )
    except ValidationError as e:
        raise UsageError(f'Недопустимые гиперпараметры: {e.errors()[0]["msg"]}') from e


def parse_int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'ожидался список целых через запятую: "{text}"') from e


def parse_float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'ожидался список чисел через запятую: "{text}"') from e


def parse_name_list(text: str) -> Sequence[str]:
    return [part.strip() for part in text.split(',') if part.strip()]
