"""
Командная строка детектора.
Каждая подкоманда - отдельный модуль с функциями register и run.
"""
from typing import Optional, Sequence
import argparse
import logging
import sys

from pydantic import ValidationError

from app.cli.commands import attribute, detect, extract, report, sweep, synth, train, tune
from app.core.exceptions import DataError, ModelShapeError, UsageError
from app.core.logging import setup_logging


logger = logging.getLogger(__name__)

# Порядок подкоманд совпадает с порядком этапов конвейера
COMMANDS = (synth, extract, train, tune, detect, attribute, sweep, report)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class CliParser(argparse.ArgumentParser):
    """Ошибки разбора аргументов поднимаются как UsageError"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog='ddos-ae',
        description='Детекция аномальных потоков автоэнкодером и интерпретация детекций',
    )
    parser.add_argument('--log-level', help='уровень логирования (по умолчанию DDOS_AE_LOG_LEVEL)')
    subparsers = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        setup_logging(args.log_level)
        return args.handler(args)
    except UsageError as e:
        print(f'{parser.prog}: ошибка: {e}', file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelShapeError, ValidationError) as e:
        logger.error('%s', e)
        print(f'{parser.prog}: ошибка данных: {e}', file=sys.stderr)
        return EXIT_DATA


__all__ = ['build_parser', 'main']
