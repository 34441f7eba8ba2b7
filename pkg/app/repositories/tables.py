from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Union
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from app.core.config import CATEGORICAL_FEATURES, FEATURE_NAMES, MAX_PORT, PROTOCOL_BINS
from app.core.exceptions import DataError
from app.schemas import PacketRecord, Verdict
from app.services.flow_extract import KEY_COLUMNS, packets_to_frame, parse_packet_records


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOW_COLUMNS = ('flow_id', *KEY_COLUMNS, *FEATURE_NAMES)
LABEL_COLUMN = 'label'
CATEGORY_COLUMN = 'category'
VERDICT_COLUMNS = ('flow_id', 'error', 'malicious')


def read_flow_csv(path: PathLike) -> pd.DataFrame:
    """Таблица потоков; label и category необязательны"""
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            keep_default_na=False,
            float_precision='round_trip',
            dtype={'flow_id': str, 'src_ip': str, 'dst_ip': str, LABEL_COLUMN: str, CATEGORY_COLUMN: str},
        )
    except FileNotFoundError as e:
        raise DataError(f'Файл потоков не найден: {path}') from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f'Пустой файл потоков: {path}') from e
    except (pd.errors.ParserError, ValueError) as e:
        raise DataError(f'Ошибка разбора файла потоков {path}: {e}') from e

    missing = [column for column in FEATURE_NAMES if column not in frame.columns]
    if missing:
        raise DataError(f'В файле {path} нет колонок: {missing}')
    for column in FEATURE_NAMES:
        frame[column] = _numeric_feature(frame[column], column, path)
    if 'flow_id' not in frame.columns:
        frame.insert(0, 'flow_id', [f'flow-{i:07d}' for i in range(len(frame))])
    logger.debug('Прочитано потоков: %s из %s', len(frame), path)
    return frame


def _numeric_feature(values: pd.Series, column: str, path: Path) -> pd.Series:
    """Числовая колонка признака; порты и протокол - целые в своих диапазонах"""
    numeric = pd.to_numeric(values, errors='coerce')
    bad = numeric.isna() | ~np.isfinite(numeric)
    if column in CATEGORICAL_FEATURES:
        upper = PROTOCOL_BINS - 1 if column == 'Proto' else MAX_PORT
        bad |= (numeric % 1 != 0) | (numeric < 0) | (numeric > upper)
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        # Строка 1 - заголовок
        raise DataError(
            f'{path}: строка {position + 2}, колонка {column}: недопустимое значение {values.iloc[position]!r}'
        )
    if column in CATEGORICAL_FEATURES:
        return numeric.astype(np.int64)
    return numeric


def write_flow_csv(frame: pd.DataFrame, path: PathLike) -> None:
    columns = [column for column in FLOW_COLUMNS if column in frame.columns]
    columns += [column for column in (LABEL_COLUMN, CATEGORY_COLUMN) if column in frame.columns]
    frame.to_csv(path, columns=columns, index=False)
    logger.debug('Записано потоков: %s в %s', len(frame), path)


def read_packet_csv(path: PathLike):
    path = Path(path)
    try:
        with open(path, 'rb') as handle:
            return parse_packet_records(handle)
    except FileNotFoundError as e:
        raise DataError(f'Файл пакетов не найден: {path}') from e


def write_packet_csv(packets: Iterable[PacketRecord], path: PathLike) -> None:
    packets_to_frame(packets).to_csv(path, index=False)


def write_verdict_csv(verdicts: Sequence[Verdict], path: PathLike) -> None:
    rows = [
        {'flow_id': verdict.flow_id, 'error': repr(verdict.error), 'malicious': int(verdict.malicious)}
        for verdict in verdicts
    ]
    pd.DataFrame(rows, columns=list(VERDICT_COLUMNS)).to_csv(path, index=False)


def write_json(data: Dict[str, Any], path: PathLike) -> None:
    Path(path).write_text(json.dumps(data, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')


def read_json(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding='utf-8'))


def write_table_csv(frame: pd.DataFrame, path: PathLike, columns: Optional[Sequence[str]] = None) -> None:
    frame.to_csv(path, columns=list(columns) if columns else None, index=False)


@contextmanager
def atomic_outputs(paths: Sequence[PathLike]) -> Iterator[List[Path]]:
    """
    Временные файлы рядом с целевыми.

    Все файлы переименовываются в целевые только после успешного выхода
    из блока; при ошибке временные файлы удаляются, целевые не создаются.
    """
    targets = [Path(path) for path in paths]
    temps: List[Path] = []
    try:
        for target in targets:
            fd, name = tempfile.mkstemp(dir=target.parent, prefix=f'.{target.name}.', suffix='.tmp')
            os.close(fd)
            temps.append(Path(name))
        yield temps
        for temp, target in zip(temps, targets):
            os.replace(temp, target)
    except OSError as e:
        raise DataError(f'Ошибка записи выходных файлов: {e}') from e
    finally:
        for temp in temps:
            temp.unlink(missing_ok=True)
