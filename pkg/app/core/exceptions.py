from typing import Optional


class DetectorError(Exception):
    """Базовая ошибка детектора"""


class UsageError(DetectorError):
    """Неверные аргументы или пути запуска"""


class DataError(DetectorError, ValueError):
    """Некорректные входные данные"""


class PacketFormatError(DataError):
    def __init__(self, row: int, column: str, message: str):
        self.row = row
        self.column = column
        super().__init__(f'Строка {row}, колонка "{column}": {message}')


class BundleFormatError(DataError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f'{message} (байт {offset})'
        super().__init__(message)


class VersionMismatchError(DataError):
    def __init__(self, field: str, expected: str, found: str):
        self.field = field
        self.expected = expected
        self.found = found
        super().__init__(f'Версия "{field}": ожидалась {expected}, найдена {found}')


class ModelShapeError(DetectorError, ValueError):
    """Несовпадение размерностей модели и данных"""


class StaleCacheError(DetectorError, RuntimeError):
    """Кэш активаций не соответствует текущим параметрам модели"""
