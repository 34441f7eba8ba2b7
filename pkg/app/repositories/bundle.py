"""
Файл модели: JSON, массивы в hex-float (без потерь), формат описан в docs/bundle_format.md
"""
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Union
import json
import logging
import os
import tempfile

import numpy as np
from pydantic import BaseModel, ValidationError

from app.autoencoder.model import Autoencoder
from app.core.config import BUNDLE_FORMAT_VERSION, ENCODING_LAYOUT_VERSION, settings
from app.core.exceptions import BundleFormatError, DataError, ModelShapeError, VersionMismatchError
from app.schemas import NormStats, Threshold, HyperParams, OptimizerConfig


logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = ('layer_dims', 'layers', 'norm_stats', 'threshold', 'hyper_params')


class BundleMetadata(BaseModel):
    dataset_checksum: str = ''
    seed: int = settings.SEED
    created_at: str = ''
    n_train: int = 0
    n_threshold: int = 0
    final_loss: Optional[float] = None


def bundle_timestamp() -> str:
    """Время создания; SOURCE_DATE_EPOCH делает файл воспроизводимым"""
    epoch = settings.source_date_epoch()
    moment = datetime.fromtimestamp(epoch, timezone.utc) if epoch is not None else datetime.now(timezone.utc)
    return moment.isoformat()


@dataclass
class ModelBundle:
    model: Autoencoder
    norm_stats: NormStats
    threshold: Threshold
    hyper_params: HyperParams
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    metadata: BundleMetadata = field(default_factory=BundleMetadata)
    format_version: str = BUNDLE_FORMAT_VERSION
    layout_version: str = ENCODING_LAYOUT_VERSION

    @property
    def layer_dims(self):
        return self.model.layer_dims


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    return {
        'shape': list(array.shape),
        'data': ' '.join(float.hex(value) for value in array.ravel().tolist()),
    }


def decode_array(section: Dict[str, Any], name: str) -> np.ndarray:
    try:
        shape = tuple(int(dim) for dim in section['shape'])
        values = [float.fromhex(token) for token in section['data'].split()]
    except (KeyError, TypeError, ValueError) as e:
        raise BundleFormatError(f'Некорректный массив "{name}": {e}') from e
    expected = int(np.prod(shape)) if shape else 1
    if len(values) != expected:
        raise BundleFormatError(
            f'Массив "{name}": заголовок {shape} требует {expected} значений, найдено {len(values)}'
        )
    return np.array(values, dtype=np.float64).reshape(shape)


def bundle_to_dict(bundle: ModelBundle) -> Dict[str, Any]:
    return {
        'format_version': bundle.format_version,
        'layout_version': bundle.layout_version,
        'layer_dims': list(bundle.model.layer_dims),
        'layers': [
            {'weight': encode_array(weight), 'bias': encode_array(bias)}
            for weight, bias in zip(bundle.model.weights, bundle.model.biases)
        ],
        'norm_stats': bundle.norm_stats.model_dump(),
        'threshold': bundle.threshold.model_dump(),
        'hyper_params': bundle.hyper_params.model_dump(),
        'optimizer': bundle.optimizer.model_dump(),
        'metadata': bundle.metadata.model_dump(),
    }


def bundle_from_dict(data: Any) -> ModelBundle:
    if not isinstance(data, dict):
        raise BundleFormatError('Корень файла модели должен быть объектом')

    for name in ('format_version', 'layout_version'):
        if name not in data:
            raise BundleFormatError(f'Нет поля "{name}"')
    if data['format_version'] != BUNDLE_FORMAT_VERSION:
        raise VersionMismatchError('format_version', BUNDLE_FORMAT_VERSION, str(data['format_version']))
    if data['layout_version'] != ENCODING_LAYOUT_VERSION:
        raise VersionMismatchError('layout_version', ENCODING_LAYOUT_VERSION, str(data['layout_version']))

    for name in REQUIRED_SECTIONS:
        if name not in data:
            raise BundleFormatError(f'Нет секции "{name}"')

    layers = data['layers']
    if not isinstance(layers, list):
        raise BundleFormatError('Секция "layers" должна быть списком')
    weights = []
    biases = []
    for l, layer in enumerate(layers):
        if not isinstance(layer, dict) or 'weight' not in layer or 'bias' not in layer:
            raise BundleFormatError(f'Слой {l}: нужны "weight" и "bias"')
        weights.append(decode_array(layer['weight'], f'layers[{l}].weight'))
        biases.append(decode_array(layer['bias'], f'layers[{l}].bias'))

    try:
        model = Autoencoder(layer_dims=tuple(data['layer_dims']), weights=weights, biases=biases)
        norm_stats = NormStats.model_validate(data['norm_stats'])
        threshold = Threshold.model_validate(data['threshold'])
        hyper_params = HyperParams.model_validate(data['hyper_params'])
        optimizer = OptimizerConfig.model_validate(data.get('optimizer', {}))
        metadata = BundleMetadata.model_validate(data.get('metadata', {}))
    except ModelShapeError as e:
        raise BundleFormatError(f'Несовпадение форм: {e}') from e
    except (ValidationError, TypeError) as e:
        raise BundleFormatError(f'Некорректная секция файла модели: {e}') from e

    if norm_stats.layout_version != ENCODING_LAYOUT_VERSION:
        raise VersionMismatchError('norm_stats.layout_version', ENCODING_LAYOUT_VERSION, norm_stats.layout_version)

    return ModelBundle(
        model=model,
        norm_stats=norm_stats,
        threshold=threshold,
        hyper_params=hyper_params,
        optimizer=optimizer,
        metadata=metadata,
    )


def save_bundle(bundle: ModelBundle, path: Union[str, Path]) -> None:
    path = Path(path)
    text = json.dumps(bundle_to_dict(bundle), indent=1)
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    except OSError as e:
        raise DataError(f'Нельзя записать файл модели {path}: {e}') from e
    try:
        with os.fdopen(fd, 'w', encoding='ascii') as handle:
            handle.write(text)
            handle.write('\n')
        os.replace(tmp_name, path)
    except OSError as e:
        Path(tmp_name).unlink(missing_ok=True)
        raise DataError(f'Нельзя записать файл модели {path}: {e}') from e
    logger.info('Модель сохранена: %s', path)


def load_bundle(path: Union[str, Path]) -> ModelBundle:
    path = Path(path)
    try:
        text = path.read_text(encoding='ascii')
    except FileNotFoundError as e:
        raise DataError(f'Файл модели не найден: {path}') from e
    except (OSError, UnicodeDecodeError) as e:
        raise BundleFormatError(f'Нельзя прочитать файл модели {path}: {e}') from e

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise BundleFormatError(f'Файл модели поврежден: {e.msg}', offset=e.pos) from e

    bundle = bundle_from_dict(data)
    logger.info('Модель загружена: %s (%s, t_det=%.6e)', path, bundle.model.layer_dims, bundle.threshold.t_det)
    return bundle
