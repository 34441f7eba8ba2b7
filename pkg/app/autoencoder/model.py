from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple
import logging

import numpy as np

from app.core.config import DEFAULT_LAYER_DIMS, RunMode, settings
from app.core.exceptions import ModelShapeError, StaleCacheError
from app.core.seeds import make_rng


logger = logging.getLogger(__name__)

# Dropout только на скрытых слоях такой ширины и больше (не на бутылочном горлышке)
DROPOUT_MIN_WIDTH = 64


def validate_layer_dims(layer_dims: Sequence[int]) -> Tuple[int, ...]:
    dims = tuple(int(dim) for dim in layer_dims)
    if len(dims) < 3 or len(dims) % 2 == 0:
        raise ModelShapeError(f'Нужно нечетное число размерностей (>= 3), получено {dims}')
    if any(dim < 1 for dim in dims):
        raise ModelShapeError(f'Размерности должны быть положительными: {dims}')
    if dims != dims[::-1]:
        raise ModelShapeError(f'Размерности несимметричны: {dims}')
    middle = len(dims) // 2
    if any(dims[i] <= dims[i + 1] for i in range(middle)):
        raise ModelShapeError(f'Энкодер должен сужаться к бутылочному горлышку: {dims}')
    return dims


@dataclass
class Autoencoder:
    """Параметры автоэнкодера; веса слоя l имеют форму (dims[l+1], dims[l])"""
    layer_dims: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    # Увеличивается при каждом изменении параметров
    revision: int = 0

    def __post_init__(self):
        self.layer_dims = validate_layer_dims(self.layer_dims)
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ModelShapeError(
                f'Ожидалось {self.n_layers} слоев, получено весов {len(self.weights)}, смещений {len(self.biases)}'
            )
        for l, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[l + 1], self.layer_dims[l])
            if weight.shape != expected or bias.shape != (expected[0],):
                raise ModelShapeError(
                    f'Слой {l}: ожидались формы {expected} и {(expected[0],)}, получено {weight.shape} и {bias.shape}'
                )

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def bottleneck_layer(self) -> int:
        """Индекс слоя, выход которого - бутылочное горлышко"""
        return self.n_layers // 2 - 1

    def copy(self) -> 'Autoencoder':
        return Autoencoder(
            layer_dims=self.layer_dims,
            weights=[weight.copy() for weight in self.weights],
            biases=[bias.copy() for bias in self.biases],
        )


@dataclass
class ForwardCache:
    """Активации прямого прохода для backward"""
    model_id: int
    revision: int
    inputs: List[np.ndarray] = field(default_factory=list)
    preacts: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)
    output: Optional[np.ndarray] = None


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


def init_model(layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS, seed: int = settings.SEED) -> Autoencoder:
    """He-uniform веса (граница sqrt(6/fan_in)), нулевые смещения"""
    dims = validate_layer_dims(layer_dims)
    rng = make_rng(seed, 'init')
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    logger.debug('Инициализирована модель %s', dims)
    return Autoencoder(layer_dims=dims, weights=weights, biases=biases)


def forward(
    model: Autoencoder,
    inputs: np.ndarray,
    mode: RunMode = RunMode.EVAL,
    rng: Optional[np.random.Generator] = None,
    dropout_ratio: float = 0.0,
    dropout_min_width: int = DROPOUT_MIN_WIDTH,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Прямой проход: affine + ReLU на скрытых слоях, линейный выходной слой.

    В режиме train после каждого скрытого слоя шириной >= dropout_min_width
    (кроме бутылочного горлышка) применяется inverted dropout.
    Принимает один вектор или батч (B x N).
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ModelShapeError(f'Ожидался вход длины {model.input_dim}, получено {np.shape(inputs)}')

    use_dropout = mode == RunMode.TRAIN and dropout_ratio > 0
    if use_dropout and rng is None:
        raise ValueError('Для dropout в режиме train нужен генератор rng')
    keep = 1.0 - dropout_ratio

    cache = ForwardCache(model_id=id(model), revision=model.revision)
    activation = x
    last = model.n_layers - 1
    for l, (weight, bias) in enumerate(zip(model.weights, model.biases)):
        cache.inputs.append(activation)
        z = activation @ weight.T + bias
        if l == last:
            activation = z
            break
        cache.preacts.append(z)
        activation = np.maximum(z, 0.0)
        mask = None
        if use_dropout and l != model.bottleneck_layer and weight.shape[0] >= dropout_min_width:
            mask = (rng.random(activation.shape) < keep) / keep
            activation = activation * mask
        cache.masks.append(mask)

    cache.output = activation
    return (activation[0] if single else activation), cache


def reconstruction_error(f_in: np.ndarray, f_out: np.ndarray) -> float:
    """Среднее поэлементного квадрата ошибки"""
    f_in = np.asarray(f_in, dtype=np.float64)
    f_out = np.asarray(f_out, dtype=np.float64)
    if f_in.shape != f_out.shape:
        raise ModelShapeError(f'Длины не совпадают: {f_in.shape} и {f_out.shape}')
    return float(np.mean((f_in - f_out) ** 2))


def iter_reconstructions(
    model: Autoencoder,
    dataset,
    chunk: Optional[int] = None,
) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """
    Проход eval по набору блоками фиксированного размера: (start, входы, выходы).

    Последний блок дополняется нулями до полного размера, так что результат
    для потока не зависит от числа строк в блоке.
    """
    chunk = chunk or settings.EVAL_CHUNK
    padded = np.zeros((chunk, model.input_dim), dtype=np.float64)
    for start in range(0, len(dataset), chunk):
        block = np.asarray(dataset[start:start + chunk], dtype=np.float64)
        if block.ndim != 2 or block.shape[1] != model.input_dim:
            raise ModelShapeError(f'Ожидались строки длины {model.input_dim}, получено {block.shape}')
        rows = block.shape[0]
        padded[:rows] = block
        padded[rows:] = 0.0
        output, _ = forward(model, padded, RunMode.EVAL)
        yield start, padded[:rows].copy(), output[:rows]


def reconstruction_errors(model: Autoencoder, dataset, chunk: Optional[int] = None) -> np.ndarray:
    """Ошибки реконструкции для каждой строки набора в режиме eval"""
    errors = np.empty(len(dataset), dtype=np.float64)
    for start, inputs, outputs in iter_reconstructions(model, dataset, chunk):
        errors[start:start + inputs.shape[0]] = np.mean((inputs - outputs) ** 2, axis=1)
    return errors


def backward(model: Autoencoder, cache: Optional[ForwardCache], target: np.ndarray) -> Gradients:
    """Градиенты средней по батчу ошибки реконструкции по всем весам и смещениям"""
    if cache is None or cache.output is None:
        raise StaleCacheError('Нет кэша прямого прохода')
    if cache.model_id != id(model) or cache.revision != model.revision:
        raise StaleCacheError('Кэш получен до последнего обновления параметров модели')

    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[None, :]
    output = cache.output
    if target.shape != output.shape:
        raise ModelShapeError(f'Форма цели {target.shape} не совпадает с выходом {output.shape}')

    batch, width = output.shape
    delta = 2.0 * (output - target) / (width * batch)

    grad_weights = [None] * model.n_layers
    grad_biases = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        grad_weights[l] = delta.T @ cache.inputs[l]
        grad_biases[l] = delta.sum(axis=0)
        if l == 0:
            break
        delta = delta @ model.weights[l]
        mask = cache.masks[l - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.preacts[l - 1] > 0)

    return Gradients(weights=grad_weights, biases=grad_biases)


def batch_loss(cache: ForwardCache, target: np.ndarray) -> float:
    """Средняя ошибка реконструкции по батчу"""
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    return float(np.mean((cache.output - target) ** 2))
