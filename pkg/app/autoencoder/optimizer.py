from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.autoencoder.model import Autoencoder, Gradients
from app.core.exceptions import ModelShapeError
from app.schemas import HyperParams, OptimizerConfig


@dataclass
class AdamState:
    m_weights: List[np.ndarray]
    v_weights: List[np.ndarray]
    m_biases: List[np.ndarray]
    v_biases: List[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, model: Autoencoder) -> 'AdamState':
        return cls(
            m_weights=[np.zeros_like(w) for w in model.weights],
            v_weights=[np.zeros_like(w) for w in model.weights],
            m_biases=[np.zeros_like(b) for b in model.biases],
            v_biases=[np.zeros_like(b) for b in model.biases],
        )


def _check_shapes(model: Autoencoder, grads: Gradients, state: AdamState) -> None:
    for params, grad_list, m_list in (
        (model.weights, grads.weights, state.m_weights),
        (model.biases, grads.biases, state.m_biases),
    ):
        if len(params) != len(grad_list) or len(params) != len(m_list):
            raise ModelShapeError('Число слоев градиентов не совпадает с моделью')
        for param, grad, m in zip(params, grad_list, m_list):
            if param.shape != grad.shape or param.shape != m.shape:
                raise ModelShapeError(f'Формы не совпадают: {param.shape}, {grad.shape}, {m.shape}')


def adam_step(
    model: Autoencoder,
    grads: Gradients,
    state: AdamState,
    hyper: HyperParams,
    config: Optional[OptimizerConfig] = None,
) -> Tuple[Autoencoder, AdamState]:
    """
    Шаг Adam с коррекцией смещения, изменяет модель и состояние на месте.

    L2: weight_decay * w добавляется к градиенту весов (не смещений).
    """
    config = config or OptimizerConfig()
    _check_shapes(model, grads, state)

    state.step += 1
    correction1 = 1.0 - config.beta1 ** state.step
    correction2 = 1.0 - config.beta2 ** state.step
    lr = hyper.learning_rate

    def update(param, grad, m, v):
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps)

    for l in range(model.n_layers):
        weight = model.weights[l]
        grad = grads.weights[l]
        if hyper.weight_decay:
            grad = grad + hyper.weight_decay * weight
        update(weight, grad, state.m_weights[l], state.v_weights[l])
        update(model.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l])

    model.revision += 1
    return model, state
