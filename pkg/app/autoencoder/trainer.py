from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union
import logging

import numpy as np
from tqdm import tqdm

from app.autoencoder.model import Autoencoder, forward, backward, batch_loss
from app.autoencoder.optimizer import AdamState, adam_step
from app.core.config import RunMode, settings
from app.core.exceptions import DataError
from app.core.seeds import make_rng
from app.schemas import HyperParams, OptimizerConfig
from app.services.feature_encode import EncodedFlows


logger = logging.getLogger(__name__)

TrainingData = Union[np.ndarray, EncodedFlows, Sequence[np.ndarray]]


@dataclass
class TrainingHistory:
    batch_losses: List[float] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.epoch_losses[-1] if self.epoch_losses else None


class Trainer:
    """Мини-батч обучение автоэнкодера: перемешивание по эпохам, Adam, dropout"""

    def __init__(self, model: Autoencoder, hyper: HyperParams, config: Optional[OptimizerConfig] = None):
        if hyper.epochs < 1:
            raise DataError(f'Число эпох должно быть >= 1, получено {hyper.epochs}')
        self.model = model
        self.hyper = hyper
        self.config = config or OptimizerConfig()
        self.state = AdamState.zeros_like(model)
        self.history = TrainingHistory()
        self.shuffle_rng = make_rng(hyper.seed, 'shuffle')
        self.dropout_rng = make_rng(hyper.seed, 'dropout')

    def step(self, batch: np.ndarray) -> float:
        _, cache = forward(
            self.model, batch, RunMode.TRAIN,
            rng=self.dropout_rng, dropout_ratio=self.hyper.dropout_ratio,
        )
        loss = batch_loss(cache, batch)
        grads = backward(self.model, cache, batch)
        adam_step(self.model, grads, self.state, self.hyper, self.config)
        return loss

    def train(self, dataset: TrainingData) -> Autoencoder:
        if not isinstance(dataset, (np.ndarray, EncodedFlows)):
            dataset = np.asarray(dataset, dtype=np.float64)
        n = len(dataset)
        if n == 0:
            raise DataError('Пустой обучающий набор')

        batch_size = self.hyper.batch_size
        logger.info(
            'Обучение: потоков %s, эпох %s, батч %s, lr %s, dropout %s, decay %s',
            n, self.hyper.epochs, batch_size, self.hyper.learning_rate,
            self.hyper.dropout_ratio, self.hyper.weight_decay,
        )

        for epoch in range(self.hyper.epochs):
            order = self.shuffle_rng.permutation(n)
            losses = []
            starts = range(0, n, batch_size)
            for start in tqdm(starts, desc=f'epoch {epoch + 1}', disable=not settings.PROGRESS):
                batch = np.asarray(dataset[order[start:start + batch_size]], dtype=np.float64)
                loss = self.step(batch)
                losses.append(loss)
                self.history.batch_losses.append(loss)

            # Средний лосс эпохи взвешен размером батча (последний может быть неполным)
            weights = np.diff(np.append(np.arange(0, n, batch_size), n))
            epoch_loss = float(np.average(losses, weights=weights))
            self.history.epoch_losses.append(epoch_loss)
            logger.info('Эпоха %s: средний лосс %.6e', epoch + 1, epoch_loss)

        return self.model


def train(model: Autoencoder, dataset: TrainingData, hyper: HyperParams) -> Autoencoder:
    """Обучает модель на месте и возвращает ее"""
    return Trainer(model, hyper).train(dataset)
