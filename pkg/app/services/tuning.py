from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple
import logging
import math

import pandas as pd
from tqdm import tqdm

from app.core.config import DEFAULT_LAYER_DIMS, VALIDATION_GATE, settings
from app.core.exceptions import DataError
from app.core.seeds import derive_seed, make_rng
from app.repositories.bundle import ModelBundle
from app.schemas import HyperParams, Metrics, SearchSpace, TrialRecord
from app.services.pipeline import evaluate_frame, fit_bundle


logger = logging.getLogger(__name__)


def log_uniform(rng, low: float, high: float) -> float:
    return float(math.exp(rng.uniform(math.log(low), math.log(high))))


def sample_hyper_params(space: SearchSpace, base: HyperParams, root_seed: int, index: int) -> HyperParams:
    """Гиперпараметры испытания index: выбор для батча и dropout, лог-равномерно для lr и decay"""
    rng = make_rng(root_seed, 'trial', str(index))
    return HyperParams(
        batch_size=int(rng.choice(space.batch_sizes)),
        learning_rate=log_uniform(rng, *space.learning_rate),
        dropout_ratio=float(rng.choice(space.dropout_ratios)),
        weight_decay=log_uniform(rng, *space.weight_decay),
        epochs=base.epochs,
        seed=derive_seed(root_seed, 'trial', str(index)),
    )


def _f1_key(record: TrialRecord) -> float:
    return record.metrics.f1 if record.metrics.f1 is not None else -1.0


def is_better(record: TrialRecord, best: Optional[TrialRecord]) -> bool:
    """Строго больший f1; при равенстве остается испытание с меньшим индексом"""
    return best is None or _f1_key(record) > _f1_key(best)


def select_best(records: Sequence[TrialRecord]) -> Optional[TrialRecord]:
    """Лучшее испытание по f1 валидации"""
    best = None
    for record in sorted(records, key=lambda item: item.index):
        if is_better(record, best):
            best = record
    return best


class RandomSearchTuner:
    """
    Случайный поиск гиперпараметров.

    Запускается, только если базовая модель не проходит порог 99% по
    precision, recall и f1 на валидации.
    """

    def __init__(
        self,
        train: pd.DataFrame,
        threshold: pd.DataFrame,
        validation: pd.DataFrame,
        search_space: SearchSpace,
        trials: int,
        seed: int,
        base_hyper: Optional[HyperParams] = None,
        layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
        gate: float = VALIDATION_GATE,
        workers: int = 1,
    ):
        if trials < 1:
            raise DataError(f'Число испытаний должно быть >= 1, получено {trials}')
        if search_space.is_empty():
            raise DataError('Пустое пространство поиска гиперпараметров')
        self.train = train
        self.threshold = threshold
        self.validation = validation
        self.search_space = search_space
        self.trials = trials
        self.seed = seed
        self.base_hyper = base_hyper or HyperParams(seed=seed)
        self.layer_dims = tuple(layer_dims)
        self.gate = gate
        self.workers = max(1, workers)
        self.records: List[TrialRecord] = []
        self.baseline_metrics: Optional[Metrics] = None

    def _run_trial(self, index: int) -> Tuple[TrialRecord, ModelBundle]:
        hyper = sample_hyper_params(self.search_space, self.base_hyper, self.seed, index)
        bundle = fit_bundle(self.train, self.threshold, hyper, self.layer_dims)
        metrics = evaluate_frame(bundle, self.validation)
        logger.info('Испытание %s: f1=%s (%s)', index, metrics.f1, hyper.model_dump())
        return TrialRecord(index=index, hyper_params=hyper, metrics=metrics), bundle

    def run(self, baseline: Optional[ModelBundle] = None) -> ModelBundle:
        if baseline is None:
            baseline = fit_bundle(self.train, self.threshold, self.base_hyper, self.layer_dims)
        self.baseline_metrics = evaluate_frame(baseline, self.validation)
        if self.baseline_metrics.passes_gate(self.gate):
            logger.info('Базовая модель проходит порог %.2f, поиск не нужен', self.gate)
            return baseline

        logger.warning(
            'Базовая модель ниже порога (precision=%s, recall=%s, f1=%s), запускаем %s испытаний',
            self.baseline_metrics.precision, self.baseline_metrics.recall, self.baseline_metrics.f1, self.trials,
        )
        indices = range(self.trials)
        best = None
        best_bundle = None
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            # map отдает результаты в порядке индексов испытаний
            results = executor.map(self._run_trial, indices)
            for record, bundle in tqdm(results, total=self.trials, disable=not settings.PROGRESS):
                self.records.append(record)
                leader = select_best([record] if best is None else [best, record])
                if leader is record:
                    best, best_bundle = record, bundle

        logger.info('Лучшее испытание %s: f1=%s', best.index, best.metrics.f1)
        return best_bundle


def random_search_tune(
    train_set: pd.DataFrame,
    validation_set: pd.DataFrame,
    search_space: SearchSpace,
    trials: int,
    seed: int,
    threshold_set: Optional[pd.DataFrame] = None,
    baseline: Optional[ModelBundle] = None,
    base_hyper: Optional[HyperParams] = None,
    layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
) -> ModelBundle:
    """Без отдельного порогового набора порог считается по обучающему"""
    tuner = RandomSearchTuner(
        train=train_set,
        threshold=threshold_set if threshold_set is not None else train_set,
        validation=validation_set,
        search_space=search_space,
        trials=trials,
        seed=seed,
        base_hyper=base_hyper,
        layer_dims=layer_dims,
    )
    return tuner.run(baseline)
