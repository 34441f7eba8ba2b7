from typing import List, Optional, Sequence
import hashlib
import logging

import numpy as np
import pandas as pd

from app.autoencoder.model import init_model
from app.autoencoder.trainer import Trainer
from app.core.config import DEFAULT_LAYER_DIMS, FlowLabel
from app.core.exceptions import DataError
from app.repositories.bundle import BundleMetadata, ModelBundle, bundle_timestamp
from app.schemas import HyperParams, Metrics, OptimizerConfig, Verdict
from app.services.detection import compute_threshold, detect, evaluate
from app.services.feature_encode import EncodedFlows, fit_normalization, raw_matrix


logger = logging.getLogger(__name__)


def dataset_checksum(matrix: np.ndarray) -> str:
    """sha256 сырых признаков обучающего набора"""
    return hashlib.sha256(np.ascontiguousarray(matrix, dtype=np.float64).tobytes()).hexdigest()


def fit_bundle(
    train: pd.DataFrame,
    threshold: pd.DataFrame,
    hyper: HyperParams,
    layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
    optimizer: Optional[OptimizerConfig] = None,
) -> ModelBundle:
    """
    Полный цикл обучения одной модели.

    Статистики нормализации считаются только по train, порог -
    по отдельному набору нормальных потоков. Все случайности от hyper.seed.
    """
    train_raw = raw_matrix(train)
    if train_raw.shape[0] == 0:
        raise DataError('Пустой обучающий набор')
    if len(threshold) == 0:
        raise DataError('Пустой пороговый набор')

    stats = fit_normalization(train_raw)
    model = init_model(layer_dims, hyper.seed)
    trainer = Trainer(model, hyper, optimizer)
    trainer.train(EncodedFlows(train_raw, stats))

    threshold_value = compute_threshold(model, EncodedFlows(raw_matrix(threshold), stats))
    return ModelBundle(
        model=model,
        norm_stats=stats,
        threshold=threshold_value,
        hyper_params=hyper,
        optimizer=trainer.config,
        metadata=BundleMetadata(
            dataset_checksum=dataset_checksum(train_raw),
            seed=hyper.seed,
            created_at=bundle_timestamp(),
            n_train=int(train_raw.shape[0]),
            n_threshold=len(threshold),
            final_loss=trainer.history.final_loss,
        ),
    )


def flow_ids(frame: pd.DataFrame) -> List[str]:
    if 'flow_id' in frame.columns:
        return frame['flow_id'].astype(str).tolist()
    return [str(i) for i in range(len(frame))]


def has_labels(frame: pd.DataFrame) -> bool:
    return 'label' in frame.columns and bool(frame['label'].astype(str).str.len().all())


def detect_frame(bundle: ModelBundle, frame: pd.DataFrame) -> List[Verdict]:
    flows = EncodedFlows.from_frame(frame, bundle.norm_stats)
    return detect(bundle.model, bundle.threshold, flows, flow_ids(frame))


def evaluate_frame(bundle: ModelBundle, frame: pd.DataFrame) -> Metrics:
    """Метрики модели на размеченной таблице потоков"""
    if not has_labels(frame):
        raise DataError('В таблице потоков нет меток label')
    return evaluate(detect_frame(bundle, frame), frame['label'].tolist())


def malicious_mask(frame: pd.DataFrame) -> np.ndarray:
    return (frame['label'].astype(str) == FlowLabel.MALICIOUS.value).to_numpy()
