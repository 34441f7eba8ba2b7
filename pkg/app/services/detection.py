from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np

from app.autoencoder.model import Autoencoder, reconstruction_errors
from app.core.config import FlowLabel, FEATURE_NAMES
from app.core.exceptions import DataError
from app.schemas import Threshold, Verdict, Metrics, CategoryRow, FalsePositiveRow


logger = logging.getLogger(__name__)

LabelLike = Union[FlowLabel, str, bool]


def compute_threshold(model: Autoencoder, threshold_set) -> Threshold:
    """T_det = mu + 3*sigma по ошибкам потоков порогового набора (sigma популяционная)"""
    if len(threshold_set) == 0:
        raise DataError('Пустой пороговый набор')
    errors = reconstruction_errors(model, threshold_set)
    threshold = Threshold.from_errors(errors)
    logger.info(
        'Порог: t_det=%.6e (mu=%.6e, sigma=%.6e, потоков %s)',
        threshold.t_det, threshold.mu, threshold.sigma, threshold.n_flows,
    )
    return threshold


def verdicts_from_errors(
    errors: np.ndarray,
    threshold: Threshold,
    flow_ids: Optional[Sequence[str]] = None,
) -> List[Verdict]:
    if flow_ids is None:
        flow_ids = [str(i) for i in range(len(errors))]
    if len(flow_ids) != len(errors):
        raise DataError(f'Идентификаторов {len(flow_ids)}, ошибок {len(errors)}')
    return [
        Verdict(flow_id=flow_id, error=float(error), malicious=bool(error > threshold.t_det))
        for flow_id, error in zip(flow_ids, errors)
    ]


def detect(
    model: Autoencoder,
    threshold: Threshold,
    flows,
    flow_ids: Optional[Sequence[str]] = None,
) -> List[Verdict]:
    """Вердикт на каждый поток: malicious, если ошибка строго больше t_det"""
    if len(flows) == 0:
        return []
    verdicts = verdicts_from_errors(reconstruction_errors(model, flows), threshold, flow_ids)
    logger.info(
        'Детекция: потоков %s, вредоносных %s',
        len(verdicts), sum(verdict.malicious for verdict in verdicts),
    )
    return verdicts


def is_malicious_label(label: LabelLike) -> bool:
    if isinstance(label, (bool, np.bool_)):
        return bool(label)
    value = label.value if isinstance(label, FlowLabel) else str(label).strip().lower()
    if value not in (FlowLabel.BENIGN.value, FlowLabel.MALICIOUS.value):
        raise DataError(f'Неизвестная метка "{label}"')
    return value == FlowLabel.MALICIOUS.value


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator else None


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = None
    if precision is not None and recall is not None:
        f1 = _ratio(2 * precision * recall, precision + recall)
    return Metrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=precision,
        recall=recall,
        f1=f1,
        tnr=_ratio(tn, tn + fp),
        fpr=_ratio(fp, fp + tn),
    )


def evaluate(verdicts: Sequence[Verdict], labels: Sequence[LabelLike]) -> Metrics:
    if len(verdicts) != len(labels):
        raise DataError(f'Вердиктов {len(verdicts)}, меток {len(labels)}')

    predicted = np.array([verdict.malicious for verdict in verdicts], dtype=bool)
    actual = np.array([is_malicious_label(label) for label in labels], dtype=bool)
    return metrics_from_counts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
        tn=int(np.sum(~predicted & ~actual)),
    )


def main_feature_ratios(
    shares: np.ndarray,
    errors: np.ndarray,
    t_det: float,
    features: Sequence[str],
) -> np.ndarray:
    """Доля ошибки от указанных признаков в единицах порога: sum(share) * E / t_det"""
    columns = [FEATURE_NAMES.index(name) for name in features]
    mass = shares[:, columns].sum(axis=1) * errors
    return mass / t_det if t_det > 0 else np.where(mass > 0, np.inf, 0.0)


def category_breakdown(
    verdicts: Sequence[Verdict],
    categories: Sequence[Optional[str]],
    shares: np.ndarray,
    main_features: Dict[str, Sequence[str]],
    t_det: float,
) -> List[CategoryRow]:
    """
    Детекция вредоносных потоков по основной аномалии.

    shares - логические доли атрибуции (n x 23) для тех же потоков.
    Поток учитывается в only_main_count, если основные признаки категории
    сами по себе дают ошибку выше порога.
    """
    if not (len(verdicts) == len(categories) == shares.shape[0]):
        raise DataError('Длины вердиктов, категорий и атрибуций не совпадают')

    errors = np.array([verdict.error for verdict in verdicts], dtype=np.float64)
    detected = np.array([verdict.malicious for verdict in verdicts], dtype=bool)
    category_array = np.array([category or '' for category in categories], dtype=object)

    rows = []
    for category, features in main_features.items():
        members = category_array == category
        count = int(members.sum())
        if count == 0:
            continue
        ratios = main_feature_ratios(shares[members], errors[members], t_det, features)
        hits = detected[members]
        tp = int(hits.sum())
        only_main = int(np.sum(hits & (ratios > 1.0)))
        rows.append(CategoryRow(
            category=category,
            count=count,
            detected=tp,
            recall=tp / count,
            only_main_count=only_main,
            only_main_frac_of_tp=_ratio(only_main, tp),
            mean_main_ratio_tp=float(ratios[hits].mean()) if tp else None,
            mean_main_ratio_fn=float(ratios[~hits].mean()) if tp < count else None,
        ))
    return rows


def false_positive_breakdown(
    verdicts: Sequence[Verdict],
    labels: Sequence[LabelLike],
    hidden_categories: Sequence[Optional[str]],
) -> List[FalsePositiveRow]:
    """
    Помеченные benign потоки, признанные вредоносными: с скрытой категорией
    атаки (шум обучающих данных, фактически верные срабатывания) и настоящие FP.
    """
    if not (len(verdicts) == len(labels) == len(hidden_categories)):
        raise DataError('Длины вердиктов, меток и категорий не совпадают')

    noisy = 0
    actual = 0
    for verdict, label, category in zip(verdicts, labels, hidden_categories):
        if not verdict.malicious or is_malicious_label(label):
            continue
        if category:
            noisy += 1
        else:
            actual += 1
    total = noisy + actual
    return [
        FalsePositiveRow(kind='hidden_anomaly', count=noisy, fraction=_ratio(noisy, total)),
        FalsePositiveRow(kind='actual_false_positive', count=actual, fraction=_ratio(actual, total)),
    ]
