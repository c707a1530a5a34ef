import logging
from enum import Enum
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .exceptions import DegenerateConfiguration, InputError
from .graph import build_first_order
from .schemas import (
    CorrespondenceSet,
    EvalReport,
    Hypothesis,
    PairEvaluation,
    RankingRecalls,
    RegistrationResult,
    RigidTransform,
    StabilityRow,
    SuccessCriteria,
    is_proper_rotation,
)
from .solver import count_inliers, kabsch, kabsch_batch, residuals

logger = logging.getLogger(__name__)

# Допуск на аргумент arccos: вне [-1 - eps, 1 + eps] вход считается не поворотом.
ARCCOS_TOLERANCE = 1e-9
ROTATION_INPUT_TOLERANCE = 1e-6


class RankingMetric(str, Enum):
    """
    Метрика ранжирования гипотез: число инлаеров (больше - лучше) или усечённые MAE / MSE (меньше - лучше).
    """

    IN = "in"
    MAE = "mae"
    MSE = "mse"


def _rotation_angles(reference: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """
    Углы (градусы) между reference (3, 3) и пакетом поворотов (M, 3, 3).

    Угол равен arccos((tr(Aᵀ B) - 1) / 2), но вычисляется через atan2 по симметричной и
    кососимметричной частям - так он точен и около 0°, и около 180°.
    """

    delta = np.einsum("ki,mkj->mij", reference, rotations)
    cos_arg = (np.trace(delta, axis1=1, axis2=2) - 1.0) / 2.0
    if np.any(np.abs(cos_arg) > 1.0 + ARCCOS_TOLERANCE):
        raise InputError("rotation error argument is outside [-1, 1]: input is not a rotation")
    skew = np.stack(
        [delta[:, 2, 1] - delta[:, 1, 2], delta[:, 0, 2] - delta[:, 2, 0], delta[:, 1, 0] - delta[:, 0, 1]], axis=1
    )
    sin_arg = np.linalg.norm(skew, axis=1) / 2.0
    return np.degrees(np.arctan2(sin_arg, np.clip(cos_arg, -1.0, 1.0)))


def rotation_error(r_est: Any, r_gt: Any) -> float:
    """
    Ошибка поворота в градусах, [0, 180].

    :param r_est: оценённый поворот 3x3.
    :param r_gt: эталонный поворот 3x3.
    :return: угол в градусах.
    """

    estimated = np.asarray(r_est, dtype=float)
    reference = np.asarray(r_gt, dtype=float)
    for name, matrix in (("r_est", estimated), ("r_gt", reference)):
        if not is_proper_rotation(matrix, ROTATION_INPUT_TOLERANCE):
            raise InputError(f'"{name}" is not a proper rotation')
    return float(_rotation_angles(reference, estimated[None])[0])


def translation_error(t_est: Any, t_gt: Any) -> float:
    return float(np.linalg.norm(np.asarray(t_est, dtype=float) - np.asarray(t_gt, dtype=float)))


def transform_errors(estimated: RigidTransform, gt: RigidTransform) -> Tuple[float, float]:
    return rotation_error(estimated.rotation, gt.rotation), translation_error(estimated.translation, gt.translation)


def is_successful(estimated: RigidTransform, gt: RigidTransform, criteria: SuccessCriteria) -> bool:
    re_deg, te_m = transform_errors(estimated, gt)
    return re_deg <= criteria.re_max and te_m <= criteria.te_max


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def evaluate_pairs(results: Sequence[Tuple[RegistrationResult, RigidTransform]], criteria: SuccessCriteria) -> EvalReport:
    """
    Оценка набора пар: RE / TE / успех по каждой паре, RR и FPS по набору.

    Неудачные регистрации (без гипотезы) считаются неуспешными. Средние RE / TE считаются по
    успешным парам; варианты по всем парам с гипотезой добавлены для прозрачности.

    :param results: пары (результат регистрации, эталонное преобразование).
    :param criteria: пороги успеха.
    :return: EvalReport.
    """

    if not results:
        raise InputError("no pairs to evaluate")

    per_pair: List[PairEvaluation] = []
    for result, gt in results:
        elapsed = result.total_time
        if not result.success or result.best_transform is None:
            per_pair.append(PairEvaluation(re_deg=None, te_m=None, success=False, elapsed_s=elapsed))
            continue
        re_deg, te_m = transform_errors(result.best_transform, gt)
        success = re_deg <= criteria.re_max and te_m <= criteria.te_max
        per_pair.append(PairEvaluation(re_deg=re_deg, te_m=te_m, success=success, elapsed_s=elapsed))

    successes = [pair for pair in per_pair if pair.success]
    with_hypothesis = [pair for pair in per_pair if pair.re_deg is not None]
    total_elapsed = sum(pair.elapsed_s for pair in per_pair)
    return EvalReport(
        per_pair=per_pair,
        rr=len(successes) / len(per_pair),
        mean_re_over_successes=_mean([pair.re_deg for pair in successes if pair.re_deg is not None]),
        mean_te_over_successes=_mean([pair.te_m for pair in successes if pair.te_m is not None]),
        mean_re_all=_mean([pair.re_deg for pair in with_hypothesis if pair.re_deg is not None]),
        mean_te_all=_mean([pair.te_m for pair in with_hypothesis if pair.te_m is not None]),
        fps=len(per_pair) / total_elapsed if total_elapsed > 0 else None,
    )


def hypothesis_score(
    t: RigidTransform, corr: CorrespondenceSet, metric: RankingMetric, inlier_threshold: float
) -> float:
    """
    Оценка преобразования по выбранной метрике.

    MAE / MSE считаются по невязкам, усечённым на inlier_threshold, по всем соответствиям.
    """

    if metric == RankingMetric.IN:
        return float(count_inliers(t, corr, inlier_threshold)[0])
    truncated = np.minimum(residuals(t, corr), inlier_threshold)
    if metric == RankingMetric.MAE:
        return float(np.mean(truncated))
    return float(np.mean(truncated**2))


def rank_hypotheses(
    hypotheses: Sequence[Hypothesis], corr: CorrespondenceSet, metric: RankingMetric, inlier_threshold: float
) -> List[Hypothesis]:
    """
    Переранжирование гипотез по метрике (устойчиво к равенствам).
    """

    scores = [hypothesis_score(h.transform, corr, metric, inlier_threshold) for h in hypotheses]
    sign = -1.0 if metric == RankingMetric.IN else 1.0
    order = np.argsort(sign * np.asarray(scores), kind="stable")
    return [hypotheses[int(k)] for k in order]


def derive_inlier_labels(corr: CorrespondenceSet, gt: RigidTransform, inlier_threshold: float) -> List[bool]:
    """
    Приближение меток инлаеров: невязка под эталоном не больше порога.
    """

    return [bool(flag) for flag in residuals(gt, corr) <= inlier_threshold]


def ranking_recalls(
    hyp: Sequence[Hypothesis],
    corr: CorrespondenceSet,
    gt: RigidTransform,
    criteria: SuccessCriteria,
    ks: Sequence[int],
    inlier_labels: Optional[Sequence[bool]] = None,
    metric: RankingMetric = RankingMetric.IN,
    inlier_threshold: float = 0.10,
) -> RankingRecalls:
    """
    Ранговые метрики для одной пары.

    tqrr_hit - лучшая гипотеза не хуже эталона по метрике; icrr_hit - все три элемента лучшей клики
    инлаеры; tkrr_hits[k] - среди первых k гипотез есть успешная.

    :param hyp: гипотезы, отсортированные по метрике.
    :param corr: набор соответствий.
    :param gt: эталонное преобразование.
    :param criteria: пороги успеха.
    :param ks: значения k для TKRR.
    :param inlier_labels: метки инлаеров; если нет - выводятся по невязкам под эталоном.
    :param metric: метрика ранжирования.
    :param inlier_threshold: порог невязки для IN и усечения MAE / MSE.
    :return: RankingRecalls.
    """

    if not hyp:
        raise InputError("hypothesis list is empty")

    top = hyp[0]
    top_score = hypothesis_score(top.transform, corr, metric, inlier_threshold)
    gt_score = hypothesis_score(gt, corr, metric, inlier_threshold)
    tqrr_hit = top_score >= gt_score if metric == RankingMetric.IN else top_score <= gt_score

    labels = list(inlier_labels) if inlier_labels is not None else derive_inlier_labels(corr, gt, inlier_threshold)
    icrr_hit = all(labels[index] for index in top.clique.members)

    success_flags = [is_successful(h.transform, gt, criteria) for h in hyp]
    tkrr_hits: Dict[int, bool] = {}
    for k in ks:
        if k < 1:
            raise InputError(f"TKRR k must be positive, got {k}")
        tkrr_hits[int(k)] = any(success_flags[:k])

    return RankingRecalls(tqrr_hit=tqrr_hit, icrr_hit=icrr_hit, tkrr_hits=tkrr_hits)


def count_correct_hypotheses(hyp: Sequence[Hypothesis], gt: RigidTransform, criteria: SuccessCriteria) -> int:
    """
    Число гипотез, удовлетворяющих критериям успеха относительно эталона.
    """

    return sum(1 for h in hyp if is_successful(h.transform, gt, criteria))


def grow_cliques(
    adjacency: np.ndarray, clique_size: int, rng: np.random.Generator, max_cliques: int = 50, max_attempts: int = 2000
) -> List[Tuple[int, ...]]:
    """
    Жадный рост клик заданного размера от случайных рёбер.

    На каждом шаге в клику добавляется случайная вершина, смежная со всеми текущими; при тупике
    начинаем заново с другого ребра.

    :param adjacency: булева матрица смежности.
    :param clique_size: размер клики.
    :param rng: генератор.
    :param max_cliques: сколько различных клик собрать.
    :param max_attempts: максимум попыток роста.
    :return: список клик (индексы по возрастанию).
    """

    rows, cols = np.nonzero(np.triu(adjacency, k=1))
    found: List[Tuple[int, ...]] = []
    seen: Set[Tuple[int, ...]] = set()
    if not rows.shape[0]:
        return found

    for _ in range(max_attempts):
        if len(found) >= max_cliques:
            break
        edge = int(rng.integers(rows.shape[0]))
        members = [int(rows[edge]), int(cols[edge])]
        candidates = adjacency[members[0]] & adjacency[members[1]]
        while len(members) < clique_size:
            pool = np.nonzero(candidates)[0]
            if not pool.shape[0]:
                break
            vertex = int(pool[rng.integers(pool.shape[0])])
            members.append(vertex)
            candidates = candidates & adjacency[vertex]
        if len(members) == clique_size:
            clique = tuple(sorted(members))
            if clique not in seen:
                seen.add(clique)
                found.append(clique)
    return found


def _stability_samples(
    corr: CorrespondenceSet, tau: float, clique_size: int, rng: np.random.Generator, max_cliques: int
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Расхождения между преобразованием по большой клике и по каждой её 3-подклике.

    :return: (ΔR в градусах, Δt в метрах, число использованных клик).
    """

    adjacency = build_first_order(corr, tau).adjacency
    cliques = grow_cliques(adjacency, clique_size, rng, max_cliques=max_cliques)
    subsets = np.array(list(combinations(range(clique_size), 3)), dtype=np.int64)

    rotation_errors: List[np.ndarray] = []
    translation_errors: List[np.ndarray] = []
    used = 0
    for clique in cliques:
        index = np.asarray(clique, dtype=np.int64)
        try:
            reference = kabsch(corr.source[index], corr.target[index])
        except DegenerateConfiguration:
            continue
        triples = index[subsets]
        rotations, translations, valid = kabsch_batch(corr.source[triples], corr.target[triples])
        if not valid.any():
            continue
        used += 1
        rotation_errors.append(_rotation_angles(reference.rotation, rotations[valid]))
        translation_errors.append(np.linalg.norm(translations[valid] - reference.translation, axis=1))

    if not used:
        return np.zeros(0), np.zeros(0), 0
    return np.concatenate(rotation_errors), np.concatenate(translation_errors), used


def _validate_stability_args(taus: Sequence[float], clique_size: int) -> None:
    if clique_size < 4:
        raise InputError(f'"clique_size" must be at least 4, got {clique_size}')
    if not taus:
        raise InputError("at least one tau is required")


def stability_table(
    instances: Sequence[CorrespondenceSet],
    taus: Sequence[float],
    clique_size: int = 10,
    seed: int = 0,
    max_cliques: int = 50,
) -> List[StabilityRow]:
    """
    Диагностика устойчивости клик по нескольким наборам: выборки объединяются по каждому tau.

    :param instances: наборы соответствий.
    :param taus: пороги совместимости (метры).
    :param clique_size: размер больших клик (>= 4).
    :param seed: зерно генератора роста клик.
    :param max_cliques: число клик на набор и tau.
    :return: строки (tau, медиана ΔR, медиана Δt, число выборок, число клик).
    """

    _validate_stability_args(taus, clique_size)
    rows: List[StabilityRow] = []
    for tau in taus:
        rng = np.random.Generator(np.random.PCG64(seed))
        pooled_re: List[np.ndarray] = []
        pooled_te: List[np.ndarray] = []
        cliques = 0
        for corr in instances:
            re_deg, te_m, used = _stability_samples(corr, tau, clique_size, rng, max_cliques)
            pooled_re.append(re_deg)
            pooled_te.append(te_m)
            cliques += used
        all_re = np.concatenate(pooled_re) if pooled_re else np.zeros(0)
        all_te = np.concatenate(pooled_te) if pooled_te else np.zeros(0)
        if not all_re.shape[0]:
            logger.info("No %d-clique found at tau=%g", clique_size, tau)
        rows.append(
            StabilityRow(
                tau=float(tau),
                median_re_deg=float(np.median(all_re)) if all_re.shape[0] else None,
                median_te_m=float(np.median(all_te)) if all_te.shape[0] else None,
                samples=int(all_re.shape[0]),
                cliques=cliques,
            )
        )
    return rows


def clique_stability_experiment(
    corr: CorrespondenceSet, taus: Sequence[float], clique_size: int = 10, seed: int = 0, max_cliques: int = 50
) -> List[StabilityRow]:
    """
    Диагностика устойчивости клик для одного набора соответствий.

    Для каждого tau строится граф совместимости, жадно выращиваются клики размера clique_size,
    по каждой клике и каждой её 3-подклике оценивается преобразование, медианы расхождений
    сводятся в таблицу. Если клик нужного размера нет, строка помечается отсутствующей (samples = 0).
    """

    return stability_table([corr], taus, clique_size=clique_size, seed=seed, max_cliques=max_cliques)
