import logging
import time
from typing import Any, Dict, List, Tuple

import numpy as np

from .exceptions import DegenerateConfiguration, InputError, NoHypothesis
from .graph import build_first_order, build_sc2, check_size, to_o2graph
from .parallel import map_ordered, split_range
from .pgs import CliqueBatch, pgs_search_batch
from .schemas import (
    STAGE_GRAPH,
    STAGE_MODEL,
    STAGE_PGS,
    CorrespondenceSet,
    EstimatorParams,
    GraphMode,
    Hypothesis,
    Point3,
    RegistrationResult,
    RigidTransform,
    TurboClique,
)

logger = logging.getLogger(__name__)

# Относительный порог второго сингулярного числа центрированных исходных точек.
DEGENERACY_TOLERANCE = 1e-9
# Число гипотез, оцениваемых за один проход по всем соответствиям.
SCORE_CHUNK = 256


def _as_points(points: Any) -> np.ndarray:
    if isinstance(points, list) and points and isinstance(points[0], Point3):
        return np.array([p.as_array() for p in points], dtype=float)
    return np.asarray(points, dtype=float).reshape(-1, 3)


def kabsch_batch(source: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Решатель Кабша для пакета наборов точек одинакового размера.

    :param source: массив (M, K, 3) исходных точек.
    :param target: массив (M, K, 3) целевых точек.
    :return: повороты (M, 3, 3), переносы (M, 3) и маска невырожденных наборов (M,).
    """

    source_centroid = source.mean(axis=1)
    target_centroid = target.mean(axis=1)
    source_centered = source - source_centroid[:, None, :]
    target_centered = target - target_centroid[:, None, :]

    singular = np.linalg.svd(source_centered, compute_uv=False)
    scale = singular[:, 0]
    valid = (scale > np.finfo(float).tiny) & (singular[:, 1] > DEGENERACY_TOLERANCE * scale)

    covariance = np.einsum("mki,mkj->mij", source_centered, target_centered)
    u, _, vt = np.linalg.svd(covariance)
    v = np.transpose(vt, (0, 2, 1))
    ut = np.transpose(u, (0, 2, 1))
    # Коррекция отражения: det(R) = +1.
    d = np.sign(np.linalg.det(v @ ut))
    d[d == 0] = 1.0
    correction = np.tile(np.eye(3), (source.shape[0], 1, 1))
    correction[:, 2, 2] = d
    rotations = v @ correction @ ut
    translations = target_centroid - np.einsum("mij,mj->mi", rotations, source_centroid)
    return rotations, translations, valid


def kabsch(source_pts: Any, target_pts: Any) -> RigidTransform:
    """
    Решатель Кабша: жёсткое преобразование, минимизирующее сумму ‖T(x_i) - y_i‖².

    :param source_pts: исходные точки (список Point3 или массив (K, 3)), K >= 3.
    :param target_pts: целевые точки той же длины.
    :return: RigidTransform.
    """

    source = _as_points(source_pts)
    target = _as_points(target_pts)
    if source.shape != target.shape:
        raise InputError("source and target must have the same number of points")
    if source.shape[0] < 3:
        raise InputError(f"at least 3 point pairs are required, got {source.shape[0]}")

    rotations, translations, valid = kabsch_batch(source[None], target[None])
    if not valid[0]:
        raise DegenerateConfiguration("source points are collinear or coincident")
    return RigidTransform(rotation=rotations[0], translation=translations[0])


def residuals(t: RigidTransform, corr: CorrespondenceSet) -> np.ndarray:
    """
    Невязки ‖T(x_i) - y_i‖ для всех соответствий.
    """

    return np.linalg.norm(corr.source @ t.rotation.T + t.translation - corr.target, axis=1)


def count_inliers(t: RigidTransform, corr: CorrespondenceSet, inlier_threshold: float) -> Tuple[int, List[int]]:
    """
    Подсчёт инлаеров: ‖T(x_i) - y_i‖ <= inlier_threshold.

    :param t: преобразование.
    :param corr: набор соответствий.
    :param inlier_threshold: порог (метры), > 0.
    :return: (число инлаеров, индексы по возрастанию).
    """

    if not inlier_threshold > 0:
        raise InputError('"inlier_threshold" must be positive')
    indices = np.nonzero(residuals(t, corr) <= inlier_threshold)[0]
    return int(indices.shape[0]), [int(index) for index in indices]


def score_batch(
    rotations: np.ndarray,
    translations: np.ndarray,
    corr: CorrespondenceSet,
    inlier_threshold: float,
    workers: int = 1,
) -> np.ndarray:
    """
    Число инлаеров для пакета гипотез, блоками по SCORE_CHUNK.
    """

    def run(bound: Tuple[int, int]) -> np.ndarray:
        start, stop = bound
        predicted = np.einsum("nj,mij->mni", corr.source, rotations[start:stop]) + translations[start:stop, None, :]
        distances = np.linalg.norm(predicted - corr.target[None], axis=2)
        return np.count_nonzero(distances <= inlier_threshold, axis=1)

    bounds = split_range(rotations.shape[0], SCORE_CHUNK)
    if not bounds:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(map_ordered(run, bounds, workers)).astype(np.int64)


def _select_best(
    corr: CorrespondenceSet,
    members: np.ndarray,
    weights: np.ndarray,
    inlier_threshold: float,
    workers: int,
    keep_ranked: bool,
) -> Dict[str, Any]:
    """
    Оценка гипотез по тройкам и выбор лучшей.

    Тройки должны быть упорядочены по (агрегированный вес убыв., индексы возр.) - тогда устойчивая
    сортировка по числу инлаеров реализует итоговое правило разрешения равенств.

    :return: словарь с лучшей гипотезой, числом оценённых и вырожденных гипотез, ранжированным списком.
    """

    if not members.shape[0]:
        raise NoHypothesis("no TurboClique was found")

    rotations, translations, valid = kabsch_batch(corr.source[members], corr.target[members])
    degenerate = int(np.count_nonzero(~valid))
    if not valid.any():
        raise NoHypothesis(f"all {members.shape[0]} cliques are degenerate")

    members, weights = members[valid], weights[valid]
    rotations, translations = rotations[valid], translations[valid]
    scores = score_batch(rotations, translations, corr, inlier_threshold, workers)
    order = np.argsort(-scores, kind="stable")

    ranked = None
    if keep_ranked:
        ranked = [
            Hypothesis(
                clique=TurboClique(i=int(members[k, 0]), j=int(members[k, 1]), z=int(members[k, 2]),
                                   aggregated_weight=int(weights[k])),
                transform=RigidTransform(rotation=rotations[k], translation=translations[k]),
                score=int(scores[k]),
            )
            for k in order
        ]

    best = int(order[0])
    return {
        "clique": TurboClique(
            i=int(members[best, 0]), j=int(members[best, 1]), z=int(members[best, 2]),
            aggregated_weight=int(weights[best]),
        ),
        "transform": RigidTransform(rotation=rotations[best], translation=translations[best]),
        "evaluated": int(members.shape[0]),
        "degenerate": degenerate,
        "ranked": ranked,
    }


def refine_transform(t: RigidTransform, corr: CorrespondenceSet, inlier_threshold: float) -> RigidTransform:
    """
    Повторная подгонка Кабша по инлаерам преобразования (если их хватает и они невырождены).
    """

    _, indices = count_inliers(t, corr, inlier_threshold)
    if len(indices) < 3:
        return t
    try:
        return kabsch(corr.source[indices], corr.target[indices])
    except DegenerateConfiguration:
        return t


def _failed(method: str, reason: str, timings: Dict[str, float], counters: Dict[str, int]) -> RegistrationResult:
    logger.info("Registration failed: %s", reason)
    return RegistrationResult(
        method=method, success=False, failure_reason=reason, stage_timings=timings, counters=counters
    )


def estimate(corr: CorrespondenceSet, params: EstimatorParams) -> RegistrationResult:
    """
    Оценка TurboReg.

    Граф первого порядка -> SC² -> (O2Graph) -> PGS -> Кабш по каждой TurboClique -> подсчёт
    инлаеров -> гипотеза с максимальным числом инлаеров. Равенства разрешаются по агрегированному
    весу (убыв.), затем лексикографически по тройке.

    :param corr: набор соответствий (N >= 3).
    :param params: параметры оценщика.
    :return: RegistrationResult; при отсутствии гипотез success = False и преобразования нет.
    """

    check_size(len(corr))
    timings: Dict[str, float] = {}
    counters: Dict[str, int] = {}

    started = time.perf_counter()
    first_order = build_first_order(corr, params.tau)
    graph = build_sc2(first_order)
    if params.graph_mode == GraphMode.O2:
        graph = to_o2graph(graph)
    timings[STAGE_GRAPH] = time.perf_counter() - started
    counters["edges"] = first_order.edge_count

    started = time.perf_counter()
    batch: CliqueBatch = pgs_search_batch(graph, k1=params.k1, k2=params.k2, workers=params.workers)
    counters["pivots"] = batch.pivots
    counters["neighbor_checks"] = batch.neighbor_checks
    counters["cliques"] = len(batch)
    duplicates = 0
    if params.graph_mode == GraphMode.SC2:
        batch, duplicates = batch.deduplicated()
    counters["duplicates_removed"] = duplicates
    timings[STAGE_PGS] = time.perf_counter() - started

    started = time.perf_counter()
    try:
        selected = _select_best(
            corr, batch.members, batch.weights, params.inlier_threshold, params.workers, params.keep_ranked
        )
    except NoHypothesis as exc:
        timings[STAGE_MODEL] = time.perf_counter() - started
        return _failed("turboreg", str(exc), timings, counters)

    transform = selected["transform"]
    if params.refine:
        transform = refine_transform(transform, corr, params.inlier_threshold)
    inlier_count, inlier_indices = count_inliers(transform, corr, params.inlier_threshold)
    timings[STAGE_MODEL] = time.perf_counter() - started
    counters["degenerate_discards"] = selected["degenerate"]

    logger.debug(
        "TurboReg: %s, inliers=%d, hypotheses=%d",
        ", ".join(f"{name}={value:.4f}s" for name, value in timings.items()),
        inlier_count,
        selected["evaluated"],
    )
    return RegistrationResult(
        method="turboreg",
        best_transform=transform,
        best_inlier_count=inlier_count,
        inlier_indices=inlier_indices,
        best_clique=selected["clique"],
        hypotheses_evaluated=selected["evaluated"],
        ranked_hypotheses=selected["ranked"],
        stage_timings=timings,
        counters=counters,
    )


def sample_triples(n: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """
    Равномерная выборка троек различных индексов.

    :return: массив (iterations, 3), строки по возрастанию.
    """

    triples = np.empty((iterations, 3), dtype=np.int64)
    for row in range(iterations):
        triples[row] = rng.choice(n, size=3, replace=False)
    return np.sort(triples, axis=1)


def ransac_baseline(
    corr: CorrespondenceSet,
    iterations: int,
    inlier_threshold: float,
    seed: int = 0,
    workers: int = 1,
    keep_ranked: bool = False,
) -> RegistrationResult:
    """
    Классический RANSAC по трём точкам: случайные тройки, Кабш, подсчёт инлаеров.

    :param corr: набор соответствий.
    :param iterations: число выборок, >= 1.
    :param inlier_threshold: порог инлаеров (метры).
    :param seed: зерно PCG64, результат детерминирован.
    :param workers: число потоков для подсчёта инлаеров.
    :param keep_ranked: сохранять ли ранжированный список гипотез.
    :return: RegistrationResult.
    """

    if iterations < 1:
        raise InputError('"iterations" must be at least 1')
    check_size(len(corr))
    timings: Dict[str, float] = {}
    counters: Dict[str, int] = {"samples": iterations}

    started = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(seed))
    triples = sample_triples(len(corr), iterations, rng)
    # Агрегированного веса у выборок нет: порядок равенств - порядок выборки.
    weights = np.zeros(iterations, dtype=np.int64)
    try:
        selected = _select_best(corr, triples, weights, inlier_threshold, workers, keep_ranked)
    except NoHypothesis as exc:
        timings[STAGE_MODEL] = time.perf_counter() - started
        return _failed("ransac", str(exc), timings, counters)

    transform = selected["transform"]
    inlier_count, inlier_indices = count_inliers(transform, corr, inlier_threshold)
    timings[STAGE_MODEL] = time.perf_counter() - started
    counters["degenerate_discards"] = selected["degenerate"]

    return RegistrationResult(
        method="ransac",
        best_transform=transform,
        best_inlier_count=inlier_count,
        inlier_indices=inlier_indices,
        best_clique=selected["clique"],
        hypotheses_evaluated=selected["evaluated"],
        ranked_hypotheses=selected["ranked"],
        stage_timings=timings,
        counters=counters,
    )
