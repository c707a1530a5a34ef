import logging
from typing import Any, Dict, List, Set, Tuple

import numpy as np
from pydantic import BaseModel, validator

from .exceptions import SizingError
from .parallel import map_ordered, split_range
from .schemas import CompatGraph, Pivot, TurboClique, WeightedGraph

logger = logging.getLogger(__name__)

MAX_BRUTE_FORCE_NODES = 2000
# Ограничение на размер блока (пивоты x вершины), обрабатываемого за раз.
CHUNK_CELLS = 1 << 22


class CliqueBatch(BaseModel):
    """
    Результат PGS в виде массивов.

    Attributes:
        members             массив (M, 3) индексов, строки по возрастанию.
        weights             агрегированные веса (M,).
        pivots              число использованных опорных рёбер.
        neighbor_checks     число просмотренных кандидатов z (без концов опорного ребра).
    """

    members: np.ndarray
    weights: np.ndarray
    pivots: int = 0
    neighbor_checks: int = 0

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("members", pre=True)
    def validate_members(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=np.int64).reshape(-1, 3)

    @validator("weights", pre=True)
    def validate_weights(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return int(self.members.shape[0])

    def to_cliques(self) -> List[TurboClique]:
        return [
            TurboClique(i=int(i), j=int(j), z=int(z), aggregated_weight=int(w))
            for (i, j, z), w in zip(self.members, self.weights)
        ]

    def deduplicated(self) -> Tuple["CliqueBatch", int]:
        """
        Удаление повторов с сохранением порядка первого вхождения.

        :return: пара (батч без повторов, число удалённых строк).
        """

        if not len(self):
            return self, 0
        _, first = np.unique(self.members, axis=0, return_index=True)
        first = np.sort(first)
        batch = CliqueBatch(
            members=self.members[first],
            weights=self.weights[first],
            pivots=self.pivots,
            neighbor_checks=self.neighbor_checks,
        )
        return batch, len(self) - len(batch)


def _top_edges(g: WeightedGraph, k1: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Верхние k1 положительных рёбер (i < j): по убыванию веса, при равенстве - лексикографически.
    """

    rows, cols = np.nonzero(g.weights if g.ordered else np.triu(g.weights, k=1))
    weights = g.weights[rows, cols]
    # np.nonzero возвращает рёбра в лексикографическом порядке, стабильная сортировка его сохраняет.
    order = np.argsort(-weights, kind="stable")[:k1]
    return rows[order], cols[order], weights[order]


def select_pivots(g: WeightedGraph, k1: int) -> List[Pivot]:
    """
    Выбор опорных рёбер.

    Возвращает min(k1, число положительных рёбер) рёбер по (вес убыв., (i, j) возр.). Если на
    пороговом весе несколько рёбер, первыми берутся лексикографически меньшие до заполнения квоты.

    :param g: граф SC² или O2Graph.
    :param k1: число опорных рёбер.
    :return: список Pivot (пустой, если положительных рёбер нет).
    """

    rows, cols, weights = _top_edges(g, k1)
    return [Pivot(i=int(i), j=int(j), weight=int(w)) for i, j, w in zip(rows, cols, weights)]


def common_neighbors(g: WeightedGraph, i: int, j: int) -> Set[int]:
    """
    Общие соседи концов ребра: {z : g[i][z] > 0 и g[j][z] > 0}.

    В O2Graph это автоматически даёт только z > j.
    """

    mask = (g.weights[i] > 0) & (g.weights[j] > 0)
    return {int(z) for z in np.nonzero(mask)[0]}


def _search_chunk(
    weights: np.ndarray, positive: np.ndarray, rows: np.ndarray, cols: np.ndarray, k2: int
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Поиск TurboClique для блока опорных рёбер в плотной (тензорной) форме.

    :param weights: матрица весов графа.
    :param positive: маска weights > 0.
    :param rows: первые концы опорных рёбер.
    :param cols: вторые концы опорных рёбер.
    :param k2: число клик на опорное ребро.
    :return: тройки (i, j, z) в порядке опорных рёбер, их агрегированные веса и число просмотренных кандидатов.
    """

    candidates = np.ones((rows.shape[0], weights.shape[1]), dtype=bool)
    pivot_rows = np.arange(rows.shape[0])
    candidates[pivot_rows, rows] = False
    candidates[pivot_rows, cols] = False
    checks = int(np.count_nonzero(candidates))

    # Проверка g[i][j] * g[i][z] * g[j][z] > 0 для всех z сразу.
    mask = candidates & positive[rows] & positive[cols]
    scores = weights[rows, cols][:, None] + weights[rows] + weights[cols]
    scores = np.where(mask, scores, -1)

    # Ключ (S убыв., z возр.) уникален в строке, поэтому top-k2 берётся частичной сортировкой.
    n = weights.shape[1]
    keys = -scores * n + np.arange(n)
    take = min(k2, n)
    order = np.argpartition(keys, take - 1, axis=1)[:, :take]
    order = np.take_along_axis(order, np.argsort(np.take_along_axis(keys, order, axis=1), axis=1), axis=1)
    top = np.take_along_axis(scores, order, axis=1)
    pivot_index, slot = np.nonzero(top >= 0)

    triples = np.stack([rows[pivot_index], cols[pivot_index], order[pivot_index, slot]], axis=1)
    return triples, top[pivot_index, slot], checks


def pgs_search_batch(g: WeightedGraph, k1: int, k2: int, workers: int = 1) -> CliqueBatch:
    """
    Pivot-Guided Search, результат в виде массивов.

    Для каждого опорного ребра (i, j) считается S(z) = g[i][j] + g[i][z] + g[j][z] по общим соседям
    и оставляются top-k2 (S убыв., z возр.). Итог глобально сортируется по (S убыв., (i, j, z) возр.).
    Блоки опорных рёбер обрабатываются пулом потоков, порядок слияния фиксирован.

    :param g: граф SC² или O2Graph.
    :param k1: число опорных рёбер.
    :param k2: число клик на опорное ребро.
    :param workers: число потоков.
    :return: CliqueBatch длины <= k1 * k2.
    """

    rows, cols, _ = _top_edges(g, k1)
    pivot_count = int(rows.shape[0])
    if not pivot_count:
        return CliqueBatch(members=np.zeros((0, 3)), weights=np.zeros(0), pivots=0, neighbor_checks=0)

    weights = g.weights
    positive = weights > 0
    chunk = max(1, CHUNK_CELLS // max(g.n, 1))
    bounds = split_range(pivot_count, chunk)

    def run(bound: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, int]:
        start, stop = bound
        return _search_chunk(weights, positive, rows[start:stop], cols[start:stop], k2)

    parts = map_ordered(run, bounds, workers)

    triples = np.sort(np.concatenate([part[0] for part in parts]), axis=1)
    scores = np.concatenate([part[1] for part in parts])
    neighbor_checks = sum(part[2] for part in parts)
    order = np.lexsort((triples[:, 2], triples[:, 1], triples[:, 0], -scores))

    logger.debug("PGS: pivots=%d, cliques=%d, neighbor_checks=%d", pivot_count, len(order), neighbor_checks)
    return CliqueBatch(
        members=triples[order],
        weights=scores[order],
        pivots=pivot_count,
        neighbor_checks=neighbor_checks,
    )


def pgs_search(g: WeightedGraph, k1: int, k2: int, workers: int = 1) -> List[TurboClique]:
    return pgs_search_batch(g, k1=k1, k2=k2, workers=workers).to_cliques()


def enumerate_triangles(adjacency: np.ndarray) -> np.ndarray:
    """
    Все тройки i < j < z с тремя рёбрами, в лексикографическом порядке.

    :param adjacency: булева симметричная матрица смежности.
    :return: массив (M, 3).
    """

    n = adjacency.shape[0]
    if n > MAX_BRUTE_FORCE_NODES:
        raise SizingError(f"brute-force enumeration is limited to {MAX_BRUTE_FORCE_NODES} nodes, got {n}")

    found: List[np.ndarray] = []
    for i in range(n):
        upper = np.nonzero(adjacency[i, i + 1 :])[0] + i + 1
        if upper.shape[0] < 2:
            continue
        a, b = np.nonzero(np.triu(adjacency[np.ix_(upper, upper)], k=1))
        if a.shape[0]:
            found.append(np.stack([np.full(a.shape[0], i), upper[a], upper[b]], axis=1))
    if not found:
        return np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(found).astype(np.int64)


def brute_force_3cliques(g: CompatGraph) -> List[TurboClique]:
    """
    Оракул: полный перебор 3-клик графа первого порядка (N <= 2000).

    Агрегированный вес каждой тройки - сумма числа общих соседей по её трём рёбрам.
    """

    triangles = enumerate_triangles(g.adjacency)
    adjacency = g.adjacency.astype(np.float64)
    common = np.rint(adjacency @ adjacency).astype(np.int64)
    result: List[TurboClique] = []
    for i, j, z in triangles:
        weight = common[i, j] + common[i, z] + common[j, z]
        result.append(TurboClique(i=int(i), j=int(j), z=int(z), aggregated_weight=int(weight)))
    return result


def pivot_ownership(batch: CliqueBatch) -> Dict[Tuple[int, int, int], int]:
    """
    Сколько раз каждая тройка встречается в выдаче PGS.
    """

    counts: Dict[Tuple[int, int, int], int] = {}
    for i, j, z in batch.members:
        key = (int(i), int(j), int(z))
        counts[key] = counts.get(key, 0) + 1
    return counts
