import logging
from typing import Any, TextIO, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from .exceptions import InputError, SizingError
from .schemas import CompatGraph, CorrespondenceSet, Point3, WeightedGraph

logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 3
MAX_DENSE_NODES = 20000


def check_size(n: int) -> None:
    """
    Проверка числа соответствий для плотного графа.

    :param n: число соответствий.
    :return: None.
    """

    if n < MIN_CORRESPONDENCES:
        raise InputError(f"at least {MIN_CORRESPONDENCES} correspondences are required, got {n}")
    if n > MAX_DENSE_NODES:
        raise SizingError(f"{n} correspondences exceed the dense graph limit of {MAX_DENSE_NODES}")


def build_first_order(corr: CorrespondenceSet, tau: float) -> CompatGraph:
    """
    Граф совместимости первого порядка.

    Ребро (i, j) есть тогда и только тогда, когда i != j и | ‖x_i - x_j‖ - ‖y_i - y_j‖ | <= tau.

    :param corr: набор соответствий.
    :param tau: порог совместимости (метры), > 0.
    :return: CompatGraph.
    """

    if not tau > 0:
        raise InputError('"tau" must be positive')
    n = len(corr)
    check_size(n)

    source_dist = squareform(pdist(corr.source))
    target_dist = squareform(pdist(corr.target))
    adjacency = np.abs(source_dist - target_dist) <= tau
    np.fill_diagonal(adjacency, False)

    graph = CompatGraph(n=n, adjacency=adjacency)
    logger.debug("First-order graph: n=%d, tau=%.6g, edges=%d", n, tau, graph.edge_count)
    return graph


def build_sc2(g: CompatGraph) -> WeightedGraph:
    """
    Граф SC²: вес ребра - число общих совместимых соседей его концов.

    Считается как булево матричное произведение, маскированное смежностью. Произведение
    выполняется в float64: суммы нулей и единиц до 2^53 точны, результат переводится в целые.

    :param g: граф первого порядка.
    :return: симметричный WeightedGraph (ordered=False).
    """

    adjacency = g.adjacency.astype(np.float64)
    common = adjacency @ adjacency
    weights = np.rint(common * adjacency).astype(np.int64)
    return WeightedGraph(n=g.n, weights=weights, ordered=False)


def to_o2graph(g: WeightedGraph) -> WeightedGraph:
    """
    O2Graph: рёбра ориентированы от меньшего индекса к большему (верхний треугольник).
    """

    if g.ordered:
        raise InputError("graph is already ordered")
    return WeightedGraph(n=g.n, weights=np.triu(g.weights, k=1), ordered=True)


def estimate_resolution(points: Any) -> float:
    """
    Разрешение облака: медиана расстояний до ближайшего соседа.

    :param points: массив (N, 3) или список Point3.
    :return: разрешение в метрах.
    """

    if isinstance(points, list) and points and isinstance(points[0], Point3):
        points = [p.as_array() for p in points]
    array = np.array(points, dtype=float)
    array = array.reshape(-1, 3)
    if array.shape[0] < 2:
        raise InputError("at least 2 points are required to estimate resolution")
    distances, _ = cKDTree(array).query(array, k=2)
    return float(np.median(distances[:, 1]))


def dump_graph(graph: Union[CompatGraph, WeightedGraph], stream: TextIO) -> None:
    """
    Отладочный вывод матрицы графа в виде текстовой сетки.
    """

    if isinstance(graph, CompatGraph):
        stream.write(f"# adjacency n={graph.n}\n")
        matrix = graph.adjacency.astype(np.int64)
    else:
        stream.write(f"# weights n={graph.n} mode={graph.mode.value}\n")
        matrix = graph.weights
    for row in matrix:
        stream.write(" ".join(str(int(value)) for value in row) + "\n")
