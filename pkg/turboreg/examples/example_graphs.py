from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

from turboreg.schemas import CompatGraph

# Пример графа на 7 вершинах: полный граф на {0..4} и клика {1, 3, 5, 6}.
FIXTURE_NODES = 7
FIXTURE_EDGES: List[Tuple[int, int]] = sorted(
    set(combinations(range(5), 2)) | set(combinations((1, 3, 5, 6), 2))
)

ORACLE_DENSITIES = (0.05, 0.2, 0.5)


def graph_from_edges(n: int, edges: Sequence[Tuple[int, int]]) -> CompatGraph:
    """
    Граф совместимости по списку рёбер.

    :param n: число вершин.
    :param edges: рёбра (i, j), i != j.
    :return: CompatGraph.
    """

    adjacency = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = True
    return CompatGraph(n=n, adjacency=adjacency)


def fixture_graph() -> CompatGraph:
    return graph_from_edges(FIXTURE_NODES, FIXTURE_EDGES)


def random_graph(n: int, density: float, seed: int) -> CompatGraph:
    """
    Случайный граф Эрдёша-Реньи с заданной плотностью рёбер.
    """

    rng = np.random.Generator(np.random.PCG64(seed))
    upper = np.triu(rng.random((n, n)) < density, k=1)
    return CompatGraph(n=n, adjacency=upper | upper.T)


def oracle_graphs(count: int = 50, max_nodes: int = 100) -> List[CompatGraph]:
    """
    Набор случайных графов для сверки с полным перебором: плотности 0.05 / 0.2 / 0.5 по кругу.
    """

    graphs: List[CompatGraph] = []
    for seed in range(count):
        rng = np.random.Generator(np.random.PCG64(10_000 + seed))
        n = int(rng.integers(5, max_nodes + 1))
        graphs.append(random_graph(n, ORACLE_DENSITIES[seed % len(ORACLE_DENSITIES)], seed))
    return graphs
