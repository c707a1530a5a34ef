import statistics
import time

import numpy as np
import pytest

from turboreg import pgs
from turboreg.exceptions import SizingError
from turboreg.graph import build_first_order, build_sc2, to_o2graph
from turboreg.pgs import (
    brute_force_3cliques,
    common_neighbors,
    enumerate_triangles,
    pgs_search,
    pgs_search_batch,
    pivot_ownership,
    select_pivots,
)
from turboreg.schemas import CompatGraph, SynthConfig, WeightedGraph
from turboreg.synth import generate
from tests.fixtures.graphs import (
    FIXTURE_O2_TOP_PIVOT_CLIQUES,
    FIXTURE_SC2_WEIGHTS,
    FIXTURE_TRIANGLE_COUNT,
    fixture_graph,
    oracle_graphs,
)


def _as_tuples(cliques):
    return [(c.i, c.j, c.z, c.aggregated_weight) for c in cliques]


def test_select_pivots_order() -> None:
    """
    Тест для проверки порядка опорных рёбер: вес по убыванию, затем лексикографически.
    """

    o2 = to_o2graph(build_sc2(fixture_graph()))
    pivots = select_pivots(o2, k1=3)

    assert [(p.i, p.j, p.weight) for p in pivots] == [(1, 3, 5), (0, 1, 3), (0, 2, 3)]
    assert len(select_pivots(o2, k1=1000)) == len(FIXTURE_SC2_WEIGHTS)


def test_select_pivots_on_edgeless_graph() -> None:
    """
    Тест для проверки пустого списка опорных рёбер на графе без рёбер.
    """

    graph = build_sc2(CompatGraph(n=4, adjacency=np.zeros((4, 4), dtype=bool)))

    assert select_pivots(graph, k1=10) == []
    assert len(pgs_search_batch(graph, k1=10, k2=2)) == 0


def test_common_neighbors() -> None:
    """
    Тест для проверки общих соседей в SC² и O2Graph.
    """

    sc2 = build_sc2(fixture_graph())

    assert common_neighbors(sc2, 1, 3) == {0, 2, 4, 5, 6}
    assert common_neighbors(to_o2graph(sc2), 1, 3) == {4, 5, 6}


def test_pgs_top_cliques_per_pivot() -> None:
    """
    Тест для проверки выбора TurboClique для опорного ребра и разрешения равенств по z.
    """

    o2 = to_o2graph(build_sc2(fixture_graph()))

    assert _as_tuples(pgs_search(o2, k1=1, k2=2)) == FIXTURE_O2_TOP_PIVOT_CLIQUES


def test_pgs_output_order_and_budget() -> None:
    """
    Тест для проверки глобального порядка выдачи и ограничения k1 * k2.
    """

    o2 = to_o2graph(build_sc2(fixture_graph()))
    cliques = _as_tuples(pgs_search(o2, k1=4, k2=2))

    assert len(cliques) <= 4 * 2
    keys = [(-w, i, j, z) for i, j, z, w in cliques]
    assert keys == sorted(keys)
    assert all(i < j < z for i, j, z, _ in cliques)


def test_pgs_matches_brute_force_on_fixture() -> None:
    """
    Тест для проверки полного перебора 3-клик графа-примера через PGS на O2Graph.
    """

    graph = fixture_graph()
    o2 = to_o2graph(build_sc2(graph))
    found = _as_tuples(pgs_search(o2, k1=len(FIXTURE_SC2_WEIGHTS), k2=graph.n))
    oracle = _as_tuples(brute_force_3cliques(graph))

    assert len(oracle) == FIXTURE_TRIANGLE_COUNT
    assert len(found) == len(set(found))
    assert set(found) == set(oracle)


def test_pgs_unique_assignment_on_random_graphs() -> None:
    """
    Тест для проверки: в O2Graph каждая 3-клика находится ровно одним опорным ребром.
    """

    for graph in oracle_graphs():
        o2 = to_o2graph(build_sc2(graph))
        found = _as_tuples(pgs_search(o2, k1=max(1, graph.edge_count), k2=graph.n))

        assert len(found) == len(set(found))
        assert set(found) == set(_as_tuples(brute_force_3cliques(graph)))


def test_sc2_mode_finds_each_clique_three_times() -> None:
    """
    Тест для проверки избыточности поиска на неориентированном графе SC².
    """

    for graph in oracle_graphs():
        batch = pgs_search_batch(build_sc2(graph), k1=max(1, graph.edge_count), k2=graph.n)
        ownership = pivot_ownership(batch)
        triangles = {tuple(int(v) for v in row) for row in enumerate_triangles(graph.adjacency)}

        assert set(ownership) == triangles
        assert all(count == 3 for count in ownership.values())

        deduplicated, removed = batch.deduplicated()
        assert len(deduplicated) == len(triangles)
        assert removed == 2 * len(triangles)


def test_neighbor_check_counter() -> None:
    """
    Тест для проверки счётчика проверок соседей: min(k1, число рёбер) * (N - 2).
    """

    o2 = to_o2graph(build_sc2(fixture_graph()))

    assert pgs_search_batch(o2, k1=3, k2=2).neighbor_checks == 3 * 5
    assert pgs_search_batch(o2, k1=1000, k2=2).neighbor_checks == len(FIXTURE_SC2_WEIGHTS) * 5


def test_neighbor_check_counter_is_summed_over_chunks(monkeypatch) -> None:
    """
    Тест для проверки счётчика проверок соседей при разбиении на блоки и нескольких потоках.
    """

    monkeypatch.setattr(pgs, "CHUNK_CELLS", 64)
    for graph in oracle_graphs(count=6):
        o2 = to_o2graph(build_sc2(graph))
        single = pgs_search_batch(o2, k1=40, k2=2, workers=1)
        parallel = pgs_search_batch(o2, k1=40, k2=2, workers=3)

        assert single.neighbor_checks == single.pivots * (graph.n - 2)
        assert parallel.neighbor_checks == single.neighbor_checks


def test_search_chunk_counts_scanned_candidates() -> None:
    """
    Тест для проверки числа просмотренных кандидатов без концов опорного ребра.
    """

    o2 = to_o2graph(build_sc2(fixture_graph()))
    rows, cols = np.array([0, 1, 2]), np.array([1, 3, 4])

    _, _, checks = pgs._search_chunk(o2.weights, o2.weights > 0, rows, cols, 2)

    assert checks == 3 * (o2.n - 2)


def _outlier_heavy_o2(n: int) -> WeightedGraph:
    instance = generate(SynthConfig(n=n, outlier_ratio=0.9, noise_sigma=0.005, seed=0))
    return to_o2graph(build_sc2(build_first_order(instance.correspondences, 0.0125)))


@pytest.mark.parametrize("n", [500, 1000, 2000])
def test_neighbor_checks_grow_linearly_in_nodes(n: int) -> None:
    """
    Тест для проверки счётчика проверок соседей k1 * (N - 2) при фиксированном k1.
    """

    o2 = _outlier_heavy_o2(n)
    batch = pgs_search_batch(o2, k1=1000, k2=2)

    assert batch.pivots == min(1000, int(np.count_nonzero(o2.weights)))
    assert batch.neighbor_checks == batch.pivots * (n - 2)


@pytest.mark.slow
def test_pgs_time_grows_linearly_in_nodes() -> None:
    """
    Тест для проверки роста медианного времени PGS не более чем в 3 раза при удвоении N.
    """

    medians = []
    for n in (500, 1000, 2000):
        o2 = _outlier_heavy_o2(n)
        pgs_search_batch(o2, k1=1000, k2=2)
        elapsed = []
        for _ in range(7):
            start = time.perf_counter()
            pgs_search_batch(o2, k1=1000, k2=2)
            elapsed.append(time.perf_counter() - start)
        medians.append(statistics.median(elapsed))

    assert medians[1] / medians[0] <= 3.0
    assert medians[2] / medians[1] <= 3.0


def test_pgs_is_independent_of_workers(monkeypatch) -> None:
    """
    Тест для проверки одинакового результата при разном числе потоков.
    """

    monkeypatch.setattr(pgs, "CHUNK_CELLS", 256)
    for graph in oracle_graphs(count=9):
        o2 = to_o2graph(build_sc2(graph))
        single = pgs_search_batch(o2, k1=200, k2=3, workers=1)
        parallel = pgs_search_batch(o2, k1=200, k2=3, workers=4)

        assert np.array_equal(single.members, parallel.members)
        assert np.array_equal(single.weights, parallel.weights)


def test_brute_force_size_limit() -> None:
    """
    Тест для проверки ограничения размера переборного оракула.
    """

    with pytest.raises(SizingError):
        enumerate_triangles(np.zeros((2001, 2001), dtype=bool))
