import io
from collections import Counter

import numpy as np
import pytest

from turboreg.exceptions import InputError, SizingError
from turboreg.graph import build_first_order, build_sc2, check_size, dump_graph, estimate_resolution, to_o2graph
from turboreg.pgs import enumerate_triangles
from turboreg.schemas import CompatGraph, CorrespondenceSet, Point3, SynthConfig, WeightedGraph
from turboreg.synth import generate, make_rng
from tests.fixtures.graphs import FIXTURE_SC2_WEIGHTS, fixture_graph, oracle_graphs


def test_first_order_edges() -> None:
    """
    Тест для проверки наличия и отсутствия рёбер графа первого порядка.
    """

    source = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 10.0]])
    consistent = CorrespondenceSet.from_arrays(source, [[0, 0, 0], [0, 1, 0], [0, 0, 30]])
    stretched = CorrespondenceSet.from_arrays(source, [[0, 0, 0], [1.5, 0, 0], [0, 0, 30]])

    assert build_first_order(consistent, tau=0.01).adjacency[0, 1]
    assert not build_first_order(stretched, tau=0.1).adjacency[0, 1]
    assert not build_first_order(consistent, tau=0.01).adjacency[0, 2]


def test_first_order_inliers_form_complete_graph() -> None:
    """
    Тест для проверки полноты графа на точных инлаерах.
    """

    instance = generate(SynthConfig(n=40, outlier_ratio=0.0, seed=4))
    graph = build_first_order(instance.correspondences, tau=1e-9)

    assert graph.edge_count == 40 * 39 // 2
    assert not np.any(np.diagonal(graph.adjacency))


def test_first_order_rejects_small_sets() -> None:
    """
    Тест для проверки отказа для N < 3 и неположительного tau.
    """

    corr = CorrespondenceSet.from_arrays(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(InputError):
        build_first_order(corr, tau=0.1)

    corr = CorrespondenceSet.from_arrays(np.eye(3), np.eye(3))
    with pytest.raises(InputError):
        build_first_order(corr, tau=0.0)


def test_check_size_limits() -> None:
    """
    Тест для проверки границ размера плотного графа.
    """

    check_size(3)
    check_size(20000)
    with pytest.raises(SizingError):
        check_size(20001)
    with pytest.raises(InputError):
        check_size(2)


def test_first_order_is_monotone_in_tau() -> None:
    """
    Тест для проверки вложенности рёбер при росте tau.
    """

    instance = generate(SynthConfig(n=120, outlier_ratio=0.5, noise_sigma=0.01, seed=9))
    previous = None
    for tau in (0.005, 0.02, 0.1, 0.5):
        adjacency = build_first_order(instance.correspondences, tau).adjacency
        if previous is not None:
            assert np.all(adjacency[previous])
        previous = adjacency


def test_first_order_permutation_equivariance() -> None:
    """
    Тест для проверки согласованности графа с перестановкой соответствий.
    """

    instance = generate(SynthConfig(n=60, outlier_ratio=0.5, noise_sigma=0.005, seed=2))
    order = make_rng(1).permutation(60)
    adjacency = build_first_order(instance.correspondences, 0.02).adjacency
    permuted = build_first_order(instance.correspondences.permuted(order), 0.02).adjacency

    assert np.array_equal(permuted, adjacency[np.ix_(order, order)])


def test_sc2_fixture_weights() -> None:
    """
    Тест для проверки весов SC² на графе-примере.
    """

    weights = build_sc2(fixture_graph()).weights

    assert weights[1, 3] == 5
    assert weights[0, 2] == 3
    for (i, j), weight in FIXTURE_SC2_WEIGHTS.items():
        assert weights[i, j] == weights[j, i] == weight
    assert np.count_nonzero(weights) == 2 * len(FIXTURE_SC2_WEIGHTS)


def test_sc2_edgeless_graph() -> None:
    """
    Тест для проверки нулевых весов SC² на графе без рёбер.
    """

    weights = build_sc2(CompatGraph(n=5, adjacency=np.zeros((5, 5), dtype=bool))).weights

    assert not np.any(weights)


def test_sc2_counts_triangles_per_edge() -> None:
    """
    Тест для проверки: вес SC² ребра равен числу треугольников, содержащих это ребро.
    """

    for graph in oracle_graphs():
        counts: Counter = Counter()
        for i, j, z in enumerate_triangles(graph.adjacency):
            counts[(i, j)] += 1
            counts[(i, z)] += 1
            counts[(j, z)] += 1

        expected = np.zeros((graph.n, graph.n), dtype=np.int64)
        for (i, j), count in counts.items():
            expected[i, j] = expected[j, i] = count

        assert np.array_equal(build_sc2(graph).weights, expected)


def test_o2graph_keeps_upper_triangle() -> None:
    """
    Тест для проверки построения O2Graph.
    """

    ordered = to_o2graph(WeightedGraph(n=2, weights=[[0, 5], [5, 0]]))

    assert ordered.ordered
    assert ordered.weights.tolist() == [[0, 5], [0, 0]]
    with pytest.raises(InputError):
        to_o2graph(ordered)


def test_estimate_resolution_on_grid() -> None:
    """
    Тест для проверки оценки разрешения облака на регулярной сетке.
    """

    axis = np.arange(5) * 0.1
    grid = np.stack(np.meshgrid(axis, axis, axis), axis=-1).reshape(-1, 3)

    assert estimate_resolution(grid) == pytest.approx(0.1)
    assert estimate_resolution([Point3(x=0, y=0, z=0), Point3(x=0, y=0, z=2)]) == pytest.approx(2.0)
    with pytest.raises(InputError):
        estimate_resolution(np.zeros((1, 3)))


def test_dump_graph() -> None:
    """
    Тест для проверки текстового дампа графа.
    """

    graph = fixture_graph()
    stream = io.StringIO()
    dump_graph(graph, stream)
    dump_graph(to_o2graph(build_sc2(graph)), stream)
    lines = stream.getvalue().splitlines()

    assert lines[0] == "# adjacency n=7"
    assert lines[8] == "# weights n=7 mode=o2"
    assert lines[9 + 1].split()[3] == "5"
