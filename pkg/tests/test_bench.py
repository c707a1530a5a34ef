import io

import pytest
from pydantic import ValidationError

from turboreg.bench import BENCH_HEADER, BenchmarkConfig, BenchmarkRunner, find_dataset_pairs, write_report_csv
from turboreg.exceptions import InputError
from turboreg.io import write_correspondences, write_transform
from turboreg.schemas import SynthConfig
from turboreg.synth import generate
from tests.fixtures.configs import BENCHMARK_HEAD_TO_HEAD_CONFIG_FIXTURE, BENCHMARK_SYNTH_CONFIG_FIXTURE


async def _report_csv(config: dict) -> str:
    report = await BenchmarkRunner(config).run()
    stream = io.StringIO()
    write_report_csv(report, stream)
    return stream.getvalue()


@pytest.mark.asyncio
async def test_benchmark_synth_sweep() -> None:
    """
    Тест для проверки строк бенчмарка и счётчика проверок соседей.
    """

    report = await BenchmarkRunner(BENCHMARK_SYNTH_CONFIG_FIXTURE).run()

    assert [row.pair for row in report.rows] == ["synth_n500_r0_s0", "synth_n1000_r0_s0"]
    for row in report.rows:
        assert row.neighbor_checks == 100 * (row.n - 2)
        assert row.success
        assert row.total_s == 0.0
    assert report.summaries[0].rr == 1.0
    assert report.summaries[0].fps is None


@pytest.mark.asyncio
async def test_benchmark_is_independent_of_threads() -> None:
    """
    Тест для проверки совпадения вывода при разном числе потоков.
    """

    single = await _report_csv({**BENCHMARK_SYNTH_CONFIG_FIXTURE, "threads": 1})
    multi = await _report_csv({**BENCHMARK_SYNTH_CONFIG_FIXTURE, "threads": 3})

    assert single == multi
    assert single.splitlines()[0] == ",".join(BENCH_HEADER)


@pytest.mark.asyncio
async def test_benchmark_dataset_dir(tmp_path) -> None:
    """
    Тест для проверки бенчмарка по каталогу из одной пары.
    """

    instance = generate(SynthConfig(n=60, outlier_ratio=0.5, seed=5))
    write_correspondences(tmp_path / "scene.corr", instance.correspondences)
    write_transform(tmp_path / "scene.gt", instance.gt)
    config = {
        "dataset_dir": str(tmp_path),
        "estimators": [{"type": "turboreg", "tau": 0.01, "k1": 50, "inlier_threshold": 0.01}],
        "omit_timings": True,
    }

    lines = (await _report_csv(config)).splitlines()

    assert len(lines) == 3
    assert lines[1].startswith("turboreg,scene,60,")
    assert lines[2].startswith("# summary method=turboreg ")
    assert "rr=1 fps=n/a" in lines[2]


def test_dataset_errors(tmp_path) -> None:
    """
    Тест для проверки ошибок каталога: пустой, без эталона, отсутствует.
    """

    with pytest.raises(InputError):
        find_dataset_pairs(tmp_path)
    with pytest.raises(InputError):
        find_dataset_pairs(tmp_path / "missing")

    (tmp_path / "orphan.corr").write_text("0 0 0 0 0 0\n")
    with pytest.raises(InputError):
        find_dataset_pairs(tmp_path)


@pytest.mark.parametrize(
    "config",
    [
        {"estimators": [{"type": "ransac"}]},
        {"dataset_dir": "data", "synth_sweep": {"n": [10]}, "estimators": [{"type": "ransac"}]},
        {"synth_sweep": {"n": [10]}, "estimators": []},
        {"synth_sweep": {"n": [10]}, "estimators": [{"type": "ransac"}], "threads": 0},
    ],
)
def test_invalid_benchmark_config(config: dict) -> None:
    """
    Тест для проверки отказа для некорректной конфигурации бенчмарка.
    """

    with pytest.raises(ValidationError):
        BenchmarkConfig.parse_obj(config)


@pytest.mark.asyncio
async def test_turboreg_against_ransac() -> None:
    """
    Тест для проверки, что TurboReg не уступает RANSAC по RR при 90% выбросов.
    """

    report = await BenchmarkRunner(BENCHMARK_HEAD_TO_HEAD_CONFIG_FIXTURE).run()
    turboreg, ransac = report.summaries

    assert turboreg.method == "turboreg"
    assert ransac.method == "ransac"
    assert turboreg.pairs == ransac.pairs == 3
    assert turboreg.rr == 1.0
    assert turboreg.rr >= ransac.rr
    assert turboreg.fps is not None and turboreg.fps > 0
