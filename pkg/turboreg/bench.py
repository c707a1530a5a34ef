import asyncio
import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Tuple, Union

import redis
from pydantic import BaseModel, Field, root_validator
from redis.asyncio import Redis as AsyncRedis

from .cache import CorrespondenceCache
from .estimators import EstimatorTypes, RansacEstimator, TurboRegEstimator
from .evaluation import evaluate_pairs, transform_errors
from .exceptions import InputError
from .io import STAGE_KEYS, format_real
from .schemas import CorrespondenceSet, RegistrationResult, RigidTransform, SuccessCriteria, SynthConfig
from .synth import generate

logger = logging.getLogger(__name__)

BENCH_HEADER = [
    "method",
    "pair",
    "n",
    "params",
    "re_deg",
    "te_m",
    "success",
    "graph_s",
    "pgs_s",
    "model_s",
    "total_s",
    "neighbor_checks",
    "hypotheses",
]

BenchPair = Tuple[str, CorrespondenceSet, RigidTransform]


class SynthSweep(BaseModel):
    """
    Синтетический перебор: декартово произведение n x outlier_ratio x seeds.

    Attributes:
        n               размеры наборов.
        outlier_ratio   доли выбросов.
        seeds           seed генератора.
        noise_sigma     шум инлаеров (м).
        extent          размер сцены (м).
    """

    n: List[int]
    outlier_ratio: List[float] = [0.0]
    seeds: List[int] = [0]
    noise_sigma: float = 0.0
    extent: float = 1.0

    def configs(self) -> List[SynthConfig]:
        return [
            SynthConfig(n=n, outlier_ratio=ratio, noise_sigma=self.noise_sigma, extent=self.extent, seed=seed)
            for n, ratio, seed in itertools.product(self.n, self.outlier_ratio, self.seeds)
        ]


class BenchmarkConfig(BaseModel):
    """
    Модель конфигурации бенчмарка.

    Attributes:
        dataset_dir         каталог с парами <name>.corr + <name>.gt.
        synth_sweep         синтетический перебор (вместо каталога).
        estimators          оценщики (по строке на каждую пару оценщик x пример).
        criteria            пороги успеха.
        threads             число потоков для параллельного прогона пар.
        cache_live_time     срок хранения разобранных файлов в кэше (в секундах).
        omit_timings        флаг записи нулевых времён (для побайтного сравнения выводов).
    """

    dataset_dir: Optional[str] = None
    synth_sweep: Optional[SynthSweep] = None
    estimators: List[EstimatorTypes]
    criteria: SuccessCriteria = SuccessCriteria()
    threads: int = Field(1, ge=1)
    cache_live_time: int = Field(300, gt=0)
    omit_timings: bool = False

    @root_validator(skip_on_failure=True)
    def validate_benchmark_config(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if (values.get("dataset_dir") is None) == (values.get("synth_sweep") is None):
            raise ValueError('Exactly one of "dataset_dir" and "synth_sweep" must be set')
        if not values.get("estimators"):
            raise ValueError('"estimators" must not be empty')
        return values


BenchmarkConfig.update_forward_refs(TurboRegEstimator=TurboRegEstimator, RansacEstimator=RansacEstimator)


class BenchmarkRow(BaseModel):
    method: str
    pair: str
    n: int
    params: str
    re_deg: Optional[float]
    te_m: Optional[float]
    success: bool
    graph_s: float
    pgs_s: float
    model_s: float
    total_s: float
    neighbor_checks: int
    hypotheses: int


class BenchmarkSummary(BaseModel):
    method: str
    params: str
    pairs: int
    rr: float
    fps: Optional[float]


class BenchmarkReport(BaseModel):
    rows: List[BenchmarkRow]
    summaries: List[BenchmarkSummary]


def find_dataset_pairs(dataset_dir: Union[str, Path]) -> List[Tuple[str, Path, Path]]:
    """
    Пары файлов каталога: каждый <name>.corr с эталоном <name>.gt, по имени.

    :param dataset_dir: каталог набора данных.
    :return: список (имя, путь .corr, путь .gt).
    """

    root = Path(dataset_dir)
    if not root.is_dir():
        raise InputError(f"{dataset_dir}: dataset directory does not exist")

    pairs: List[Tuple[str, Path, Path]] = []
    for corr_path in sorted(root.glob("*.corr")):
        gt_path = corr_path.with_suffix(".gt")
        if not gt_path.exists():
            raise InputError(f"{corr_path}: missing ground-truth file {gt_path.name}")
        pairs.append((corr_path.stem, corr_path, gt_path))
    if not pairs:
        raise InputError(f"{dataset_dir}: empty dataset (no .corr files)")
    return pairs


class BenchmarkRunner:
    """
    Класс BenchmarkRunner.
    """

    def __init__(
        self,
        config: Union[Dict, BenchmarkConfig],
        redis_client: Optional[Union[redis.Redis, AsyncRedis]] = None,
    ):
        """
        Инициализация класса BenchmarkRunner.

        :param config: конфигурация бенчмарка.
        :param redis_client: объект клиента Redis (для кэширования разобранных файлов).
        """

        self.config = config if isinstance(config, BenchmarkConfig) else BenchmarkConfig.parse_obj(config)
        self.cache = CorrespondenceCache(redis_client=redis_client, cache_live_time=self.config.cache_live_time)

    async def load_pairs(self) -> List[BenchPair]:
        """
        Метод для загрузки примеров бенчмарка (файлы или синтетика), в фиксированном порядке.
        """

        if self.config.synth_sweep is not None:
            pairs: List[BenchPair] = []
            for synth_config in self.config.synth_sweep.configs():
                instance = generate(synth_config)
                name = f"synth_n{synth_config.n}_r{synth_config.outlier_ratio:g}_s{synth_config.seed}"
                pairs.append((name, instance.correspondences, instance.gt))
            return pairs

        files = find_dataset_pairs(self.config.dataset_dir)  # type: ignore[arg-type]
        loaded = await asyncio.gather(*[self.cache.load(corr_path, gt_path) for _, corr_path, gt_path in files])
        return [(name, corr, gt) for (name, _, _), (corr, gt) in zip(files, loaded)]  # type: ignore[misc]

    def _row(self, name: str, corr: CorrespondenceSet, gt: RigidTransform, params: str, result: RegistrationResult
             ) -> BenchmarkRow:
        re_deg: Optional[float] = None
        te_m: Optional[float] = None
        success = False
        if result.success and result.best_transform is not None:
            re_deg, te_m = transform_errors(result.best_transform, gt)
            success = re_deg <= self.config.criteria.re_max and te_m <= self.config.criteria.te_max

        timings = {key: 0.0 if self.config.omit_timings else result.stage_timings.get(stage, 0.0)
                   for stage, key in STAGE_KEYS.items()}
        return BenchmarkRow(
            method=result.method,
            pair=name,
            n=len(corr),
            params=params,
            re_deg=re_deg,
            te_m=te_m,
            success=success,
            total_s=sum(timings.values()),
            neighbor_checks=result.counters.get("neighbor_checks", 0),
            hypotheses=result.hypotheses_evaluated,
            **timings,
        )

    async def run(self) -> BenchmarkReport:
        """
        Метод для прогона всех оценщиков по всем примерам.

        Пары выполняются параллельно в пуле из threads потоков; результаты собираются в исходном
        порядке (оценщик, пример), поэтому вывод не зависит от числа потоков.

        :return: BenchmarkReport.
        """

        pairs = await self.load_pairs()
        with ThreadPoolExecutor(max_workers=self.config.threads) as executor:
            results = await asyncio.gather(
                *[
                    estimator.estimate(corr, executor=executor)
                    for estimator in self.config.estimators
                    for _, corr, _ in pairs
                ]
            )

        rows: List[BenchmarkRow] = []
        summaries: List[BenchmarkSummary] = []
        for index, estimator in enumerate(self.config.estimators):
            params = estimator.label()
            chunk = results[index * len(pairs) : (index + 1) * len(pairs)]
            for (name, corr, gt), result in zip(pairs, chunk):
                row = self._row(name, corr, gt, params, result)
                logger.info("Pair %s (%s): success=%s, total_s=%.4f", name, params, row.success, row.total_s)
                rows.append(row)

            report = evaluate_pairs([(result, gt) for (_, _, gt), result in zip(pairs, chunk)], self.config.criteria)
            fps = None if self.config.omit_timings else report.fps
            summaries.append(
                BenchmarkSummary(method=estimator.describe()["method"], params=params, pairs=len(pairs), rr=report.rr,
                                 fps=fps)
            )
        return BenchmarkReport(rows=rows, summaries=summaries)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format_real(value)
    return str(value)


def write_report_csv(report: BenchmarkReport, stream: TextIO) -> None:
    """
    Запись отчёта бенчмарка в CSV: заголовок BENCH_HEADER, строки пар, затем строки-итоги
    "# summary" с RR и FPS по каждому оценщику.
    """

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for row in report.rows:
        data = row.dict()
        writer.writerow([_cell(data[column]) for column in BENCH_HEADER])
    for summary in report.summaries:
        fps = format_real(summary.fps) if summary.fps is not None else "n/a"
        stream.write(
            f"# summary method={summary.method} params={summary.params} pairs={summary.pairs} "
            f"rr={format_real(summary.rr)} fps={fps}\n"
        )
