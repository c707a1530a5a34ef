import asyncio
import functools
import logging
from abc import ABC, abstractmethod
from concurrent.futures import Executor
from typing import Annotated, Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, Field, root_validator

from .graph import estimate_resolution
from .schemas import CorrespondenceSet, EstimatorParams, GraphMode, RegistrationResult
from .solver import estimate, ransac_baseline

logger = logging.getLogger(__name__)

# Доля разрешения облака точек для порога совместимости по умолчанию.
TAU_RESOLUTION_FACTOR = 0.25

EstimatorTypes = Annotated[
    Union[
        "TurboRegEstimator",
        "RansacEstimator",
    ],
    Field(discriminator="type"),
]


class BaseEstimatorConfigModel(ABC, BaseModel):
    """
    Абстрактный класс для оценщика преобразования в конфигурации.
    """

    @abstractmethod
    def run(self, corr: CorrespondenceSet) -> RegistrationResult:
        """
        Синхронный запуск оценщика.

        :param corr: набор соответствий.
        :return: результат регистрации.
        """

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """
        Параметры оценщика для вывода в результатах.
        """

    def label(self) -> str:
        """
        Компактная строка параметров для строк бенчмарка.
        """

        return ";".join(f"{key}={value}" for key, value in self.describe().items() if key != "method")

    async def estimate(self, corr: CorrespondenceSet, executor: Optional[Executor] = None) -> RegistrationResult:
        """
        Асинхронный запуск оценщика в пуле потоков.

        :param corr: набор соответствий.
        :param executor: пул потоков (None - пул цикла событий по умолчанию).
        :return: результат регистрации.
        """

        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(executor, functools.partial(self.run, corr))


class TurboRegEstimator(BaseEstimatorConfigModel):
    """
    Модель оценщика TurboReg.

    Attributes:
        type                тип объекта - всегда "turboreg".
        tau                 порог совместимости (м); если не задан, 0.25 * resolution.
        resolution          разрешение облака (м); если не задано, оценивается по исходным точкам.
        k1                  число опорных рёбер.
        k2                  число TurboClique на опорное ребро.
        inlier_threshold    порог инлаера (м).
        graph_mode          режим графа ("o2" или "sc2").
        workers             число потоков поиска и оценки гипотез.
        refine              флаг уточнения по итоговым инлаерам.
        keep_ranked         флаг сохранения ранжированных гипотез.
    """

    type: Literal["turboreg"]
    tau: Optional[float] = Field(None, gt=0)
    resolution: Optional[float] = Field(None, gt=0)
    k1: int = Field(1000, ge=1)
    k2: int = Field(2, ge=1)
    inlier_threshold: float = Field(0.10, gt=0)
    graph_mode: GraphMode = GraphMode.O2
    workers: int = Field(1, ge=1)
    refine: bool = False
    keep_ranked: bool = False

    def resolve_tau(self, corr: CorrespondenceSet) -> float:
        """
        Порог совместимости: явный tau, иначе 0.25 * разрешение облака.
        """

        if self.tau is not None:
            return self.tau
        resolution = self.resolution if self.resolution is not None else estimate_resolution(corr.source)
        tau = TAU_RESOLUTION_FACTOR * resolution
        logger.debug("tau derived from resolution %.6g: %.6g", resolution, tau)
        return tau

    def params_for(self, corr: CorrespondenceSet) -> EstimatorParams:
        return EstimatorParams(
            tau=self.resolve_tau(corr),
            k1=self.k1,
            k2=self.k2,
            inlier_threshold=self.inlier_threshold,
            graph_mode=self.graph_mode,
            workers=self.workers,
            refine=self.refine,
            keep_ranked=self.keep_ranked,
        )

    def run(self, corr: CorrespondenceSet) -> RegistrationResult:
        return estimate(corr, self.params_for(corr))

    def tau_label(self) -> Any:
        """
        tau для вывода параметров: явное значение, 0.25 * resolution или "0.25*pr" (оценка по облаку).
        """

        if self.tau is not None:
            return self.tau
        if self.resolution is not None:
            return TAU_RESOLUTION_FACTOR * self.resolution
        return f"{TAU_RESOLUTION_FACTOR:g}*pr"

    def describe(self) -> Dict[str, Any]:
        return {
            "method": "turboreg",
            "tau": self.tau_label(),
            "k1": self.k1,
            "k2": self.k2,
            "inlier_threshold": self.inlier_threshold,
            "graph": self.graph_mode.value,
        }


class RansacEstimator(BaseEstimatorConfigModel):
    """
    Модель базового оценщика RANSAC (случайные тройки соответствий).

    Attributes:
        type                тип объекта - всегда "ransac".
        iterations          число случайных выборок (бюджет гипотез).
        inlier_threshold    порог инлаера (м).
        seed                seed генератора.
        workers             число потоков оценки гипотез.
        keep_ranked         флаг сохранения ранжированных гипотез.
    """

    type: Literal["ransac"]
    iterations: int = Field(2000, ge=1)
    inlier_threshold: float = Field(0.10, gt=0)
    seed: int = 0
    workers: int = Field(1, ge=1)
    keep_ranked: bool = False

    def run(self, corr: CorrespondenceSet) -> RegistrationResult:
        return ransac_baseline(
            corr,
            iterations=self.iterations,
            inlier_threshold=self.inlier_threshold,
            seed=self.seed,
            workers=self.workers,
            keep_ranked=self.keep_ranked,
        )

    def describe(self) -> Dict[str, Any]:
        return {
            "method": "ransac",
            "iterations": self.iterations,
            "inlier_threshold": self.inlier_threshold,
            "seed": self.seed,
        }


class RegistrationConfig(BaseModel):
    """
    Модель конфигурации регистрации.

    Attributes:
        version     версия конфигурации.
        estimator   оценщик преобразования.
    """

    version: str
    estimator: EstimatorTypes

    @root_validator
    def validate_version(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if values.get("version") not in (None, "1"):
            raise ValueError('Only configuration version "1" is supported')
        return values


# Update Forward Refs
TurboRegEstimator.update_forward_refs()
RansacEstimator.update_forward_refs()
RegistrationConfig.update_forward_refs()
