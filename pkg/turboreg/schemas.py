import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from .exceptions import InputError, NoHypothesis

logger = logging.getLogger(__name__)

ROTATION_TOLERANCE = 1e-9

STAGE_GRAPH = "O2Graph Construction"
STAGE_PGS = "PGS"
STAGE_MODEL = "Model Estimation"
STAGES = (STAGE_GRAPH, STAGE_PGS, STAGE_MODEL)


def _frozen_array(value: Any, dtype: Any, shape: Tuple[Optional[int], ...], name: str) -> np.ndarray:
    """
    Приводит значение к numpy-массиву нужного типа и формы и запрещает запись в него.

    :param value: исходные данные.
    :param dtype: тип элементов.
    :param shape: ожидаемая форма (None - любая длина по оси).
    :param name: имя поля для сообщения об ошибке.
    :return: копия данных только для чтения.
    """

    array = np.array(value, dtype=dtype, copy=True)
    if array.ndim != len(shape) or any(want is not None and have != want for have, want in zip(array.shape, shape)):
        raise ValueError(f'"{name}" must have shape {shape}, got {array.shape}')
    array.setflags(write=False)
    return array


def is_proper_rotation(matrix: np.ndarray, tolerance: float = ROTATION_TOLERANCE) -> bool:
    """
    Проверка RᵀR = I и det(R) = +1 с поэлементным допуском.
    """

    if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
        return False
    if np.max(np.abs(matrix.T @ matrix - np.eye(3))) > tolerance:
        return False
    return abs(np.linalg.det(matrix) - 1.0) <= tolerance


def project_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """
    Ортогональная полярная проекция на ближайшую матрицу поворота.

    :param matrix: матрица 3x3 с положительным определителем.
    :return: ближайшая собственная ортогональная матрица.
    """

    u, _, vt = np.linalg.svd(matrix)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


class GraphMode(str, Enum):
    """
    Вид взвешенного графа, на котором работает PGS.
    """

    SC2 = "sc2"
    O2 = "o2"


class Point3(BaseModel):
    """
    Точка в R³ (метры).

    Attributes:
        x, y, z     координаты, только конечные значения.
    """

    x: float
    y: float
    z: float

    class Config:
        allow_mutation = False

    @validator("x", "y", "z")
    def validate_finite(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("coordinates must be finite")
        return value

    @classmethod
    def from_array(cls, values: Any) -> "Point3":
        x, y, z = (float(v) for v in np.asarray(values, dtype=float).reshape(3))
        return cls(x=x, y=y, z=z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


class Correspondence(BaseModel):
    """
    Предполагаемое соответствие ключевых точек.

    Attributes:
        source      точка исходного облака.
        target      точка целевого облака.
    """

    source: Point3
    target: Point3

    class Config:
        allow_mutation = False


class CorrespondenceSet(BaseModel):
    """
    Упорядоченный набор из N соответствий, вход оценщика.

    Хранится в виде двух массивов Nx3 (float64). Индекс строки - номер вершины графа, порядок
    фиксируется при загрузке: от него зависит ориентация рёбер O2Graph.

    Attributes:
        source      массив Nx3 исходных точек.
        target      массив Nx3 целевых точек.
    """

    source: np.ndarray
    target: np.ndarray

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("source", "target", pre=True)
    def validate_points(cls, value: Any, field: Any) -> np.ndarray:
        array = _frozen_array(value, float, (None, 3), field.name)
        if not np.all(np.isfinite(array)):
            bad = int(np.argwhere(~np.isfinite(array))[0][0])
            raise ValueError(f'"{field.name}" contains non-finite coordinates (index {bad})')
        return array

    @root_validator(skip_on_failure=True)
    def validate_lengths(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if values["source"].shape != values["target"].shape:
            raise ValueError('"source" and "target" must have the same number of points')
        return values

    @classmethod
    def from_arrays(cls, source: Any, target: Any) -> "CorrespondenceSet":
        """
        Создание набора с переводом ошибок валидации в InputError.
        """

        try:
            return cls(source=source, target=target)
        except ValidationError as exc:
            raise InputError(str(exc)) from exc

    @classmethod
    def from_items(cls, items: List[Correspondence]) -> "CorrespondenceSet":
        source = np.array([item.source.as_array() for item in items], dtype=float).reshape(-1, 3)
        target = np.array([item.target.as_array() for item in items], dtype=float).reshape(-1, 3)
        return cls.from_arrays(source, target)

    def __len__(self) -> int:
        return int(self.source.shape[0])

    def __getitem__(self, index: int) -> Correspondence:
        return Correspondence(
            source=Point3.from_array(self.source[index]),
            target=Point3.from_array(self.target[index]),
        )

    @property
    def items(self) -> List[Correspondence]:
        return [self[index] for index in range(len(self))]

    def subset(self, indices: Any) -> "CorrespondenceSet":
        index_array = np.asarray(indices, dtype=np.int64)
        return CorrespondenceSet(source=self.source[index_array], target=self.target[index_array])

    def permuted(self, order: Any) -> "CorrespondenceSet":
        return self.subset(order)


class RigidTransform(BaseModel):
    """
    Жёсткое преобразование T(x) = R·x + t.

    Матрицы, не прошедшие проверку на поворот с допуском 1e-9, проецируются на ближайший поворот
    с предупреждением в лог. Матрицы с неположительным определителем отклоняются.

    Attributes:
        rotation        матрица поворота 3x3.
        translation     вектор переноса (метры).
    """

    rotation: np.ndarray
    translation: np.ndarray

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("rotation", pre=True)
    def validate_rotation(cls, value: Any) -> np.ndarray:
        matrix = np.array(value, dtype=float, copy=True)
        if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
            raise ValueError('"rotation" must be a finite 3x3 matrix')
        if not is_proper_rotation(matrix):
            if np.linalg.det(matrix) <= 0:
                raise ValueError('"rotation" has non-positive determinant and cannot be a rotation')
            deviation = float(np.max(np.abs(matrix.T @ matrix - np.eye(3))))
            logger.warning("Rotation failed validity check (max |RᵀR - I| = %.3e), re-projecting", deviation)
            matrix = project_to_rotation(matrix)
        matrix.setflags(write=False)
        return matrix

    @validator("translation", pre=True)
    def validate_translation(cls, value: Any) -> np.ndarray:
        vector = _frozen_array(np.asarray(value, dtype=float).reshape(-1), float, (3,), "translation")
        if not np.all(np.isfinite(vector)):
            raise ValueError('"translation" must be finite')
        return vector

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: Any) -> "RigidTransform":
        """
        Создание из однородной матрицы 4x4 (нижняя строка 0 0 0 1 с допуском 1e-9).
        """

        homogeneous = np.asarray(matrix, dtype=float)
        if homogeneous.shape != (4, 4):
            raise InputError(f"homogeneous transform must be 4x4, got {homogeneous.shape}")
        if not np.all(np.isfinite(homogeneous)):
            raise InputError("homogeneous transform must be finite")
        if np.max(np.abs(homogeneous[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > ROTATION_TOLERANCE:
            raise InputError("bottom row of homogeneous transform must be 0 0 0 1")
        try:
            return cls(rotation=homogeneous[:3, :3], translation=homogeneous[:3, 3])
        except ValidationError as exc:
            raise InputError(str(exc)) from exc

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix


class EstimatorParams(BaseModel):
    """
    Параметры оценщика TurboReg.

    Attributes:
        tau                 порог совместимости (метры), строгий - определяет TurboClique.
        k1                  число опорных рёбер (pivot).
        k2                  число TurboClique на одно опорное ребро.
        inlier_threshold    порог невязки для подсчёта инлаеров (метры).
        graph_mode          граф для поиска: SC² (неориентированный) или O2Graph.
        seed                зерно ГСЧ (используется только RANSAC и генератором).
        workers             число потоков для поиска и оценки гипотез.
        refine              повторная подгонка Кабша по итоговым инлаерам (по умолчанию выключена).
        keep_ranked         сохранять ли ранжированный список гипотез в результате.
    """

    tau: float
    k1: int = 1000
    k2: int = 2
    inlier_threshold: float = 0.10
    graph_mode: GraphMode = GraphMode.O2
    seed: int = 0
    workers: int = 1
    refine: bool = False
    keep_ranked: bool = False

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def validate_estimator_params(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if not values["tau"] > 0:
            raise ValueError('"tau" must be positive')
        if not values["inlier_threshold"] > 0:
            raise ValueError('"inlier_threshold" must be positive')
        if values["k1"] < 1 or values["k2"] < 1:
            raise ValueError('"k1" and "k2" must be at least 1')
        if values["workers"] < 1:
            raise ValueError('"workers" must be at least 1')
        return values


class CompatGraph(BaseModel):
    """
    Граф совместимости первого порядка: плотная симметричная булева матрица NxN с нулевой диагональю.
    """

    n: int
    adjacency: np.ndarray

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("adjacency", pre=True)
    def validate_adjacency(cls, value: Any) -> np.ndarray:
        array = _frozen_array(value, bool, (None, None), "adjacency")
        if array.shape[0] != array.shape[1]:
            raise ValueError('"adjacency" must be square')
        if not np.array_equal(array, array.T) or np.any(np.diagonal(array)):
            raise ValueError('"adjacency" must be symmetric with zero diagonal')
        return array

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.adjacency)) // 2


class WeightedGraph(BaseModel):
    """
    Граф SC² (ordered=False) или O2Graph (ordered=True, верхнетреугольный).

    Attributes:
        n           число вершин.
        weights     целочисленная матрица весов NxN.
        ordered     признак O2Graph: weights[i][j] = 0 при i >= j.
    """

    n: int
    weights: np.ndarray
    ordered: bool = False

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("weights", pre=True)
    def validate_weights(cls, value: Any) -> np.ndarray:
        array = _frozen_array(value, np.int64, (None, None), "weights")
        if array.shape[0] != array.shape[1]:
            raise ValueError('"weights" must be square')
        if np.any(array < 0):
            raise ValueError('"weights" must be nonnegative')
        return array

    @root_validator(skip_on_failure=True)
    def validate_orientation(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        weights = values["weights"]
        if values["ordered"]:
            if np.any(np.tril(weights)):
                raise ValueError("ordered graph must be strictly upper-triangular")
        elif not np.array_equal(weights, weights.T) or np.any(np.diagonal(weights)):
            raise ValueError("unordered graph must be symmetric with zero diagonal")
        return values

    @property
    def mode(self) -> GraphMode:
        return GraphMode.O2 if self.ordered else GraphMode.SC2


class Pivot(BaseModel):
    """
    Опорное ребро (i, j), i < j, с весом SC².
    """

    i: int
    j: int
    weight: int

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def validate_pivot(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if not values["i"] < values["j"]:
            raise ValueError("pivot endpoints must satisfy i < j")
        if values["weight"] <= 0:
            raise ValueError("pivot weight must be positive")
        return values


class TurboClique(BaseModel):
    """
    Тройка индексов соответствий (хранится по возрастанию) и её агрегированный вес.
    """

    i: int
    j: int
    z: int
    aggregated_weight: int = 0

    class Config:
        allow_mutation = False

    @root_validator(pre=True)
    def normalize_order(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if any(key not in values for key in ("i", "j", "z")):
            return values
        members = sorted(int(values[key]) for key in ("i", "j", "z"))
        if len(set(members)) != 3:
            raise ValueError("TurboClique members must be distinct")
        if members[0] < 0:
            raise ValueError("TurboClique members must be nonnegative indices")
        values["i"], values["j"], values["z"] = members
        return values

    @property
    def members(self) -> Tuple[int, int, int]:
        return self.i, self.j, self.z


class Hypothesis(BaseModel):
    """
    Гипотеза преобразования, полученная по одной TurboClique.
    """

    clique: TurboClique
    transform: RigidTransform
    score: int

    class Config:
        allow_mutation = False


class RegistrationResult(BaseModel):
    """
    Результат регистрации.

    Attributes:
        method                  оценщик ("turboreg" / "ransac").
        success                 флаг успешного получения гипотезы.
        failure_reason          причина неудачи (при success = False).
        best_transform          лучшее преобразование (None при неудаче).
        best_inlier_count       число инлаеров лучшего преобразования.
        inlier_indices          индексы инлаеров по возрастанию.
        best_clique             тройка, давшая лучшее преобразование.
        hypotheses_evaluated    число оценённых (невырожденных) гипотез.
        ranked_hypotheses       гипотезы по убыванию score (если запрошено).
        stage_timings           время этапов в секундах.
        counters                счётчики инструментирования.
    """

    method: str = "turboreg"
    success: bool = True
    failure_reason: Optional[str] = None
    best_transform: Optional[RigidTransform] = None
    best_inlier_count: int = 0
    inlier_indices: List[int] = []
    best_clique: Optional[TurboClique] = None
    hypotheses_evaluated: int = 0
    ranked_hypotheses: Optional[List[Hypothesis]] = None
    stage_timings: Dict[str, float] = {}
    counters: Dict[str, int] = {}

    @property
    def total_time(self) -> float:
        return float(sum(self.stage_timings.values()))

    def raise_for_failure(self) -> None:
        if not self.success:
            raise NoHypothesis(self.failure_reason or "registration failed")


class SuccessCriteria(BaseModel):
    """
    Пороги успешной регистрации.

    Attributes:
        re_max      максимальная ошибка поворота (градусы).
        te_max      максимальная ошибка переноса (метры).
    """

    re_max: float = Field(15.0, gt=0)
    te_max: float = Field(0.30, gt=0)

    @classmethod
    def preset(cls, name: str) -> "SuccessCriteria":
        presets = {"indoor": cls(re_max=15.0, te_max=0.30), "kitti": cls(re_max=5.0, te_max=0.60)}
        if name not in presets:
            raise InputError(f'unknown preset "{name}", expected one of {sorted(presets)}')
        return presets[name]


class PairEvaluation(BaseModel):
    re_deg: Optional[float]
    te_m: Optional[float]
    success: bool
    elapsed_s: float


class EvalReport(BaseModel):
    """
    Сводка оценки по набору пар.

    Attributes:
        per_pair                    оценки по каждой паре.
        rr                          доля успешных регистраций.
        mean_re_over_successes      средняя ошибка поворота по успешным парам.
        mean_te_over_successes      средняя ошибка переноса по успешным парам.
        mean_re_all                 средняя ошибка поворота по всем парам с гипотезой.
        mean_te_all                 средняя ошибка переноса по всем парам с гипотезой.
        fps                         пар в секунду.
    """

    per_pair: List[PairEvaluation]
    rr: float
    mean_re_over_successes: Optional[float]
    mean_te_over_successes: Optional[float]
    mean_re_all: Optional[float]
    mean_te_all: Optional[float]
    fps: Optional[float]


class RankingRecalls(BaseModel):
    tqrr_hit: bool
    icrr_hit: bool
    tkrr_hits: Dict[int, bool]


class StabilityRow(BaseModel):
    """
    Строка диагностики устойчивости клик при заданном tau.
    """

    tau: float
    median_re_deg: Optional[float]
    median_te_m: Optional[float]
    samples: int
    cliques: int

    @property
    def present(self) -> bool:
        return self.samples > 0


class SynthConfig(BaseModel):
    """
    Конфигурация синтетического примера.

    Attributes:
        n               число соответствий.
        outlier_ratio   доля выбросов, [0, 1); должен остаться хотя бы один инлаер.
        noise_sigma     СКО гауссова шума на целевых точках инлаеров (метры).
        extent          сторона куба исходных точек (метры).
        seed            зерно генератора PCG64.
    """

    n: int
    outlier_ratio: float = 0.0
    noise_sigma: float = 0.0
    extent: float = 1.0
    seed: int = 0

    @root_validator(skip_on_failure=True)
    def validate_synth_config(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if values["n"] < 3:
            raise ValueError('"n" must be at least 3')
        if not 0.0 <= values["outlier_ratio"] < 1.0:
            raise ValueError('"outlier_ratio" must be in range [0, 1)')
        if np.floor(values["n"] * (1.0 - values["outlier_ratio"]) + 0.5) < 1:
            raise ValueError(f'"outlier_ratio" leaves no inliers for n={values["n"]}')
        if values["noise_sigma"] < 0:
            raise ValueError('"noise_sigma" must be nonnegative')
        if not values["extent"] > 0:
            raise ValueError('"extent" must be positive')
        return values


class SynthInstance(BaseModel):
    correspondences: CorrespondenceSet
    gt: RigidTransform
    inlier_mask: List[bool]

    @property
    def inlier_indices(self) -> List[int]:
        return [index for index, flag in enumerate(self.inlier_mask) if flag]
