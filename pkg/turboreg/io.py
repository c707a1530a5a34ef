import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator

from .exceptions import InputError
from .schemas import STAGE_GRAPH, STAGE_MODEL, STAGE_PGS, CorrespondenceSet, RegistrationResult, RigidTransform

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Ключи этапов в ResultDocument и CSV.
STAGE_KEYS = {STAGE_GRAPH: "graph_s", STAGE_PGS: "pgs_s", STAGE_MODEL: "model_s"}


def format_real(value: float) -> str:
    """
    17 значащих цифр: запись и чтение float64 без потерь.
    """

    return f"{float(value):.17g}"


def _records(path: PathLike) -> Iterator[Tuple[int, List[str]]]:
    """
    Строки файла без комментариев ('#') и пустых строк: пары (номер строки, токены).
    """

    try:
        with open(path, "r", encoding="utf-8") as stream:
            lines = stream.readlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: cannot read file: {exc}") from exc

    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield number, stripped.split()


def _parse_reals(path: PathLike, number: int, tokens: List[str], expected: int) -> List[float]:
    if len(tokens) != expected:
        raise InputError(f"{path}:{number}: expected {expected} values, got {len(tokens)}")
    try:
        values = [float(token) for token in tokens]
    except ValueError as exc:
        raise InputError(f"{path}:{number}: malformed number ({exc})") from exc
    if not all(np.isfinite(values)):
        raise InputError(f"{path}:{number}: non-finite value")
    return values


def read_correspondences(path: PathLike) -> CorrespondenceSet:
    """
    Чтение файла соответствий: по записи "sx sy sz tx ty tz" на строку.

    :param path: путь к .corr файлу.
    :return: CorrespondenceSet.
    """

    rows = [_parse_reals(path, number, tokens, 6) for number, tokens in _records(path)]
    if not rows:
        raise InputError(f"{path}:1: no correspondence records found")
    data = np.array(rows, dtype=float)
    return CorrespondenceSet.from_arrays(data[:, :3], data[:, 3:])


def write_correspondences(path: PathLike, corr: CorrespondenceSet, header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        for line in header:
            stream.write(f"# {line}\n")
        for source, target in zip(corr.source, corr.target):
            stream.write(" ".join(format_real(value) for value in (*source, *target)) + "\n")


def read_transform(path: PathLike) -> RigidTransform:
    """
    Чтение однородной матрицы 4x4 (4 строки по 4 числа).
    """

    rows = [_parse_reals(path, number, tokens, 4) for number, tokens in _records(path)]
    if len(rows) != 4:
        raise InputError(f"{path}: expected 4 rows of the homogeneous matrix, got {len(rows)}")
    return RigidTransform.from_matrix(np.array(rows))


def write_transform(path: PathLike, transform: RigidTransform) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        for row in transform.as_matrix():
            stream.write(" ".join(format_real(value) for value in row) + "\n")


def read_mask(path: PathLike) -> List[bool]:
    mask: List[bool] = []
    for number, tokens in _records(path):
        if tokens not in (["0"], ["1"]):
            raise InputError(f"{path}:{number}: mask lines must be 0 or 1")
        mask.append(tokens == ["1"])
    return mask


def write_mask(path: PathLike, mask: Sequence[bool]) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        stream.writelines("1\n" if flag else "0\n" for flag in mask)


class ResultDocument(BaseModel):
    """
    Документ результата регистрации (JSON).

    Attributes:
        success                 флаг успешной регистрации.
        failure_reason          причина неудачи.
        transform               16 чисел однородной матрицы (построчно) или None.
        inlier_count            число инлаеров.
        inlier_indices          индексы инлаеров.
        hypotheses_evaluated    число оценённых гипотез.
        stage_timings           время этапов: graph_s, pgs_s, model_s.
        counters                счётчики инструментирования.
        params                  параметры запуска.
    """

    success: bool
    failure_reason: Optional[str] = None
    transform: Optional[List[float]] = None
    inlier_count: int = 0
    inlier_indices: List[int] = []
    hypotheses_evaluated: int = 0
    stage_timings: Dict[str, float] = {}
    counters: Dict[str, int] = {}
    params: Dict[str, Any] = {}

    @validator("transform")
    def validate_transform(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and len(value) != 16:
            raise ValueError('"transform" must contain 16 values')
        return value

    @classmethod
    def from_result(
        cls, result: RegistrationResult, params: Dict[str, Any], omit_timings: bool = False
    ) -> "ResultDocument":
        timings = {key: 0.0 if omit_timings else float(result.stage_timings.get(stage, 0.0))
                   for stage, key in STAGE_KEYS.items()}
        transform = None
        if result.best_transform is not None:
            transform = [float(value) for value in result.best_transform.as_matrix().reshape(-1)]
        return cls(
            success=result.success,
            failure_reason=result.failure_reason,
            transform=transform,
            inlier_count=result.best_inlier_count,
            inlier_indices=result.inlier_indices,
            hypotheses_evaluated=result.hypotheses_evaluated,
            stage_timings=timings,
            counters=result.counters,
            params=params,
        )

    def to_result(self) -> RegistrationResult:
        stages = {value: key for key, value in STAGE_KEYS.items()}
        transform = None
        if self.transform is not None:
            transform = RigidTransform.from_matrix(np.array(self.transform).reshape(4, 4))
        return RegistrationResult(
            method=str(self.params.get("method", "turboreg")),
            success=self.success,
            failure_reason=self.failure_reason,
            best_transform=transform,
            best_inlier_count=self.inlier_count,
            inlier_indices=self.inlier_indices,
            hypotheses_evaluated=self.hypotheses_evaluated,
            stage_timings={stages[key]: value for key, value in self.stage_timings.items() if key in stages},
            counters=self.counters,
        )

    def dumps(self) -> str:
        return json.dumps(self.dict(), indent=2, sort_keys=True) + "\n"


def read_prediction(path: PathLike) -> RegistrationResult:
    """
    Чтение предсказания: JSON ResultDocument или файл преобразования 4x4.
    """

    if str(path).endswith(".json"):
        try:
            return ResultDocument.parse_file(path).to_result()
        except (OSError, ValueError) as exc:
            raise InputError(f"{path}: cannot parse result document: {exc}") from exc
    return RegistrationResult(best_transform=read_transform(path))
