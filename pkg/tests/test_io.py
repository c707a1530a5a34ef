import json

import numpy as np
import pytest

from turboreg.exceptions import InputError
from turboreg.io import (
    ResultDocument,
    format_real,
    read_correspondences,
    read_mask,
    read_prediction,
    read_transform,
    write_correspondences,
    write_mask,
    write_transform,
)
from turboreg.schemas import (
    STAGE_GRAPH,
    STAGE_MODEL,
    STAGE_PGS,
    EstimatorParams,
    RegistrationResult,
    RigidTransform,
    SynthConfig,
)
from turboreg.solver import estimate
from turboreg.synth import generate


def test_correspondences_round_trip(tmp_path) -> None:
    """
    Тест для проверки записи и чтения соответствий без потери точности.
    """

    corr = generate(SynthConfig(n=25, outlier_ratio=0.2, noise_sigma=0.01, seed=4)).correspondences
    path = tmp_path / "pair.corr"
    write_correspondences(path, corr, header=["rng: numpy.random.PCG64 seed=4"])

    loaded = read_correspondences(path)

    assert path.read_text().startswith("# rng: numpy.random.PCG64 seed=4\n")
    assert np.array_equal(loaded.source, corr.source)
    assert np.array_equal(loaded.target, corr.target)


def test_correspondences_skip_comments_and_blank_lines(tmp_path) -> None:
    """
    Тест для проверки пропуска комментариев и пустых строк.
    """

    path = tmp_path / "pair.corr"
    path.write_text("# header\n\n0 0 0 1 1 1\n   \n# middle\n1 2 3 4 5 6\n")

    corr = read_correspondences(path)

    assert len(corr) == 2
    assert corr[1].target.x == 4.0


@pytest.mark.parametrize(
    "content, message",
    [
        ("0 0 0 1 1 1\n0 0 0 1 1\n", ":2: expected 6 values"),
        ("# c\n0 0 0 1 1 1\n0 0 x 1 1 1\n", ":3: malformed number"),
        ("0 0 0 1 1 nan\n", ":1: non-finite value"),
        ("# only comments\n\n", ":1: no correspondence records found"),
    ],
)
def test_malformed_correspondences(tmp_path, content: str, message: str) -> None:
    """
    Тест для проверки ошибок разбора с номером строки.
    """

    path = tmp_path / "bad.corr"
    path.write_text(content)

    with pytest.raises(InputError) as exc:
        read_correspondences(path)
    assert message in str(exc.value)


def test_missing_file(tmp_path) -> None:
    """
    Тест для проверки ошибки при отсутствии файла.
    """

    with pytest.raises(InputError):
        read_correspondences(tmp_path / "missing.corr")


def test_transform_round_trip(tmp_path) -> None:
    """
    Тест для проверки записи и чтения однородной матрицы.
    """

    transform = generate(SynthConfig(n=3, seed=8)).gt
    path = tmp_path / "pair.gt"
    write_transform(path, transform)

    loaded = read_transform(path)

    assert np.array_equal(loaded.as_matrix(), transform.as_matrix())
    assert len(path.read_text().splitlines()) == 4


@pytest.mark.parametrize(
    "content",
    [
        "1 0 0 0\n0 1 0 0\n0 0 1 0\n",
        "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 1 1\n",
        "1 0 0 0\n0 1 0 0\n0 0 -1 0\n0 0 0 1\n",
    ],
)
def test_invalid_transform_file(tmp_path, content: str) -> None:
    """
    Тест для проверки отказа для некорректной матрицы: число строк, нижняя строка, отражение.
    """

    path = tmp_path / "bad.gt"
    path.write_text(content)

    with pytest.raises(InputError):
        read_transform(path)


def test_mask_round_trip(tmp_path) -> None:
    """
    Тест для проверки записи и чтения маски инлаеров.
    """

    path = tmp_path / "pair.mask"
    write_mask(path, [True, False, True])

    assert read_mask(path) == [True, False, True]

    path.write_text("1\n2\n")
    with pytest.raises(InputError):
        read_mask(path)


def test_format_real_is_lossless() -> None:
    """
    Тест для проверки записи float64 без потерь.
    """

    for value in (0.1, 1 / 3, 1e-300, -123456.789):
        assert float(format_real(value)) == value


def test_result_document_round_trip(tmp_path) -> None:
    """
    Тест для проверки документа результата: запись, чтение и обратное преобразование.
    """

    instance = generate(SynthConfig(n=30, seed=2))
    result = estimate(instance.correspondences, EstimatorParams(tau=0.01, k1=20))
    document = ResultDocument.from_result(result, params={"method": "turboreg", "tau": 0.01})

    assert set(document.stage_timings) == {"graph_s", "pgs_s", "model_s"}
    assert document.inlier_count == 30

    path = tmp_path / "result.json"
    path.write_text(document.dumps())
    parsed = json.loads(path.read_text())
    loaded = read_prediction(path)

    assert parsed["params"]["tau"] == 0.01
    assert loaded.success
    assert np.allclose(loaded.best_transform.as_matrix(), result.best_transform.as_matrix(), atol=1e-12)
    assert set(loaded.stage_timings) == {STAGE_GRAPH, STAGE_PGS, STAGE_MODEL}


def test_result_document_omit_timings() -> None:
    """
    Тест для проверки нулевых времён этапов при omit_timings.
    """

    instance = generate(SynthConfig(n=10, seed=1))
    result = estimate(instance.correspondences, EstimatorParams(tau=0.01, k1=5))
    first = ResultDocument.from_result(result, params={}, omit_timings=True)

    assert first.stage_timings == {"graph_s": 0.0, "pgs_s": 0.0, "model_s": 0.0}
    assert first.dumps() == ResultDocument.from_result(result, params={}, omit_timings=True).dumps()


def test_result_document_validation() -> None:
    """
    Тест для проверки длины матрицы в документе результата.
    """

    with pytest.raises(ValueError):
        ResultDocument(success=True, transform=[1.0] * 15)


def test_read_prediction_from_transform_file(tmp_path) -> None:
    """
    Тест для проверки чтения предсказания из файла 4x4.
    """

    path = tmp_path / "pred.txt"
    write_transform(path, RigidTransform.identity())

    prediction = read_prediction(path)

    assert prediction.success
    assert np.array_equal(prediction.best_transform.as_matrix(), np.eye(4))

    broken = tmp_path / "pred.json"
    broken.write_text("{not json")
    with pytest.raises(InputError):
        read_prediction(broken)


def test_read_prediction_rejects_non_finite_transform(tmp_path) -> None:
    """
    Тест для проверки отказа для предсказания с NaN в нижней строке матрицы.
    """

    result = RegistrationResult(best_transform=RigidTransform.identity())
    document = ResultDocument.from_result(result, params={"method": "turboreg"})
    payload = json.loads(document.dumps())
    payload["transform"][12] = float("nan")
    path = tmp_path / "pred.json"
    path.write_text(json.dumps(payload))

    with pytest.raises(InputError):
        read_prediction(path)
