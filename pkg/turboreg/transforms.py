from typing import Any, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .schemas import Point3, RigidTransform


def apply_transform(t: RigidTransform, p: Union[Point3, Any]) -> Union[Point3, np.ndarray]:
    """
    Применение преобразования к точке: R·p + t.

    :param t: жёсткое преобразование.
    :param p: Point3 или массив (3,) / (N, 3).
    :return: значение того же вида, что и p.
    """

    if isinstance(p, Point3):
        return Point3.from_array(t.rotation @ p.as_array() + t.translation)
    return transform_points(t, p)


def transform_points(t: RigidTransform, points: Any) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    return array @ t.rotation.T + t.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """
    Композиция: сначала b, затем a.
    """

    return RigidTransform(rotation=a.rotation @ b.rotation, translation=a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rotation_t = t.rotation.T
    return RigidTransform(rotation=rotation_t, translation=-rotation_t @ t.translation)


def rotation_about_axis(axis: Any, angle_deg: float) -> np.ndarray:
    """
    Матрица поворота на угол angle_deg вокруг оси axis.
    """

    unit = np.asarray(axis, dtype=float)
    unit = unit / np.linalg.norm(unit)
    return Rotation.from_rotvec(np.deg2rad(angle_deg) * unit).as_matrix()


def random_transform(rng: np.random.Generator, translation_extent: float = 1.0) -> RigidTransform:
    """
    Случайное преобразование: поворот из равномерно распределённого единичного кватерниона,
    перенос равномерно в [-translation_extent, translation_extent]³.

    :param rng: генератор numpy.
    :param translation_extent: полуширина области переноса (метры).
    :return: преобразование.
    """

    quaternion = rng.standard_normal(4)
    quaternion /= np.linalg.norm(quaternion)
    rotation = Rotation.from_quat(quaternion).as_matrix()
    translation = rng.uniform(-translation_extent, translation_extent, size=3)
    return RigidTransform(rotation=rotation, translation=translation)
