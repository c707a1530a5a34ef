import itertools
import logging
from typing import List

import numpy as np

from .schemas import CorrespondenceSet, SynthConfig, SynthInstance
from .transforms import random_transform, transform_points

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"
# Шум инлаера ограничен 6 sigma: выборки за границей перегенерируются.
NOISE_BOUND_SIGMAS = 6.0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def inlier_count(config: SynthConfig) -> int:
    return int(np.floor(config.n * (1.0 - config.outlier_ratio) + 0.5))


def _bounded_noise(rng: np.random.Generator, count: int, sigma: float) -> np.ndarray:
    noise = rng.normal(0.0, sigma, size=(count, 3)) if sigma > 0 else np.zeros((count, 3))
    if sigma > 0:
        while True:
            outside = np.linalg.norm(noise, axis=1) > NOISE_BOUND_SIGMAS * sigma
            if not outside.any():
                break
            noise[outside] = rng.normal(0.0, sigma, size=(int(outside.sum()), 3))
    return noise


def generate(config: SynthConfig) -> SynthInstance:
    """
    Синтетический пример с известным эталоном.

    Эталон: поворот из равномерного единичного кватерниона, перенос в [-extent, extent]³. Исходные
    точки равномерны в кубе со стороной extent (с центром в нуле). Цели инлаеров - образ исходной
    точки плюс гауссов шум; цели выбросов равномерны в ограничивающем параллелепипеде образа куба.
    Результат полностью определяется seed.

    :param config: конфигурация.
    :return: SynthInstance.
    """

    rng = make_rng(config.seed)
    half = config.extent / 2.0
    gt = random_transform(rng, translation_extent=config.extent)

    source = rng.uniform(-half, half, size=(config.n, 3))
    inliers = inlier_count(config)
    inlier_positions = np.sort(rng.permutation(config.n)[:inliers])
    mask = np.zeros(config.n, dtype=bool)
    mask[inlier_positions] = True

    target = np.empty_like(source)
    target[mask] = transform_points(gt, source[mask]) + _bounded_noise(rng, inliers, config.noise_sigma)

    corners = np.array(list(itertools.product((-half, half), repeat=3)))
    image = transform_points(gt, corners)
    low, high = image.min(axis=0), image.max(axis=0)
    target[~mask] = rng.uniform(low, high, size=(config.n - inliers, 3))

    logger.debug("Synthetic instance: n=%d, inliers=%d, seed=%d", config.n, inliers, config.seed)
    return SynthInstance(
        correspondences=CorrespondenceSet(source=source, target=target),
        gt=gt,
        inlier_mask=[bool(flag) for flag in mask],
    )


def generate_many(config: SynthConfig, seeds: List[int]) -> List[SynthInstance]:
    return [generate(config.copy(update={"seed": seed})) for seed in seeds]
