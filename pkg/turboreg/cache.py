import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import redis
from redis.asyncio import Redis as AsyncRedis
from redis.asyncio import RedisCluster as AsyncRedisCluster

from .exceptions import InputError
from .io import PathLike, read_correspondences, read_transform
from .schemas import CorrespondenceSet, RigidTransform

logger = logging.getLogger(__name__)

CACHE_PREFIX = "turboreg"

Pair = Tuple[CorrespondenceSet, Optional[RigidTransform]]


def cache_key(corr_path: PathLike, gt_path: Optional[PathLike] = None) -> str:
    """
    Ключ кэша пары файлов: sha1 от абсолютных путей и времени изменения.

    :param corr_path: путь к .corr файлу.
    :param gt_path: путь к .gt файлу (опционально).
    :return: ключ вида turboreg_<sha1>.
    """

    digest = hashlib.sha1()
    for path in (corr_path, gt_path):
        if path is None:
            continue
        absolute = Path(path).resolve()
        try:
            mtime = os.stat(absolute).st_mtime_ns
        except OSError as exc:
            raise InputError(f"{path}: cannot read file: {exc}") from exc
        digest.update(str(absolute).encode("utf-8"))
        digest.update(str(mtime).encode("utf-8"))
    return f"{CACHE_PREFIX}_{digest.hexdigest()}"


def _encode(pair: Pair) -> str:
    corr, gt = pair
    data: Dict[str, Any] = {"source": corr.source.tolist(), "target": corr.target.tolist(), "gt": None}
    if gt is not None:
        data["gt"] = gt.as_matrix().tolist()
    return json.dumps(data)


def _decode(raw: Union[str, bytes]) -> Pair:
    data = json.loads(raw)
    corr = CorrespondenceSet.from_arrays(np.array(data["source"]), np.array(data["target"]))
    gt = RigidTransform.from_matrix(np.array(data["gt"])) if data["gt"] is not None else None
    return corr, gt


class CorrespondenceCache:
    """
    Кэш разобранных файлов соответствий и эталонов в Redis.

    Attributes:
        redis_client        объект клиента Redis (синхронный или асинхронный), None - без кэша.
        cache_live_time     время жизни записи в секундах.
    """

    def __init__(
        self,
        redis_client: Optional[Union[redis.Redis, AsyncRedis]] = None,
        cache_live_time: int = 300,
    ):
        self.redis_client = redis_client
        self.cache_live_time = cache_live_time

    @staticmethod
    def _parse(corr_path: PathLike, gt_path: Optional[PathLike]) -> Pair:
        gt = read_transform(gt_path) if gt_path is not None else None
        return read_correspondences(corr_path), gt

    async def _get_cache(self, key: str, corr_path: PathLike, gt_path: Optional[PathLike]) -> Pair:
        """
        Получение пары через синхронный клиент Redis.
        """

        raw = self.redis_client.get(name=key)  # type: ignore[union-attr]
        if raw is not None:
            logger.info("Cache hit: %s", corr_path)
            return _decode(raw)  # type: ignore[arg-type]

        logger.info("Cache miss: %s", corr_path)
        pair = self._parse(corr_path, gt_path)
        self.redis_client.set(name=key, value=_encode(pair), ex=self.cache_live_time)  # type: ignore[union-attr]
        return pair

    async def _get_cache_async(self, key: str, corr_path: PathLike, gt_path: Optional[PathLike]) -> Pair:
        """
        Получение пары через асинхронный клиент Redis.
        """

        raw = await self.redis_client.get(key)  # type: ignore[union-attr,misc]
        if raw is not None:
            logger.info("Cache hit: %s", corr_path)
            return _decode(raw)

        logger.info("Cache miss: %s", corr_path)
        pair = self._parse(corr_path, gt_path)
        await self.redis_client.set(key, _encode(pair))  # type: ignore[union-attr,misc]
        await self.redis_client.expire(key, self.cache_live_time)  # type: ignore[union-attr,misc]
        return pair

    async def load(self, corr_path: PathLike, gt_path: Optional[PathLike] = None) -> Pair:
        """
        Загрузка пары файлов (из кэша, если он настроен).

        :param corr_path: путь к .corr файлу.
        :param gt_path: путь к .gt файлу (опционально).
        :return: пара (CorrespondenceSet, RigidTransform или None).
        """

        if self.redis_client is None:
            return self._parse(corr_path, gt_path)

        key = cache_key(corr_path, gt_path)
        if isinstance(self.redis_client, (AsyncRedis, AsyncRedisCluster)):
            return await self._get_cache_async(key, corr_path, gt_path)
        return await self._get_cache(key, corr_path, gt_path)
