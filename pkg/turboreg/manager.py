from concurrent.futures import Executor
from typing import Dict, Optional, Union

import redis
from redis.asyncio import Redis as AsyncRedis

from .cache import CorrespondenceCache
from .estimators import RegistrationConfig
from .io import PathLike
from .schemas import CorrespondenceSet, RegistrationResult


class RegistrationManager:
    """
    Класс RegistrationManager.
    """

    def __init__(
        self,
        config: Dict,
        redis_client: Optional[Union[redis.Redis, AsyncRedis]] = None,
        cache_live_time: int = 300,
    ):
        """
        Инициализация класса RegistrationManager.

        :param config: конфигурация.
        :param redis_client: объект клиента Redis (для кэширования разобранных файлов).
        :param cache_live_time: срок хранения разобранных файлов в кэше (в секундах).
        """

        self.registration_config = RegistrationConfig.parse_obj(config)
        self.redis_client = redis_client
        self.cache = CorrespondenceCache(redis_client=redis_client, cache_live_time=cache_live_time)

    async def register(self, corr: CorrespondenceSet, executor: Optional[Executor] = None) -> RegistrationResult:
        """
        Метод для регистрации набора соответствий согласно конфигурации.

        :param corr: набор соответствий.
        :param executor: пул потоков для вычислений.
        :return: результат регистрации.
        """

        result = await self.registration_config.estimator.estimate(corr, executor=executor)
        return result

    async def register_file(self, corr_path: PathLike, executor: Optional[Executor] = None) -> RegistrationResult:
        """
        Метод для регистрации соответствий из .corr файла.

        :param corr_path: путь к файлу соответствий.
        :param executor: пул потоков для вычислений.
        :return: результат регистрации.
        """

        corr, _ = await self.cache.load(corr_path)
        return await self.register(corr, executor=executor)
