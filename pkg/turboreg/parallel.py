from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def split_range(total: int, chunk: int) -> List[Tuple[int, int]]:
    """
    Разбиение [0, total) на последовательные блоки длины chunk.
    """

    chunk = max(1, chunk)
    return [(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def map_ordered(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Применение func к элементам с сохранением порядка результатов независимо от числа потоков.

    :param func: функция над элементом.
    :param items: элементы.
    :param workers: число потоков (1 - без пула).
    :return: результаты в порядке items.
    """

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(func, items))
    return [func(item) for item in items]
