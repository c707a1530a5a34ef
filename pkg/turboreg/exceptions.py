class TurboRegError(Exception):
    """
    Базовое исключение пакета.
    """


class InputError(TurboRegError, ValueError):
    """
    Некорректные входные данные: мало соответствий, нечисловые координаты, битые файлы, неверные флаги.
    """


class SizingError(InputError):
    """
    Размер входа превышает допустимый для плотного представления (или для переборного оракула).
    """


class DegenerateConfiguration(TurboRegError):
    """
    Вырожденная конфигурация точек для решателя Кабша (коллинеарные / совпадающие точки).
    """


class NoHypothesis(TurboRegError):
    """
    Не удалось получить ни одной пригодной гипотезы преобразования.
    """
