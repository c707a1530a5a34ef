import argparse
import asyncio
import csv
import itertools
import json
import logging
import sys
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, TextIO

import redis
from pydantic import ValidationError

from .bench import BenchmarkConfig, BenchmarkRunner, write_report_csv
from .evaluation import evaluate_pairs, stability_table
from .exceptions import InputError, TurboRegError
from .graph import build_first_order, build_sc2, dump_graph, to_o2graph
from .io import (
    ResultDocument,
    format_real,
    read_correspondences,
    read_prediction,
    read_transform,
    write_correspondences,
    write_mask,
    write_transform,
)
from .manager import RegistrationManager
from .schemas import CorrespondenceSet, EvalReport, GraphMode, StabilityRow, SuccessCriteria, SynthConfig
from .synth import RNG_ALGORITHM, generate, generate_many

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_REGISTRATION_FAILURE = 2


class UsageError(InputError):
    """
    Ошибка разбора аргументов командной строки.
    """


class ArgumentParser(argparse.ArgumentParser):
    """
    Разбор аргументов с кодом выхода 1 (вместо 2 у argparse) при ошибке использования.
    """

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def parse_list(value: str, cast: Callable[[str], Any]) -> List[Any]:
    """
    Разбор списка через запятую; для целых допускаются диапазоны "a-b" (включительно).
    """

    items: List[Any] = []
    for token in value.split(","):
        token = token.strip()
        if not token:
            continue
        if cast is int and "-" in token[1:]:
            head, _, tail = token.partition("-")
            items.extend(range(int(head), int(tail) + 1))
        else:
            items.append(cast(token))
    if not items:
        raise argparse.ArgumentTypeError(f"empty list: {value!r}")
    return items


def float_list(value: str) -> List[float]:
    try:
        return parse_list(value, float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def int_list(value: str) -> List[int]:
    try:
        return parse_list(value, int)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


@contextmanager
def open_output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8") as stream:
        yield stream


def resolve_criteria(args: argparse.Namespace) -> SuccessCriteria:
    criteria = SuccessCriteria.preset(args.preset) if args.preset else SuccessCriteria()
    overrides = {key: value for key, value in (("re_max", args.re_max), ("te_max", args.te_max)) if value is not None}
    return SuccessCriteria(**{**criteria.dict(), **overrides})


def turboreg_estimator(args: argparse.Namespace, tau: Optional[float], k1: int, k2: int, workers: int) -> Dict[str, Any]:
    return {
        "type": "turboreg",
        "tau": tau,
        "resolution": args.resolution,
        "k1": k1,
        "k2": k2,
        "inlier_threshold": args.inlier_thresh,
        "graph_mode": args.graph,
        "workers": workers,
    }


def cli_register(args: argparse.Namespace) -> int:
    """
    Регистрация одного набора соответствий; ResultDocument в stdout или --out.
    """

    corr = read_correspondences(args.corr)
    estimator = turboreg_estimator(args, args.tau, args.k1, args.k2, args.threads)
    estimator["refine"] = args.refine
    manager = RegistrationManager(config={"version": "1", "estimator": estimator})

    model = manager.registration_config.estimator
    tau = model.resolve_tau(corr)  # type: ignore[union-attr]
    if args.dump_graph:
        write_graph_dump(args.dump_graph, corr, tau, GraphMode(args.graph))

    result = asyncio.run(manager.register(corr))

    params = {**model.describe(), "tau": tau, "refine": args.refine}
    document = ResultDocument.from_result(result, params=params, omit_timings=args.omit_timings)
    with open_output(args.out) as stream:
        stream.write(document.dumps())

    if not result.success:
        logger.error("Registration failed: %s", result.failure_reason)
        return EXIT_REGISTRATION_FAILURE
    return EXIT_OK


def write_graph_dump(path: str, corr: CorrespondenceSet, tau: float, mode: GraphMode) -> None:
    graph = build_first_order(corr, tau)
    weighted = build_sc2(graph)
    with open(path, "w", encoding="utf-8") as stream:
        dump_graph(graph, stream)
        dump_graph(to_o2graph(weighted) if mode == GraphMode.O2 else weighted, stream)


def cli_synth(args: argparse.Namespace) -> int:
    """
    Генерация синтетического примера: <prefix>.corr, <prefix>.gt, <prefix>.mask.
    """

    config = SynthConfig(
        n=args.n, outlier_ratio=args.outlier_ratio, noise_sigma=args.noise, extent=args.extent, seed=args.seed
    )
    instance = generate(config)
    header = [
        f"rng: {RNG_ALGORITHM} seed={config.seed}",
        f"n={config.n} outlier_ratio={format_real(config.outlier_ratio)} "
        f"noise_sigma={format_real(config.noise_sigma)} extent={format_real(config.extent)}",
    ]
    write_correspondences(f"{args.out_prefix}.corr", instance.correspondences, header=header)
    write_transform(f"{args.out_prefix}.gt", instance.gt)
    write_mask(f"{args.out_prefix}.mask", instance.inlier_mask)
    logger.info("Synthetic instance written to %s.{corr,gt,mask}", args.out_prefix)
    return EXIT_OK


def write_eval_csv(report: EvalReport, names: Sequence[str], criteria: SuccessCriteria, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["pair", "re_deg", "te_m", "success", "elapsed_s"])
    for name, pair in zip(names, report.per_pair):
        writer.writerow(
            [
                name,
                format_real(pair.re_deg) if pair.re_deg is not None else "",
                format_real(pair.te_m) if pair.te_m is not None else "",
                "1" if pair.success else "0",
                format_real(pair.elapsed_s),
            ]
        )
    fps = format_real(report.fps) if report.fps is not None else "n/a"
    stream.write(
        f"# aggregate rr={format_real(report.rr)} fps={fps} "
        f"re_max={format_real(criteria.re_max)} te_max={format_real(criteria.te_max)}\n"
    )


def cli_eval(args: argparse.Namespace) -> int:
    """
    Оценка предсказаний против эталонов: строки по парам и итог RR / FPS.
    """

    if len(args.pred) != len(args.gt):
        raise InputError(f"--pred has {len(args.pred)} paths but --gt has {len(args.gt)}")
    criteria = resolve_criteria(args)
    pairs = [(read_prediction(pred), read_transform(gt)) for pred, gt in zip(args.pred, args.gt)]
    report = evaluate_pairs(pairs, criteria)

    with open_output(args.out) as stream:
        if args.format == "json":
            data = {"criteria": criteria.dict(), "pairs": list(args.pred), **report.dict()}
            stream.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
        else:
            write_eval_csv(report, args.pred, criteria, stream)
    return EXIT_OK


def cli_bench(args: argparse.Namespace) -> int:
    """
    Прогон бенчмарка по каталогу или синтетическому перебору; CSV в stdout или --out.
    """

    if args.method == "turboreg":
        estimators = [
            turboreg_estimator(args, tau, k1, k2, workers=1)
            for tau, k1, k2 in itertools.product(args.tau or [None], args.k1, args.k2)
        ]
    else:
        estimators = [
            {"type": "ransac", "iterations": iterations, "inlier_threshold": args.inlier_thresh, "seed": args.seed}
            for iterations in args.iterations
        ]

    config: Dict[str, Any] = {
        "estimators": estimators,
        "criteria": resolve_criteria(args).dict(),
        "threads": args.threads,
        "cache_live_time": args.cache_live_time,
        "omit_timings": args.omit_timings,
    }
    if args.dataset_dir:
        config["dataset_dir"] = args.dataset_dir
    if args.synth_n:
        config["synth_sweep"] = {
            "n": args.synth_n,
            "outlier_ratio": args.synth_outlier_ratio,
            "seeds": args.synth_seeds,
            "noise_sigma": args.synth_noise,
            "extent": args.synth_extent,
        }

    redis_client = redis.Redis.from_url(args.redis_url) if args.redis_url else None
    runner = BenchmarkRunner(BenchmarkConfig.parse_obj(config), redis_client=redis_client)
    report = asyncio.run(runner.run())
    with open_output(args.out) as stream:
        write_report_csv(report, stream)
    return EXIT_OK


def write_stability_csv(rows: Sequence[StabilityRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["tau", "median_re_deg", "median_te_m", "samples"])
    for row in rows:
        writer.writerow(
            [
                format_real(row.tau),
                format_real(row.median_re_deg) if row.median_re_deg is not None else "",
                format_real(row.median_te_m) if row.median_te_m is not None else "",
                row.samples,
            ]
        )


def cli_diag_stability(args: argparse.Namespace) -> int:
    """
    Диагностика устойчивости клик по набору tau.
    """

    if args.corr:
        instances = [read_correspondences(args.corr)]
    else:
        config = SynthConfig(
            n=args.n, outlier_ratio=args.outlier_ratio, noise_sigma=args.noise, extent=args.extent, seed=args.seeds[0]
        )
        instances = [instance.correspondences for instance in generate_many(config, args.seeds)]

    rows = stability_table(
        instances, args.taus, clique_size=args.clique_size, seed=args.seeds[0], max_cliques=args.max_cliques
    )
    with open_output(args.out) as stream:
        write_stability_csv(rows, stream)

    if not any(row.present for row in rows):
        logger.error("No %d-clique found at any tau", args.clique_size)
        return EXIT_INPUT_ERROR
    return EXIT_OK


def add_estimator_arguments(parser: argparse.ArgumentParser, lists: bool) -> None:
    number = float_list if lists else float
    count = int_list if lists else int
    parser.add_argument("--tau", type=number, default=None, help="Порог совместимости (м)")
    parser.add_argument("--k1", type=count, default=[1000] if lists else 1000, help="Число опорных рёбер")
    parser.add_argument("--k2", type=count, default=[2] if lists else 2, help="Число TurboClique на опорное ребро")
    parser.add_argument("--inlier-thresh", type=float, default=0.10, help="Порог инлаера (м)")
    parser.add_argument("--graph", choices=[mode.value for mode in GraphMode], default=GraphMode.O2.value)
    parser.add_argument("--resolution", type=float, default=None, help="Разрешение облака (м), tau = 0.25 * resolution")
    parser.add_argument("--threads", type=int, default=1)


def add_criteria_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", choices=["indoor", "kitti"], default=None)
    parser.add_argument("--re-max", type=float, default=None, help="Порог ошибки поворота (градусы)")
    parser.add_argument("--te-max", type=float, default=None, help="Порог ошибки переноса (м)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="turboreg", description="Регистрация облаков точек по соответствиям")
    parser.add_argument("-v", "--verbose", action="store_true", help="Подробный журнал (DEBUG)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    register = subparsers.add_parser("register", help="Оценка преобразования по .corr файлу")
    register.add_argument("--corr", required=True)
    add_estimator_arguments(register, lists=False)
    register.add_argument("--refine", action="store_true", help="Уточнение по итоговым инлаерам")
    register.add_argument("--out", default=None)
    register.add_argument("--dump-graph", default=None, help="Текстовый дамп графов совместимости")
    register.add_argument("--omit-timings", action="store_true", help="Нулевые времена этапов в выводе")
    register.set_defaults(handler=cli_register)

    synth = subparsers.add_parser("synth", help="Синтетический пример с эталоном")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--outlier-ratio", type=float, default=0.0)
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--extent", type=float, default=1.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out-prefix", required=True)
    synth.set_defaults(handler=cli_synth)

    evaluate = subparsers.add_parser("eval", help="RE / TE / RR по предсказаниям")
    evaluate.add_argument("--pred", nargs="+", required=True)
    evaluate.add_argument("--gt", nargs="+", required=True)
    add_criteria_arguments(evaluate)
    evaluate.add_argument("--format", choices=["csv", "json"], default="csv")
    evaluate.add_argument("--out", default=None)
    evaluate.set_defaults(handler=cli_eval)

    bench = subparsers.add_parser("bench", help="Бенчмарк по каталогу или синтетике")
    source = bench.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset-dir", default=None)
    source.add_argument("--synth-n", type=int_list, default=None, help="Размеры синтетических наборов")
    bench.add_argument("--synth-outlier-ratio", type=float_list, default=[0.0])
    bench.add_argument("--synth-seeds", type=int_list, default=[0], help="Например 0-9 или 1,5,7")
    bench.add_argument("--synth-noise", type=float, default=0.0)
    bench.add_argument("--synth-extent", type=float, default=1.0)
    bench.add_argument("--method", choices=["turboreg", "ransac"], default="turboreg")
    add_estimator_arguments(bench, lists=True)
    bench.add_argument("--iterations", type=int_list, default=[2000], help="Бюджет RANSAC")
    bench.add_argument("--seed", type=int, default=0, help="Seed RANSAC")
    add_criteria_arguments(bench)
    bench.add_argument("--redis-url", default=None, help="Кэш разобранных файлов, например redis://localhost:6379/0")
    bench.add_argument("--cache-live-time", type=int, default=300)
    bench.add_argument("--omit-timings", action="store_true")
    bench.add_argument("--out", default=None)
    bench.set_defaults(handler=cli_bench)

    diag = subparsers.add_parser("diag-stability", help="Устойчивость клик в зависимости от tau")
    diag.add_argument("--taus", type=float_list, required=True)
    diag.add_argument("--clique-size", type=int, default=10)
    diag.add_argument("--seeds", type=int_list, default=[0])
    diag.add_argument("--max-cliques", type=int, default=50)
    diag.add_argument("--corr", default=None, help="Файл соответствий (иначе синтетика)")
    diag.add_argument("--n", type=int, default=200)
    diag.add_argument("--outlier-ratio", type=float, default=0.5)
    diag.add_argument("--noise", type=float, default=0.002)
    diag.add_argument("--extent", type=float, default=1.0)
    diag.add_argument("--out", default=None)
    diag.set_defaults(handler=cli_diag_stability)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа: 0 - успех, 1 - ошибка входных данных / использования, 2 - регистрация не удалась.
    """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INPUT_ERROR

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return int(args.handler(args))
    except (ValidationError, TurboRegError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT_ERROR
