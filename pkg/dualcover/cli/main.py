import argparse
import contextlib
import json
import sys
import time
from typing import Sequence

from loguru import logger

from dualcover.algorithms.kde import kde_search
from dualcover.algorithms.nn import nn_search
from dualcover.algorithms.oracle import kde_violations, nn_mismatches, range_mismatches
from dualcover.algorithms.range_search import range_search
from dualcover.cli.bench import run_bench
from dualcover.cli.config import (
    ORACLE_CAP,
    RunConfig,
    bounds_affordable,
    load_input,
    load_inputs,
    oracle_section,
    output_paths,
)
from dualcover.cli.report import (
    RunReport,
    bound_sections,
    counters_section,
    dataset_summary,
    emit_report,
    tree_section,
    verification_section,
)
from dualcover.common.common import (
    Command,
    ConfigError,
    DatasetError,
    DimensionMismatchError,
    DualTreeError,
    DuplicatePolicy,
    ExitCode,
    GeneratorSpecError,
    KdeMode,
    KernelError,
    OracleMismatchError,
    OutputError,
    RootPolicy,
)
from dualcover.core.dataset import generate_dataset
from dualcover.core.oracle import dataset_extremes, expansion_constant
from dualcover.covertree.analysis import tree_imbalance, tree_stats, verify_invariants
from dualcover.covertree.tree import BuildConfig, build, tree_from_json
from dualcover.kernels.kernels import KernelManager
from dualcover.utils.task import SaveDatasetTask, SaveEstimatesTask, SaveNeighborsTask, SaveRangeTask, SaveTreeTask

# 输入与配置错误返回1，其余错误按契约违反返回2
USAGE_ERRORS = (ConfigError, GeneratorSpecError, KernelError, OutputError, DatasetError, DimensionMismatchError)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"命令行参数错误：{message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="dualcover", description="覆盖树双树算法工具集")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="输出调试日志")
    verbosity.add_argument("--quiet", action="store_true", help="只输出警告与错误")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def add_dataset_args(sub: argparse.ArgumentParser):
        sub.add_argument("--data", help="CSV数据集路径")
        sub.add_argument("--gen", help="生成器描述，如 uniform-ball:N=1000,d=5")
        sub.add_argument("--seed", type=int, help="随机种子，默认0")
        sub.add_argument("--header", action="store_true", help="CSV首行为表头")
        sub.add_argument("--duplicate-policy", choices=list(DuplicatePolicy))
        sub.add_argument("--root-policy", choices=list(RootPolicy))
        sub.add_argument("--output", help="输出文件或目录")

    def add_problem_args(sub: argparse.ArgumentParser):
        add_dataset_args(sub)
        sub.add_argument("--query-data", help="查询集CSV路径（双色）")
        sub.add_argument("--query-gen", help="查询集生成器描述（双色）")
        sub.add_argument("--query-seed", type=int, help="查询集随机种子，默认 seed+1")
        sub.add_argument("--mono", action="store_true", help="单色：查询集即参考集")
        sub.add_argument("--strict-paper-mode", action="store_true", help="查询递归时用父节点打分，区间搜索使用原始剪枝规则")
        sub.add_argument("--verify-with-oracle", action="store_true", help="与穷举结果比较")
        sub.add_argument("--trace", help="遍历事件JSON lines输出路径")
        sub.add_argument("--audit-separation", action="store_true", help="检查每个参考集的分离性")
        sub.add_argument("--no-bounds", dest="bounds", action="store_false", default=None, help="不计算上界报告")

    def add_kde_args(sub: argparse.ArgumentParser):
        sub.add_argument("--kernel", help="核函数描述，如 gaussian:sigma=1.0")
        sub.add_argument("--epsilon", type=float, help="误差容限ε")
        sub.add_argument("--mode", choices=list(KdeMode))

    def add_range_args(sub: argparse.ArgumentParser):
        sub.add_argument("--lower", type=float, help="区间下界l")
        sub.add_argument("--upper", type=float, help="区间上界u")
        sub.add_argument("--alpha", type=float, help="上界报告的扩张参数α，默认1/3")
        sub.add_argument("--count-only", action="store_true", help="只计数")

    gen = subparsers.add_parser(Command.Gen, help="生成合成数据集")
    gen.add_argument("gen", help="生成器描述，如 uniform-ball:N=100,d=3")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--header", action="store_true")
    gen.add_argument("--output")

    add_dataset_args(subparsers.add_parser(Command.Build, help="构造覆盖树并检查不变量"))
    check = subparsers.add_parser(Command.Check, help="检查覆盖树不变量")
    add_dataset_args(check)
    check.add_argument("--tree", help="已保存的树JSON，缺省时重新构造")
    add_dataset_args(subparsers.add_parser(Command.Stats, help="统计树与数据集的分析量"))

    allnn = subparsers.add_parser(Command.AllNN, help="双树最近邻")
    add_problem_args(allnn)
    self_group = allnn.add_mutually_exclusive_group()
    self_group.add_argument("--exclude-self", dest="exclude_self", action="store_true", default=None)
    self_group.add_argument("--include-self", dest="exclude_self", action="store_false")

    kde = subparsers.add_parser(Command.Kde, help="双树近似核密度估计")
    add_problem_args(kde)
    add_kde_args(kde)

    range_parser = subparsers.add_parser(Command.Range, help="双树区间搜索/计数")
    add_problem_args(range_parser)
    add_range_args(range_parser)

    bench = subparsers.add_parser(Command.Bench, help="规模扫描基准")
    bench.add_argument("algorithm", choices=[Command.AllNN, Command.Kde, Command.Range])
    bench.add_argument("--sizes", type=int, nargs="+", help="点数列表，默认 250 500 1000 2000")
    bench.add_argument("--seeds", type=int, help="每个规模的种子数，默认5")
    bench.add_argument("--generator", help="不含N的生成器描述，默认 uniform-ball:d=3")
    bench.add_argument("--output")
    bench.add_argument("--no-bounds", dest="bounds", action="store_false", default=None)
    add_kde_args(bench)
    add_range_args(bench)
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False):
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING" if quiet else "INFO")


def run_gen(config: RunConfig) -> int:
    primary, _ = output_paths(config)
    SaveDatasetTask(primary, generate_dataset(config.gen, config.seed), config.header).run()
    return ExitCode.Ok


def run_tree(config: RunConfig) -> int:
    """
    build / check / stats
    """
    primary, report_path = output_paths(config)
    dataset, source = load_input(config.data, config.gen, config.seed, config)
    report = RunReport(command=str(config.command), seed=config.seed, config=config.report_config())
    report.datasets["reference"] = dataset_summary(dataset, source)

    started = time.perf_counter()
    if config.tree is not None:
        with open(config.tree, encoding="utf-8") as f:
            try:
                document = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"树文件{config.tree}不是合法的JSON：{e}") from None
        tree = tree_from_json(document, dataset)
    else:
        tree = build(dataset, BuildConfig(config.root_policy, config.seed))
    report.timing["build_seconds"] = time.perf_counter() - started

    if config.command == Command.Stats:
        extra, c = {"i_t": tree_imbalance(tree).total}, None
        if 2 <= dataset.size <= ORACLE_CAP:
            c = expansion_constant(dataset).c
            extremes = dataset_extremes(dataset)
            extra.update(c=c, eta=extremes.eta, delta=extremes.delta)
        elif dataset.size > ORACLE_CAP:
            logger.warning(f"点数超过{ORACLE_CAP}，跳过扩张常数与η、δ的穷举计算！")
        report.tree = tree_section(tree_stats(tree, c), **extra)
        emit_report(report, primary)
        return ExitCode.Ok

    verification = verify_invariants(tree)
    report.tree = tree_section(tree_stats(tree))
    report.verification = verification_section(verification)
    if config.command == Command.Build:
        report.outputs.append(str(SaveTreeTask(primary, tree).run()))
    emit_report(report, report_path)
    if not verification.ok:
        logger.error(f"覆盖树不变量检查失败：{[str(v.kind) for v in verification.violations[:5]]}")
        return ExitCode.ContractViolation
    logger.info(f"覆盖树不变量检查通过：{verification.checked_nodes}个节点")
    return ExitCode.Ok


def run_problem(config: RunConfig) -> int:
    """
    allnn / kde / range
    """
    primary, report_path = output_paths(config)
    query, reference, summaries = load_inputs(config)
    report = RunReport(command=str(config.command), seed=config.seed, config=config.report_config(), datasets=summaries)
    with_bounds = config.bounds and bounds_affordable(query, reference)
    if config.bounds and not with_bounds:
        logger.warning("数据规模过大，跳过上界报告的穷举计算！")
    build_config = BuildConfig(config.root_policy, config.seed)

    with contextlib.ExitStack() as stack:
        trace_stream = stack.enter_context(open(config.trace, "w", encoding="utf-8")) if config.trace else None
        options = config.traversal_options(trace_stream)
        started = time.perf_counter()

        if config.command == Command.AllNN:
            exclude_self = config.monochromatic if config.exclude_self is None else config.exclude_self
            result = nn_search(query, reference, exclude_self, options, build_config, with_bounds)
            report.timing["seconds"] = time.perf_counter() - started
            SaveNeighborsTask(primary, result.neighbors, result.distances).run()
            report.problem.update(exclude_self=exclude_self)
            check = lambda: nn_mismatches(query, reference, result.distances, exclude_self)

        elif config.command == Command.Kde:
            kernel = KernelManager.from_spec(config.kernel)
            result = kde_search(query, reference, kernel, config.epsilon, config.mode, options, build_config, with_bounds)
            report.timing["seconds"] = time.perf_counter() - started
            SaveEstimatesTask(primary, result.estimates).run()
            report.problem.update(kernel=str(kernel), epsilon=config.epsilon, mode=str(config.mode), k_max=result.k_max)
            check = lambda: kde_violations(query, reference, kernel, result.estimates, config.epsilon, config.mode)

        else:
            result = range_search(
                query,
                reference,
                config.lower,
                config.upper,
                config.alpha,
                config.count_only,
                options,
                build_config,
                with_bounds,
            )
            report.timing["seconds"] = time.perf_counter() - started
            SaveRangeTask(primary, result.results, result.counts).run()
            report.problem.update(lower=config.lower, upper=config.upper, count_only=config.count_only)
            if result.difficulty is not None:
                difficulty = result.difficulty
                report.problem.update(
                    alpha=difficulty.alpha, s_max_size=difficulty.s_max_size, C=difficulty.C, beta=difficulty.beta
                )
            found = result.counts if config.count_only else result.results
            check = lambda: range_mismatches(query, reference, config.lower, config.upper, found, config.count_only)

    report.oracle = oracle_section(config.verify_with_oracle, query, reference, check)
    report.counters = counters_section(result.counters)
    for key, section in bound_sections(result.bounds).items():
        setattr(report, key, section)
    report.outputs.append(str(primary))
    if config.trace:
        report.outputs.append(config.trace)
    emit_report(report, report_path)

    if report.oracle is not None and report.oracle.mismatches:
        raise OracleMismatchError(f"与穷举结果不一致的查询点共{report.oracle.mismatches}个！")
    if result.counters.separation_violations:
        logger.error(f"参考集分离性检查发现{result.counters.separation_violations}处违规！")
        return ExitCode.ContractViolation
    return ExitCode.Ok


def run_command(argv: Sequence[str]) -> int:
    """
    解析命令行并执行子命令
    :param argv: 不含程序名的参数列表
    :return: 退出码
    """
    try:
        namespace = build_parser().parse_args(list(argv))
    except ConfigError as e:
        setup_logging()
        logger.error(str(e))
        return ExitCode.Usage
    except SystemExit as e:  # --help
        return int(e.code or 0)

    setup_logging(namespace.verbose, namespace.quiet)
    try:
        config = RunConfig.from_args(namespace)
        config.validate()
        if config.command == Command.Gen:
            return run_gen(config)
        if config.command in (Command.Build, Command.Check, Command.Stats):
            return run_tree(config)
        if config.command == Command.Bench:
            return run_bench(config)
        return run_problem(config)
    except USAGE_ERRORS as e:
        logger.error(str(e))
        return ExitCode.Usage
    except DualTreeError as e:
        logger.error(str(e))
        return ExitCode.ContractViolation
    except OSError as e:
        logger.error(f"读取输入文件时发生错误：{e}")
        return ExitCode.Usage


def main():
    sys.exit(int(run_command(sys.argv[1:])))


if __name__ == "__main__":
    main()
