import time
from dataclasses import replace
from typing import List

import numpy as np
from loguru import logger

from dualcover.algorithms.kde import kde_search
from dualcover.algorithms.nn import nn_search
from dualcover.algorithms.oracle import kde_violations, nn_mismatches, range_mismatches
from dualcover.algorithms.range_search import range_search
from dualcover.cli.config import ORACLE_CAP, RunConfig, output_paths
from dualcover.cli.report import emit_report
from dualcover.common.common import Command, ExitCode, OutputFormat
from dualcover.core.dataset import Dataset, GeneratorSpec, generate_dataset
from dualcover.covertree.analysis import tree_imbalance
from dualcover.covertree.tree import BuildConfig
from dualcover.kernels.kernels import KernelManager


def _run_once(config: RunConfig, dataset: Dataset, seed: int, with_bounds: bool, with_oracle: bool) -> dict:
    """
    单色运行一次算法，返回 bench 行中与算法相关的列
    """
    options = config.traversal_options()
    build_config = BuildConfig(config.root_policy, seed)
    started = time.perf_counter()

    match config.algorithm:
        case Command.AllNN:
            result = nn_search(dataset, dataset, True, options, build_config, with_bounds)
            seconds = time.perf_counter() - started
            check = lambda: nn_mismatches(dataset, dataset, result.distances, True)
        case Command.Kde:
            kernel = KernelManager.from_spec(config.kernel)
            result = kde_search(dataset, dataset, kernel, config.epsilon, config.mode, options, build_config, with_bounds)
            seconds = time.perf_counter() - started
            check = lambda: kde_violations(dataset, dataset, kernel, result.estimates, config.epsilon, config.mode)
        case _:
            result = range_search(
                dataset,
                dataset,
                config.lower,
                config.upper,
                config.alpha,
                config.count_only,
                options,
                build_config,
                with_bounds,
            )
            seconds = time.perf_counter() - started
            found = result.counts if config.count_only else result.results
            check = lambda: range_mismatches(dataset, dataset, config.lower, config.upper, found, config.count_only)

    counters = result.counters
    bounds = result.bounds
    row = {
        "query_recursions": counters.query_recursions,
        "reference_recursions": counters.reference_recursions,
        "total_recursions": counters.total_recursions,
        "base_case_calls": counters.base_case_calls,
        "score_calls": counters.score_calls,
        "prunes": counters.prunes,
        "max_reference_set_size": counters.max_reference_set_size,
        "i_t": tree_imbalance(result.query_tree).total,
        "c_r": bounds.c_r if bounds else None,
        "r_star_theoretical": bounds.r_star_theoretical if bounds else None,
        "formula_value": bounds.formula_value if bounds else None,
        "oracle_checked": with_oracle,
        "oracle_passed": None,
        "seconds": seconds,
    }
    if with_oracle:
        bad = check()
        if bad:
            logger.error(f"N={dataset.size}，seed={seed}：与穷举结果不一致的查询点 {bad[:10]}")
        row["oracle_passed"] = not bad
    return row


def doubling_ratio(rows: List[dict]) -> float:
    """
    相邻规模（按N排序）平均总递归次数之比的平均值，线性增长时约为 N 的倍数
    """
    sizes = sorted({row["N"] for row in rows})
    means = [np.mean([row["total_recursions"] for row in rows if row["N"] == n]) for n in sizes]
    ratios = [b / a for a, b in zip(means, means[1:]) if a > 0]
    return float(np.mean(ratios)) if ratios else float("nan")


def run_bench(config: RunConfig) -> int:
    """
    对每个规模与种子生成单色数据集并运行算法，输出列顺序固定的CSV
    :param config: bench 命令配置
    :return: 退出码，预言机检查失败时为2
    """
    template = GeneratorSpec.parse(config.generator)
    primary, _ = output_paths(config)
    rows = []
    for n in config.sizes:
        spec = replace(template, params={**template.params, "N": n})
        within_cap = n <= ORACLE_CAP
        if not within_cap:
            logger.warning(f"N={n}超过{ORACLE_CAP}，跳过预言机与上界报告！")
        for seed in range(config.seeds):
            dataset = generate_dataset(spec, seed)
            row = {"algorithm": str(config.algorithm), "generator": str(spec), "N": n, "seed": seed}
            row.update(_run_once(config, dataset, seed, config.bounds and within_cap, within_cap))
            rows.append(row)
            logger.info(f"{config.algorithm} N={n} seed={seed}：总递归{row['total_recursions']}次，用时{row['seconds']:.3f}s")

    emit_report(rows, primary, OutputFormat.Csv)
    logger.info(f"相邻规模平均递归次数之比：{doubling_ratio(rows):.3f}")
    if any(row["oracle_passed"] is False for row in rows):
        return ExitCode.ContractViolation
    return ExitCode.Ok
