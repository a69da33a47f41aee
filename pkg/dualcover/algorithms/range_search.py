import math
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from dualcover.algorithms.nodes import distance_bounds
from dualcover.common.common import PRUNE, ConfigError, RStarPolicy
from dualcover.core.dataset import Dataset
from dualcover.covertree.tree import BuildConfig, CoverNode, CoverTree, build
from dualcover.traversal.bounds import BoundInputs, BoundReport, measure_bound_inputs, report_from_inputs
from dualcover.traversal.traversal import TraversalCounters, TraversalOptions, TraversalRules, dual_traverse


@dataclass
class RangeState:
    query: Dataset
    reference: Dataset
    lower: float
    upper: float
    count_only: bool = False
    strict: bool = False  # 使用不含跨越情形的原始剪枝规则
    results: List[set] = field(init=False)
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ConfigError(f"区间下界{self.lower}大于上界{self.upper}！")
        self.results = [set() for _ in range(self.query.size)]
        self.counts = np.zeros(self.query.size, dtype=np.int64)


@dataclass(frozen=True)
class RangeDifficulty:
    s_max_size: int  # |S_max|
    alpha: float
    C: int  # max |S^α[p_q] \ S[p_q]|
    beta: int  # ⌈log2(1 + 1/α)⌉


@dataclass
class RangeResult:
    results: Optional[List[set]]
    counts: np.ndarray
    counters: TraversalCounters
    bounds: Optional[BoundReport]
    difficulty: Optional[RangeDifficulty]
    query_tree: CoverTree
    ref_tree: CoverTree


@dataclass(frozen=True)
class StraddleCase:
    query: Dataset
    reference: Dataset
    lower: float
    upper: float


def range_base_case(state: RangeState, query_id: int, reference_id: int) -> float:
    distance = math.dist(state.query.rows[query_id], state.reference.rows[reference_id])
    if state.lower <= distance <= state.upper:
        if state.count_only:
            state.counts[query_id] += 1
        else:
            state.results[query_id].add(reference_id)
    return distance


def range_score(state: RangeState, query_node: CoverNode, reference_node: CoverNode) -> float:
    """
    d_max < l 或 d_min > u 时剪枝

    strict模式只在 d_min 或 d_max 落在 [l, u] 内时保留，会丢掉跨越整个区间的组合。
    """
    distance = math.dist(state.query.rows[query_node.point_id], state.reference.rows[reference_node.point_id])
    d_min, d_max = distance_bounds(distance, query_node, reference_node)
    if state.strict:
        keep = state.lower <= d_min <= state.upper or state.lower <= d_max <= state.upper
    else:
        keep = not (d_max < state.lower or d_min > state.upper)
    return d_min if keep else PRUNE


def range_rules(state: RangeState) -> TraversalRules:
    return TraversalRules(partial(range_base_case, state), partial(range_score, state))


def expansion_beta(alpha: float) -> int:
    # 容差防止 1/(1/7) 之类的舍入把整数推过上取整
    return math.ceil(math.log2(1 + 1 / alpha) - 1e-9)


def alpha_expansion_stats(query: Dataset, reference: Dataset, lower: float, upper: float, alpha: float) -> RangeDifficulty:
    """
    穷举计算区间搜索难度：|S_max|、α扩张后的额外点数C与β
    :param query: 查询集
    :param reference: 参考集
    :param lower: 区间下界l
    :param upper: 区间上界u
    :param alpha: 扩张参数α > 0
    :return: RangeDifficulty
    """
    if not alpha > 0:
        raise ConfigError(f"扩张参数α={alpha}必须为正！")
    distances = cdist(query.points, reference.points)
    inside = (distances >= lower) & (distances <= upper)
    expanded = (distances >= (1 - alpha) * lower) & (distances <= (1 + alpha) * upper)
    extra = (expanded & ~inside).sum(axis=1)
    return RangeDifficulty(int(inside.sum(axis=1).max()), alpha, int(extra.max()), expansion_beta(alpha))


def range_bound_report(
    counters: TraversalCounters, inputs: BoundInputs, difficulty: RangeDifficulty, r_star_policy=RStarPolicy.Supplied
) -> BoundReport:
    """
    区间搜索上界：|R*| ≤ max(c_r^{4+β}, |S_max| + C)；|S_max| + C 不超过 c_r^{4+β} 时附带 c_r^{8+β} 简化形式
    """
    packing = inputs.c_r ** (4 + difficulty.beta)
    report = report_from_inputs(
        counters, inputs, max(packing, difficulty.s_max_size + difficulty.C), r_star_policy
    )
    if difficulty.s_max_size + difficulty.C > packing:
        return report

    extra = inputs.size + inputs.i_t_query + (0 if inputs.monochromatic else inputs.theta)
    simplified = inputs.c_r ** (8 + difficulty.beta)
    return BoundReport(
        **{
            **report.to_dict(),
            "simplified_value": simplified * extra,
            "simplified_text": f"{inputs.c_r:g}^(8+{difficulty.beta}) · {extra:g}",
        }
    )


def range_search(
    query: Dataset,
    reference: Dataset,
    lower: float,
    upper: float,
    alpha: float = 1 / 3,
    count_only: bool = False,
    options: Optional[TraversalOptions] = None,
    build_config: BuildConfig = BuildConfig(),
    with_bounds: bool = True,
) -> RangeResult:
    """
    双树区间搜索/计数：对每个查询点求 {p_r : l ≤ d(p_q, p_r) ≤ u}
    :param query: 查询集
    :param reference: 参考集
    :param lower: 区间下界l
    :param upper: 区间上界u
    :param alpha: 上界报告使用的扩张参数α
    :param count_only: 只计数
    :param options: 遍历选项，strict_paper_mode时使用原始剪枝规则
    :param build_config: 建树配置
    :param with_bounds: 是否穷举计算上界报告
    :return: RangeResult
    """
    options = options or TraversalOptions()
    state = RangeState(query, reference, lower, upper, count_only, options.strict_paper_mode)

    ref_tree = build(reference, build_config)
    query_tree = ref_tree if query is reference else build(query, build_config)
    counters = dual_traverse(query_tree, ref_tree, range_rules(state), options)

    counts = state.counts if count_only else np.array([len(ids) for ids in state.results], dtype=np.int64)
    logger.debug(f"区间搜索完成：[{lower:g}, {upper:g}]，共{int(counts.sum())}个结果，剪枝{counters.prunes}次")

    bounds = difficulty = None
    if with_bounds and reference.size >= 2:
        difficulty = alpha_expansion_stats(query, reference, lower, upper, alpha)
        inputs = measure_bound_inputs(query, reference, query_tree)
        bounds = range_bound_report(counters, inputs, difficulty)
    return RangeResult(None if count_only else state.results, counts, counters, bounds, difficulty, query_tree, ref_tree)


def straddle_counterexample() -> StraddleCase:
    """
    原始剪枝规则失效的最小实例：单个查询点位于参考点列 0..4 的一端，
    根节点组合的 d_min = 0 < l 且 d_max = 8 > u，但点2在 [1.5, 2.5] 内
    """
    query = Dataset.from_points([[0.0]])
    reference = Dataset.from_points([[float(x)] for x in range(5)])
    return StraddleCase(query, reference, 1.5, 2.5)
