import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from loguru import logger

from dualcover.algorithms.nodes import distance_bounds
from dualcover.common.common import PRUNE, DatasetError, RStarPolicy
from dualcover.core.dataset import Dataset
from dualcover.covertree.tree import BuildConfig, CoverNode, CoverTree, build
from dualcover.traversal.bounds import BoundInputs, BoundReport, measure_bound_inputs, report_from_inputs
from dualcover.traversal.traversal import TraversalCounters, TraversalOptions, TraversalRules, dual_traverse


@dataclass
class NNState:
    query: Dataset
    reference: Dataset
    D: np.ndarray = field(init=False)  # 候选近邻距离，初值+∞
    Nbr: np.ndarray = field(init=False)  # 候选近邻编号，初值−1

    def __post_init__(self):
        self.D = np.full(self.query.size, np.inf)
        self.Nbr = np.full(self.query.size, -1, dtype=np.int64)


@dataclass
class NNResult:
    neighbors: np.ndarray
    distances: np.ndarray
    counters: TraversalCounters
    bounds: Optional[BoundReport]
    query_tree: CoverTree
    ref_tree: CoverTree


def nn_base_case(state: NNState, query_id: int, reference_id: int) -> float:
    """
    最近邻 BaseCase：距离更小时更新候选，距离相同时保留先到者
    """
    distance = math.dist(state.query.rows[query_id], state.reference.rows[reference_id])
    if distance < state.D[query_id]:
        state.D[query_id] = distance
        state.Nbr[query_id] = reference_id
    return distance


def nn_score(state: NNState, query_node: CoverNode, reference_node: CoverNode) -> float:
    """
    最近邻 Score：d_min(N_q, N_r) ≥ B(N_q) = D[p_q] + λ_q 时剪枝，否则返回 d_min
    """
    distance = math.dist(state.query.rows[query_node.point_id], state.reference.rows[reference_node.point_id])
    d_min, _ = distance_bounds(distance, query_node, reference_node)
    if d_min >= state.D[query_node.point_id] + query_node.lambda_:
        return PRUNE
    return d_min


def nn_rules(state: NNState) -> TraversalRules:
    return TraversalRules(partial(nn_base_case, state), partial(nn_score, state))


def nn_bound_report(counters: TraversalCounters, inputs: BoundInputs, r_star_policy=RStarPolicy.Supplied) -> BoundReport:
    """
    最近邻上界：|R*| ≤ c_qr^5，即 O(c_r^4 c_qr^5 (N + i_t + θ))
    """
    return report_from_inputs(counters, inputs, inputs.c_qr**5, r_star_policy)


def nn_search(
    query: Dataset,
    reference: Dataset,
    exclude_self: Optional[bool] = None,
    options: Optional[TraversalOptions] = None,
    build_config: BuildConfig = BuildConfig(),
    with_bounds: bool = True,
) -> NNResult:
    """
    双树单最近邻搜索
    :param query: 查询集
    :param reference: 参考集，与查询集为同一对象时为单色all-NN
    :param exclude_self: 单色情形是否排除自身，缺省时单色为True
    :param options: 遍历选项，其中的exclude_self被本参数覆盖
    :param build_config: 建树配置
    :param with_bounds: 是否穷举计算上界报告
    :return: NNResult
    """
    monochromatic = query is reference
    if exclude_self is None:
        exclude_self = monochromatic
    if exclude_self and not monochromatic:
        raise DatasetError("exclude_self 只适用于查询集与参考集相同的单色情形！")
    if exclude_self and reference.size < 2:
        raise DatasetError("排除自身后参考集为空！")

    options = options or TraversalOptions()
    options = TraversalOptions(options.strict_paper_mode, exclude_self, options.audit_separation, options.trace)

    ref_tree = build(reference, build_config)
    query_tree = ref_tree if monochromatic else build(query, build_config)

    state = NNState(query, reference)
    counters = dual_traverse(query_tree, ref_tree, nn_rules(state), options)
    logger.debug(f"最近邻搜索完成：{query.size}个查询点，剪枝{counters.prunes}次")

    bounds = None
    if with_bounds and reference.size >= 2:
        bounds = nn_bound_report(counters, measure_bound_inputs(query, reference, query_tree))
    return NNResult(state.Nbr, state.D, counters, bounds, query_tree, ref_tree)
