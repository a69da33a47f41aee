import math
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional

import numpy as np
from loguru import logger

from dualcover.algorithms.nodes import distance_bounds, node_dmax
from dualcover.common.common import PRUNE, ConfigError, KdeMode, RStarPolicy
from dualcover.core.dataset import Dataset
from dualcover.covertree.tree import BuildConfig, CoverNode, CoverTree, build
from dualcover.kernels.kernels import Kernel, kde_bound_exponents, kernel_eval
from dualcover.traversal.bounds import BoundInputs, BoundReport, measure_bound_inputs, report_from_inputs
from dualcover.traversal.traversal import TraversalCounters, TraversalOptions, TraversalRules, dual_traverse


@dataclass
class KdeState:
    query: Dataset
    reference: Dataset
    kernel: Kernel
    epsilon: float
    mode: KdeMode = KdeMode.Absolute
    k_max: Optional[float] = None  # 仅relative模式使用
    f_p: np.ndarray = field(init=False)  # 每个查询点的部分估计
    f_n: Dict[CoverNode, float] = field(init=False)  # 每个查询节点的部分估计
    exact: List[set] = field(init=False, repr=False)  # 每个查询点已精确计算的参考点
    overlap: np.ndarray = field(init=False, repr=False)  # 既精确计算又被剪枝计入的中值，提取时扣除
    k_zero: float = field(init=False, repr=False)  # K(0)

    def __post_init__(self):
        self.mode = KdeMode(self.mode)
        if not self.epsilon > 0:
            raise ConfigError(f"误差容限ε={self.epsilon}必须为正！")
        if self.mode == KdeMode.Relative and self.k_max is None:
            raise ConfigError("relative模式需要先计算K^max！")
        self.f_p = np.zeros(self.query.size)
        self.f_n = {}
        self.exact = [set() for _ in range(self.query.size)]
        self.overlap = np.zeros(self.query.size)
        self.k_zero = kernel_eval(self.kernel, 0.0).value

    @property
    def threshold(self) -> float:
        return self.epsilon if self.mode == KdeMode.Absolute else self.epsilon * self.k_max


@dataclass
class KdeResult:
    estimates: np.ndarray  # 按总权重归一化的密度估计
    raw: np.ndarray  # 未归一化的核函数和
    counters: TraversalCounters
    bounds: Optional[BoundReport]
    k_max: Optional[float]
    query_tree: CoverTree
    ref_tree: CoverTree


def kde_base_case(state: KdeState, query_id: int, reference_id: int) -> float:
    """
    f_p(p_q) ← f_p(p_q) + w_r·K(p_q, p_r)
    """
    distance = math.dist(state.query.rows[query_id], state.reference.rows[reference_id])
    value = kernel_eval(state.kernel, distance).value
    state.f_p[query_id] += state.reference.weights[reference_id] * value
    state.exact[query_id].add(reference_id)
    return value


def kde_score(state: KdeState, query_node: CoverNode, reference_node: CoverNode) -> float:
    """
    K(d_min) − K(d_max) 小于阈值时剪枝，并把 |D^p(N_r)|·(K(d_min)+K(d_max))/2 记入 f_n(N_q)

    若 p_r 已与 p_q 精确计算过，把该点的中值贡献记入 overlap，提取时扣除，避免同一点对重复计数。
    """
    distance = math.dist(state.query.rows[query_node.point_id], state.reference.rows[reference_node.point_id])
    d_min, d_max = distance_bounds(distance, query_node, reference_node)
    upper, lower = kernel_eval(state.kernel, d_min).value, kernel_eval(state.kernel, d_max).value
    gap = upper - lower
    # 阈值不小于K(0)时任意节点对都可剪枝
    if gap >= state.threshold and state.threshold < state.k_zero:
        return gap

    middle = (upper + lower) / 2
    state.f_n[query_node] = state.f_n.get(query_node, 0.0) + reference_node.descendant_count * middle
    if reference_node.point_id in state.exact[query_node.point_id]:
        state.overlap[query_node.point_id] += state.reference.weights[reference_node.point_id] * middle
    return PRUNE


def kde_score_abs(state: KdeState, query_node: CoverNode, reference_node: CoverNode) -> float:
    assert state.mode == KdeMode.Absolute, "kde_score_abs 只用于absolute模式"
    return kde_score(state, query_node, reference_node)


def kde_score_rel(state: KdeState, query_node: CoverNode, reference_node: CoverNode) -> float:
    assert state.mode == KdeMode.Relative, "kde_score_rel 只用于relative模式"
    return kde_score(state, query_node, reference_node)


def kde_rules(state: KdeState) -> TraversalRules:
    score = kde_score_abs if state.mode == KdeMode.Absolute else kde_score_rel
    return TraversalRules(partial(kde_base_case, state), partial(score, state))


def kde_kmax(query_tree: CoverTree, ref_tree: CoverTree, kernel: Kernel) -> float:
    """
    K^max = K(d_max(根, 根))，不大于任意点对的核函数值
    """
    d_max = node_dmax(query_tree.root, ref_tree.root, query_tree.dataset, ref_tree.dataset)
    return kernel_eval(kernel, d_max).value


def kde_extract(state: KdeState, query_tree: CoverTree) -> np.ndarray:
    """
    自顶向下一次遍历：f(p_q) = f_p(p_q) − overlap(p_q) + Σ 祖先节点的 f_n，结果截断到不小于0
    :return: 每个查询点未归一化的估计
    """
    estimates = state.f_p - state.overlap
    stack = [(query_tree.root, 0.0)]
    while stack:
        node, inherited = stack.pop()
        total = inherited + state.f_n.get(node, 0.0)
        if node.is_leaf:
            estimates[node.point_id] += total
        stack.extend((child, total) for child in node.children)
    return np.maximum(estimates, 0.0)


def kde_bound_report(
    counters: TraversalCounters, inputs: BoundInputs, kernel: Kernel, epsilon: float, r_star_policy=RStarPolicy.Supplied
) -> BoundReport:
    """
    KDE上界：|R*| ≤ c_r^{4+⌈log2 ζ⌉}，即 O(c_r^{8+⌈log2 ζ⌉} (N + i_t + θ))
    """
    exponents = kde_bound_exponents(kernel, epsilon)
    return report_from_inputs(counters, inputs, inputs.c_r ** (exponents.theorem_exponent - 4), r_star_policy)


def kde_search(
    query: Dataset,
    reference: Dataset,
    kernel: Kernel,
    epsilon: float,
    mode: KdeMode = KdeMode.Absolute,
    options: Optional[TraversalOptions] = None,
    build_config: BuildConfig = BuildConfig(),
    with_bounds: bool = True,
) -> KdeResult:
    """
    双树近似核密度估计
    :param query: 查询集
    :param reference: 参考集
    :param kernel: 核函数
    :param epsilon: 误差容限
    :param mode: absolute保证 |f − f*| < ε，relative保证 |f − f*| < ε·f*
    :param options: 遍历选项，不支持strict_paper_mode
    :param build_config: 建树配置
    :param with_bounds: 是否穷举计算上界报告
    :return: KdeResult，estimates按参考集总权重归一化
    """
    options = options or TraversalOptions()
    if options.strict_paper_mode:
        raise ConfigError("KDE不支持strict_paper_mode：用父节点打分会把节点贡献重复记入每个子节点！")
    if options.exclude_self:
        raise ConfigError("KDE不支持exclude_self！")

    mode = KdeMode(mode)
    ref_tree = build(reference, build_config)
    query_tree = ref_tree if query is reference else build(query, build_config)
    k_max = kde_kmax(query_tree, ref_tree, kernel) if mode == KdeMode.Relative else None

    state = KdeState(query, reference, kernel, epsilon, mode, k_max)
    counters = dual_traverse(query_tree, ref_tree, kde_rules(state), options)
    raw = kde_extract(state, query_tree)
    logger.debug(f"KDE完成：{query.size}个查询点，剪枝{counters.prunes}次，K^max={k_max}")

    bounds = None
    if with_bounds and reference.size >= 2 and epsilon < 1:
        bounds = kde_bound_report(counters, measure_bound_inputs(query, reference, query_tree), kernel, epsilon)
    return KdeResult(raw / reference.total_weight, raw, counters, bounds, k_max, query_tree, ref_tree)
