import json
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from loguru import logger
from scipy.spatial.distance import pdist, squareform

from dualcover.common.common import (
    LEAF,
    PRUNE,
    TOLERANCE,
    DimensionMismatchError,
    TraceEventKind,
    TraversalError,
    scale_power,
    scale_to_json,
)
from dualcover.core.dataset import Dataset
from dualcover.covertree.tree import CoverNode, CoverTree


@dataclass(frozen=True)
class TraversalRules:
    """
    与树无关的双树算法插件：点对点的 BaseCase() 与节点对节点的 Score()
    """

    base_case: Callable[[int, int], float]  # (p_q, p_r) → 任意返回值
    score: Callable[[CoverNode, CoverNode], float]  # (N_q, N_r) → 分数或PRUNE


@dataclass(frozen=True)
class TraversalOptions:
    strict_paper_mode: bool = False  # 查询递归时用父节点N_q而非子节点N_qc打分
    exclude_self: bool = False  # 单色情形下跳过 p_q = p_r 的点对
    audit_separation: bool = False  # 每次参考递归时检查参考集的分离性
    trace: Optional[TextIO] = None  # JSON lines 事件输出


@dataclass
class TraversalCounters:
    query_recursions: int = 0
    reference_recursions: int = 0
    ref_recursions_before_first_query: int = 0
    ref_recursions_after_last_query: int = 0
    base_case_calls: int = 0
    score_calls: int = 0
    prunes: int = 0
    max_reference_set_size: int = 0  # 经验 |R*|
    query_nodes_visited: int = 0
    duplicate_deliveries_suppressed: int = 0
    self_pairs_skipped: int = 0
    separation_audits: int = 0
    separation_violations: int = 0

    @property
    def total_recursions(self) -> int:
        return self.query_recursions + self.reference_recursions

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReferenceSet:
    nodes: Tuple[CoverNode, ...]
    dataset: Dataset
    s_r_max: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "s_r_max", max_scale(self.nodes))

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    violations: List[Tuple[int, int, float]]  # (点编号, 点编号, 距离)


def max_scale(nodes: Sequence[CoverNode]) -> float:
    """
    s_r^max：只统计非叶节点，全部为叶节点时为LEAF
    """
    return max((node.scale for node in nodes if not node.is_leaf), default=LEAF)


def separation_audit(reference_set: ReferenceSet, tolerance: float = TOLERANCE) -> AuditResult:
    """
    穷举检查参考集中节点点两两距离严格大于 2^{s_r^max}
    :param reference_set: 参考集
    :param tolerance: 相对容差
    :return: AuditResult，不通过时列出违规点对
    """
    if len(reference_set) < 2:
        return AuditResult(True, [])

    ids = np.array([node.point_id for node in reference_set.nodes])
    distances = squareform(pdist(reference_set.dataset.points[ids]))
    threshold = scale_power(reference_set.s_r_max) * (1 - tolerance)
    pairs = np.argwhere(np.triu(distances <= threshold, k=1))
    violations = [(int(ids[i]), int(ids[j]), float(distances[i, j])) for i, j in pairs]
    return AuditResult(not violations, violations)


class TraceWriter:
    def __init__(self, stream: Optional[TextIO]):
        self.stream = stream

    def emit(self, kind: TraceEventKind, **fields):
        if self.stream is None:
            return
        self.stream.write(json.dumps({"event": str(kind), **fields}) + "\n")


class _Traversal:
    """
    一次遍历的全部可变状态
    """

    def __init__(self, query_tree: CoverTree, ref_tree: CoverTree, rules: TraversalRules, options: TraversalOptions):
        self.query_tree = query_tree
        self.ref_tree = ref_tree
        self.rules = rules
        self.options = options
        self.counters = TraversalCounters()
        self.trace = TraceWriter(options.trace)
        # 每个查询点已送达的参考点编号，保证 BaseCase 对每个点对至多调用一次
        self.delivered: List[set] = [set() for _ in range(query_tree.dataset.size)]
        self.since_last_query = 0

    def base_case(self, query_id: int, reference_id: int):
        if self.options.exclude_self and query_id == reference_id:
            self.counters.self_pairs_skipped += 1
            return
        seen = self.delivered[query_id]
        if reference_id in seen:
            self.counters.duplicate_deliveries_suppressed += 1
            return
        seen.add(reference_id)
        self.counters.base_case_calls += 1
        self.trace.emit(TraceEventKind.BaseCase, query=query_id, reference=reference_id)
        self.rules.base_case(query_id, reference_id)

    def score(self, query_node: CoverNode, reference_node: CoverNode) -> bool:
        """
        :return: 该组合是否保留
        """
        self.counters.score_calls += 1
        if self.rules.score(query_node, reference_node) != PRUNE:
            return True
        self.counters.prunes += 1
        self.trace.emit(
            TraceEventKind.Prune,
            query_point=query_node.point_id,
            query_scale=scale_to_json(query_node.scale),
            reference_point=reference_node.point_id,
            reference_scale=scale_to_json(reference_node.scale),
        )
        return False

    def audit(self, reference_nodes: List[CoverNode]):
        result = separation_audit(ReferenceSet(tuple(reference_nodes), self.ref_tree.dataset))
        self.counters.separation_audits += 1
        if not result.ok:
            self.counters.separation_violations += len(result.violations)
            logger.warning(f"参考集分离性检查失败：{result.violations[:3]}")

    def reference_recursion(self, query_node: CoverNode, reference_nodes: List[CoverNode], s_max: float):
        self.counters.reference_recursions += 1
        self.since_last_query += 1
        if self.counters.query_recursions == 0:
            self.counters.ref_recursions_before_first_query += 1
        self.trace.emit(
            TraceEventKind.ReferenceRecursion,
            query_scale=scale_to_json(query_node.scale),
            reference_scale_max=scale_to_json(s_max),
            reference_set_size=len(reference_nodes),
        )
        if self.options.audit_separation:
            self.audit(reference_nodes)

        for reference_node in reference_nodes:
            self.base_case(query_node.point_id, reference_node.point_id)

        expanded = []
        for reference_node in reference_nodes:
            if reference_node.scale == s_max:
                expanded.extend(reference_node.children)
            else:
                expanded.append(reference_node)
        return [child for child in expanded if self.score(query_node, child)]

    def run(self) -> TraversalCounters:
        query_root, ref_root = self.query_tree.root, self.ref_tree.root
        if not self.score(query_root, ref_root):
            return self.finish()

        # 栈帧：(查询节点, 打分节点, 父节点的参考集)；打分节点为None表示参考集已过滤
        stack: List[Tuple[CoverNode, Optional[CoverNode], List[CoverNode]]] = [(query_root, None, [ref_root])]
        while stack:
            query_node, scoring_node, reference_nodes = stack.pop()
            if scoring_node is not None:
                reference_nodes = [node for node in reference_nodes if self.score(scoring_node, node)]
            self.counters.query_nodes_visited += 1

            while reference_nodes:
                self.counters.max_reference_set_size = max(self.counters.max_reference_set_size, len(reference_nodes))
                s_max = max_scale(reference_nodes)

                if query_node.is_leaf and s_max == LEAF:
                    for reference_node in reference_nodes:
                        self.base_case(query_node.point_id, reference_node.point_id)
                    break

                if query_node.scale < s_max:
                    reference_nodes = self.reference_recursion(query_node, reference_nodes, s_max)
                    continue

                self.counters.query_recursions += 1
                self.since_last_query = 0
                self.trace.emit(
                    TraceEventKind.QueryRecursion,
                    query_scale=scale_to_json(query_node.scale),
                    reference_scale_max=scale_to_json(s_max),
                    reference_set_size=len(reference_nodes),
                )
                for child in reversed(query_node.children):
                    scoring = query_node if self.options.strict_paper_mode else child
                    stack.append((child, scoring, reference_nodes))
                break

        return self.finish()

    def finish(self) -> TraversalCounters:
        if self.counters.query_recursions > 0:
            self.counters.ref_recursions_after_last_query = self.since_last_query
        logger.debug(f"双树遍历完成：{self.counters}")
        return self.counters


def dual_traverse(
    query_tree: CoverTree,
    ref_tree: CoverTree,
    rules: TraversalRules,
    options: TraversalOptions = TraversalOptions(),
) -> TraversalCounters:
    """
    覆盖树上的标准剪枝双树遍历

    查询树深度优先、参考树广度优先。当 s_q < s_r^max 时做参考递归：对参考集中所有节点调用
    BaseCase，展开尺度为 s_r^max 的节点并打分过滤；否则做查询递归：对每个查询子节点打分过滤
    参考集后递归。查询节点为叶节点且参考集全为叶节点时，做最后一轮 BaseCase 后结束。
    :param query_tree: 查询树
    :param ref_tree: 参考树，可以与查询树是同一对象
    :param rules: BaseCase/Score 插件
    :param options: 遍历选项
    :return: TraversalCounters
    """
    if options.exclude_self and query_tree.dataset is not ref_tree.dataset:
        raise TraversalError("exclude_self 只适用于查询集与参考集相同的单色情形！")
    if query_tree.dataset.dim != ref_tree.dataset.dim:
        raise DimensionMismatchError(f"查询集维度{query_tree.dataset.dim}与参考集维度{ref_tree.dataset.dim}不一致！")
    return _Traversal(query_tree, ref_tree, rules, options).run()
