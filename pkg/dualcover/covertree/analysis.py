import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from dualcover.common.common import TOLERANCE, ViolationKind, scale_power
from dualcover.core.oracle import expansion_constant
from dualcover.covertree.tree import CoverNode, CoverTree

# 每类违规最多记录的条目数
MAX_VIOLATIONS_PER_KIND = 20


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


@dataclass
class VerificationReport:
    violations: List[Violation] = field(default_factory=list)
    checked_nodes: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {violation.kind for violation in self.violations}

    def add(self, kind: ViolationKind, detail: str):
        if sum(1 for violation in self.violations if violation.kind == kind) < MAX_VIOLATIONS_PER_KIND:
            self.violations.append(Violation(kind, detail))


@dataclass
class ImbalanceReport:
    per_node: Dict[CoverNode, int]
    total: int
    contributions: Dict[str, int]


@dataclass(frozen=True)
class TreeStats:
    node_count: int
    max_children: int
    max_depth: int
    s_top: float
    s_min: float
    leaf_count: int
    width_bound: Optional[float] = None  # c^4
    depth_bound: Optional[float] = None  # c^2 log2 N，仅作量级参照


@dataclass(frozen=True)
class PackingCheck:
    count: int
    bound: float
    ok: bool


def point_top_levels(tree: CoverTree) -> np.ndarray:
    """
    每个点在隐式树中首次出现的层：最上层显式节点的父节点尺度减一，根为+∞
    """
    levels = np.full(tree.dataset.size, -np.inf)
    levels[tree.root.point_id] = np.inf
    for parent, child in tree.edges():
        if child.point_id != parent.point_id:
            levels[child.point_id] = max(levels[child.point_id], parent.scale - 1)
    return levels


def level_set(tree: CoverTree, scale: int) -> np.ndarray:
    """
    第s层点集 C_s 的点编号
    """
    return np.flatnonzero(point_top_levels(tree) >= scale)


def verify_invariants(tree: CoverTree, tolerance: float = TOLERANCE) -> VerificationReport:
    """
    检查覆盖树的全部结构不变量，失败项写入报告而不抛出异常
    :param tree: 覆盖树
    :param tolerance: 严格不等式的相对容差
    :return: VerificationReport
    """
    report = VerificationReport()
    dataset = tree.dataset
    n = dataset.size
    rows = dataset.rows
    leaf_seen = np.zeros(n, dtype=np.int64)
    # 每个点恰有一个入口节点，其下沿自子节点连到叶节点
    entries = np.zeros(n, dtype=np.int64)
    entries[tree.root.point_id] = 1

    # 携带祖先链的深度优先遍历：(节点, 祖先点编号列表, 祖先λ列表)
    stack = [(tree.root, [], [])]
    subtree_weight: Dict[CoverNode, int] = {}
    postorder = []
    while stack:
        node, ancestors, radii = stack.pop()
        report.checked_nodes += 1
        postorder.append(node)

        if node.is_leaf:
            leaf_seen[node.point_id] += 1
            if node.children:
                report.add(ViolationKind.Nesting, f"叶节点{node.point_id}带有子节点")
        else:
            self_children = [child for child in node.children if child.point_id == node.point_id]
            if len(self_children) != 1:
                report.add(ViolationKind.Nesting, f"节点({node.point_id}, s={node.scale})有{len(self_children)}个自子节点")
            if len(node.children) < 2:
                report.add(ViolationKind.InternalDegree, f"内部节点({node.point_id}, s={node.scale})只有{len(node.children)}个子节点")

        for point_id, radius in zip(ancestors, radii):
            d = math.dist(rows[point_id], rows[node.point_id])
            if d > radius * (1 + tolerance):
                report.add(ViolationKind.DescendantBound, f"点{node.point_id}到祖先点{point_id}距离{d:g}超过λ={radius:g}")

        for child in node.children:
            if child.point_id != node.point_id:
                entries[child.point_id] += 1
            if not child.scale < node.scale:
                report.add(ViolationKind.ScaleOrder, f"子节点尺度{child.scale}不小于父节点尺度{node.scale}")
            d = math.dist(rows[node.point_id], rows[child.point_id])
            if not node.is_leaf and d > scale_power(node.scale) * (1 + tolerance):
                report.add(
                    ViolationKind.Covering,
                    f"子点{child.point_id}到父点{node.point_id}距离{d:g}超过2^{node.scale}",
                )
            stack.append((child, ancestors + [node.point_id], radii + [node.lambda_]))

    for node in reversed(postorder):
        expected = int(dataset.weights[node.point_id]) if node.is_leaf else 0
        expected += sum(subtree_weight.get(child, 0) for child in node.children)
        subtree_weight[node] = expected
        if node.descendant_count != expected:
            report.add(ViolationKind.DescendantCount, f"节点({node.point_id}, s={node.scale})后代计数{node.descendant_count}≠{expected}")

    for point_id in np.flatnonzero(entries != 1):
        report.add(ViolationKind.Nesting, f"点{point_id}在树中有{entries[point_id]}个入口节点，应恰好1个")

    for point_id in np.flatnonzero(leaf_seen != 1):
        report.add(ViolationKind.LeafUniqueness, f"点{point_id}出现在{leaf_seen[point_id]}个叶节点中")

    if report.checked_nodes > 2 * n - 1:
        report.add(ViolationKind.NodeCount, f"节点数{report.checked_nodes}超过2N−1={2 * n - 1}")

    _check_separation(tree, report, tolerance)

    logger.debug(f"不变量检查：{report.checked_nodes}个节点，{len(report.violations)}项违规")
    return report


def _check_separation(tree: CoverTree, report: VerificationReport, tolerance: float):
    """
    对每一对点，在同时包含两点的最高层 m 上检查 d > 2^m
    """
    levels = point_top_levels(tree)
    present = np.flatnonzero(levels > -np.inf)
    if present.size < 2:
        return
    points = tree.dataset.points[present]
    distances = cdist(points, points)
    common = np.minimum.outer(levels[present], levels[present])
    np.fill_diagonal(common, -np.inf)
    thresholds = np.exp2(np.where(np.isfinite(common), common, -np.inf))
    violated = np.argwhere(np.triu(distances <= thresholds * (1 - tolerance), k=1))
    for i, j in violated[:MAX_VIOLATIONS_PER_KIND]:
        p, q = int(present[i]), int(present[j])
        report.add(
            ViolationKind.Separation,
            f"第{int(common[i, j])}层的点{p}与点{q}距离{distances[i, j]:g}不大于2^{int(common[i, j])}",
        )


def node_imbalance(node: CoverNode, parent_scale: Optional[float], s_min: float) -> int:
    """
    节点不平衡度 i_n：节点与父节点之间缺失的层数
    :param node: 节点
    :param parent_scale: 父节点尺度，根节点为None
    :param s_min: 树中非叶节点的最小尺度
    :return: i_n
    """
    if parent_scale is None:
        return 0
    if node.is_leaf:
        return max(int(parent_scale - s_min - 1), 0)
    return int(parent_scale - node.scale - 1)


def tree_imbalance(tree: CoverTree) -> ImbalanceReport:
    """
    树不平衡度 i_t：一次遍历累加所有节点的 i_n
    """
    per_node = {tree.root: 0}
    contributions = {"internal": 0, "leaf": 0}
    for parent, child in tree.edges():
        value = node_imbalance(child, parent.scale, tree.s_min)
        per_node[child] = value
        contributions["leaf" if child.is_leaf else "internal"] += value
    return ImbalanceReport(per_node, sum(per_node.values()), contributions)


def imbalance_by_levels(tree: CoverTree) -> int:
    """
    逐点遍历隐式树的各层，统计没有显式节点的层数（与 tree_imbalance 独立的第二种实现）

    点p占据第 s_min 层到其首次出现层之间的全部层；显式内部节点占据其尺度所在层，叶节点占据第 s_min 层。
    """
    if tree.root.is_leaf:
        return 0
    s_min = int(tree.s_min)
    tops = point_top_levels(tree)
    tops[tree.root.point_id] = tree.s_top
    occupied = [{s_min} for _ in range(tree.dataset.size)]
    for node in tree.nodes():
        if not node.is_leaf:
            occupied[node.point_id].add(int(node.scale))

    total = 0
    for point_id, top in enumerate(tops):
        for level in range(s_min, int(top) + 1):
            if level not in occupied[point_id]:
                total += 1
    return total


def tree_stats(tree: CoverTree, c: Optional[float] = None) -> TreeStats:
    """
    统计覆盖树的宽度、深度等，给定c时附带 c^4 宽度上界与 c^2 log N 深度参照
    """
    max_children, max_depth, leaf_count = 0, 0, 0
    stack = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        max_children = max(max_children, len(node.children))
        max_depth = max(max_depth, depth)
        leaf_count += node.is_leaf
        stack.extend((child, depth + 1) for child in node.children)

    width_bound = depth_bound = None
    if c is not None:
        width_bound = c**4
        depth_bound = c**2 * math.log2(max(tree.dataset.size, 2))
    return TreeStats(
        tree.node_count, max_children, max_depth, tree.s_top, tree.s_min, leaf_count, width_bound, depth_bound
    )


def level_packing_check(
    tree: CoverTree, point: Sequence[float], rho: float, scale: int, c: Optional[float] = None
) -> PackingCheck:
    """
    打包引理检查：|B_S(p, ρ2^s) ∩ C_s| ≤ c^{2+⌈log2 ρ⌉}
    :param tree: 覆盖树
    :param point: 球心p，可以不在数据集中
    :param rho: 半径倍数ρ
    :param scale: 层s
    :param c: 扩张常数，缺省时穷举计算
    :return: PackingCheck
    """
    radius = rho * scale_power(scale)
    if not radius > 0:
        raise ValueError(f"球半径ρ·2^s={radius}必须为正！")
    if c is None:
        c = expansion_constant(tree.dataset).c

    members = level_set(tree, scale)
    distances = cdist(np.asarray(point, dtype=np.float64).reshape(1, -1), tree.dataset.points[members])[0]
    count = int(np.count_nonzero(distances <= radius))
    bound = c ** (2 + math.ceil(math.log2(rho)))
    return PackingCheck(count, bound, count <= bound)


__all__ = [
    "ImbalanceReport",
    "PackingCheck",
    "TreeStats",
    "VerificationReport",
    "Violation",
    "imbalance_by_levels",
    "level_packing_check",
    "level_set",
    "node_imbalance",
    "point_top_levels",
    "tree_imbalance",
    "tree_stats",
    "verify_invariants",
]
