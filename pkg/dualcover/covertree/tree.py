import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from dualcover.common.common import (
    LEAF,
    SCALE_BASE,
    RootPolicy,
    TreeBuildError,
    scale_from_json,
    scale_power,
    scale_to_json,
)
from dualcover.core.dataset import Dataset

TREE_FORMAT_VERSION = 1


class CoverNode:
    """
    显式表示下的覆盖树节点
    """

    __slots__ = ("point_id", "scale", "children", "descendant_count")

    def __init__(self, point_id: int, scale: float, children: Optional[List["CoverNode"]] = None, descendant_count=0):
        self.point_id = point_id  # 数据点编号 p_i
        self.scale = scale  # 尺度 s_i，叶节点为LEAF
        self.children = children if children is not None else []  # 子节点列表，自子节点在最前
        self.descendant_count = descendant_count  # |D^p|，weighted策略下按重数计

    @property
    def is_leaf(self) -> bool:
        return self.scale == LEAF

    @property
    def lambda_(self) -> float:
        """
        后代点到本节点点的距离上界 λ = 2^{s+1}，叶节点为0
        """
        return 0.0 if self.is_leaf else scale_power(self.scale + 1)

    def __repr__(self):
        return f"CoverNode(point_id={self.point_id}, scale={scale_to_json(self.scale)}, children={len(self.children)})"


@dataclass(frozen=True)
class BuildConfig:
    root_policy: RootPolicy = RootPolicy.First
    seed: Optional[int] = None
    scale_base: int = SCALE_BASE


@dataclass(eq=False)
class CoverTree:
    root: CoverNode
    dataset: Dataset
    s_top: float  # 根节点尺度 s^T
    s_min: float  # 非叶节点的最小尺度
    node_count: int

    def nodes(self) -> Iterator[CoverNode]:
        """
        先序遍历所有节点
        """
        return _walk(self.root)

    def edges(self) -> Iterator[Tuple[CoverNode, CoverNode]]:
        for node in self.nodes():
            for child in node.children:
                yield node, child


def _top_scale(max_distance: float) -> int:
    scale = math.ceil(math.log2(max_distance))
    # 修正浮点误差：保证 2^{s−1} < max_distance ≤ 2^s
    while math.ldexp(1.0, scale) < max_distance:
        scale += 1
    while math.ldexp(1.0, scale - 1) >= max_distance:
        scale -= 1
    return scale


def _choose_root(dataset: Dataset, config: BuildConfig) -> int:
    if config.root_policy == RootPolicy.First:
        return 0
    if config.root_policy == RootPolicy.Random:
        return int(np.random.default_rng(config.seed).integers(dataset.size))
    raise TreeBuildError(f"未知的根节点选择策略“{config.root_policy}”！")


def _build_nets(points: np.ndarray, root: int, s_top: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    自顶向下逐层构造贪心网 C_s
    :return: (每个点首次出现的层, 每个点在上一层中的父点)
    """
    n = points.shape[0]
    in_net = np.zeros(n, dtype=bool)
    in_net[root] = True
    top_level = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)

    min_distance = cdist(points[root : root + 1], points)[0]  # 到当前网的最近距离
    nearest = np.full(n, root, dtype=np.int64)

    level = s_top
    while not in_net.all():
        radius = math.ldexp(1.0, level - 1)
        upper_nearest = nearest.copy()  # 相对 C_level 的最近点
        while True:
            candidates = np.flatnonzero(~in_net & (min_distance > radius))
            if candidates.size == 0:
                break
            q = int(candidates[0])
            in_net[q] = True
            top_level[q] = level - 1
            parent[q] = upper_nearest[q]

            distances = cdist(points[q : q + 1], points)[0]
            closer = distances < min_distance
            min_distance[closer] = distances[closer]
            nearest[closer] = q
        level -= 1

    return top_level, parent


def build(dataset: Dataset, config: BuildConfig = BuildConfig()) -> CoverTree:
    """
    批量构造显式表示的覆盖树
    :param dataset: 数据集，不含重复点
    :param config: 构造配置
    :return: CoverTree
    """
    if config.scale_base != SCALE_BASE:
        raise TreeBuildError(f"尺度底数只支持{SCALE_BASE}，当前为{config.scale_base}！")
    n = dataset.size
    root_id = _choose_root(dataset, config)

    if n == 1:
        root = CoverNode(root_id, LEAF, descendant_count=int(dataset.weights[0]))
        return CoverTree(root, dataset, LEAF, LEAF, 1)

    root_distances = cdist(dataset.points[root_id : root_id + 1], dataset.points)[0]
    s_top = _top_scale(float(root_distances.max()))

    top_level, parent = _build_nets(dataset.points, root_id, s_top)

    # 每个点在各层的非自子节点：kids[p][level] = [q, ...]
    kids: Dict[int, Dict[int, List[int]]] = {}
    for q in range(n):
        if q != root_id:
            kids.setdefault(int(parent[q]), {}).setdefault(int(top_level[q]), []).append(q)

    # 显式节点：每个有非自子节点的层一个内部节点，外加一个叶节点
    chains: Dict[int, List[CoverNode]] = {}
    for p in range(n):
        branch_scales = sorted((level + 1 for level in kids.get(p, {})), reverse=True)
        chains[p] = [CoverNode(p, scale) for scale in branch_scales] + [CoverNode(p, LEAF)]

    for p, chain in chains.items():
        for i, node in enumerate(chain[:-1]):
            node.children.append(chain[i + 1])
            for q in kids[p][int(node.scale) - 1]:
                node.children.append(chains[q][0])

    root = chains[root_id][0]
    if root.scale != s_top:
        raise TreeBuildError(f"根节点尺度{root.scale}与顶层尺度{s_top}不一致！")

    node_count = _fill_descendant_counts(root, dataset.weights)
    internal_scales = [node.scale for chain in chains.values() for node in chain[:-1]]
    tree = CoverTree(root, dataset, s_top, min(internal_scales), node_count)
    logger.debug(f"覆盖树构造完成：N={n}，节点数{node_count}，s_top={s_top}，s_min={tree.s_min}")
    return tree


def _fill_descendant_counts(root: CoverNode, weights: np.ndarray) -> int:
    order = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children)
    for node in reversed(order):
        if node.is_leaf:
            node.descendant_count = int(weights[node.point_id])
        else:
            node.descendant_count = sum(child.descendant_count for child in node.children)
    return len(order)


def tree_to_json(tree: CoverTree) -> dict:
    """
    将覆盖树序列化为JSON文档
    """

    def encode(node: CoverNode) -> dict:
        return {
            "point_id": node.point_id,
            "scale": scale_to_json(node.scale),
            "descendant_count": node.descendant_count,
            "children": [encode(child) for child in node.children],
        }

    return {"format_version": TREE_FORMAT_VERSION, "size": tree.dataset.size, "root": encode(tree.root)}


def tree_from_json(document: dict, dataset: Dataset) -> CoverTree:
    """
    从JSON文档恢复覆盖树，后代计数按数据集重新计算
    """
    if document.get("format_version") != TREE_FORMAT_VERSION:
        raise TreeBuildError(f"不支持的树文件版本{document.get('format_version')}！")
    if document.get("size") != dataset.size:
        raise TreeBuildError(f"树文件点数{document.get('size')}与数据集点数{dataset.size}不一致！")

    def decode(entry: dict) -> CoverNode:
        return CoverNode(
            int(entry["point_id"]), scale_from_json(entry["scale"]), [decode(child) for child in entry["children"]]
        )

    root = decode(document["root"])
    node_count = _fill_descendant_counts(root, dataset.weights)
    internal = [node.scale for node in _walk(root) if not node.is_leaf]
    return CoverTree(root, dataset, root.scale, min(internal) if internal else LEAF, node_count)


def _walk(root: CoverNode) -> Iterator[CoverNode]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))
