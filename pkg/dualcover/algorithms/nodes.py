import math
from typing import Tuple

from dualcover.core.dataset import Dataset
from dualcover.covertree.tree import CoverNode


def distance_bounds(distance: float, query_node: CoverNode, reference_node: CoverNode) -> Tuple[float, float]:
    """
    由节点点距离得到后代点对距离的上下界 (d_min, d_max)
    """
    spread = query_node.lambda_ + reference_node.lambda_
    return max(distance - spread, 0.0), distance + spread


def node_dmin(query_node: CoverNode, reference_node: CoverNode, query: Dataset, reference: Dataset) -> float:
    """
    d_min(N_q, N_r) = max(d(p_q, p_r) − λ_q − λ_r, 0)
    :param query_node: 查询节点
    :param reference_node: 参考节点
    :param query: 查询集
    :param reference: 参考集
    :return: 后代点对距离下界
    """
    distance = math.dist(query.rows[query_node.point_id], reference.rows[reference_node.point_id])
    return distance_bounds(distance, query_node, reference_node)[0]


def node_dmax(query_node: CoverNode, reference_node: CoverNode, query: Dataset, reference: Dataset) -> float:
    """
    d_max(N_q, N_r) = d(p_q, p_r) + λ_q + λ_r
    """
    distance = math.dist(query.rows[query_node.point_id], reference.rows[reference_node.point_id])
    return distance_bounds(distance, query_node, reference_node)[1]
