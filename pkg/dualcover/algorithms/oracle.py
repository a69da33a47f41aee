from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from dualcover.common.common import KdeMode
from dualcover.core.dataset import Dataset
from dualcover.kernels.kernels import Kernel, kernel_value_array


def brute_force_nn(query: Dataset, reference: Dataset, exclude_self: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    O(N²) 穷举最近邻
    :return: (近邻编号, 距离)，距离相同时取编号最小者
    """
    distances = cdist(query.points, reference.points)
    if exclude_self:
        np.fill_diagonal(distances, np.inf)
    neighbors = np.argmin(distances, axis=1)
    return neighbors, distances[np.arange(query.size), neighbors]


def brute_force_kde(query: Dataset, reference: Dataset, kernel: Kernel, normalize: bool = True) -> np.ndarray:
    """
    直接求和的核密度 f*(p_q) = Σ w_r K(d(p_q, p_r))，normalize时除以总权重W
    """
    sums = kernel_value_array(kernel, cdist(query.points, reference.points)) @ reference.weights
    return sums / reference.total_weight if normalize else sums


def brute_force_range(query: Dataset, reference: Dataset, lower: float, upper: float, count_only: bool = False):
    """
    穷举区间搜索 {p_r : l ≤ d(p_q, p_r) ≤ u}
    :return: count_only时为每个查询点的计数数组，否则为编号集合列表
    """
    distances = cdist(query.points, reference.points)
    inside = (distances >= lower) & (distances <= upper)
    if count_only:
        return inside.sum(axis=1)
    return [set(np.flatnonzero(row).tolist()) for row in inside]


def nn_mismatches(query: Dataset, reference: Dataset, distances: np.ndarray, exclude_self: bool = False) -> List[int]:
    """
    与穷举结果比较最近邻距离（距离相同的不同近邻视为一致）
    :return: 不一致的查询点编号
    """
    _, expected = brute_force_nn(query, reference, exclude_self)
    return np.flatnonzero(~np.isclose(distances, expected, rtol=1e-12, atol=0.0)).tolist()


def kde_violations(
    query: Dataset, reference: Dataset, kernel: Kernel, estimates: np.ndarray, epsilon: float, mode: KdeMode
) -> List[int]:
    """
    检查KDE误差约定：absolute下 |f − f*| < ε，relative下 |f − f*| < ε|f*|
    """
    expected = brute_force_kde(query, reference, kernel)
    error = np.abs(estimates - expected)
    allowed = epsilon if KdeMode(mode) == KdeMode.Absolute else epsilon * np.abs(expected)
    # f* = 0 时只允许估计也为0
    bad = (error >= allowed) & ~((error == 0) & (allowed == 0))
    return np.flatnonzero(bad).tolist()


def range_mismatches(
    query: Dataset, reference: Dataset, lower: float, upper: float, results: Sequence, count_only: bool = False
) -> List[int]:
    expected = brute_force_range(query, reference, lower, upper, count_only)
    return [i for i, (want, got) in enumerate(zip(expected, results)) if want != got]
