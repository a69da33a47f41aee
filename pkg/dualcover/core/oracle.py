from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist, pdist

from dualcover.common.common import DatasetError, DimensionMismatchError
from dualcover.core.dataset import Dataset


@dataclass(frozen=True)
class DatasetExtremes:
    eta: float  # 最大两两距离
    delta: float  # 最小非零两两距离

    @property
    def aspect_ratio(self) -> float:
        return self.eta / self.delta


@dataclass(frozen=True)
class ExpansionReport:
    c: float
    witness_point: int
    witness_radius: float  # 比值在 Δ 从下方趋近该半径时取到


def _as_point(dataset: Dataset, point: Sequence[float]) -> np.ndarray:
    center = np.asarray(point, dtype=np.float64).reshape(1, -1)
    if center.shape[1] != dataset.dim:
        raise DimensionMismatchError(f"点的维度{center.shape[1]}与数据集维度{dataset.dim}不一致！")
    return center


def ball_count(dataset: Dataset, center: Sequence[float], radius: float) -> int:
    """
    闭球内的点数 |B_S(p, Δ)|
    :param dataset: 数据集
    :param center: 球心
    :param radius: 半径，须非负
    :return: 满足 d(center, r) ≤ radius 的点数
    """
    if radius < 0:
        raise DatasetError(f"球半径{radius}不能为负！")
    distances = cdist(_as_point(dataset, center), dataset.points)[0]
    return int(np.count_nonzero(distances <= radius))


def dataset_extremes(dataset: Dataset) -> DatasetExtremes:
    """
    穷举两两距离，求最大距离 η 与最小非零距离 δ
    :param dataset: 数据集，至少两个点
    :return: DatasetExtremes
    """
    if dataset.size < 2:
        raise DatasetError(f"计算η与δ至少需要2个点，当前只有{dataset.size}个！")
    distances = pdist(dataset.points)
    nonzero = distances[distances > 0]
    if nonzero.size == 0:
        raise DatasetError("所有点坐标相同，最小非零距离δ无定义！")
    return DatasetExtremes(float(distances.max()), float(nonzero.min()))


def _expansion_of_points(points: np.ndarray) -> ExpansionReport:
    if points.shape[0] < 2:
        raise DatasetError(f"计算扩张常数至少需要2个点，当前只有{points.shape[0]}个！")

    distances = cdist(points, points)
    distances.sort(axis=1)

    best, witness, radius = 2.0, 0, 0.0
    for i, row in enumerate(distances):
        radii = np.unique(row[row > 0])
        if radii.size == 0:
            continue
        # Δ → t⁻ 时：|B(p, Δ)| = #{d < t}，|B(p, 2Δ)| = #{d < 2t}
        inner = np.searchsorted(row, radii, side="left")
        outer = np.searchsorted(row, 2.0 * radii, side="left")
        ratios = outer / inner
        j = int(np.argmax(ratios))
        if ratios[j] > best:
            best, witness, radius = float(ratios[j]), i, float(radii[j])

    return ExpansionReport(best, witness, radius)


def expansion_constant(dataset: Dataset, extra: Optional[Sequence[float]] = None) -> ExpansionReport:
    """
    穷举计算扩张常数 c：满足 |B(p, 2Δ)| ≤ c|B(p, Δ)| 的最小 c ≥ 2
    :param dataset: 数据集
    :param extra: 可选的附加点，给定时在 S ∪ {extra} 上计算（附加点编号为N）
    :return: ExpansionReport
    """
    points = dataset.points
    if extra is not None:
        center = _as_point(dataset, extra)
        # 与已有点重合的附加点不改变集合
        if not np.any(np.all(points == center, axis=1)):
            points = np.vstack([points, center])
    report = _expansion_of_points(points)
    logger.debug(f"扩张常数 c={report.c:g}（见证点{report.witness_point}，半径{report.witness_radius:g}）")
    return report


def cross_expansion_constant(reference: Dataset, query: Dataset) -> ExpansionReport:
    """
    双色情形的 c_qr：对每个查询点计算 S_r ∪ {p_q} 的扩张常数并取最大
    :param reference: 参考集
    :param query: 查询集
    :return: 取到最大值的 ExpansionReport
    """
    if reference is query:
        return expansion_constant(reference)
    return max((expansion_constant(reference, extra=row) for row in query.points), key=lambda report: report.c)


def reference_expansion(dim: int) -> float:
    """
    均匀分布在d维球内时的参考值 2^d
    """
    return float(2**dim)
