import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial.distance import cdist

from dualcover.common.common import (
    ConfigError,
    DatasetError,
    DimensionMismatchError,
    DuplicatePointError,
    DuplicatePolicy,
    GeneratorSpecError,
    MetricKind,
    parse_spec_string,
)


@dataclass(frozen=True)
class Metric:
    """
    度量描述符，目前只实现欧氏距离
    """

    kind: MetricKind = MetricKind.Euclidean

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        if len(a) != len(b):
            raise DimensionMismatchError(f"两点维度不一致：{len(a)} ≠ {len(b)}！")
        return math.dist(a, b)

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = np.atleast_2d(a), np.atleast_2d(b)
        if a.shape[1] != b.shape[1]:
            raise DimensionMismatchError(f"两组点维度不一致：{a.shape[1]} ≠ {b.shape[1]}！")
        return cdist(a, b)


EUCLIDEAN = Metric()


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """
    欧氏距离
    :param a: 点a
    :param b: 点b
    :return: d(a, b)
    """
    return EUCLIDEAN.distance(a, b)


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    不可变的 N×d 点集，点编号即行号 0..N−1

    weighted 策略下重复点被合并，weights 记录每个唯一点的重数。
    """

    points: np.ndarray
    weights: np.ndarray
    duplicate_policy: DuplicatePolicy = DuplicatePolicy.Reject
    metric: Metric = EUCLIDEAN
    rows: Tuple[Tuple[float, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)
        object.__setattr__(self, "rows", tuple(map(tuple, self.points.tolist())))

    @classmethod
    def from_points(
        cls, points, duplicate_policy: DuplicatePolicy = DuplicatePolicy.Reject, metric: Metric = EUCLIDEAN
    ) -> "Dataset":
        """
        从坐标数组构造数据集并校验不变量
        :param points: 形状为(N, d)的坐标
        :param duplicate_policy: 重复点策略
        :param metric: 度量
        :return: 数据集
        """
        try:
            array = np.array(points, dtype=np.float64)
        except ValueError as e:
            raise DatasetError(f"数据点维度不一致或含非数值坐标：{e}") from e
        if array.ndim == 1 and array.size > 0:
            array = array.reshape(-1, 1)
        if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] == 0:
            raise DatasetError(f"数据集必须是非空的N×d二维数组，当前形状为{array.shape}！")
        if not np.all(np.isfinite(array)):
            bad_row = int(np.flatnonzero(~np.all(np.isfinite(array), axis=1))[0])
            raise DatasetError(f"数据点{bad_row}含有非有限坐标！")
        array = array + 0.0  # -0.0 → 0.0

        _, first_index, inverse, counts = np.unique(
            array, axis=0, return_index=True, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if np.any(counts > 1):
            if DuplicatePolicy(duplicate_policy) == DuplicatePolicy.Reject:
                group = int(np.flatnonzero(counts > 1)[0])
                members = np.flatnonzero(inverse == group)
                raise DuplicatePointError(int(members[0]), int(members[1]))

            # 按首次出现的顺序保留唯一点
            order = np.argsort(first_index, kind="stable")
            logger.debug(f"合并重复点：{array.shape[0]}个点 → {order.size}个唯一点")
            return cls(array[first_index[order]].copy(), counts[order].astype(np.int64), duplicate_policy, metric)

        return cls(array.copy(), np.ones(array.shape[0], dtype=np.int64), duplicate_policy, metric)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> range:
        return range(self.size)

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def point(self, point_id: int) -> Tuple[float, ...]:
        return self.rows[point_id]

    def distance(self, i: int, j: int) -> float:
        return math.dist(self.rows[i], self.rows[j])

    def scaled(self, alpha: float) -> "Dataset":
        return Dataset(self.points * alpha, self.weights.copy(), self.duplicate_policy, self.metric)

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: Dict[str, float]

    @classmethod
    def parse(cls, text: str) -> "GeneratorSpec":
        try:
            name, raw = parse_spec_string(text)
        except ConfigError as e:
            raise GeneratorSpecError(str(e)) from e
        params = {}
        for key, value in raw.items():
            try:
                params[key] = float(value)
            except ValueError:
                raise GeneratorSpecError(f"生成器参数{key}={value}不是数值！") from None
        return cls(name, params)

    def __str__(self):
        body = ",".join(f"{key}={value:g}" for key, value in self.params.items())
        return f"{self.kind}:{body}"


def _uniform_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / d)
    return directions * radii[:, None]


def generate_uniform_ball(rng: np.random.Generator, N: int, d: int) -> np.ndarray:
    return _uniform_ball(rng, N, d)


def generate_gaussian_mixture(rng: np.random.Generator, N: int, d: int, k: int) -> np.ndarray:
    centers = rng.uniform(-10.0, 10.0, size=(k, d))
    labels = rng.integers(0, k, size=N)
    return centers[labels] + rng.standard_normal((N, d))


def generate_grid(rng: np.random.Generator, N: int, d: int) -> np.ndarray:
    side = 1
    while side**d < N:
        side += 1
    lattice = np.indices((side,) * d).reshape(d, -1).T
    return lattice[:N].astype(np.float64)


def generate_outlier_chain(
    rng: np.random.Generator, N: int, d: int, num_outliers: int, spacing_factor: float
) -> np.ndarray:
    if num_outliers >= N:
        raise GeneratorSpecError(f"离群点数量{num_outliers}必须小于点数{N}！")
    if spacing_factor <= 1:
        raise GeneratorSpecError(f"离群点间距倍数{spacing_factor}必须大于1！")

    bulk = _uniform_ball(rng, N - num_outliers, d)
    # 第k个离群点沿第一坐标轴放在 spacing_factor^k 处
    outliers = np.zeros((num_outliers, d))
    outliers[:, 0] = spacing_factor ** np.arange(1, num_outliers + 1)
    return np.vstack([bulk, outliers])


class GeneratorManager:
    _generators: Dict[str, Tuple[Callable[..., np.ndarray], Tuple[str, ...]]] = {
        "uniform-ball": (generate_uniform_ball, ("N", "d")),
        "gaussian-mixture": (generate_gaussian_mixture, ("N", "d", "k")),
        "grid": (generate_grid, ("N", "d")),
        "outlier-chain": (generate_outlier_chain, ("N", "d", "num_outliers", "spacing_factor")),
    }
    _integer_params = {"N", "d", "k", "num_outliers"}

    @staticmethod
    def get_names():
        return list(GeneratorManager._generators)

    @staticmethod
    def get_function(name: str):
        if name not in GeneratorManager._generators:
            raise GeneratorSpecError(f"未知的数据生成器“{name}”，可选：{', '.join(GeneratorManager.get_names())}！")
        return GeneratorManager._generators[name]

    @staticmethod
    def resolve_params(spec: GeneratorSpec) -> Dict[str, float]:
        _, required = GeneratorManager.get_function(spec.kind)
        missing = [key for key in required if key not in spec.params]
        unknown = [key for key in spec.params if key not in required]
        if missing or unknown:
            raise GeneratorSpecError(f"生成器{spec.kind}参数错误：缺少{missing}，多余{unknown}！")

        params = {}
        for key in required:
            value = spec.params[key]
            if key in GeneratorManager._integer_params:
                if value != int(value) or value < (0 if key == "num_outliers" else 1):
                    raise GeneratorSpecError(f"生成器参数{key}={value}必须是正整数！")
                value = int(value)
            params[key] = value
        return params


def generate_dataset(spec: Union[str, GeneratorSpec], seed: int) -> Dataset:
    """
    按描述生成确定性的合成数据集
    :param spec: 生成器描述，如 "uniform-ball:N=1000,d=5"
    :param seed: 随机种子
    :return: 数据集
    """
    if isinstance(spec, str):
        spec = GeneratorSpec.parse(spec)
    function, _ = GeneratorManager.get_function(spec.kind)
    params = GeneratorManager.resolve_params(spec)

    rng = np.random.default_rng(seed)
    points = function(rng, **params)
    logger.debug(f"生成数据集 {spec}（seed={seed}），形状{points.shape}")
    return Dataset.from_points(points)


def _parse_field(text: str) -> float:
    """
    按最近舍入解析单个字段，非数值返回NaN
    """
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_dataset(
    path: Union[str, Path],
    format: str = "csv",
    header: bool = False,
    duplicate_policy: DuplicatePolicy = DuplicatePolicy.Reject,
) -> Dataset:
    """
    读取CSV数据集，每行一个点
    :param path: 文件路径
    :param format: 文件格式，仅支持csv
    :param header: 首行是否为表头
    :param duplicate_policy: 重复点策略
    :return: 数据集
    """
    if format != "csv":
        raise DatasetError(f"不支持的数据集格式“{format}”！")

    first_row = 2 if header else 1
    try:
        frame = pd.read_csv(
            path, header=0 if header else None, dtype=str, keep_default_na=False, skip_blank_lines=True
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"数据集文件{path}为空！") from None
    except pd.errors.ParserError as e:
        raise DatasetError(f"数据集文件{path}存在列数不一致的行：{e}") from None

    if frame.empty:
        raise DatasetError(f"数据集文件{path}为空！")

    # 列数少于首行的行会被补成缺失值
    frame = frame.apply(lambda column: column.str.strip())
    ragged = (frame.isna() | (frame == "")).any(axis=1).to_numpy()
    if ragged.any():
        row = int(np.flatnonzero(ragged)[0]) + first_row
        raise DatasetError(f"数据集文件{path}第{row}行列数与首行不一致！")

    numeric = frame.map(_parse_field)
    invalid = numeric.isna().any(axis=1).to_numpy()
    if invalid.any():
        row = int(np.flatnonzero(invalid)[0]) + first_row
        raise DatasetError(f"数据集文件{path}第{row}行含有非数值字段！")

    logger.debug(f"读取数据集{path}：{numeric.shape[0]}个点，维度{numeric.shape[1]}")
    return Dataset.from_points(numeric.to_numpy(dtype=np.float64), duplicate_policy=duplicate_policy)


def save_dataset(dataset: Dataset, path: Union[str, Path], header: bool = False, weighted: Optional[bool] = None):
    """
    将数据集写为CSV，保证写入后读取坐标完全一致
    :param dataset: 数据集
    :param path: 文件路径
    :param header: 是否写入表头
    :param weighted: 是否按重数展开重复点，默认在weighted策略下展开
    """
    points = dataset.points
    if weighted is None:
        weighted = dataset.duplicate_policy == DuplicatePolicy.Weighted
    if weighted:
        points = np.repeat(points, dataset.weights, axis=0)

    df = pd.DataFrame(points, columns=[f"x{i}" for i in range(dataset.dim)])
    df.to_csv(path, index=False, header=header, float_format="%.17g")
