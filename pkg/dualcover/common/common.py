import math
from enum import Enum, IntEnum, StrEnum
from typing import Dict, Tuple

# 叶节点尺度 s = −∞，小于任何整数尺度
LEAF = -math.inf

# Score() 返回该值表示剪枝
PRUNE = math.inf

# 严格不等式校验使用的相对容差
TOLERANCE = 1e-9

# 唯一支持的尺度底数
SCALE_BASE = 2


class DuplicatePolicy(StrEnum):
    Reject = "reject"
    Weighted = "weighted"


class RootPolicy(StrEnum):
    First = "first"
    Random = "random"


class MetricKind(StrEnum):
    Euclidean = "euclidean"


class KernelFamily(StrEnum):
    Gaussian = "gaussian"
    Exponential = "exponential"
    Epanechnikov = "epanechnikov"


class KdeMode(StrEnum):
    Absolute = "absolute"
    Relative = "relative"


class RStarPolicy(StrEnum):
    Measured = "measured"
    Supplied = "supplied"


class TraceEventKind(StrEnum):
    QueryRecursion = "query_recursion"
    ReferenceRecursion = "reference_recursion"
    BaseCase = "base_case"
    Prune = "prune"


class ViolationKind(StrEnum):
    Nesting = "nesting"
    Covering = "covering"
    Separation = "separation"
    DescendantBound = "descendant_bound"
    ScaleOrder = "scale_order"
    LeafUniqueness = "leaf_uniqueness"
    InternalDegree = "internal_degree"
    NodeCount = "node_count"
    DescendantCount = "descendant_count"


class Command(StrEnum):
    Gen = "gen"
    Build = "build"
    Check = "check"
    Stats = "stats"
    AllNN = "allnn"
    Kde = "kde"
    Range = "range"
    Bench = "bench"


class ExitCode(IntEnum):
    Ok = 0
    Usage = 1
    ContractViolation = 2


class OutputFormat(Enum):
    Csv = "csv"
    Json = "json"
    JsonLines = "jsonl"


class DualTreeError(ValueError):
    """
    本项目所有错误的基类
    """


class DatasetError(DualTreeError):
    pass


class DimensionMismatchError(DualTreeError):
    pass


class DuplicatePointError(DatasetError):
    def __init__(self, first: int, second: int):
        self.pair = (first, second)
        super().__init__(f"数据点{first}与数据点{second}坐标完全相同，当前重复点策略不允许重复！")


class GeneratorSpecError(DualTreeError):
    pass


class TreeBuildError(DualTreeError):
    pass


class KernelError(DualTreeError):
    pass


class TraversalError(DualTreeError):
    pass


class ConfigError(DualTreeError):
    pass


class OracleMismatchError(DualTreeError):
    pass


class OutputError(DualTreeError):
    pass


def scale_power(scale: float) -> float:
    """
    计算 2^s，叶节点尺度返回0
    :param scale: 整数尺度或LEAF
    :return: 2^s
    """
    if scale == LEAF:
        return 0.0
    return math.ldexp(1.0, int(scale))


def scale_to_json(scale: float):
    return "leaf" if scale == LEAF else int(scale)


def scale_from_json(value) -> float:
    return LEAF if value == "leaf" else int(value)


def parse_spec_string(text: str) -> Tuple[str, Dict[str, str]]:
    """
    解析形如 "uniform-ball:N=1000,d=5" 的描述字符串
    :param text: 描述字符串
    :return: (名称, 参数字典)
    """
    name, _, body = text.strip().partition(":")
    if not name:
        raise ConfigError(f"描述字符串“{text}”缺少名称！")

    params = {}
    for item in filter(None, (part.strip() for part in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigError(f"描述字符串“{text}”中的参数“{item}”格式错误，应为key=value！")
        params[key.strip()] = value.strip()
    return name.strip(), params
