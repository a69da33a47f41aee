import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

from loguru import logger

from dualcover.common.common import ConfigError, RStarPolicy
from dualcover.core.dataset import Dataset
from dualcover.core.oracle import DatasetExtremes, cross_expansion_constant, dataset_extremes, expansion_constant
from dualcover.covertree.analysis import tree_imbalance
from dualcover.covertree.tree import CoverTree
from dualcover.traversal.traversal import TraversalCounters

# 省略大O常数（取1）的估计量
SURROGATE_NOTE = "surrogate: big-O constants taken as 1"


@dataclass(frozen=True)
class BoundInputs:
    """
    计算运行时间上界所需的穷举量
    """

    size: int  # N = max(|S_q|, |S_r|)
    c_r: float
    c_qr: float
    i_t_query: int
    theta: float
    pre_recursion: float
    monochromatic: bool


@dataclass(frozen=True)
class BoundReport:
    c_r: float
    c_qr: float
    i_t_query: int
    theta: Optional[float]  # 单色推论形式下省略
    r_star: float
    r_star_measured: int
    r_star_theoretical: Optional[float]
    size: int
    formula_value: float
    formula_text: str
    corollary: bool
    chi: float = 1.0
    psi: float = 1.0
    pre_recursion: Optional[float] = None
    surrogate: Dict[str, str] = field(default_factory=dict)
    simplified_value: Optional[float] = None
    simplified_text: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def theta_estimate(query_extremes: DatasetExtremes, ref_extremes: DatasetExtremes, N: int) -> float:
    """
    最后一次查询递归之后的额外参考递归数 θ = max(min(N·log2(δ_q/δ_r), N²), 0)
    """
    return max(min(N * math.log2(query_extremes.delta / ref_extremes.delta), float(N * N)), 0.0)


def pre_recursion_estimate(query_extremes: DatasetExtremes, ref_extremes: DatasetExtremes, N: int) -> float:
    """
    第一次查询递归之前的参考递归数 max(min(N, log2(η_r/η_q) − 1), 0)
    """
    return max(min(float(N), math.log2(ref_extremes.eta / query_extremes.eta) - 1), 0.0)


def measure_bound_inputs(query: Dataset, reference: Dataset, query_tree: CoverTree) -> BoundInputs:
    """
    用穷举预言机计算 c_r、c_qr、i_t(T_q)、θ 与预递归估计
    :param query: 查询集
    :param reference: 参考集，与查询集为同一对象时按单色处理
    :param query_tree: 查询树
    :return: BoundInputs
    """
    monochromatic = query is reference
    size = max(query.size, reference.size)
    c_r = expansion_constant(reference).c
    c_qr = c_r if monochromatic else cross_expansion_constant(reference, query).c
    i_t = tree_imbalance(query_tree).total

    theta = pre_recursion = 0.0
    if not monochromatic and query.size >= 2:
        query_extremes, ref_extremes = dataset_extremes(query), dataset_extremes(reference)
        theta = theta_estimate(query_extremes, ref_extremes, size)
        pre_recursion = pre_recursion_estimate(query_extremes, ref_extremes, size)
    return BoundInputs(size, c_r, c_qr, i_t, theta, pre_recursion, monochromatic)


def runtime_bound_report(
    counters: TraversalCounters,
    c_r: float,
    i_t_query: int,
    theta: float,
    r_star_policy: RStarPolicy,
    size: int,
    r_star_theoretical: Optional[float] = None,
    c_qr: Optional[float] = None,
    monochromatic: bool = False,
    pre_recursion: Optional[float] = None,
) -> BoundReport:
    """
    计算一般双树运行时间上界 c_r^4·|R*|·χ·ψ·(N + i_t(T_q) + θ)，χ = ψ = 1

    单色情形按推论省略θ。
    :param counters: 已完成遍历的计数器
    :param c_r: 参考集扩张常数
    :param i_t_query: 查询树不平衡度
    :param theta: θ估计
    :param r_star_policy: measured取实测|R*|，supplied取理论值
    :param size: N
    :param r_star_theoretical: 问题相关的|R*|理论上界
    :param c_qr: 双色扩张常数，缺省同c_r
    :param monochromatic: 是否单色
    :param pre_recursion: 预递归估计，仅随报告输出
    :return: BoundReport
    """
    if RStarPolicy(r_star_policy) == RStarPolicy.Supplied:
        if r_star_theoretical is None:
            raise ConfigError("r_star_policy 为 supplied 时必须给出|R*|的理论值！")
        r_star = float(r_star_theoretical)
        r_star_text = f"{r_star:g}"
    else:
        r_star = float(counters.max_reference_set_size)
        r_star_text = f"|R*|={counters.max_reference_set_size}"

    surrogate = {}
    if monochromatic:
        extra = size + i_t_query
        formula_text = f"{c_r:g}^4 · {r_star_text} · ({size} + {i_t_query})"
    else:
        extra = size + i_t_query + theta
        formula_text = f"{c_r:g}^4 · {r_star_text} · ({size} + {i_t_query} + θ={theta:g})"
        surrogate["theta"] = SURROGATE_NOTE
    if pre_recursion is not None:
        surrogate["pre_recursion"] = SURROGATE_NOTE

    report = BoundReport(
        c_r=c_r,
        c_qr=c_r if c_qr is None else c_qr,
        i_t_query=i_t_query,
        theta=None if monochromatic else theta,
        r_star=r_star,
        r_star_measured=counters.max_reference_set_size,
        r_star_theoretical=r_star_theoretical,
        size=size,
        formula_value=c_r**4 * r_star * extra,
        formula_text=formula_text,
        corollary=monochromatic,
        pre_recursion=pre_recursion,
        surrogate=surrogate,
    )
    logger.debug(f"运行时间上界：{report.formula_text} = {report.formula_value:g}")
    return report


def report_from_inputs(
    counters: TraversalCounters,
    inputs: BoundInputs,
    r_star_theoretical: float,
    r_star_policy: RStarPolicy = RStarPolicy.Supplied,
) -> BoundReport:
    return runtime_bound_report(
        counters,
        inputs.c_r,
        inputs.i_t_query,
        inputs.theta,
        r_star_policy,
        inputs.size,
        r_star_theoretical=r_star_theoretical,
        c_qr=inputs.c_qr,
        monochromatic=inputs.monochromatic,
        pre_recursion=None if inputs.monochromatic else inputs.pre_recursion,
    )
