from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, Field

from dualcover.common.common import OutputFormat, scale_to_json
from dualcover.core.dataset import Dataset
from dualcover.covertree.analysis import TreeStats, VerificationReport
from dualcover.traversal.bounds import BoundReport
from dualcover.traversal.traversal import TraversalCounters
from dualcover.utils.task import SaveTableTask, SaveTextTask

REPORT_SCHEMA_VERSION = 1

Scale = Union[int, str]  # 整数尺度或 "leaf"

# bench CSV 的固定列顺序
BENCH_COLUMNS = [
    "algorithm",
    "generator",
    "N",
    "seed",
    "query_recursions",
    "reference_recursions",
    "total_recursions",
    "base_case_calls",
    "score_calls",
    "prunes",
    "max_reference_set_size",
    "i_t",
    "c_r",
    "r_star_theoretical",
    "formula_value",
    "oracle_checked",
    "oracle_passed",
    "seconds",
]


class DatasetSummary(BaseModel):
    source: str
    size: int
    dim: int
    total_weight: int


class CountersSection(BaseModel):
    query_recursions: int
    reference_recursions: int
    ref_recursions_before_first_query: int
    ref_recursions_after_last_query: int
    base_case_calls: int
    score_calls: int
    prunes: int
    max_reference_set_size: int
    query_nodes_visited: int
    duplicate_deliveries_suppressed: int
    self_pairs_skipped: int
    separation_audits: int
    separation_violations: int
    total_recursions: int


class BoundSection(BaseModel):
    c_r: float
    c_qr: float
    i_t_query: int
    size: int
    r_star: float
    r_star_measured: int
    r_star_theoretical: Optional[float] = None
    chi: float = 1.0
    psi: float = 1.0
    formula_value: float
    formula_text: str
    surrogate: Dict[str, str] = Field(default_factory=dict)
    simplified_value: Optional[float] = None
    simplified_text: Optional[str] = None


class TheoremSection(BoundSection):
    """
    双色一般形式 c_r^4·|R*|·(N + i_t + θ)
    """

    theta: float
    pre_recursion: Optional[float] = None


class CorollarySection(BoundSection):
    """
    单色推论形式 c^4·|R*|·(N + i_t)，不含θ
    """


class OracleSection(BaseModel):
    checked: bool
    mismatches: int = 0
    sample: List[int] = Field(default_factory=list)
    note: Optional[str] = None


class ViolationEntry(BaseModel):
    kind: str
    detail: str


class VerificationSection(BaseModel):
    ok: bool
    checked_nodes: int
    violations: List[ViolationEntry]


class TreeSection(BaseModel):
    node_count: int
    max_children: int
    max_depth: int
    s_top: Scale
    s_min: Scale
    leaf_count: int
    width_bound: Optional[float] = None
    depth_bound: Optional[float] = None
    i_t: Optional[int] = None
    c: Optional[float] = None
    eta: Optional[float] = None
    delta: Optional[float] = None


class RunReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    command: str
    seed: Optional[int] = None
    config: Dict[str, Union[str, float, int, bool, None]] = Field(default_factory=dict)
    datasets: Dict[str, DatasetSummary] = Field(default_factory=dict)
    tree: Optional[TreeSection] = None
    verification: Optional[VerificationSection] = None
    counters: Optional[CountersSection] = None
    theorem: Optional[TheoremSection] = None
    corollary: Optional[CorollarySection] = None
    problem: Dict[str, Union[str, float, int, bool, None]] = Field(default_factory=dict)
    oracle: Optional[OracleSection] = None
    outputs: List[str] = Field(default_factory=list)
    timing: Dict[str, float] = Field(default_factory=dict)


def dataset_summary(dataset: Dataset, source: str) -> DatasetSummary:
    return DatasetSummary(source=source, size=dataset.size, dim=dataset.dim, total_weight=dataset.total_weight)


def counters_section(counters: TraversalCounters) -> CountersSection:
    return CountersSection(**counters.to_dict(), total_recursions=counters.total_recursions)


def bound_sections(bounds: Optional[BoundReport]) -> Dict[str, BoundSection]:
    """
    单色报告只有 corollary 段，双色报告只有 theorem 段
    """
    if bounds is None:
        return {}
    fields = bounds.to_dict()
    theta, pre_recursion = fields.pop("theta"), fields.pop("pre_recursion")
    fields.pop("corollary")
    if bounds.corollary:
        return {"corollary": CorollarySection(**fields)}
    return {"theorem": TheoremSection(**fields, theta=theta, pre_recursion=pre_recursion)}


def tree_section(stats: TreeStats, **extra) -> TreeSection:
    return TreeSection(
        node_count=stats.node_count,
        max_children=stats.max_children,
        max_depth=stats.max_depth,
        s_top=scale_to_json(stats.s_top),
        s_min=scale_to_json(stats.s_min),
        leaf_count=stats.leaf_count,
        width_bound=stats.width_bound,
        depth_bound=stats.depth_bound,
        **extra,
    )


def verification_section(report: VerificationReport) -> VerificationSection:
    return VerificationSection(
        ok=report.ok,
        checked_nodes=report.checked_nodes,
        violations=[ViolationEntry(kind=str(v.kind), detail=v.detail) for v in report.violations],
    )


def emit_report(
    report: Union[RunReport, Sequence[dict]], path: Union[str, Path], format: OutputFormat = OutputFormat.Json
) -> Path:
    """
    输出带版本号的运行报告（JSON）或 bench 数据表（CSV，列顺序固定）
    :param report: RunReport 或 bench 行列表
    :param path: 输出路径
    :param format: 输出格式
    :return: 写入的路径
    """
    if format == OutputFormat.Json:
        return SaveTextTask(path, report.model_dump_json(indent=2) + "\n", "运行报告").run()
    if format == OutputFormat.Csv:
        return SaveTableTask(path, list(report), BENCH_COLUMNS).run()
    raise ValueError(f"不支持的报告格式“{format}”！")
