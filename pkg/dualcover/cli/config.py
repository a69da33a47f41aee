import argparse
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from loguru import logger

from dualcover.cli.report import OracleSection, dataset_summary
from dualcover.common.common import Command, ConfigError, DuplicatePolicy, KdeMode, RootPolicy
from dualcover.core.dataset import Dataset, generate_dataset, load_dataset
from dualcover.kernels.kernels import KernelManager
from dualcover.traversal.traversal import TraversalOptions

OUTPUT_DIR_ENV = "DUALCOVER_OUTPUT_DIR"

# 穷举预言机与扩张常数只在此规模内计算
ORACLE_CAP = 4000
# 双色 c_qr 需要对每个查询点重算扩张常数，按 |S_q|·|S_r| 限制
CROSS_EXPANSION_CAP = 100_000

DEFAULT_NAMES = {
    Command.Gen: "dataset.csv",
    Command.Build: "tree.json",
    Command.Check: "check_report.json",
    Command.Stats: "stats_report.json",
    Command.AllNN: "allnn.csv",
    Command.Kde: "kde.csv",
    Command.Range: "range.jsonl",
    Command.Bench: "bench.csv",
}

_ENUM_FIELDS = {
    "command": Command,
    "algorithm": Command,
    "duplicate_policy": DuplicatePolicy,
    "root_policy": RootPolicy,
    "mode": KdeMode,
}


@dataclass(frozen=True)
class RunConfig:
    command: Command
    data: Optional[str] = None
    gen: Optional[str] = None
    query_data: Optional[str] = None
    query_gen: Optional[str] = None
    mono: bool = False
    seed: int = 0
    query_seed: Optional[int] = None
    header: bool = False
    duplicate_policy: DuplicatePolicy = DuplicatePolicy.Reject
    root_policy: RootPolicy = RootPolicy.First
    tree: Optional[str] = None
    kernel: Optional[str] = None
    epsilon: Optional[float] = None
    mode: KdeMode = KdeMode.Absolute
    lower: Optional[float] = None
    upper: Optional[float] = None
    alpha: float = 1 / 3
    count_only: bool = False
    output: Optional[str] = None
    strict_paper_mode: bool = False
    exclude_self: Optional[bool] = None
    verify_with_oracle: bool = False
    trace: Optional[str] = None
    audit_separation: bool = False
    bounds: bool = True
    algorithm: Optional[Command] = None
    sizes: Tuple[int, ...] = (250, 500, 1000, 2000)
    seeds: int = 5
    generator: str = "uniform-ball:d=3"

    @classmethod
    def from_args(cls, namespace: argparse.Namespace) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        values = {key: value for key, value in vars(namespace).items() if key in names and value is not None}
        for key, enum in _ENUM_FIELDS.items():
            if key in values:
                values[key] = enum(values[key])
        if "sizes" in values:
            values["sizes"] = tuple(values["sizes"])
        return cls(**values)

    @property
    def monochromatic(self) -> bool:
        return self.query_data is None and self.query_gen is None

    @property
    def problem(self) -> Command:
        return self.algorithm if self.command == Command.Bench else self.command

    def validate(self):
        """
        执行前检查互相依赖的选项
        """
        if self.command == Command.Gen:
            if not self.gen:
                raise ConfigError("gen 命令需要生成器描述！")
            return

        if self.command != Command.Bench and (self.data is None) == (self.gen is None):
            raise ConfigError("必须且只能通过 --data 或 --gen 之一给出数据集！")
        if self.query_data is not None and self.query_gen is not None:
            raise ConfigError("--query-data 与 --query-gen 不能同时使用！")
        if self.mono and not self.monochromatic:
            raise ConfigError("--mono 不能与查询集选项同时使用！")
        if self.exclude_self and not self.monochromatic:
            raise ConfigError("--exclude-self 只适用于单色情形！")

        if self.command == Command.Bench:
            if self.algorithm not in (Command.AllNN, Command.Kde, Command.Range):
                raise ConfigError(f"bench 只支持 allnn、kde、range，当前为“{self.algorithm}”！")
            if not self.sizes or min(self.sizes) < 2 or self.seeds < 1:
                raise ConfigError(f"bench 规模{self.sizes}须不小于2，种子数{self.seeds}须为正！")

        if self.problem == Command.Kde:
            if self.kernel is None or self.epsilon is None:
                raise ConfigError("kde 需要同时给出 --kernel 与 --epsilon！")
            if not self.epsilon > 0:
                raise ConfigError(f"误差容限ε={self.epsilon}必须为正！")
            if self.strict_paper_mode:
                raise ConfigError("kde 不支持 --strict-paper-mode！")
            KernelManager.from_spec(self.kernel)
        if self.problem == Command.Range:
            if self.lower is None or self.upper is None:
                raise ConfigError("range 需要同时给出 --lower 与 --upper！")
            if self.lower > self.upper:
                raise ConfigError(f"区间下界{self.lower}大于上界{self.upper}！")
            if not self.alpha > 0:
                raise ConfigError(f"扩张参数α={self.alpha}必须为正！")

    def report_config(self) -> dict:
        keys = ("data", "gen", "query_data", "query_gen", "kernel", "epsilon", "mode", "lower", "upper", "alpha")
        values = {key: getattr(self, key) for key in keys if getattr(self, key) is not None}
        values.update(strict_paper_mode=self.strict_paper_mode, monochromatic=self.monochromatic)
        return {key: value if isinstance(value, (int, float, bool)) else str(value) for key, value in values.items()}

    def traversal_options(self, trace_stream=None) -> TraversalOptions:
        return TraversalOptions(
            strict_paper_mode=self.strict_paper_mode,
            exclude_self=bool(self.exclude_self),
            audit_separation=self.audit_separation,
            trace=trace_stream,
        )


def output_paths(config: RunConfig) -> Tuple[Path, Path]:
    """
    :return: (主输出文件, 报告文件)；--output 带扩展名时视为主输出文件，否则视为目录
    """
    name = DEFAULT_NAMES[config.command]
    if config.output is None:
        primary = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / name
    elif Path(config.output).suffix:
        primary = Path(config.output)
    else:
        primary = Path(config.output) / name
    if primary.name.endswith("_report.json"):
        return primary, primary
    return primary, primary.with_name(f"{primary.stem}_report.json")


def load_input(path: Optional[str], spec: Optional[str], seed: int, config: RunConfig) -> Tuple[Dataset, str]:
    if path is not None:
        return load_dataset(path, header=config.header, duplicate_policy=config.duplicate_policy), path
    return generate_dataset(spec, seed), f"{spec}@{seed}"


def load_inputs(config: RunConfig) -> Tuple[Dataset, Dataset, dict]:
    """
    :return: (查询集, 参考集, 数据集摘要)；单色时查询集与参考集是同一对象
    """
    reference, source = load_input(config.data, config.gen, config.seed, config)
    summaries = {"reference": dataset_summary(reference, source)}
    if config.monochromatic:
        return reference, reference, summaries
    query_seed = config.seed + 1 if config.query_seed is None else config.query_seed
    query, query_source = load_input(config.query_data, config.query_gen, query_seed, config)
    summaries["query"] = dataset_summary(query, query_source)
    return query, reference, summaries


def bounds_affordable(query: Dataset, reference: Dataset) -> bool:
    if reference.size > ORACLE_CAP:
        return False
    return query is reference or query.size * reference.size <= CROSS_EXPANSION_CAP


def oracle_section(
    enabled: bool, query: Dataset, reference: Dataset, check: Callable[[], List[int]]
) -> Optional[OracleSection]:
    """
    :param enabled: 是否请求了预言机检查
    :param check: 无参函数，返回与穷举结果不一致的查询点编号
    """
    if not enabled:
        return None
    if max(query.size, reference.size) > ORACLE_CAP:
        logger.warning(f"点数超过{ORACLE_CAP}，跳过穷举预言机检查！")
        return OracleSection(checked=False, note=f"N > {ORACLE_CAP}")
    bad = check()
    if bad:
        logger.error(f"与穷举结果不一致的查询点：{bad[:10]}")
    return OracleSection(checked=True, mismatches=len(bad), sample=bad[:10])
