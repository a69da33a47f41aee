import json
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from dualcover.common.common import OutputError
from dualcover.core.dataset import Dataset, save_dataset
from dualcover.covertree.tree import CoverTree, tree_to_json

PathLike = Union[str, Path]


class SaveTask:
    """
    写文件任务的基类，子类实现 write()
    """

    description = "文件"

    def __init__(self, path: PathLike):
        self.path = Path(path)

    def write(self):
        raise NotImplementedError

    def run(self) -> Path:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.write()
        except OSError as e:
            raise OutputError(f"保存{self.description}到{self.path}时发生错误：{e}") from e
        logger.info(f"保存{self.description}成功：{self.path}")
        return self.path


class SaveDatasetTask(SaveTask):
    description = "数据集"

    def __init__(self, path: PathLike, dataset: Dataset, header: bool = False):
        super().__init__(path)
        self.dataset = dataset
        self.header = header

    def write(self):
        save_dataset(self.dataset, self.path, header=self.header)


class SaveTreeTask(SaveTask):
    description = "覆盖树"

    def __init__(self, path: PathLike, tree: CoverTree):
        super().__init__(path)
        self.tree = tree

    def write(self):
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(tree_to_json(self.tree), f)


class SaveNeighborsTask(SaveTask):
    description = "最近邻结果"

    def __init__(self, path: PathLike, neighbors: np.ndarray, distances: np.ndarray):
        super().__init__(path)
        self.neighbors = neighbors
        self.distances = distances

    def write(self):
        df = pd.DataFrame(
            {
                "query_id": np.arange(len(self.neighbors)),
                "neighbor_id": self.neighbors,
                "distance": self.distances,
            }
        )
        df.to_csv(self.path, index=False, float_format="%.17g")


class SaveEstimatesTask(SaveTask):
    description = "核密度估计结果"

    def __init__(self, path: PathLike, estimates: np.ndarray):
        super().__init__(path)
        self.estimates = estimates

    def write(self):
        df = pd.DataFrame({"query_id": np.arange(len(self.estimates)), "estimate": self.estimates})
        df.to_csv(self.path, index=False, float_format="%.17g")


class SaveRangeTask(SaveTask):
    description = "区间搜索结果"

    def __init__(self, path: PathLike, results: Optional[Sequence[set]], counts: Optional[np.ndarray] = None):
        super().__init__(path)
        self.results = results
        self.counts = counts

    def write(self):
        with open(self.path, "w", encoding="utf-8") as f:
            if self.results is None:
                for query_id, count in enumerate(self.counts):
                    f.write(json.dumps({"query": query_id, "count": int(count)}) + "\n")
            else:
                for query_id, ids in enumerate(self.results):
                    f.write(json.dumps({"query": query_id, "ids": sorted(ids)}) + "\n")


class SaveTableTask(SaveTask):
    description = "数据表"

    def __init__(self, path: PathLike, rows: List[dict], columns: Sequence[str]):
        super().__init__(path)
        self.rows = rows
        self.columns = list(columns)

    def write(self):
        pd.DataFrame(self.rows, columns=self.columns).to_csv(self.path, index=False, float_format="%.10g")


class SaveTextTask(SaveTask):
    def __init__(self, path: PathLike, text: str, description: str = "报告"):
        super().__init__(path)
        self.text = text
        self.description = description

    def write(self):
        self.path.write_text(self.text, encoding="utf-8")
