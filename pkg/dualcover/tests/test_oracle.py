import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from dualcover.common.common import DatasetError, DimensionMismatchError
from dualcover.core.dataset import Dataset, generate_dataset
from dualcover.core.oracle import (
    ball_count,
    cross_expansion_constant,
    dataset_extremes,
    expansion_constant,
    reference_expansion,
)

config = {
    "数据集": "uniform-ball:N=120,d=2",
    "种子": 3,
    "聚类点数": 9,
    "聚类半径": 1e-3,
    "离群距离": 100.0,
}


@st.composite
def small_datasets(draw, max_points=40):
    n = draw(st.integers(min_value=2, max_value=max_points))
    d = draw(st.integers(min_value=1, max_value=4))
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    return Dataset.from_points(np.random.default_rng(seed).normal(size=(n, d)))


class TestBallCount(unittest.TestCase):
    def setUp(self):
        self.dataset = generate_dataset(config["数据集"], config["种子"])

    def test_zero_radius(self):
        assert ball_count(self.dataset, self.dataset.points[5], 0.0) == 1, "半径0的闭球只含球心"

    def test_whole_set(self):
        eta = dataset_extremes(self.dataset).eta
        assert ball_count(self.dataset, self.dataset.points[0], eta * (1 + 1e-9)) == self.dataset.size, "半径η的闭球应包含全部点"

    def test_matches_scan(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            center = rng.normal(size=2)
            radius = float(rng.uniform(0, 2))
            expected = sum(np.linalg.norm(point - center) <= radius for point in self.dataset.points)
            assert ball_count(self.dataset, center, radius) == expected, "闭球计数与逐点扫描不一致"

    def test_negative_radius(self):
        with self.assertRaises(DatasetError):
            ball_count(self.dataset, self.dataset.points[0], -1.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            ball_count(self.dataset, [0.0, 0.0, 0.0], 1.0)

    @settings(deadline=None, max_examples=50)
    @given(small_datasets(), st.floats(min_value=0, max_value=5), st.floats(min_value=0, max_value=5))
    def test_monotone(self, dataset, r1, r2):
        small, large = sorted((r1, r2))
        center = dataset.points[0]
        assert ball_count(dataset, center, small) <= ball_count(dataset, center, large), "闭球计数应随半径单调不减"


class TestExtremes(unittest.TestCase):
    def test_hand_example(self):
        extremes = dataset_extremes(Dataset.from_points([[0.0], [1.0], [3.0]]))
        assert (extremes.eta, extremes.delta) == (3.0, 1.0), "{0,1,3} 的 η、δ 应为 3、1"
        assert extremes.aspect_ratio == 3.0, "纵横比应为 η/δ"

    def test_homogeneity(self):
        dataset = generate_dataset(config["数据集"], config["种子"])
        base, scaled = dataset_extremes(dataset), dataset_extremes(dataset.scaled(2.5))
        assert np.isclose(scaled.eta, 2.5 * base.eta, rtol=1e-12), "η应随缩放线性变化"
        assert np.isclose(scaled.delta, 2.5 * base.delta, rtol=1e-12), "δ应随缩放线性变化"

    def test_bounds_all_pairs(self):
        dataset = generate_dataset(config["数据集"], config["种子"])
        extremes = dataset_extremes(dataset)
        distances = cdist(dataset.points, dataset.points)[np.triu_indices(dataset.size, k=1)]
        assert np.isclose(distances.min(), extremes.delta, rtol=1e-12), "δ应等于最小点对距离"
        assert np.isclose(distances.max(), extremes.eta, rtol=1e-12), "η应等于最大点对距离"

    def test_too_small(self):
        with self.assertRaises(DatasetError):
            dataset_extremes(Dataset.from_points([[1.0, 2.0]]))


class TestExpansionConstant(unittest.TestCase):
    def test_two_points(self):
        report = expansion_constant(Dataset.from_points([[0.0], [1.0]]))
        assert report.c == 2.0, "两个点的扩张常数取下限2"

    def test_cluster_with_outlier(self):
        rng = np.random.default_rng(1)
        cluster = rng.uniform(0, config["聚类半径"], size=(config["聚类点数"], 2))
        outlier = np.array([[config["离群距离"], 0.0]])
        dataset = Dataset.from_points(np.vstack([cluster, outlier]))
        report = expansion_constant(dataset)
        assert report.c == dataset.size, "离群点为球心时比值等于总点数"
        assert report.witness_point == dataset.size - 1, "见证点应为离群点"

    def test_single_point(self):
        with self.assertRaises(DatasetError):
            expansion_constant(Dataset.from_points([[0.0, 0.0]]))

    def test_doubling_holds(self):
        dataset = generate_dataset("gaussian-mixture:N=80,d=2,k=3", 5)
        c = expansion_constant(dataset).c
        distances = cdist(dataset.points, dataset.points)
        for i in range(dataset.size):
            row = np.sort(distances[i])
            radii = np.unique(row[row > 0])
            for radius in np.concatenate([radii, radii * (1 - 1e-9), radii / 2]):
                inner = np.count_nonzero(row <= radius)
                outer = np.count_nonzero(row <= 2 * radius)
                assert outer <= c * inner + 1e-9, f"点{i}在半径{radius}处违反扩张常数{c}"

    @settings(deadline=None, max_examples=30)
    @given(small_datasets())
    def test_at_least_two(self, dataset):
        assert expansion_constant(dataset).c >= 2.0, "扩张常数不小于2"

    def test_extra_point(self):
        dataset = generate_dataset(config["数据集"], config["种子"])
        base = expansion_constant(dataset)
        same = expansion_constant(dataset, extra=dataset.points[3])
        assert same.c == base.c, "与已有点重合的附加点不改变扩张常数"
        far = expansion_constant(dataset, extra=[1000.0, 0.0])
        assert far.c == dataset.size + 1, "远处附加点为球心时比值等于总点数"

    def test_cross_expansion(self):
        reference = generate_dataset(config["数据集"], config["种子"])
        query = generate_dataset("uniform-ball:N=10,d=2", 9)
        cross = cross_expansion_constant(reference, query)
        expected = max(expansion_constant(reference, extra=row).c for row in query.points)
        assert cross.c == expected, "c_qr 应为逐查询点扩张常数的最大值"
        assert cross_expansion_constant(reference, reference).c == expansion_constant(reference).c, "单色时 c_qr = c_r"

    def test_reference_value(self):
        assert reference_expansion(3) == 8.0, "d维参考值为2^d"
