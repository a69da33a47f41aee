import math
import unittest

import numpy as np

from dualcover.algorithms.oracle import brute_force_range, range_mismatches
from dualcover.algorithms.range_search import (
    RangeState,
    alpha_expansion_stats,
    expansion_beta,
    range_search,
    straddle_counterexample,
)
from dualcover.common.common import ConfigError
from dualcover.core.dataset import Dataset, generate_dataset
from dualcover.traversal.traversal import TraversalOptions

config = {
    "数据集": "gaussian-mixture:N=200,d=2,k=4",
    "查询集": "uniform-ball:N=80,d=2",
    "种子": 0,
    "随机区间数": 12,
}


class TestRangeSearch(unittest.TestCase):
    def setUp(self):
        self.dataset = generate_dataset(config["数据集"], config["种子"])

    def test_random_intervals(self):
        rng = np.random.default_rng(0)
        for _ in range(config["随机区间数"]):
            lower, upper = sorted(rng.uniform(0, 3, size=2))
            result = range_search(self.dataset, self.dataset, lower, upper, with_bounds=False)
            bad = range_mismatches(self.dataset, self.dataset, lower, upper, result.results)
            assert bad == [], f"[{lower:.3f}, {upper:.3f}] 区间搜索与穷举不一致：{bad[:5]}"

    def test_bichromatic(self):
        query = generate_dataset(config["查询集"], config["种子"] + 1)
        result = range_search(query, self.dataset, 0.2, 0.9, with_bounds=False)
        assert range_mismatches(query, self.dataset, 0.2, 0.9, result.results) == [], "双色区间搜索与穷举不一致"
        assert result.counters.prunes > 0, "窄区间应发生剪枝"

    def test_count_only(self):
        result = range_search(self.dataset, self.dataset, 0.5, 1.5, count_only=True, with_bounds=False)
        expected = brute_force_range(self.dataset, self.dataset, 0.5, 1.5, count_only=True)
        assert result.results is None, "count_only时不返回编号集合"
        assert np.array_equal(result.counts, expected), "区间计数与穷举不一致"

    def test_unbounded_interval(self):
        result = range_search(self.dataset, self.dataset, 0.0, math.inf, with_bounds=False)
        everything = set(range(self.dataset.size))
        assert all(found == everything for found in result.results), "[0, +∞) 应返回全部参考点"
        assert result.counters.prunes == 0, "[0, +∞) 不应剪枝"

    def test_degenerate_interval(self):
        query = Dataset.from_points([[0.0]])
        reference = Dataset.from_points([[float(x)] for x in range(5)])
        result = range_search(query, reference, 3.0, 3.0, with_bounds=False)
        assert result.results == [{3}], "l = u 时只返回距离恰为l的点"

    def test_empty_interval_rejected(self):
        with self.assertRaises(ConfigError):
            range_search(self.dataset, self.dataset, 2.0, 1.0)
        with self.assertRaises(ConfigError):
            RangeState(self.dataset, self.dataset, 1.0, 0.5)

    def test_strict_mode_on_random_data(self):
        result = range_search(
            self.dataset, self.dataset, 0.0, 0.5, options=TraversalOptions(strict_paper_mode=True), with_bounds=False
        )
        assert len(result.results) == self.dataset.size, "strict模式也应为每个查询点返回结果"


class TestStraddle(unittest.TestCase):
    def setUp(self):
        self.case = straddle_counterexample()

    def test_literal_rule_misses_point(self):
        case = self.case
        result = range_search(
            case.query, case.reference, case.lower, case.upper, options=TraversalOptions(strict_paper_mode=True)
        )
        assert result.results == [set()], "原始剪枝规则会在根组合处剪掉跨越区间的节点"
        assert range_mismatches(case.query, case.reference, case.lower, case.upper, result.results) == [0], "穷举应发现遗漏"

    def test_corrected_rule_finds_point(self):
        case = self.case
        result = range_search(case.query, case.reference, case.lower, case.upper)
        assert result.results == [{2}], "修正后的剪枝规则应找到点2"


class TestDifficulty(unittest.TestCase):
    def test_beta(self):
        assert expansion_beta(1 / 3) == 2, "α = 1/3 时 β = 2"
        assert expansion_beta(1 / 7) == 3, "α = 1/7 时 β = 3"
        assert expansion_beta(1 / 15) == 4, "α = 1/15 时 β = 4"
        assert expansion_beta(1.0) == 1, "α = 1 时 β = 1"
        assert expansion_beta(0.5) == 2, "α = 1/2 时 β = ⌈log2 3⌉ = 2"

    def test_expansion_counts(self):
        case = straddle_counterexample()
        difficulty = alpha_expansion_stats(case.query, case.reference, case.lower, case.upper, 1 / 3)
        # [1.5, 2.5] 扩张为 [1.0, 3.33]，新增点1与点3
        assert (difficulty.s_max_size, difficulty.C, difficulty.beta) == (1, 2, 2), f"难度统计错误：{difficulty}"

    def test_matches_direct_count(self):
        dataset = generate_dataset("uniform-ball:N=80,d=3", 2)
        lower, upper, alpha = 0.3, 0.6, 0.25
        difficulty = alpha_expansion_stats(dataset, dataset, lower, upper, alpha)
        inside = brute_force_range(dataset, dataset, lower, upper, count_only=True)
        expanded = brute_force_range(dataset, dataset, (1 - alpha) * lower, (1 + alpha) * upper, count_only=True)
        assert difficulty.s_max_size == inside.max(), "|S_max| 与穷举计数不一致"
        assert difficulty.C == (expanded - inside).max(), "C 与两次穷举计数之差不一致"

    def test_empty_annulus(self):
        query = Dataset.from_points([[0.0]])
        reference = Dataset.from_points([[0.0], [10.0]])
        difficulty = alpha_expansion_stats(query, reference, 4.0, 5.0, 0.1)
        assert (difficulty.s_max_size, difficulty.C) == (0, 0), "扩张后的区间内没有点时 C = 0"

    def test_invalid_alpha(self):
        case = straddle_counterexample()
        with self.assertRaises(ConfigError):
            alpha_expansion_stats(case.query, case.reference, case.lower, case.upper, 0.0)


class TestRangeBounds(unittest.TestCase):
    def test_measured_within_theoretical(self):
        dataset = generate_dataset("uniform-ball:N=60,d=2", 3)
        result = range_search(dataset, dataset, 0.2, 0.5)
        bounds, difficulty = result.bounds, result.difficulty
        packing = bounds.c_r ** (4 + difficulty.beta)
        assert bounds.r_star_theoretical == max(packing, difficulty.s_max_size + difficulty.C), "|R*|理论值错误"
        assert bounds.r_star_measured <= bounds.r_star_theoretical, "实测|R*|不应超过理论值"

    def test_simplified_form(self):
        dataset = generate_dataset("uniform-ball:N=60,d=2", 3)
        result = range_search(dataset, dataset, 0.2, 0.5)
        bounds, difficulty = result.bounds, result.difficulty
        if difficulty.s_max_size + difficulty.C <= bounds.c_r ** (4 + difficulty.beta):
            expected = bounds.c_r ** (8 + difficulty.beta) * (bounds.size + bounds.i_t_query)
            assert math.isclose(bounds.simplified_value, expected, rel_tol=1e-12), "简化形式上界错误"
        else:
            assert bounds.simplified_value is None, "|S_max| + C 较大时不给出简化形式"
