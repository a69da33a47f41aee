import io
import json
import unittest
from collections import Counter

from dualcover.algorithms.nn import NNState, nn_rules
from dualcover.common.common import LEAF, PRUNE, DimensionMismatchError, TraversalError
from dualcover.core.dataset import Dataset, generate_dataset
from dualcover.covertree.tree import CoverNode, build
from dualcover.traversal.traversal import (
    ReferenceSet,
    TraversalOptions,
    TraversalRules,
    dual_traverse,
    max_scale,
    separation_audit,
)

config = {
    "穷举数据集": "uniform-ball:N=32,d=2",
    "审计数据集": "uniform-ball:N=256,d=3",
    "种子": 0,
}


class RecordingRules:
    """
    记录所有 BaseCase 调用的规则，score 由调用方给出
    """

    def __init__(self, score=lambda query_node, reference_node: 0.0):
        self.pairs = []
        self.score = score

    def base_case(self, query_id: int, reference_id: int):
        self.pairs.append((query_id, reference_id))

    @property
    def rules(self) -> TraversalRules:
        return TraversalRules(self.base_case, self.score)


class TestExhaustiveTraversal(unittest.TestCase):
    def setUp(self):
        self.dataset = generate_dataset(config["穷举数据集"], config["种子"])
        self.tree = build(self.dataset)

    def test_every_pair_once(self):
        recorder = RecordingRules()
        counters = dual_traverse(self.tree, self.tree, recorder.rules)
        n = self.dataset.size
        assert len(recorder.pairs) == n * n, f"不剪枝时应送达{n * n}个点对，实际{len(recorder.pairs)}"
        assert len(set(recorder.pairs)) == n * n, "每个点对只应送达一次"
        assert counters.base_case_calls == n * n, "BaseCase计数错误"
        assert counters.prunes == 0, "不剪枝时剪枝计数应为0"

    def test_exclude_self(self):
        recorder = RecordingRules()
        counters = dual_traverse(self.tree, self.tree, recorder.rules, TraversalOptions(exclude_self=True))
        n = self.dataset.size
        assert all(q != r for q, r in recorder.pairs), "exclude_self时不应送达自身点对"
        assert len(set(recorder.pairs)) == n * (n - 1), "应送达全部非自身点对"
        assert counters.self_pairs_skipped > 0, "应记录跳过的自身点对"

    def test_bichromatic_every_pair(self):
        query = generate_dataset("uniform-ball:N=20,d=2", 5)
        recorder = RecordingRules()
        dual_traverse(build(query), self.tree, recorder.rules)
        assert set(recorder.pairs) == {(q, r) for q in range(20) for r in range(self.dataset.size)}, "双色不剪枝时应送达全部点对"

    def test_strict_mode_every_pair(self):
        recorder = RecordingRules()
        dual_traverse(self.tree, self.tree, recorder.rules, TraversalOptions(strict_paper_mode=True))
        assert len(set(recorder.pairs)) == self.dataset.size**2, "strict模式不剪枝时也应送达全部点对"

    def test_counter_relations(self):
        counters = dual_traverse(self.tree, self.tree, RecordingRules().rules)
        assert counters.max_reference_set_size >= 1, "非空遍历的最大参考集大小至少为1"
        assert counters.reference_recursions >= (
            counters.ref_recursions_before_first_query + counters.ref_recursions_after_last_query
        ), "参考递归数应不小于首尾两段之和"
        assert counters.total_recursions == counters.query_recursions + counters.reference_recursions, "总递归数错误"
        assert counters.query_recursions > 0, "多点树应至少有一次查询递归"


class TestPruning(unittest.TestCase):
    def test_prune_after_root(self):
        reference = generate_dataset(config["穷举数据集"], config["种子"])
        query = reference.scaled(1e-3)
        calls = []

        def score(query_node, reference_node):
            calls.append((query_node, reference_node))
            return 0.0 if len(calls) == 1 else PRUNE

        recorder = RecordingRules(score)
        counters = dual_traverse(build(query), build(reference), recorder.rules)
        assert counters.base_case_calls == 1, "根组合之后全部剪枝时只有根对根一次BaseCase"
        assert recorder.pairs == [(0, 0)], "唯一的BaseCase应为两棵树的根点"
        assert counters.query_recursions == 0, "参考集为空后不应再有查询递归"
        assert counters.reference_recursions == 1, "只有一次参考递归"

    def test_prune_root(self):
        tree = build(generate_dataset(config["穷举数据集"], config["种子"]))
        counters = dual_traverse(tree, tree, RecordingRules(lambda q, r: PRUNE).rules)
        assert counters.score_calls == 1 and counters.prunes == 1, "根组合被剪枝时只打分一次"
        assert counters.base_case_calls == 0 and counters.total_recursions == 0, "根组合被剪枝后遍历立即结束"
        assert counters.ref_recursions_after_last_query == 0, "没有查询递归时末段参考递归数为0"

    def test_rule_error_propagates(self):
        tree = build(generate_dataset(config["穷举数据集"], config["种子"]))

        def failing(query_id, reference_id):
            raise RuntimeError("boom")

        with self.assertRaises(RuntimeError):
            dual_traverse(tree, tree, TraversalRules(failing, lambda q, r: 0.0))


class TestSeparationAudit(unittest.TestCase):
    def test_single_node(self):
        dataset = Dataset.from_points([[0.0], [1.0]])
        tree = build(dataset)
        assert separation_audit(ReferenceSet((tree.root,), dataset)).ok, "只有根节点的参考集必然通过"

    def test_violation_detected(self):
        dataset = Dataset.from_points([[0.0], [0.5], [3.0]])
        nodes = (CoverNode(0, 0), CoverNode(1, 0), CoverNode(2, LEAF))
        result = separation_audit(ReferenceSet(nodes, dataset))
        assert not result.ok, "距离0.5 ≤ 2^0 的两个节点应报告违规"
        assert [(p, q) for p, q, _ in result.violations] == [(0, 1)], "违规点对应为(0, 1)"

    def test_leaves_do_not_count(self):
        nodes = (CoverNode(0, LEAF), CoverNode(1, LEAF))
        assert max_scale(nodes) == LEAF, "全为叶节点时 s_r^max 为LEAF"

    def test_audit_during_traversal(self):
        dataset = generate_dataset(config["审计数据集"], config["种子"])
        tree = build(dataset)
        state = NNState(dataset, dataset)
        counters = dual_traverse(tree, tree, nn_rules(state), TraversalOptions(exclude_self=True, audit_separation=True))
        assert counters.separation_audits == counters.reference_recursions > 0, "每次参考递归都应审计"
        assert counters.separation_violations == 0, "参考集分离性审计应全部通过"

    def test_audit_random_traversals(self):
        for seed in range(5):
            reference = generate_dataset("gaussian-mixture:N=120,d=2,k=3", seed)
            query = generate_dataset("uniform-ball:N=60,d=2", seed + 100)
            state = NNState(query, reference)
            counters = dual_traverse(
                build(query), build(reference), nn_rules(state), TraversalOptions(audit_separation=True)
            )
            assert counters.separation_violations == 0, f"seed={seed} 参考集分离性审计失败"


class TestOptions(unittest.TestCase):
    def test_exclude_self_needs_same_dataset(self):
        reference = generate_dataset(config["穷举数据集"], config["种子"])
        query = generate_dataset(config["穷举数据集"], config["种子"] + 1)
        with self.assertRaises(TraversalError):
            dual_traverse(build(query), build(reference), RecordingRules().rules, TraversalOptions(exclude_self=True))

    def test_dimension_mismatch(self):
        query = generate_dataset("uniform-ball:N=10,d=2", 0)
        reference = generate_dataset("uniform-ball:N=10,d=3", 0)
        with self.assertRaises(DimensionMismatchError):
            dual_traverse(build(query), build(reference), RecordingRules().rules)

    def test_trace_events(self):
        tree = build(generate_dataset("uniform-ball:N=40,d=2", 1))
        stream = io.StringIO()
        counters = dual_traverse(tree, tree, RecordingRules().rules, TraversalOptions(trace=stream))
        events = Counter(json.loads(line)["event"] for line in stream.getvalue().splitlines())
        assert events["base_case"] == counters.base_case_calls, "base_case事件数应等于BaseCase调用数"
        assert events["query_recursion"] == counters.query_recursions, "query_recursion事件数错误"
        assert events["reference_recursion"] == counters.reference_recursions, "reference_recursion事件数错误"
        assert events["prune"] == counters.prunes == 0, "不剪枝时不应有prune事件"
