import pytest

from entroute import edp, entmath
from entroute.errors import AnnotationMismatch, InvalidDemand, SearchBudgetExceeded
from entroute.netmodel import (
    FidelityGrid,
    OperationParams,
    canonical_pair,
    make_network,
    waxman_generate,
)

SWAP_95_95 = entmath.swap_fidelity(0.95, 0.95)  # 0.903333...


class TestSolveEdp:
    def test_single_link_leaf(self, grid01, neutral_params):
        net = make_network(["a", "b"], {("a", "b"): (50.0, 0.92)})
        tree = edp.solve_edp(net, "a", "b", 0.9, grid01, neutral_params)
        assert tree.kind == edp.LEAF
        assert tree.latency == pytest.approx(0.02)
        assert tree.fidelity == pytest.approx(0.92)

    def test_two_link_swap(self, two_link_path, grid01, neutral_params):
        tree = edp.solve_edp(two_link_path, "s", "d", 0.9, grid01, neutral_params)
        assert tree.kind == edp.SWAP
        assert tree.via == "m"
        assert tree.latency == pytest.approx(0.015)
        assert tree.fidelity == pytest.approx(grid01.floor(SWAP_95_95))

    def test_infeasible_returns_none(self, two_link_path, grid01, neutral_params):
        assert edp.solve_edp(two_link_path, "s", "d", 0.99, grid01, neutral_params) is None

    def test_invalid_demands(self, two_link_path, grid01, neutral_params):
        with pytest.raises(InvalidDemand):
            edp.solve_edp(two_link_path, "s", "s", 0.9, grid01, neutral_params)
        with pytest.raises(InvalidDemand):
            edp.solve_edp(two_link_path, "s", "d", 0.3, grid01, neutral_params)

    def test_purification_used_when_needed(self, grid005, neutral_params):
        # A single 0.8 link cannot meet 0.9 without pumping.
        net = make_network(["a", "b"], {("a", "b"): (100.0, 0.8)})
        tree = edp.solve_edp(net, "a", "b", 0.9, grid005, neutral_params)
        assert tree is not None
        kinds = {n.kind for _, n in tree.walk()}
        assert edp.PURIFY in kinds
        assert tree.fidelity >= 0.9

    def test_returned_tree_passes_evaluate(self, two_link_path, grid01, neutral_params):
        tree = edp.solve_edp(two_link_path, "s", "d", 0.9, grid01, neutral_params)
        fid, lat = edp.evaluate_tree(tree, neutral_params, grid=grid01)
        assert fid == tree.fidelity and lat == pytest.approx(tree.latency)

    def test_json_roundtrip(self, two_link_path, grid01, neutral_params):
        tree = edp.solve_edp(two_link_path, "s", "d", 0.9, grid01, neutral_params)
        doc = tree.to_dict()
        assert edp.OperationTree.from_dict(doc) == tree


class TestEvaluateTree:
    def test_leaf(self, neutral_params):
        leaf = edp.OperationTree(edp.LEAF, "a", "b", fidelity=0.9, latency=0.02, rate=50.0)
        assert edp.evaluate_tree(leaf, neutral_params) == (0.9, 0.02)

    def test_two_link_exact(self, neutral_params):
        left = edp.OperationTree(edp.LEAF, "a", "m", fidelity=0.95, latency=0.01, rate=100.0)
        right = edp.OperationTree(edp.LEAF, "d", "m", fidelity=0.95, latency=0.01, rate=100.0)
        root = edp.OperationTree(
            edp.SWAP, "a", "d", via="m", fidelity=SWAP_95_95, latency=0.015,
            rate=1 / 0.015, children=(left, right))
        fid, lat = edp.evaluate_tree(root, neutral_params)
        assert fid == pytest.approx(0.9033333333333333, abs=1e-12)
        assert lat == pytest.approx(0.015)

    def test_purify_over_swap(self, neutral_params):
        left = edp.OperationTree(edp.LEAF, "a", "m", fidelity=0.95, latency=0.01, rate=100.0)
        right = edp.OperationTree(edp.LEAF, "d", "m", fidelity=0.95, latency=0.01, rate=100.0)
        sw = edp.OperationTree(
            edp.SWAP, "a", "d", via="m", fidelity=SWAP_95_95, latency=0.015,
            rate=1 / 0.015, children=(left, right))
        expect_f = entmath.ep_purify(SWAP_95_95, SWAP_95_95).fidelity
        expect_l = entmath.iterated_purify_latency(0.015, SWAP_95_95, 1, neutral_params)
        root = edp.OperationTree(
            edp.PURIFY, "a", "d", iterations=1, fidelity=expect_f,
            latency=expect_l, rate=1 / expect_l, children=(sw,))
        fid, lat = edp.evaluate_tree(root, neutral_params)
        assert fid == pytest.approx(expect_f, abs=1e-12)
        assert lat == pytest.approx(expect_l, abs=1e-12)

    def test_mismatch_names_offending_node(self, neutral_params):
        bad = edp.OperationTree(edp.LEAF, "a", "b", fidelity=0.9, latency=0.02, rate=40.0)
        root = edp.OperationTree(
            edp.PURIFY, "a", "b", iterations=1, fidelity=0.8, latency=1.0, rate=1.0,
            children=(bad,))
        with pytest.raises(AnnotationMismatch) as err:
            edp.evaluate_tree(root, neutral_params)
        assert "root" in err.value.path


class TestOracle:
    def test_single_link_matches_dp(self, grid01, neutral_params):
        net = make_network(["a", "b"], {("a", "b"): (50.0, 0.92)})
        dp = edp.solve_edp(net, "a", "b", 0.9, grid01, neutral_params)
        bf = edp.brute_force_edp(net, "a", "b", 0.9, grid01, neutral_params)
        assert bf.kind == edp.LEAF
        assert bf.latency == pytest.approx(dp.latency)

    def test_two_link_value(self, two_link_path, grid01, neutral_params):
        bf = edp.brute_force_edp(two_link_path, "s", "d", 0.9, grid01, neutral_params)
        assert bf.latency == pytest.approx(0.015)

    def test_leaf_budget_guard(self, two_link_path, grid01, neutral_params):
        with pytest.raises(SearchBudgetExceeded):
            edp.brute_force_edp(two_link_path, "s", "d", 0.9, grid01,
                                neutral_params, max_leaves=9)

    def test_oracle_sandwich_on_seeded_networks(self, neutral_params):
        grid = FidelityGrid.uniform(step=0.01)
        params = OperationParams(p_s=0.6, t_s=1e-5, t_p=1e-5, t_c=1e-5, i_max=2)
        checked = 0
        for seed in range(6):
            net = waxman_generate(
                5, seed=seed, alpha=0.9, beta=0.9,
                rate_range=(20.0, 120.0), fid_range=(0.85, 0.98))
            s, d = net.nodes[0], net.nodes[-1]
            dp = edp.solve_edp(net, s, d, 0.88, grid, params)
            exact = edp.brute_force_edp(net, s, d, 0.88, grid, params,
                                        max_leaves=4, max_purify_per_node=6)
            floored = edp.brute_force_edp(net, s, d, 0.88, grid, params,
                                          max_leaves=4, max_purify_per_node=6,
                                          floored=True)
            if dp is None:
                assert floored is None
                continue
            checked += 1
            assert exact is not None
            assert exact.latency <= dp.latency + 1e-9
            assert dp.latency <= floored.latency + 1e-9
        assert checked >= 4



class TestDpTableProperties:
    def test_dominance_in_threshold(self, neutral_params, grid01):
        net = waxman_generate(5, seed=3, alpha=0.9)
        table = edp.label_setting(net, grid01, neutral_params)
        pair = canonical_pair(net.nodes[0], net.nodes[-1])
        prev = None
        for idx in range(len(grid01)):
            entry = table.best_at_least(pair, grid01[idx])
            if entry is None:
                continue
            if prev is not None:
                assert prev.latency <= entry.latency + 1e-12
            prev = entry

    def test_finalization_order_is_nondecreasing(self, neutral_params, grid01):
        net = waxman_generate(5, seed=7, alpha=0.9)
        table = edp.label_setting(net, grid01, neutral_params)
        lats = [table.entries[s].latency for s in table.finalize_order]
        assert all(b >= a - 1e-15 for a, b in zip(lats, lats[1:]))

    def test_entries_reproduce_from_backpointers(self, neutral_params, grid01):
        net = waxman_generate(4, seed=5, alpha=0.9)
        table = edp.label_setting(net, grid01, neutral_params)
        for state in table.finalize_order[:50]:
            tree = edp._build_tree(table, state)
            fid, lat = edp.evaluate_tree(tree, neutral_params, grid=grid01)
            assert lat == pytest.approx(table.entries[state].latency, rel=1e-9)


class TestQuantityModel:
    def test_direct_link_counts(self, grid01, neutral_params):
        net = make_network(["a", "b"], {("a", "b"): (4.0, 0.92)})
        tree = edp.solve_edp_quantity(net, "a", "b", 0.9, grid01, neutral_params)
        assert tree.count == 4

    def test_one_purify_round(self, grid005, neutral_params):
        net = make_network(["a", "b"], {("a", "b"): (4.0, 0.7)})
        tree = edp.solve_edp_quantity(net, "a", "b", 0.73, grid005, neutral_params)
        # floor(0.68 * floor(4/2)) = 1 copy at 0.7352...
        assert tree.kind == edp.PURIFY
        assert tree.count == 1
        assert tree.fidelity == pytest.approx(grid005.floor(0.7352941176470588))

    def test_two_link_bottleneck(self, grid01, neutral_params):
        net = make_network(
            ["a", "m", "b"], {("a", "m"): (3.0, 0.95), ("m", "b"): (5.0, 0.95)})
        tree = edp.solve_edp_quantity(net, "a", "b", 0.9, grid01, neutral_params)
        assert tree.count == 3

    def test_none_when_count_zero(self, grid01, neutral_params):
        params = OperationParams(p_s=0.4, t_s=0, t_p=0, t_c=0)
        net = make_network(
            ["a", "m", "b"], {("a", "m"): (1.0, 0.95), ("m", "b"): (1.0, 0.95)})
        # floor(0.4 * 1) = 0 end-to-end copies
        assert edp.solve_edp_quantity(net, "a", "b", 0.9, grid01, params) is None

    def test_nonincreasing_in_threshold(self, grid005, neutral_params):
        net = make_network(
            ["a", "m", "b"],
            {("a", "m"): (40.0, 0.9), ("m", "b"): (60.0, 0.85)})
        counts = []
        for f_min in (0.55, 0.65, 0.75, 0.8):
            tree = edp.solve_edp_quantity(net, "a", "b", f_min, grid005, neutral_params)
            counts.append(0 if tree is None else tree.count)
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_rejects_non_integer_counts(self, grid01, neutral_params):
        net = make_network(["a", "b"], {("a", "b"): (4.5, 0.92)})
        with pytest.raises(InvalidDemand):
            edp.solve_edp_quantity(net, "a", "b", 0.9, grid01, neutral_params)
