import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgsr import (
    DomainPolicy,
    GroupSizeHierarchy,
    NoiseSpec,
    RegionTree,
    build_chain,
    build_dp_tree,
    cumulate,
    mech_c_ch,
    mech_c_dp,
    mech_h_dp,
    oracle_chain,
    oracle_tree,
    pava_isotonic,
    repair_cumulative,
    validate_pgsr,
)
from pgsr.mechanisms import MECHANISMS

from helpers import injected_noisy, random_instance, running_example, us_tree


def grid_isotonic_optimum(noisy, lo, hi):
    """Oracle for small instances: best monotone integer vector in bounds."""
    n = len(noisy)
    best, best_cost = None, None
    for xs in itertools.product(range(lo, hi + 1), repeat=n):
        if any(xs[i] > xs[i + 1] for i in range(n - 1)):
            continue
        cost = sum((x - y) ** 2 for x, y in zip(xs, noisy))
        if best_cost is None or cost < best_cost:
            best, best_cost = xs, cost
    return best, best_cost


class TestPava:
    def test_two_point_pool(self):
        assert list(pava_isotonic([3, 1])) == [2.0, 2.0]

    def test_monotone_fixed_point(self):
        y = [0.0, 1.0, 1.0, 4.0]
        assert list(pava_isotonic(y, 0, 6)) == y

    def test_clamp(self):
        assert list(pava_isotonic([-4, -2], 0, 6)) == [0.0, 0.0]

    def test_grid_search_triple(self):
        # real optimum (2, 2, 5) happens to be integral, so the integer grid
        # oracle certifies it
        fitted = pava_isotonic([3, 1, 5], 0, 6)
        assert list(fitted) == [2.0, 2.0, 5.0]
        xs, cost = grid_isotonic_optimum([3, 1, 5], 0, 6)
        assert xs == (2, 2, 5)
        assert cost == sum((a - b) ** 2 for a, b in zip(fitted, [3, 1, 5]))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-10, 10), min_size=1, max_size=8))
    def test_projection_variational_inequality(self, noisy):
        # x* is the projection of y onto the monotone-in-bounds cone iff
        # <y - x*, z - x*> <= 0 for every feasible z
        lo, hi = 0.0, 10.0
        y = np.asarray(noisy, dtype=float)
        x = pava_isotonic(y, lo, hi)
        assert np.all(np.diff(x) >= -1e-12)
        assert x.min() >= lo - 1e-12 and x.max() <= hi + 1e-12
        rng = np.random.default_rng(4)
        for _ in range(10):
            z = np.clip(np.sort(rng.uniform(lo, hi, size=len(y))), lo, hi)
            assert float((y - x) @ (z - x)) <= 1e-7

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError, match="bound"):
            pava_isotonic([1.0], 5, 3)


class TestRepairCumulative:
    def test_golden(self):
        assert list(repair_cumulative([3, 1, 5], 6)) == [2, 0, 3]

    def test_output_is_valid_count_vector(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            total = int(rng.integers(0, 12))
            noisy = rng.integers(-6, 14, size=n)
            counts = repair_cumulative(noisy, total)
            assert counts.min(initial=0) >= 0
            assert cumulate(counts).max(initial=0) <= total


class TestMechHdp:
    def test_worked_example(self):
        noisy = injected_noisy()
        spec = NoiseSpec(epsilon=1.0, levels=2, seed=0)
        res = mech_h_dp(noisy, spec, windows=DomainPolicy.fixed(0, 4))
        assert res.objective == 1
        assert list(res.released.counts["US"]) == [3, 1, 2, 0, 0]
        assert list(res.released.counts["GA"]) == [3, 0, 1, 0, 0]
        assert list(res.released.counts["NY"]) == [0, 1, 1, 0, 0]
        assert res.report.ok
        assert res.released.role == "post-processed"

    def test_zero_noise_fixed_point(self):
        h = running_example()
        asif_noisy = h.with_counts(h.counts, "noisy")
        res = mech_h_dp(asif_noisy, NoiseSpec(epsilon=1.0, levels=2), DomainPolicy.full())
        assert res.objective == 0
        assert all(
            np.array_equal(res.released.counts[r], h.counts[r]) for r in h.tree.nodes
        )

    def test_objective_matches_released_deviation(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            _, noisy = random_instance(rng)
            res = mech_h_dp(noisy, NoiseSpec(epsilon=1.0, levels=3), DomainPolicy.full())
            dev = sum(
                int(((res.released.counts[r] - noisy.counts[r]) ** 2).sum())
                for r in noisy.tree.nodes
            )
            assert res.objective == dev

    def test_internal_noise_run(self):
        h = running_example()
        res = mech_h_dp(h, NoiseSpec(epsilon=0.5, levels=2, seed=7))
        assert res.report.ok
        assert res.timings["noise_s"] >= 0

    def test_post_processed_input_rejected(self):
        h = running_example()
        released = h.with_counts(h.counts, "post-processed")
        with pytest.raises(ValueError, match="exact or noisy"):
            mech_h_dp(released, NoiseSpec(epsilon=1.0, levels=2))


class TestMechCdp:
    def test_single_region_worked_example(self):
        tree = RegionTree({"only": None})
        exact = GroupSizeHierarchy(tree, {"only": [2, 1, 3]}, 6, "exact")
        injected = exact.with_counts({"only": [3, -2, 4]}, "noisy")
        res = mech_c_dp(injected, NoiseSpec(epsilon=1.0, levels=1), DomainPolicy.full())
        # cumulative injection (3, 1, 5) -> isotonic (2, 2, 5) -> counts
        # (2, 0, 3); the tree stage then restores the total 6 at the first
        # slot (slope ties break by slot order)
        assert list(res.released.counts["only"]) == [3, 0, 3]
        assert res.objective_counts == 1
        assert res.objective == res.objective_cumulative == 5
        assert res.report.ok

    def test_zero_noise_fixed_point(self):
        h = running_example()
        res = mech_c_dp(h.with_counts(h.counts, "noisy"), NoiseSpec(epsilon=1.0, levels=2), DomainPolicy.full())
        assert res.objective == 0
        assert all(
            np.array_equal(res.released.counts[r], h.counts[r]) for r in h.tree.nodes
        )

    def test_internal_noise_run(self):
        h = running_example()
        res = mech_c_dp(h, NoiseSpec(epsilon=0.5, levels=2, seed=13))
        assert res.report.ok


class TestMechCch:
    def test_worked_example(self):
        noisy = injected_noisy()
        res = mech_c_ch(noisy, NoiseSpec(epsilon=1.0, levels=2), DomainPolicy.full())
        # starred top-down values: the size-1 chain prefix settles at 3
        assert list(res.released.counts["GA"])[0] == 3
        assert list(res.released.counts["NY"])[0] == 0
        assert list(res.released.counts["US"])[0] == 3
        assert res.report.ok
        # independent enumeration of the same chain program
        chain = build_chain(build_dp_tree(noisy))
        ctilde = [n.c for n in chain.nodes]
        best, _ = oracle_chain(
            chain.boundaries(), ctilde, [(0, 6)] * len(chain), 6
        )
        assert res.objective == best == 5

    def test_zero_noise_fixed_point(self):
        h = running_example()
        res = mech_c_ch(h.with_counts(h.counts, "noisy"), NoiseSpec(epsilon=1.0, levels=2), DomainPolicy.full())
        assert res.objective == 0
        assert all(
            np.array_equal(res.released.counts[r], h.counts[r]) for r in h.tree.nodes
        )

    def test_internal_noise_run(self):
        h = running_example()
        res = mech_c_ch(h, NoiseSpec(epsilon=0.5, levels=2, seed=3))
        assert res.report.ok

    def test_level_multiplier_plumbs_through(self):
        h = running_example()
        spec = NoiseSpec(epsilon=0.5, levels=2, seed=3)
        res = mech_c_ch(h, spec, level_multiplier={2: 1e-9, 3: 1e-9})
        # negligible noise at every level reduces to the exact fixed point
        assert res.objective == 0
        assert all(
            np.array_equal(res.released.counts[r], h.counts[r]) for r in h.tree.nodes
        )


class TestOracles:
    def test_oracle_tree_worked_subtree(self):
        tree = us_tree()
        sub = GroupSizeHierarchy(tree, {"US": [2], "GA": [3], "NY": [0]}, 3, "noisy")
        dp = build_dp_tree(sub, DomainPolicy.fixed(0, 4))
        cost, values = oracle_tree(sub, dp.windows)
        assert cost == 1
        assert values[(0, "US")] == 3
        assert values[(0, "GA")] == 3
        assert values[(0, "NY")] == 0

    def test_oracle_tree_single_node(self):
        # one region, one size: the released value is pinned to the total,
        # chosen here as the rounded noisy value inside the window
        tree = RegionTree({"only": None})
        sub = GroupSizeHierarchy(tree, {"only": [4]}, 4, "noisy")
        cost, values = oracle_tree(sub, {(0, "only"): (0, 9)})
        assert cost == 0 and values[(0, "only")] == 4

    def test_oracle_tree_guard(self):
        tree = us_tree()
        sub = GroupSizeHierarchy(tree, {r: [1] * 8 for r in tree.nodes}, 200, "noisy")
        with pytest.raises(ValueError, match="guard"):
            oracle_tree(sub, {(s, r): (0, 200) for s in range(8) for r in tree.nodes})

    def test_oracle_chain_guard(self):
        with pytest.raises(ValueError, match="guard"):
            oracle_chain(
                ["same_or_down"] * 39,
                list(range(40)),
                [(0, 10**6)] * 40,
                10**6,
            )

    def test_oracle_chain_single_node(self):
        cost, vals = oracle_chain([], [5], [(0, 9)], 7)
        assert vals == [7] and cost == 4

    def test_mechanisms_match_oracles_on_small_instances(self):
        rng = np.random.default_rng(314)
        for _ in range(40):
            _, noisy = random_instance(rng)
            total = noisy.total_groups
            res = mech_h_dp(noisy, NoiseSpec(epsilon=1.0, levels=3), DomainPolicy.full())
            dp = build_dp_tree(noisy, DomainPolicy.full())
            best, _ = oracle_tree(noisy, dp.windows)
            assert res.objective == best

            res_ch = mech_c_ch(noisy, NoiseSpec(epsilon=1.0, levels=3), DomainPolicy.full())
            chain = build_chain(build_dp_tree(noisy))
            ctilde = [n.c for n in chain.nodes]
            best_ch, _ = oracle_chain(
                chain.boundaries(), ctilde, [(0, total)] * len(chain), total
            )
            assert res_ch.objective == best_ch


class TestAllMechanisms:
    def test_idempotent_on_feasible_input(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            exact, _ = random_instance(rng)
            feasible = exact.with_counts(exact.counts, "noisy")
            for name, mechanism in MECHANISMS.items():
                res = mechanism(feasible, NoiseSpec(epsilon=1.0, levels=3), DomainPolicy.full())
                assert res.objective == 0, name
                assert all(
                    np.array_equal(res.released.counts[r], exact.counts[r])
                    for r in exact.tree.nodes
                ), name

    def test_empty_dataset_releases_zero(self):
        from pgsr import aggregate_records

        h = aggregate_records([], us_tree())
        for name, mechanism in MECHANISMS.items():
            res = mechanism(h, NoiseSpec(epsilon=0.5, levels=2, seed=1))
            assert res.report.ok, name
            assert all(int(v.sum()) == 0 for v in res.released.counts.values()), name

    def test_all_releases_pass_validation(self):
        rng = np.random.default_rng(22)
        for trial in range(15):
            exact, _ = random_instance(rng)
            for name, mechanism in MECHANISMS.items():
                for eps in (0.1, 1.0):
                    spec = NoiseSpec(epsilon=eps, levels=exact.tree.levels, seed=trial)
                    res = mechanism(exact, spec)
                    assert validate_pgsr(res.released).ok, (name, eps)
