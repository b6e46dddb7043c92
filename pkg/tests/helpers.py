"""Shared fixtures-in-code: the worked running example and random instances."""

import math

import numpy as np

from pgsr import CostTable, GroupSizeHierarchy, RegionTree, aggregate_records

# the 11-record example dataset: units A..F across two states
RECORDS = [
    ("01", "A", "GA", 1),
    ("02", "B", "GA", 1),
    ("03", "A", "GA", 1),
    ("04", "A", "GA", 1),
    ("05", "C", "GA", 1),
    ("06", "D", "NY", 1),
    ("07", "E", "NY", 1),
    ("08", "D", "NY", 1),
    ("09", "D", "NY", 1),
    ("10", "F", "NY", 1),
    ("11", "F", "NY", 1),
]


def us_tree() -> RegionTree:
    return RegionTree({"US": None, "GA": "US", "NY": "US"})


def running_example() -> GroupSizeHierarchy:
    return aggregate_records(RECORDS, us_tree(), n_sizes=5)


def injected_noisy(h: GroupSizeHierarchy | None = None) -> GroupSizeHierarchy:
    """The worked example's noisy values: size-1 subtree perturbed to
    (GA=3, NY=0, US=2), all other entries kept exact."""
    h = h or running_example()
    counts = h.copy_counts()
    counts["GA"][0] = 3
    counts["NY"][0] = 0
    counts["US"][0] = 2
    return h.with_counts(counts, "noisy")


def random_tree(rng: np.random.Generator, max_levels: int = 3, max_children: int = 2) -> RegionTree:
    levels = int(rng.integers(1, max_levels + 1))
    parents: dict[str, str | None] = {"r": None}
    frontier = ["r"]
    for _ in range(levels - 1):
        new = []
        for p in frontier:
            for i in range(int(rng.integers(1, max_children + 1))):
                name = f"{p}.{i}"
                parents[name] = p
                new.append(name)
        frontier = new
    return RegionTree(parents)


def random_instance(
    rng: np.random.Generator,
    max_levels: int = 3,
    max_children: int = 2,
    max_sizes: int = 3,
    max_total: int = 8,
    noise_lo: int = -3,
    noise_hi: int = 3,
    oracle_cap: int = 20_000,
) -> tuple[GroupSizeHierarchy, GroupSizeHierarchy]:
    """Random small (exact, injected-noisy) pair whose brute-force oracles
    stay below ``oracle_cap`` enumerations."""
    while True:
        tree = random_tree(rng, max_levels, max_children)
        n_sizes = int(rng.integers(1, max_sizes + 1))
        total = int(rng.integers(1, max_total + 1))
        k = len(tree.leaves) * n_sizes
        est_tree = math.comb(total + k - 1, k - 1) if k > 1 else 1
        eq_edges = (len(tree.nodes) - len(tree.leaves)) * n_sizes
        free = len(tree.nodes) * n_sizes - eq_edges
        est_chain = math.comb(free + total, total)
        if est_tree <= oracle_cap and est_chain <= oracle_cap:
            break

    counts = {r: np.zeros(n_sizes, dtype=np.int64) for r in tree.nodes}
    leaves = tree.leaves
    for _ in range(total):
        leaf = leaves[int(rng.integers(len(leaves)))]
        slot = int(rng.integers(n_sizes))
        r = leaf
        while r is not None:
            counts[r][slot] += 1
            r = tree.parent.get(r)
    exact = GroupSizeHierarchy(tree, counts, total, "exact")

    noisy_counts = {
        r: exact.counts[r]
        + rng.integers(noise_lo, noise_hi + 1, size=n_sizes).astype(np.int64)
        for r in tree.nodes
    }
    noisy = exact.with_counts(noisy_counts, "noisy")
    return exact, noisy


def random_cpwl_table(
    rng: np.random.Generator, max_lo: int = 6, max_len: int = 8, slope_span: int = 5
) -> CostTable:
    """Random convex integer cost table with non-negative entries."""
    lo = int(rng.integers(0, max_lo + 1))
    length = int(rng.integers(1, max_len + 1))
    if length == 1:
        return CostTable(lo, np.array([int(rng.integers(0, 10))]))
    slopes = np.sort(rng.integers(-slope_span, slope_span + 1, size=length - 1))
    costs = np.concatenate(([0], np.cumsum(slopes)))
    costs = costs - costs.min() + int(rng.integers(0, 3))
    return CostTable(lo, costs)
