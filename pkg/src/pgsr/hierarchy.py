"""Region hierarchies and hierarchical group-size count tables.

The data model mirrors how census-style group-size releases are organized:
a rooted region tree with uniform leaf depth, and one integer vector per
region counting the groups (units) of each size living there. This module
also builds the auxiliary structures used by the dynamic-programming release
mechanisms: the size-indexed DP tree with per-node integer domain windows,
and its post-order chain linearization carrying cumulative counts.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

__all__ = [
    "RegionTree",
    "GroupSizeHierarchy",
    "DomainPolicy",
    "DpTree",
    "Chain",
    "ChainNode",
    "PgsrReport",
    "RecordError",
    "aggregate_records",
    "build_dp_tree",
    "build_chain",
    "cumulate",
    "decumulate",
    "validate_pgsr",
    "repair_chain_windows",
]

Role = Literal["exact", "noisy", "post-processed"]
Window = tuple[int, int]

ROLES = ("exact", "noisy", "post-processed")


class RecordError(ValueError):
    """Raised when input records violate the data-model preconditions."""


class RegionTree:
    """Rooted region hierarchy with a single level-1 root and all leaves at
    the deepest level.

    Children keep insertion order and every traversal derives from that
    order, which keeps all downstream computations deterministic.
    """

    def __init__(self, parents: Mapping[str, str | None]):
        roots = [r for r, p in parents.items() if p is None]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root region, got {roots!r}")
        self.root: str = roots[0]
        self.parent: dict[str, str] = {}
        children: dict[str, list[str]] = {r: [] for r in parents}
        for r, p in parents.items():
            if p is None:
                continue
            if p not in parents:
                raise ValueError(f"region {r!r} has unknown parent {p!r}")
            self.parent[r] = p
            children[p].append(r)

        self.level: dict[str, int] = {}
        order: list[str] = []
        stack = [(self.root, 1)]
        while stack:
            region, lv = stack.pop()
            if region in self.level:
                raise ValueError(f"region {region!r} reachable twice (cycle?)")
            self.level[region] = lv
            order.append(region)
            for c in reversed(children[region]):
                stack.append((c, lv + 1))
        if len(order) != len(parents):
            missing = sorted(set(parents) - set(order))
            raise ValueError(f"regions not reachable from root: {missing!r}")

        self.children: dict[str, tuple[str, ...]] = {
            r: tuple(children[r]) for r in parents
        }
        self.nodes: tuple[str, ...] = tuple(order)  # preorder
        self.levels: int = max(self.level.values())
        self.leaves: tuple[str, ...] = tuple(
            r for r in self.nodes if not self.children[r]
        )
        bad = [r for r in self.leaves if self.level[r] != self.levels]
        if bad:
            raise ValueError(
                f"ragged hierarchy: leaves {bad!r} not at level {self.levels}"
            )

        post: list[str] = []

        def visit(region: str) -> None:
            for c in self.children[region]:
                visit(c)
            post.append(region)

        visit(self.root)
        self.postorder: tuple[str, ...] = tuple(post)

    def is_leaf(self, region: str) -> bool:
        return not self.children[region]

    def regions_at(self, level: int) -> tuple[str, ...]:
        return tuple(r for r in self.nodes if self.level[r] == level)

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"RegionTree(root={self.root!r}, levels={self.levels}, regions={len(self)})"


def _freeze(vec: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.int64).copy()
    arr.setflags(write=False)
    return arr


class GroupSizeHierarchy:
    """Per-region integer group-size vectors plus the public group total.

    ``counts[r][k]`` is the number of groups occupying slot ``k`` of the size
    axis in region ``r`` (slot ``k`` is group size ``k + 1`` unless the
    hierarchy was aggregated with size-0 groups enabled, in which case slots
    start at size 0). ``role`` records the pipeline stage: exact input,
    noisy intermediate (entries may be negative), or post-processed release.
    """

    def __init__(
        self,
        tree: RegionTree,
        counts: Mapping[str, Sequence[int] | np.ndarray],
        total_groups: int,
        role: Role,
    ):
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {role!r}")
        if set(counts) != set(tree.nodes):
            raise ValueError("counts must cover exactly the tree's regions")
        frozen = {r: _freeze(v) for r, v in counts.items()}
        sizes = {len(v) for v in frozen.values()}
        if len(sizes) != 1:
            raise ValueError(f"count vectors have mixed lengths: {sorted(sizes)}")
        (self.n_sizes,) = sizes
        if self.n_sizes == 0:
            raise ValueError("count vectors must be non-empty")
        self.tree = tree
        self.counts: dict[str, np.ndarray] = frozen
        self.total_groups = int(total_groups)
        if self.total_groups < 0:
            raise ValueError("total group count must be non-negative")
        self.role: Role = role

    def with_counts(
        self, counts: Mapping[str, Sequence[int] | np.ndarray], role: Role
    ) -> "GroupSizeHierarchy":
        """New hierarchy sharing this one's tree and public total."""
        return GroupSizeHierarchy(self.tree, counts, self.total_groups, role)

    def copy_counts(self) -> dict[str, np.ndarray]:
        return {r: v.copy() for r, v in self.counts.items()}

    def level_total(self, level: int) -> int:
        return int(
            sum(self.counts[r].sum() for r in self.tree.regions_at(level))
        )

    def __repr__(self) -> str:
        return (
            f"GroupSizeHierarchy(role={self.role!r}, regions={len(self.tree)}, "
            f"sizes={self.n_sizes}, total={self.total_groups})"
        )


def cumulate(vec: Sequence[int] | np.ndarray) -> np.ndarray:
    """Prefix sums of a group-size vector: out[s] = sum of vec[:s + 1]."""
    return np.cumsum(np.asarray(vec, dtype=np.int64))


def decumulate(vec: Sequence[int] | np.ndarray) -> np.ndarray:
    """Inverse of :func:`cumulate`; defined on any integer vector, so noisy
    non-monotone inputs yield (possibly negative) differences."""
    return np.diff(np.asarray(vec, dtype=np.int64), prepend=0)


def aggregate_records(
    records: Iterable[tuple[str, str, str, int]],
    tree: RegionTree,
    n_sizes: int | None = None,
    include_size_zero: bool = False,
) -> GroupSizeHierarchy:
    """Aggregate user-level records into an exact group-size hierarchy.

    Each record is ``(user, unit, region, quantity)`` with quantity in
    {0, 1}; a unit's group size is the sum of its quantities. Records must
    name leaf regions, and a unit must not appear under two regions.

    By default units whose quantities sum to zero are dropped (group sizes
    start at 1); with ``include_size_zero`` they occupy a leading size-0
    slot and count toward the public total.
    """
    unit_region: dict[str, str] = {}
    unit_size: dict[str, int] = {}
    for user, unit, region, quantity in records:
        if region not in tree.level or not tree.is_leaf(region):
            raise RecordError(f"record for user {user!r} names non-leaf region {region!r}")
        q = int(quantity)
        if q not in (0, 1):
            raise RecordError(f"record for user {user!r} has quantity {quantity!r}, expected 0 or 1")
        seen = unit_region.setdefault(unit, region)
        if seen != region:
            raise RecordError(
                f"unit {unit!r} appears under two regions: {seen!r} and {region!r}"
            )
        unit_size[unit] = unit_size.get(unit, 0) + q

    if not include_size_zero:
        unit_size = {u: s for u, s in unit_size.items() if s > 0}

    max_size = max(unit_size.values(), default=0)
    offset = 0 if include_size_zero else 1
    slots = max_size + 1 - offset
    if n_sizes is not None:
        if n_sizes < slots:
            raise RecordError(
                f"n_sizes={n_sizes} is below the observed maximum ({slots} slots needed)"
            )
        slots = n_sizes
    slots = max(slots, 1)

    counts = {r: np.zeros(slots, dtype=np.int64) for r in tree.nodes}
    for unit, size in unit_size.items():
        region = unit_region[unit]
        while region is not None:
            counts[region][size - offset] += 1
            region = tree.parent.get(region)

    return GroupSizeHierarchy(tree, counts, total_groups=len(unit_size), role="exact")


@dataclass(frozen=True)
class PgsrReport:
    """Outcome of checking the release conditions on a hierarchy."""

    consistency_violations: int
    validity_ok: bool
    faithfulness_ok: bool
    violations_by_level: dict[int, int]

    @property
    def ok(self) -> bool:
        return (
            self.consistency_violations == 0
            and self.validity_ok
            and self.faithfulness_ok
        )


def validate_pgsr(h: GroupSizeHierarchy) -> PgsrReport:
    """Check consistency, validity and faithfulness of a hierarchy.

    A consistency violation is a (region, size) pair where the children's
    counts do not sum to the parent's. Validity requires all entries
    non-negative; faithfulness requires every level to sum to the public
    group total.
    """
    tree = h.tree
    by_level = {lv: 0 for lv in range(1, tree.levels + 1)}
    for r in tree.nodes:
        kids = tree.children[r]
        if not kids:
            continue
        child_sum = np.sum([h.counts[c] for c in kids], axis=0)
        bad = int(np.count_nonzero(child_sum != h.counts[r]))
        by_level[tree.level[r]] += bad
    total = sum(by_level.values())
    validity = all(int(v.min(initial=0)) >= 0 for v in h.counts.values())
    faithfulness = all(
        h.level_total(lv) == h.total_groups for lv in range(1, tree.levels + 1)
    )
    return PgsrReport(total, validity, faithfulness, by_level)


@dataclass(frozen=True)
class DomainPolicy:
    """How to choose the integer candidate window for each DP node.

    ``delta`` windows are centered at the node's observed (noisy) value and
    clipped to [0, G]; ``bounds`` windows are fixed (a ``None`` upper bound
    means G). Clipping to G never cuts off a feasible release value because
    all released counts are non-negative and every level sums to G.
    """

    delta: int | None = None
    bounds: tuple[int, int | None] | None = None

    @classmethod
    def around(cls, delta: int) -> "DomainPolicy":
        if delta < 0:
            raise ValueError("delta must be non-negative")
        return cls(delta=delta)

    @classmethod
    def fixed(cls, lo: int, hi: int | None) -> "DomainPolicy":
        return cls(bounds=(lo, hi))

    @classmethod
    def full(cls) -> "DomainPolicy":
        return cls(bounds=(0, None))

    @classmethod
    def for_scale(cls, scale: float) -> "DomainPolicy":
        """Default window half-width: three times the (large-scale) variance
        surrogate of the double-geometric noise with the given scale."""
        return cls.around(3 * math.ceil(2.0 * scale * scale))

    def window(self, center: int, total: int) -> Window:
        if self.bounds is not None:
            lo, hi = self.bounds
            hi = total if hi is None else hi
        else:
            if self.delta is None:
                raise ValueError("DomainPolicy needs either delta or bounds")
            lo = center - self.delta
            hi = center + self.delta
        lo = min(max(lo, 0), total)
        hi = min(max(hi, 0), total)
        if lo > hi:
            lo = hi
        return int(lo), int(hi)


class DpTree:
    """Size-indexed DP tree over a hierarchy: one subtree per size slot plus
    a dummy root pinned to the public total, with per-node domain windows
    repaired so the root value is always reachable as nested child sums."""

    def __init__(self, hierarchy: GroupSizeHierarchy, windows: dict[tuple[int, str], Window]):
        self.hierarchy = hierarchy
        self.windows = windows
        self.total = hierarchy.total_groups

    @property
    def node_count(self) -> int:
        return 1 + len(self.windows)

    def window(self, slot: int, region: str) -> Window:
        return self.windows[(slot, region)]


def _repair_tree_windows(
    tree: RegionTree, n_slots: int, total: int, windows: dict[tuple[int, str], Window]
) -> None:
    """Make every parent window reachable as a sum over child windows and the
    public total reachable at the dummy root. Mutates ``windows`` in place.

    Bottom-up, each internal window is intersected with the children-sum
    interval (extended to its nearest endpoint when disjoint); at the dummy
    root, subtree-root windows are stretched greedily in slot order until
    the total lies inside their sum interval.
    """
    for slot in range(n_slots):
        for r in tree.postorder:
            kids = tree.children[r]
            if not kids:
                continue
            slo = sum(windows[(slot, c)][0] for c in kids)
            shi = sum(windows[(slot, c)][1] for c in kids)
            lo, hi = windows[(slot, r)]
            nlo, nhi = max(lo, slo), min(hi, shi)
            if nlo > nhi:
                # window and children-sum interval are disjoint
                nlo = nhi = slo if hi < slo else shi
            windows[(slot, r)] = (nlo, nhi)

    def push_lo(slot: int, region: str, new_lo: int) -> None:
        windows[(slot, region)] = (new_lo, windows[(slot, region)][1])
        kids = tree.children[region]
        if not kids:
            return
        excess = sum(windows[(slot, c)][0] for c in kids) - new_lo
        for c in kids:
            if excess <= 0:
                break
            clo = windows[(slot, c)][0]
            cut = min(excess, clo)
            if cut > 0:
                push_lo(slot, c, clo - cut)
                excess -= cut

    def push_hi(slot: int, region: str, new_hi: int) -> None:
        windows[(slot, region)] = (windows[(slot, region)][0], new_hi)
        kids = tree.children[region]
        if not kids:
            return
        shortfall = new_hi - sum(windows[(slot, c)][1] for c in kids)
        for c in kids:
            if shortfall <= 0:
                break
            chi = windows[(slot, c)][1]
            add = min(shortfall, total - chi)
            if add > 0:
                push_hi(slot, c, chi + add)
                shortfall -= add

    root = tree.root
    root_lo = sum(windows[(slot, root)][0] for slot in range(n_slots))
    root_hi = sum(windows[(slot, root)][1] for slot in range(n_slots))
    if total < root_lo:
        deficit = root_lo - total
        for slot in range(n_slots):
            if deficit <= 0:
                break
            lo = windows[(slot, root)][0]
            cut = min(deficit, lo)
            if cut > 0:
                push_lo(slot, root, lo - cut)
                deficit -= cut
    elif total > root_hi:
        surplus = total - root_hi
        for slot in range(n_slots):
            if surplus <= 0:
                break
            hi = windows[(slot, root)][1]
            add = min(surplus, total - hi)
            if add > 0:
                push_hi(slot, root, hi + add)
                surplus -= add


def build_dp_tree(
    h: GroupSizeHierarchy, windows: DomainPolicy | None = None
) -> DpTree:
    """Build the size-indexed DP tree for a hierarchy.

    ``windows=None`` uses full [0, G] windows for every node. Windows are
    widened or shrunk by the feasibility repair, never rejected.
    """
    policy = windows or DomainPolicy.full()
    total = h.total_groups
    win: dict[tuple[int, str], Window] = {}
    for slot in range(h.n_sizes):
        for r in h.tree.nodes:
            win[(slot, r)] = policy.window(int(h.counts[r][slot]), total)
    _repair_tree_windows(h.tree, h.n_sizes, total, win)
    return DpTree(h, win)


@dataclass(frozen=True)
class ChainNode:
    slot: int
    region: str
    level: int  # DP-tree level: region level + 1
    c: int  # cumulative count over same-level predecessors
    prev_same_level: int | None


class Chain:
    """Post-order linearization of a DP tree (dummy root excluded).

    Node i's cumulative value sums the group counts of all nodes up to and
    including i that sit at the same DP-tree level. The edge to the
    successor is an equality edge whenever the traversal steps up a level
    (from a last child to its parent) and an ordering edge otherwise.
    """

    def __init__(self, nodes: Sequence[ChainNode], total: int):
        self.nodes = tuple(nodes)
        self.total = total

    def __len__(self) -> int:
        return len(self.nodes)

    def boundary(self, i: int) -> str:
        """Edge type between node i and node i + 1."""
        if self.nodes[i].level > self.nodes[i + 1].level:
            return "level_up"
        return "same_or_down"

    def boundaries(self) -> list[str]:
        return [self.boundary(i) for i in range(len(self) - 1)]


def build_chain(t: DpTree) -> Chain:
    """Linearize a DP tree into its post-order chain with cumulative counts."""
    h = t.hierarchy
    tree = h.tree
    running: dict[int, int] = {}
    last_at_level: dict[int, int] = {}
    nodes: list[ChainNode] = []
    for slot in range(h.n_sizes):
        for r in tree.postorder:
            lv = tree.level[r] + 1
            value = int(h.counts[r][slot])
            running[lv] = running.get(lv, 0) + value
            nodes.append(
                ChainNode(
                    slot=slot,
                    region=r,
                    level=lv,
                    c=running[lv],
                    prev_same_level=last_at_level.get(lv),
                )
            )
            last_at_level[lv] = len(nodes) - 1
    return Chain(nodes, h.total_groups)


def repair_chain_windows(
    boundaries: Sequence[str], windows: Sequence[Window], total: int
) -> list[Window]:
    """Widen chain windows until a monotone path hitting the total exists.

    ``boundaries[i]`` constrains nodes i and i + 1: "level_up" forces
    equality, anything else allows values to stay or grow. The last node is
    pinned to ``total``. Windows only ever grow (within [0, total]), and the
    passes repeat until stable, so the result is deterministic.
    """
    win = [(int(lo), int(hi)) for lo, hi in windows]
    n = len(win)
    if n == 0:
        return win
    for i, (lo, hi) in enumerate(win):
        if lo > hi:
            raise ValueError(f"window {i} is empty: {(lo, hi)}")

    changed = True
    while changed:
        changed = False
        # forward pass: reachable interval per node
        rlo, rhi = win[0]
        for i in range(1, n):
            lo, hi = win[i]
            if boundaries[i - 1] == "level_up":
                if hi < rlo:
                    win[i] = (lo, rlo)
                    hi = rlo
                    changed = True
                elif lo > rhi:
                    win[i] = (rhi, hi)
                    lo = rhi
                    changed = True
                rlo, rhi = max(lo, rlo), min(hi, rhi)
            else:
                if hi < rlo:
                    win[i] = (lo, rlo)
                    hi = rlo
                    changed = True
                rlo, rhi = max(lo, rlo), hi
        # backward pass: admissible interval given the pinned total
        lo, hi = win[n - 1]
        if not (lo <= total <= hi):
            win[n - 1] = (min(lo, total), max(hi, total))
            changed = True
        blo, bhi = total, total
        for i in range(n - 2, -1, -1):
            lo, hi = win[i]
            if boundaries[i] == "level_up":
                if hi < blo:
                    win[i] = (lo, blo)
                    hi = blo
                    changed = True
                elif lo > bhi:
                    win[i] = (bhi, hi)
                    lo = bhi
                    changed = True
                blo, bhi = max(lo, blo), min(hi, bhi)
            else:
                if lo > bhi:
                    win[i] = (bhi, hi)
                    lo = bhi
                    changed = True
                blo, bhi = lo, min(hi, bhi)

    # verify: simulate the DP's domain trimming and require the pinned total
    rlo, rhi = win[0]
    for i in range(1, n):
        lo, hi = win[i]
        if boundaries[i - 1] == "level_up":
            rlo, rhi = max(lo, rlo), min(hi, rhi)
        else:
            rlo, rhi = max(lo, rlo), hi
        if rlo > rhi:
            raise RuntimeError(f"chain window repair left node {i} infeasible")
    if not (rlo <= total <= rhi):
        raise RuntimeError("chain window repair failed to make the total reachable")
    return win
