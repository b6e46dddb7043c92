"""Convex piecewise-linear cost tables over integer domains.

A cost table maps each candidate released value in a contiguous integer
window to the optimal squared-deviation cost of the structure beneath it.
Tables built from squared deviations are convex, and convexity survives both
combination steps used by the release mechanisms:

* ``table_merge`` computes the exact min-plus combination of children tables
  under a fixed parent sum. Because each child is convex, the optimal way to
  move the sum away from the children's joint minimizer is to spend unit
  increments on the currently cheapest child slope, so the combined table is
  the running sum of the globally slope-sorted increments (one stable sort,
  then linear walks).
* ``chain_step`` advances a running table along a chain node: an equality
  boundary adds the new deviation on the intersected window, an ordering
  boundary first replaces the table by its running minimum (a clip at the
  argmin, by convexity).

Costs are exact integers throughout: squared deviations of integers, summed;
no floating-point comparisons are involved in sorts or argmins.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "CostTable",
    "MergeTrace",
    "OpCounter",
    "leaf_table",
    "table_merge",
    "add_deviation",
    "reconstruct_assignment",
    "chain_step",
    "argmin",
]

Window = tuple[int, int]
Boundary = Literal["same_or_down", "level_up"]


@dataclass(frozen=True)
class CostTable:
    """Costs over the window [lo, lo + len(costs) - 1]; entry k is the cost
    of releasing value lo + k. Convexity (non-decreasing slopes) is checked
    on every construction."""

    lo: int
    costs: np.ndarray

    def __post_init__(self) -> None:
        costs = np.asarray(self.costs, dtype=np.int64)
        object.__setattr__(self, "costs", costs)
        if costs.ndim != 1 or len(costs) == 0:
            raise ValueError("cost table must be a non-empty vector")
        if int(costs.min()) < 0:
            raise ValueError("cost table entries must be non-negative")
        if len(costs) > 2 and np.any(np.diff(np.diff(costs)) < 0):
            raise ValueError("cost table is not convex piecewise-linear")

    @property
    def hi(self) -> int:
        return self.lo + len(self.costs) - 1

    def __len__(self) -> int:
        return len(self.costs)

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def cost(self, v: int) -> int:
        if not self.lo <= v <= self.hi:
            raise ValueError(f"value {v} outside table window [{self.lo}, {self.hi}]")
        return int(self.costs[v - self.lo])

    def to_csv(self, path: str | Path) -> None:
        """Debug dump as ``value,cost`` lines (handy for golden checks)."""
        with open(path, "w", encoding="utf-8") as f:
            f.write("value,cost\n")
            for v, c in zip(self.values(), self.costs):
                f.write(f"{int(v)},{int(c)}\n")


@dataclass(frozen=True)
class MergeTrace:
    """Everything needed to rebuild an optimal child assignment for any
    parent value: the per-child minimizers plus the slope-sorted owner
    sequences for unit moves above and below the joint minimizer."""

    lo: int
    hi: int
    child_min_values: np.ndarray
    min_total: int
    up_owners: np.ndarray
    down_owners: np.ndarray


@dataclass
class OpCounter:
    """Tally of table entries actually processed, for complexity checks."""

    merge_sorted: int = 0
    merge_cells: int = 0
    chain_cells: int = 0

    def reset(self) -> None:
        self.merge_sorted = self.merge_cells = self.chain_cells = 0


def argmin(t: CostTable) -> tuple[int, int]:
    """Smallest value attaining the minimum cost (plateaus break low)."""
    i = int(np.argmin(t.costs))
    return t.lo + i, int(t.costs[i])


def leaf_table(noisy: int, domain: Window) -> CostTable:
    """Squared deviation from the observed value over the window."""
    lo, hi = int(domain[0]), int(domain[1])
    if lo > hi:
        raise ValueError(f"empty leaf domain {domain}")
    vals = np.arange(lo, hi + 1, dtype=np.int64)
    d = vals - int(noisy)
    return CostTable(lo, d * d)


def add_deviation(phi: CostTable, noisy: int) -> CostTable:
    """Add the node's own squared deviation to a children-combination table."""
    d = phi.values() - int(noisy)
    return CostTable(phi.lo, phi.costs + d * d)


def table_merge(
    children: Sequence[CostTable],
    domain: Window,
    counter: OpCounter | None = None,
) -> tuple[CostTable, MergeTrace]:
    """Exact min-plus combination of children tables restricted to a window.

    The result maps each parent value v in the window to the cheapest total
    child cost over assignments that sum to v, and is again convex. The
    window must lie inside the children's sum interval (the feasibility
    repair guarantees this); anything else is a caller bug and raises.

    Unit moves are ordered by (slope, child order, value) via one stable
    sort per direction, so ties resolve deterministically.
    """
    if not children:
        raise ValueError("table_merge needs at least one child table")
    lo, hi = int(domain[0]), int(domain[1])
    sum_lo = sum(t.lo for t in children)
    sum_hi = sum(t.hi for t in children)
    if lo > hi or lo < sum_lo or hi > sum_hi:
        raise ValueError(
            f"merge domain [{lo}, {hi}] not inside reachable sums [{sum_lo}, {sum_hi}]"
        )

    child_min = np.empty(len(children), dtype=np.int64)
    base = 0
    up_parts, up_own, down_parts, down_own = [], [], [], []
    for ci, t in enumerate(children):
        i0 = int(np.argmin(t.costs))
        child_min[ci] = t.lo + i0
        base += int(t.costs[i0])
        up = np.diff(t.costs[i0:])
        if len(up):
            up_parts.append(up)
            up_own.append(np.full(len(up), ci, dtype=np.int32))
        down = -np.diff(t.costs[: i0 + 1])[::-1]
        if len(down):
            down_parts.append(down)
            down_own.append(np.full(len(down), ci, dtype=np.int32))

    def sorted_moves(parts, owners):
        if not parts:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int32)
        slopes = np.concatenate(parts)
        owner = np.concatenate(owners)
        order = np.argsort(slopes, kind="stable")
        return slopes[order], owner[order]

    up_slopes, up_owners = sorted_moves(up_parts, up_own)
    down_deltas, down_owners = sorted_moves(down_parts, down_own)
    up_cum = np.concatenate(([0], np.cumsum(up_slopes)))
    down_cum = np.concatenate(([0], np.cumsum(down_deltas)))

    min_total = int(child_min.sum())
    ks = np.arange(lo, hi + 1, dtype=np.int64) - min_total
    costs = base + up_cum[np.clip(ks, 0, None)] + down_cum[np.clip(-ks, 0, None)]

    if counter is not None:
        counter.merge_sorted += len(up_slopes) + len(down_deltas)
        counter.merge_cells += hi - lo + 1

    child_min.setflags(write=False)
    trace = MergeTrace(lo, hi, child_min, min_total, up_owners, down_owners)
    return CostTable(lo, costs), trace


def reconstruct_assignment(trace: MergeTrace, v: int) -> np.ndarray:
    """Optimal child values summing to v, recovered from a merge trace."""
    if not trace.lo <= v <= trace.hi:
        raise ValueError(f"value {v} outside merged window [{trace.lo}, {trace.hi}]")
    assignment = trace.child_min_values.copy()
    k = v - trace.min_total
    n = len(assignment)
    if k > 0:
        assignment += np.bincount(trace.up_owners[:k], minlength=n)
    elif k < 0:
        assignment -= np.bincount(trace.down_owners[:-k], minlength=n)
    return assignment


def chain_step(
    prev: CostTable,
    noisy: int,
    boundary: Boundary,
    domain: Window,
    counter: OpCounter | None = None,
) -> CostTable:
    """Advance the chain recurrence one node.

    level_up: the new node must equal its predecessor, so the new table is
    the previous one (on the intersected window) plus the new deviation.
    same_or_down: the predecessor may only stay or grow, so the carried cost
    is the previous table's running minimum, which by convexity is the table
    clipped at its argmin. Values with no admissible predecessor fall out of
    the window.
    """
    lo, hi = int(domain[0]), int(domain[1])
    noisy = int(noisy)
    if boundary == "level_up":
        nlo, nhi = max(lo, prev.lo), min(hi, prev.hi)
        if nlo > nhi:
            raise ValueError(
                f"equality boundary leaves empty window: [{lo}, {hi}] vs prev [{prev.lo}, {prev.hi}]"
            )
        carried = prev.costs[nlo - prev.lo : nhi - prev.lo + 1]
    elif boundary == "same_or_down":
        nlo, nhi = max(lo, prev.lo), hi
        if nlo > nhi:
            raise ValueError(
                f"ordering boundary leaves empty window: [{lo}, {hi}] vs prev lo {prev.lo}"
            )
        i0 = int(np.argmin(prev.costs))
        idx = np.clip(np.arange(nlo, nhi + 1) - prev.lo, None, i0)
        carried = prev.costs[idx]
    else:
        raise ValueError(f"unknown boundary {boundary!r}")

    vals = np.arange(nlo, nhi + 1, dtype=np.int64)
    d = vals - noisy
    if counter is not None:
        counter.chain_cells += nhi - nlo + 1
    return CostTable(nlo, carried + d * d)
