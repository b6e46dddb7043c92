"""End-to-end release mechanisms and their brute-force verification oracles.

Three mechanisms produce consistent, non-negative, integral group-size
hierarchies whose levels sum to the public group total:

* ``mech_h_dp``   - noise on raw counts (scale 2L/eps), then the exact tree
  DP over cost tables: bottom-up merge per size slot, one final merge pinned
  to the public total, top-down assignment.
* ``mech_c_dp``   - noise on per-region cumulative counts (scale L/eps),
  per-region isotonic repair + rounding back to counts, then the tree DP on
  the repaired counts. Approximate by construction: the local repair does
  not solve the global cumulative program.
* ``mech_c_ch``   - noise on the post-order chain's cumulative values
  (scale L/eps), then the exact chain DP with equality boundaries at level
  steps and ordering boundaries elsewhere.

Each mechanism accepts either an exact hierarchy (noise drawn internally
from the spec) or a noisy one (noise injected by the caller, used in tests
and for reproducing worked examples). ``oracle_tree`` and ``oracle_chain``
recompute the optima by exhaustive enumeration and exist for verification
only.
"""

import math
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cpwl import (
    CostTable,
    MergeTrace,
    OpCounter,
    add_deviation,
    argmin,
    chain_step,
    leaf_table,
    reconstruct_assignment,
    table_merge,
)
from .hierarchy import (
    Chain,
    DomainPolicy,
    GroupSizeHierarchy,
    PgsrReport,
    Window,
    build_chain,
    build_dp_tree,
    cumulate,
    decumulate,
    repair_chain_windows,
    validate_pgsr,
)
from .noise import NoiseSpec, noisy_chain, noisy_cumulative, noisy_hierarchy

__all__ = [
    "MechanismResult",
    "mech_h_dp",
    "mech_c_dp",
    "mech_c_ch",
    "pava_isotonic",
    "repair_cumulative",
    "oracle_tree",
    "oracle_chain",
    "MECHANISMS",
]


@dataclass
class MechanismResult:
    """A released hierarchy plus its bookkeeping.

    ``objective`` is the squared deviation from the mechanism's own noisy
    input, measured in the space the mechanism optimizes (count space for
    the tree DP, cumulative space for the cumulative mechanisms); the
    per-space values are also recorded separately when both are meaningful.
    """

    released: GroupSizeHierarchy
    objective: int
    objective_counts: int | None
    objective_cumulative: int | None
    budget: NoiseSpec
    timings: dict[str, float]
    report: PgsrReport


def _require_input_role(h: GroupSizeHierarchy) -> None:
    if h.role not in ("exact", "noisy"):
        raise ValueError(f"mechanism input must be exact or noisy, got {h.role!r}")


def _finalize(h, counts, objective, obj_counts, obj_cum, spec, timings):
    released = h.with_counts(counts, "post-processed")
    report = validate_pgsr(released)
    if not report.ok:
        raise RuntimeError(f"mechanism produced an invalid release: {report}")
    return MechanismResult(
        released=released,
        objective=int(objective),
        objective_counts=None if obj_counts is None else int(obj_counts),
        objective_cumulative=None if obj_cum is None else int(obj_cum),
        budget=spec,
        timings=timings,
        report=report,
    )


def _tree_post_process(
    noisy: GroupSizeHierarchy,
    policy: DomainPolicy,
    counter: OpCounter | None = None,
) -> tuple[dict[str, np.ndarray], int]:
    """Exact minimizer of the consistency-constrained squared-deviation
    program over the (repaired) domain windows. Returns released counts and
    the optimal objective."""
    dp = build_dp_tree(noisy, policy)
    tree = noisy.tree
    n_slots = noisy.n_sizes
    total = noisy.total_groups

    root_tables = []
    traces: dict[tuple[int, str], MergeTrace] = {}
    for slot in range(n_slots):
        tables: dict[str, CostTable] = {}
        for r in tree.postorder:
            w = dp.window(slot, r)
            kids = tree.children[r]
            if not kids:
                tables[r] = leaf_table(int(noisy.counts[r][slot]), w)
            else:
                phi, trace = table_merge([tables[c] for c in kids], w, counter)
                traces[(slot, r)] = trace
                tables[r] = add_deviation(phi, int(noisy.counts[r][slot]))
        root_tables.append(tables[tree.root])

    phi_top, top_trace = table_merge(root_tables, (total, total), counter)
    objective = int(phi_top.costs[0])

    counts = {r: np.zeros(n_slots, dtype=np.int64) for r in tree.nodes}
    slot_values = reconstruct_assignment(top_trace, total)
    stack = [(slot, tree.root, int(v)) for slot, v in enumerate(slot_values)]
    while stack:
        slot, region, value = stack.pop()
        counts[region][slot] = value
        kids = tree.children[region]
        if kids:
            xs = reconstruct_assignment(traces[(slot, region)], value)
            stack.extend((slot, c, int(x)) for c, x in zip(kids, xs))
    return counts, objective


def mech_h_dp(
    h: GroupSizeHierarchy,
    spec: NoiseSpec,
    windows: DomainPolicy | None = None,
    counter: OpCounter | None = None,
) -> MechanismResult:
    """Noise on raw counts, then the exact tree DP post-process."""
    _require_input_role(h)
    spec = spec.for_variant("plain")
    t0 = time.perf_counter()
    noisy = noisy_hierarchy(h, spec, "plain") if h.role == "exact" else h
    t1 = time.perf_counter()
    policy = windows or DomainPolicy.for_scale(spec.scale)
    counts, objective = _tree_post_process(noisy, policy, counter)
    t2 = time.perf_counter()
    return _finalize(
        h, counts, objective, objective, None, spec,
        {"noise_s": t1 - t0, "post_process_s": t2 - t1},
    )


def pava_isotonic(
    noisy: Sequence[float] | np.ndarray, lower: float = 0.0, upper: float | None = None
) -> np.ndarray:
    """Exact least-squares non-decreasing projection, clamped to bounds.

    Pool-adjacent-violators: scan left to right, merging each new point into
    the preceding block while the running means decrease. Clamping the
    unconstrained monotone solution into [lower, upper] afterwards preserves
    optimality for this objective.
    """
    if upper is not None and upper < lower:
        raise ValueError(f"upper bound {upper} below lower bound {lower}")
    y = np.asarray(noisy, dtype=float)
    sums: list[float] = []
    counts: list[int] = []
    for v in y:
        sums.append(float(v))
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] >= sums[-1] * counts[-2]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    out = np.repeat([s / c for s, c in zip(sums, counts)], counts)
    return np.clip(out, lower, upper)


def repair_cumulative(cvec: Sequence[int] | np.ndarray, total: int) -> np.ndarray:
    """Project a noisy cumulative vector into a valid count vector: isotonic
    repair in [0, total], round half up (monotone, so differences stay
    non-negative), then decumulate."""
    fitted = pava_isotonic(cvec, 0.0, float(total))
    rounded = np.floor(fitted + 0.5).astype(np.int64)
    rounded = np.maximum.accumulate(rounded)
    return decumulate(rounded)


def mech_c_dp(
    h: GroupSizeHierarchy,
    spec: NoiseSpec,
    windows: DomainPolicy | None = None,
    counter: OpCounter | None = None,
) -> MechanismResult:
    """Noise on cumulative counts, per-region isotonic repair, then the tree
    DP on the repaired counts (windows centered at the repaired values)."""
    _require_input_role(h)
    spec = spec.for_variant("cumulative")
    total = h.total_groups
    t0 = time.perf_counter()
    if h.role == "exact":
        cvecs = noisy_cumulative(h, spec)
    else:
        cvecs = {r: cumulate(h.counts[r]) for r in h.tree.nodes}
    t1 = time.perf_counter()
    nbar = {r: repair_cumulative(cvecs[r], total) for r in h.tree.nodes}
    nbar_h = h.with_counts(nbar, "noisy")
    policy = windows or DomainPolicy.for_scale(spec.scale)
    counts, tree_objective = _tree_post_process(nbar_h, policy, counter)
    t2 = time.perf_counter()
    obj_cum = sum(
        int(((cumulate(counts[r]) - cvecs[r]) ** 2).sum()) for r in h.tree.nodes
    )
    return _finalize(
        h, counts, obj_cum, tree_objective, obj_cum, spec,
        {"noise_s": t1 - t0, "post_process_s": t2 - t1},
    )


def mech_c_ch(
    h: GroupSizeHierarchy,
    spec: NoiseSpec,
    windows: DomainPolicy | None = None,
    level_multiplier: float | Mapping[int, float] = 1.0,
    counter: OpCounter | None = None,
) -> MechanismResult:
    """Noise on the chain's cumulative values, then the exact chain DP.

    With a noisy input hierarchy the chain's cumulative values are taken as
    the injected noisy measurements (they are the cumulative transform of
    the injected counts)."""
    _require_input_role(h)
    spec = spec.for_variant("chain")
    total = h.total_groups
    chain = build_chain(build_dp_tree(h))
    n = len(chain)

    t0 = time.perf_counter()
    if h.role == "exact":
        ctilde = noisy_chain(chain, spec, level_multiplier)
    else:
        ctilde = np.array([node.c for node in chain.nodes], dtype=np.int64)
    t1 = time.perf_counter()

    policy = windows or DomainPolicy.for_scale(spec.scale)
    bounds = chain.boundaries()
    win = repair_chain_windows(
        bounds, [policy.window(int(c), total) for c in ctilde], total
    )

    table = leaf_table(int(ctilde[0]), win[0])
    argmins = [argmin(table)[0]]
    for i in range(1, n):
        table = chain_step(table, int(ctilde[i]), bounds[i - 1], win[i], counter)
        argmins.append(argmin(table)[0])
    objective = table.cost(total)

    chat = np.empty(n, dtype=np.int64)
    chat[-1] = total
    for i in range(n - 2, -1, -1):
        chat[i] = chat[i + 1] if bounds[i] == "level_up" else min(argmins[i], chat[i + 1])

    counts = {r: np.zeros(h.n_sizes, dtype=np.int64) for r in h.tree.nodes}
    last_c: dict[int, int] = {}
    last_noisy: dict[int, int] = {}
    obj_counts = 0
    for i, node in enumerate(chain.nodes):
        released_value = int(chat[i]) - last_c.get(node.level, 0)
        noisy_value = int(ctilde[i]) - last_noisy.get(node.level, 0)
        counts[node.region][node.slot] = released_value
        obj_counts += (released_value - noisy_value) ** 2
        last_c[node.level] = int(chat[i])
        last_noisy[node.level] = int(ctilde[i])
    t2 = time.perf_counter()

    return _finalize(
        h, counts, objective, obj_counts, objective, spec,
        {"noise_s": t1 - t0, "post_process_s": t2 - t1},
    )


MECHANISMS = {"h_dp": mech_h_dp, "c_dp": mech_c_dp, "c_ch": mech_c_ch}


def oracle_tree(
    noisy: GroupSizeHierarchy,
    windows: Mapping[tuple[int, str], Window],
    guard: int = 10**7,
) -> tuple[int, dict[tuple[int, str], int]]:
    """Exhaustive-enumeration optimum of the tree post-processing program.

    Enumerates every leaf assignment summing to the public total (leaf sums
    determine all internal values through consistency), checks all windows,
    and minimizes the total squared deviation. Test-only; refuses search
    spaces larger than ``guard``.
    """
    tree = noisy.tree
    n_slots = noisy.n_sizes
    total = noisy.total_groups
    slots = [(s, leaf) for s in range(n_slots) for leaf in tree.leaves]
    k = len(slots)
    estimate = math.comb(total + k - 1, k - 1) if k > 1 else 1
    if estimate > guard:
        raise ValueError(f"oracle search space ~{estimate} exceeds guard {guard}")

    lo = [windows[slot][0] for slot in slots]
    hi = [windows[slot][1] for slot in slots]
    suffix_lo = [0] * (k + 1)
    suffix_hi = [0] * (k + 1)
    for i in range(k - 1, -1, -1):
        suffix_lo[i] = suffix_lo[i + 1] + lo[i]
        suffix_hi[i] = suffix_hi[i + 1] + hi[i]

    internal = [r for r in tree.postorder if tree.children[r]]
    best_cost: int | None = None
    best_values: dict[tuple[int, str], int] = {}
    leaf_values = [0] * k

    def evaluate() -> None:
        nonlocal best_cost, best_values
        values: dict[tuple[int, str], int] = dict(zip(slots, leaf_values))
        cost = 0
        for (s, leaf), v in values.items():
            cost += (v - int(noisy.counts[leaf][s])) ** 2
        for s in range(n_slots):
            for r in internal:
                v = sum(values[(s, c)] for c in tree.children[r])
                wlo, whi = windows[(s, r)]
                if not wlo <= v <= whi:
                    return
                values[(s, r)] = v
                cost += (v - int(noisy.counts[r][s])) ** 2
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_values = values

    def rec(i: int, remaining: int) -> None:
        if i == k:
            if remaining == 0:
                evaluate()
            return
        vlo = max(lo[i], remaining - suffix_hi[i + 1])
        vhi = min(hi[i], remaining - suffix_lo[i + 1])
        for v in range(vlo, vhi + 1):
            leaf_values[i] = v
            rec(i + 1, remaining - v)

    rec(0, total)
    if best_cost is None:
        raise RuntimeError("oracle found no feasible assignment")
    return best_cost, best_values


def oracle_chain(
    boundaries: Sequence[str],
    noisy: Sequence[int] | np.ndarray,
    windows: Sequence[Window],
    total: int,
    guard: int = 10**7,
) -> tuple[int, list[int]]:
    """Exhaustive-enumeration optimum of the chain post-processing program:
    values within windows, non-decreasing across ordering boundaries, equal
    across level-up boundaries, last value pinned to the total. Test-only."""
    noisy = [int(v) for v in noisy]
    n = len(noisy)
    if len(windows) != n or len(boundaries) != n - 1:
        raise ValueError("boundaries/windows lengths do not match the chain")
    # values are non-decreasing along the whole chain and equality boundaries
    # pin their successor, so the search space is the number of monotone
    # sequences over the free nodes
    free = 1 + sum(1 for b in boundaries if b != "level_up")
    span = max(whi for _, whi in windows) - min(wlo for wlo, _ in windows)
    estimate = math.comb(free + span, span)
    if estimate > guard:
        raise ValueError(f"oracle search space ~{estimate} exceeds guard {guard}")

    best_cost: int | None = None
    best_vals: list[int] = []
    vals = [0] * n

    def rec(i: int, prev: int, cost: int) -> None:
        nonlocal best_cost, best_vals
        if best_cost is not None and cost >= best_cost:
            return
        if i == n:
            best_cost, best_vals = cost, vals.copy()
            return
        wlo, whi = windows[i]
        if i > 0 and boundaries[i - 1] == "level_up":
            candidates = range(prev, prev + 1) if wlo <= prev <= whi else range(0)
        else:
            start = max(wlo, prev) if i > 0 else wlo
            candidates = range(start, whi + 1)
        for v in candidates:
            if i == n - 1 and v != total:
                continue
            vals[i] = v
            rec(i + 1, v, cost + (v - noisy[i]) ** 2)

    rec(0, 0, 0)
    if best_cost is None:
        raise RuntimeError("oracle found no feasible chain")
    return best_cost, best_vals
