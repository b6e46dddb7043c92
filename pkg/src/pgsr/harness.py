"""Dataset generators, error metrics and the experiment runner.

The runner reproduces the evaluation protocol at desk scale: for each
mechanism, privacy budget and trial it releases a hierarchy, then records
per-level L1 errors, constraint-violation counts and phase timings as
long-format CSV rows (mean/std summary rows appended), optionally rendering
figures next to the CSV.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .hierarchy import DomainPolicy, GroupSizeHierarchy, RegionTree
from .mechanisms import MECHANISMS
from .noise import NoiseSpec, derive_seed

__all__ = [
    "ExperimentConfig",
    "l1_error",
    "synth_census",
    "synth_taxi",
    "dataset_from_config",
    "run_experiment",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = (
    "mechanism",
    "epsilon",
    "trial",
    "level",
    "l1",
    "cv",
    "noise_s",
    "post_process_s",
)


def l1_error(
    original: GroupSizeHierarchy, released: GroupSizeHierarchy
) -> tuple[int, dict[int, int]]:
    """Total and per-level L1 distance between two hierarchies' counts."""
    if (
        set(original.tree.nodes) != set(released.tree.nodes)
        or original.n_sizes != released.n_sizes
    ):
        raise ValueError("hierarchies have different regions or size axes")
    by_level = {lv: 0 for lv in range(1, original.tree.levels + 1)}
    for r in original.tree.nodes:
        diff = int(np.abs(original.counts[r] - released.counts[r]).sum())
        by_level[original.tree.level[r]] += diff
    return sum(by_level.values()), by_level


def _three_level_tree(leaves: int, branches: int, prefix: tuple[str, str, str]) -> RegionTree:
    root, mid, leaf = prefix
    parents: dict[str, str | None] = {root: None}
    mids = [f"{mid}{i + 1:02d}" for i in range(branches)]
    for m in mids:
        parents[m] = root
    for i in range(leaves):
        parents[f"{leaf}{i + 1:03d}"] = mids[i % branches]
    return RegionTree(parents)


def _hierarchy_from_leaf_sizes(
    tree: RegionTree, leaf_of_group: np.ndarray, size_of_group: np.ndarray, n_sizes: int
) -> GroupSizeHierarchy:
    leaves = tree.leaves
    flat = leaf_of_group * n_sizes + (size_of_group - 1)
    hist = np.bincount(flat, minlength=len(leaves) * n_sizes).reshape(
        len(leaves), n_sizes
    )
    counts = {leaf: hist[i].astype(np.int64) for i, leaf in enumerate(leaves)}
    for r in tree.postorder:
        if tree.children[r]:
            counts[r] = np.sum([counts[c] for c in tree.children[r]], axis=0)
    return GroupSizeHierarchy(tree, counts, int(len(size_of_group)), "exact")


def synth_census(
    leaves: int,
    individuals: int,
    n_sizes: int,
    outliers: int = 50,
    seed: int = 0,
    states: int | None = None,
) -> GroupSizeHierarchy:
    """Census-like 3-level hierarchy (nation / states / counties).

    Group sizes follow a household-style distribution over sizes 1..7 whose
    tail beyond 7 decays geometrically with the ratio of the size-7 to
    size-6 mass, truncated at ``n_sizes``; ``outliers`` extra groups get
    sizes uniform in [10, n_sizes]. Groups are drawn until the individual
    count is reached and placed on uniform random leaves. Deterministic per
    seed.
    """
    if leaves < 1:
        raise ValueError("need at least one leaf region")
    if n_sizes < 1:
        raise ValueError("need at least one group size")
    rng = np.random.default_rng(seed)
    base = np.array([0.28, 0.34, 0.16, 0.13, 0.06, 0.02, 0.01])
    probs = np.zeros(n_sizes)
    k = min(7, n_sizes)
    probs[:k] = base[:k]
    if n_sizes > 7:
        ratio = base[6] / base[5]
        probs[7:] = base[6] * ratio ** np.arange(1, n_sizes - 6)
    probs /= probs.sum()
    mean_size = float(probs @ np.arange(1, n_sizes + 1))

    sizes = np.zeros(0, dtype=np.int64)
    people = 0
    while people < individuals:
        need = max(int((individuals - people) / mean_size * 1.2) + 16, 16)
        batch = rng.choice(np.arange(1, n_sizes + 1), size=need, p=probs)
        sizes = np.concatenate([sizes, batch])
        people = int(sizes.sum())
    cum = np.cumsum(sizes)
    cut = int(np.searchsorted(cum, individuals)) + 1
    sizes = sizes[:cut]

    if outliers:
        out_lo = min(10, n_sizes)
        out_sizes = rng.integers(out_lo, n_sizes + 1, size=outliers)
        sizes = np.concatenate([sizes, out_sizes])

    leaf_of_group = rng.integers(0, leaves, size=len(sizes))
    branches = states if states is not None else max(1, math.isqrt(leaves))
    tree = _three_level_tree(leaves, min(branches, leaves), ("nation", "state", "county"))
    return _hierarchy_from_leaf_sizes(tree, leaf_of_group, sizes, n_sizes)


def synth_taxi(
    leaves: int,
    groups: int,
    n_sizes: int,
    mu: float = 1.5,
    sigma: float = 1.0,
    seed: int = 0,
    boroughs: int = 6,
) -> GroupSizeHierarchy:
    """Taxi-like 3-level hierarchy (city / boroughs / zones): one group per
    vehicle, sizes from a rounded log-normal clipped to [1, n_sizes]."""
    if leaves < 1 or groups < 1 or n_sizes < 1:
        raise ValueError("leaves, groups and n_sizes must be positive")
    rng = np.random.default_rng(seed)
    sizes = np.clip(
        np.rint(rng.lognormal(mu, sigma, size=groups)).astype(np.int64), 1, n_sizes
    )
    leaf_of_group = rng.integers(0, leaves, size=groups)
    tree = _three_level_tree(leaves, min(boroughs, leaves), ("city", "borough", "zone"))
    return _hierarchy_from_leaf_sizes(tree, leaf_of_group, sizes, n_sizes)


@dataclass
class ExperimentConfig:
    """Mirrors the run-config JSON (see README for an example)."""

    dataset: dict
    mechanisms: list[str]
    epsilons: list[float]
    trials: int
    seed: int
    output: str
    delta: int | None = None
    full_windows: bool = False
    figures: bool = True

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.epsilons:
            raise ValueError("epsilons must be non-empty")
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        unknown = [m for m in self.mechanisms if m not in MECHANISMS]
        if unknown:
            raise ValueError(
                f"unknown mechanisms {unknown}; valid names: {sorted(MECHANISMS)}"
            )

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def dataset_from_config(spec: Mapping) -> GroupSizeHierarchy:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "census":
        return synth_census(**spec)
    if kind == "taxi":
        return synth_taxi(**spec)
    if kind == "file":
        from .io import load_hierarchy

        return load_hierarchy(spec["path"], role="exact")
    raise ValueError(f"dataset kind must be census, taxi or file, got {kind!r}")


def _window_policy(cfg: ExperimentConfig) -> DomainPolicy | None:
    if cfg.full_windows:
        return DomainPolicy.full()
    if cfg.delta is not None:
        return DomainPolicy.around(cfg.delta)
    return None


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Run the configured grid and write the result CSV (plus figures).

    One row per (mechanism, epsilon, trial, level) and per-trial totals,
    followed by mean/std summary rows. All columns except the wall-clock
    timing columns are deterministic given the config seed.
    """
    h = dataset_from_config(cfg.dataset)
    policy = _window_policy(cfg)
    level_labels = [str(lv) for lv in range(1, h.tree.levels + 1)] + ["total"]

    rows: list[dict] = []
    for name in cfg.mechanisms:
        mechanism = MECHANISMS[name]
        for eps in cfg.epsilons:
            for trial in range(cfg.trials):
                spec = NoiseSpec(
                    epsilon=float(eps),
                    levels=h.tree.levels,
                    seed=derive_seed(cfg.seed, name, repr(float(eps)), trial),
                )
                result = mechanism(h, spec, windows=policy)
                total_l1, l1_by_level = l1_error(h, result.released)
                cv_by_level = result.report.violations_by_level
                for lv in range(1, h.tree.levels + 1):
                    rows.append(
                        _row(name, eps, trial, str(lv), l1_by_level[lv],
                             cv_by_level.get(lv, 0), result.timings)
                    )
                rows.append(
                    _row(name, eps, trial, "total", total_l1,
                         result.report.consistency_violations, result.timings)
                )

    summary: list[dict] = []
    for name in cfg.mechanisms:
        for eps in cfg.epsilons:
            for label in level_labels:
                sel = [
                    r for r in rows
                    if r["mechanism"] == name
                    and r["epsilon"] == repr(float(eps))
                    and r["level"] == label
                ]
                l1s = np.array([float(r["l1"]) for r in sel])
                cvs = np.array([float(r["cv"]) for r in sel])
                posts = np.array([float(r["post_process_s"]) for r in sel])
                noises = np.array([float(r["noise_s"]) for r in sel])
                for stat, reduce in (("mean", np.mean), ("std", np.std)):
                    summary.append(
                        {
                            "mechanism": name,
                            "epsilon": repr(float(eps)),
                            "trial": stat,
                            "level": label,
                            "l1": f"{reduce(l1s):.6g}",
                            "cv": f"{reduce(cvs):.6g}",
                            "noise_s": f"{reduce(noises):.6f}",
                            "post_process_s": f"{reduce(posts):.6f}",
                        }
                    )
    rows.extend(summary)

    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    if cfg.figures:
        from . import plots

        plots.render_figures(rows, out)
    return rows


def _row(name, eps, trial, level, l1, cv, timings) -> dict:
    return {
        "mechanism": name,
        "epsilon": repr(float(eps)),
        "trial": trial,
        "level": level,
        "l1": int(l1),
        "cv": int(cv),
        "noise_s": f"{timings['noise_s']:.6f}",
        "post_process_s": f"{timings['post_process_s']:.6f}",
    }
