"""Record CSV input and hierarchy JSON round-trip."""

import csv
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .hierarchy import GroupSizeHierarchy, RegionTree, Role, validate_pgsr

__all__ = [
    "read_records_csv",
    "hierarchy_to_json",
    "hierarchy_from_json",
    "load_hierarchy",
    "dump_hierarchy",
]

RECORD_FIELDS = ("user", "unit", "region", "quantity")


def read_records_csv(path: str | Path) -> list[tuple[str, str, str, int]]:
    """Read ``user,unit,region,quantity`` records (UTF-8, one per line)."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not set(RECORD_FIELDS).issubset(reader.fieldnames):
            raise ValueError(
                f"record CSV must have header {','.join(RECORD_FIELDS)}, got {reader.fieldnames}"
            )
        return [
            (row["user"], row["unit"], row["region"], int(row["quantity"]))
            for row in reader
        ]


def hierarchy_to_json(h: GroupSizeHierarchy, extra: Mapping | None = None) -> dict:
    data = {
        "levels": h.tree.levels,
        "N": h.n_sizes,
        "G": h.total_groups,
        "regions": [
            {
                "id": r,
                "parent": h.tree.parent.get(r),
                "counts": [int(v) for v in h.counts[r]],
            }
            for r in h.tree.nodes
        ],
    }
    if extra:
        data.update(extra)
    return data


def dump_hierarchy(h: GroupSizeHierarchy, path: str | Path, extra: Mapping | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(hierarchy_to_json(h, extra), f, indent=1)
        f.write("\n")


def hierarchy_from_json(data: Mapping, role: Role = "exact", check: bool = True) -> GroupSizeHierarchy:
    """Build a hierarchy from the JSON schema.

    Regions keep file order (which fixes children order). Internal regions
    may omit ``counts``, in which case they are derived from their children.
    With ``check`` set, exact and post-processed hierarchies must satisfy
    all release conditions.
    """
    try:
        regions = data["regions"]
        levels = int(data["levels"])
        n_sizes = int(data["N"])
        total = int(data["G"])
    except KeyError as e:
        raise ValueError(f"hierarchy JSON missing key {e}") from None

    parents = {entry["id"]: entry.get("parent") for entry in regions}
    tree = RegionTree(parents)
    if tree.levels != levels:
        raise ValueError(f"JSON says {levels} levels but the tree has {tree.levels}")

    counts: dict[str, np.ndarray] = {}
    for entry in regions:
        if entry.get("counts") is not None:
            vec = np.asarray(entry["counts"], dtype=np.int64)
            if len(vec) != n_sizes:
                raise ValueError(
                    f"region {entry['id']!r} has {len(vec)} counts, expected {n_sizes}"
                )
            counts[entry["id"]] = vec
    for r in tree.postorder:
        if r in counts:
            continue
        kids = tree.children[r]
        if not kids:
            raise ValueError(f"leaf region {r!r} has no counts")
        counts[r] = np.sum([counts[c] for c in kids], axis=0)

    h = GroupSizeHierarchy(tree, counts, total, role)
    if check and role in ("exact", "post-processed"):
        report = validate_pgsr(h)
        if not report.ok:
            raise ValueError(f"hierarchy violates release conditions: {report}")
    return h


def load_hierarchy(path: str | Path, role: Role = "exact", check: bool = True) -> GroupSizeHierarchy:
    with open(path, encoding="utf-8") as f:
        return hierarchy_from_json(json.load(f), role, check)
