"""Double-geometric noise and privacy-budget bookkeeping.

All mechanisms perturb integer counts with two-sided geometric noise whose
scale is sensitivity * levels / epsilon: the per-level budget is epsilon / L
(parallel composition within a level, sequential across the L levels). Noise
draws are pure functions of (seed, variant, region, size slot), so results
do not depend on traversal order and parallel perturbation stays
reproducible.

No floating-point side-channel mitigations (snapping and friends) are
implemented; see the README.
"""

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Literal, Mapping

import numpy as np

from .hierarchy import Chain, GroupSizeHierarchy, cumulate

__all__ = [
    "NoiseSpec",
    "sample_double_geometric",
    "derive_seed",
    "node_rng",
    "noisy_hierarchy",
    "noisy_cumulative",
    "noisy_chain",
]

Variant = Literal["plain", "cumulative", "chain"]

#: query sensitivity by noise variant: raw group-size vectors move by 2 when
#: one individual joins or leaves a unit, cumulative vectors by 1.
SENSITIVITY = {"plain": 2, "cumulative": 1, "chain": 1}


@dataclass(frozen=True)
class NoiseSpec:
    """Privacy-accounting record: budget, hierarchy depth, query sensitivity
    and the RNG seed. ``scale`` is the derived per-draw noise scale."""

    epsilon: float
    levels: int
    sensitivity: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.levels < 1:
            raise ValueError(f"level count must be >= 1, got {self.levels}")
        if self.sensitivity not in (1, 2):
            raise ValueError(f"sensitivity must be 1 or 2, got {self.sensitivity}")

    @property
    def scale(self) -> float:
        return self.sensitivity * self.levels / self.epsilon

    def for_variant(self, variant: Variant) -> "NoiseSpec":
        return replace(self, sensitivity=SENSITIVITY[variant])


def sample_double_geometric(
    scale: float, stream: np.random.Generator, size: int | None = None
):
    """Sample integer noise with P(X = v) proportional to exp(-|v| / scale).

    Implemented as the difference of two geometric variates with success
    probability 1 - exp(-1 / scale), which has exactly the two-sided
    geometric law; everything stays in integer arithmetic.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    p = -math.expm1(-1.0 / scale)
    return stream.geometric(p, size) - stream.geometric(p, size)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of printable parts."""
    key = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def node_rng(seed: int, variant: str, region: str, slot: int) -> np.random.Generator:
    """Per-node RNG substream; identical inputs give identical streams."""
    return np.random.default_rng(derive_seed(seed, variant, region, slot))


def _draw(spec: NoiseSpec, variant: str, region: str, slot: int) -> int:
    stream = node_rng(spec.seed, variant, region, slot)
    return int(sample_double_geometric(spec.scale, stream))


def noisy_hierarchy(
    h: GroupSizeHierarchy,
    spec: NoiseSpec,
    variant: Variant = "plain",
    chain: Chain | None = None,
    level_multiplier: float | Mapping[int, float] = 1.0,
):
    """Perturb an exact hierarchy under the given variant.

    plain       -> noisy GroupSizeHierarchy (scale 2L/eps per entry)
    cumulative  -> {region: noisy cumulative vector} (scale L/eps)
    chain       -> noisy cumulative values along ``chain`` (scale L/eps,
                   optionally rescaled per DP-tree level; see README for the
                   caveat on this variant's privacy claim)
    """
    if h.role != "exact":
        raise ValueError(f"noise is applied to exact hierarchies, got role {h.role!r}")
    spec = spec.for_variant(variant)
    if variant == "plain":
        noisy = {
            r: h.counts[r] + np.array(
                [_draw(spec, "plain", r, s) for s in range(h.n_sizes)], dtype=np.int64
            )
            for r in h.tree.nodes
        }
        return h.with_counts(noisy, role="noisy")
    if variant == "cumulative":
        return noisy_cumulative(h, spec)
    if variant == "chain":
        if chain is None:
            raise ValueError("variant='chain' needs the chain argument")
        return noisy_chain(chain, spec, level_multiplier)
    raise ValueError(f"unknown variant {variant!r}")


def noisy_cumulative(h: GroupSizeHierarchy, spec: NoiseSpec) -> dict[str, np.ndarray]:
    """Noisy cumulative group-size vector per region, keyed by region id."""
    spec = spec.for_variant("cumulative")
    out = {}
    for r in h.tree.nodes:
        noise = np.array(
            [_draw(spec, "cumulative", r, s) for s in range(h.n_sizes)],
            dtype=np.int64,
        )
        out[r] = cumulate(h.counts[r]) + noise
    return out


def noisy_chain(
    chain: Chain,
    spec: NoiseSpec,
    level_multiplier: float | Mapping[int, float] = 1.0,
) -> np.ndarray:
    """Noisy cumulative values for every chain node, in chain order.

    ``level_multiplier`` scales the noise per DP-tree level (uniform float
    or mapping from level to factor); the default of 1.0 is the textual
    scale L/eps, whose formal chain-query sensitivity analysis is open.
    """
    spec = spec.for_variant("chain")
    if isinstance(level_multiplier, Mapping):
        factor = lambda lv: float(level_multiplier.get(lv, 1.0))
    else:
        factor = lambda lv: float(level_multiplier)
    out = np.empty(len(chain), dtype=np.int64)
    for i, node in enumerate(chain.nodes):
        stream = node_rng(spec.seed, "chain", node.region, node.slot)
        out[i] = node.c + int(
            sample_double_geometric(spec.scale * factor(node.level), stream)
        )
    return out
