"""Proportional allocation of synthetic volume and assembly of the ensemble output."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .data import T, Dataset
from .gan import GeneratorNet, generator_forward
from .neural.layers import sample_noise


TIE_TOL = 1e-9


def proportions(cluster_sizes: Sequence[int]) -> np.ndarray:
    sizes = np.asarray(cluster_sizes, dtype=np.float64)
    if sizes.size == 0:
        raise ValueError("no cluster sizes given")
    if np.any(sizes < 1):
        raise ValueError("cluster sizes must be at least 1")
    return sizes / sizes.sum()


def allocate(M: int, alpha: Sequence[float]) -> np.ndarray:
    """Largest-remainder apportionment of ``M`` units.

    Every share gets ``floor(M * alpha_k)``; leftover units go to the largest
    fractional parts, ties (within ``TIE_TOL``) to the lowest index. The counts always sum to
    ``M`` and each differs from ``M * alpha_k`` by less than one.
    """
    if M < 1:
        raise ValueError("M must be a positive integer")
    a = np.asarray(alpha, dtype=np.float64)
    if a.size == 0 or np.any(a < 0) or abs(a.sum() - 1.0) > 1e-9:
        raise ValueError("alpha must be non-negative proportions summing to 1")
    quotas = M * a
    # float rounding must not break exact ties or push an integral quota below itself
    nearest = np.round(quotas)
    quotas = np.where(np.abs(quotas - nearest) < TIE_TOL, nearest, quotas)
    counts = np.floor(quotas).astype(np.int64)
    leftover = M - int(counts.sum())
    remainders = np.round((quotas - counts) / TIE_TOL) * TIE_TOL
    order = sorted(range(a.size), key=lambda k: (-remainders[k], k))
    for k in order[:leftover]:
        counts[k] += 1
    return counts


@dataclass(frozen=True)
class SynthesisPlan:
    M: int
    alpha: np.ndarray
    allocation: np.ndarray

    @classmethod
    def from_sizes(cls, M: int, cluster_sizes: Sequence[int]) -> SynthesisPlan:
        alpha = proportions(cluster_sizes)
        return cls(M, alpha, allocate(M, alpha))

    @property
    def K(self) -> int:
        return len(self.allocation)


def synthesize(generators: Sequence[GeneratorNet | None], plan: SynthesisPlan,
               seed: int = 0) -> Dataset:
    """Draw ``M_k`` profiles from generator ``k`` and stack clusters in index order.

    Noise for cluster ``k`` comes from its own stream seeded ``seed + k``.
    """
    if len(generators) != plan.K:
        raise ValueError(f"plan has {plan.K} clusters but {len(generators)} generators were given")
    parts = []
    for k, (gen, m) in enumerate(zip(generators, plan.allocation)):
        m = int(m)
        if m == 0:
            continue
        if gen is None:
            raise ValueError(f"no generator for cluster {k} with M_k={m}")
        noise = sample_noise(T, m, np.random.default_rng(seed + k))
        values = generator_forward(noise, gen)
        parts.append(Dataset(values, [f"synth_k{k}_{i}" for i in range(m)]))
    return Dataset.concat(parts)
