"""Differentially private count-release structures with guaranteed overcounts.

Each structure releases ``true count + noise + offset``; the offset comes from
:mod:`dpdb.dp` so that, with probability at least ``1 - beta`` over setup
randomness, every released count is at least the true count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dp
from .dp import Mechanism
from .errors import ParameterError, UndershootError
from .tree import KaryLayout


def as_histogram(keys, domain: int) -> np.ndarray:
    """Counts per bin for 1-based ``keys`` in ``[1, domain]``."""
    keys = np.asarray(list(keys), dtype=np.int64)
    if keys.size and (keys.min() < 1 or keys.max() > domain):
        raise ParameterError(f"keys outside domain [1, {domain}]")
    return np.bincount(keys - 1, minlength=domain).astype(np.int64) if keys.size else np.zeros(domain, np.int64)


def _ceil(x):
    # guards against 5.000000000001 style float dust after summing node values
    return np.ceil(np.asarray(x) - 1e-9).astype(np.int64)


@dataclass(frozen=True)
class NoisyTree:
    """Hierarchical k-ary tree of noisy subtree counts (root level first)."""

    layout: KaryLayout
    values: tuple[np.ndarray, ...]
    offset: float
    scale: float
    epsilon: float
    beta: float

    kind = "range"

    @property
    def domain(self) -> int:
        return self.layout.domain

    @property
    def node_count(self) -> int:
        return self.layout.node_count

    def node_value(self, level: int, index: int) -> float:
        return float(self.values[level][index])

    def answer(self, query) -> int:
        return range_count(self, query.lo, query.hi)


def build_range_tree(hist, k_h: int, eps: float, beta: float, rng,
                     mechanism=Mechanism.LAPLACE, offset: float | None = None) -> NoisyTree:
    """Noisy k-ary aggregation tree over ``hist``.

    One record changes exactly one node per level, so each node gets noise of
    scale ``levels / eps``. ``offset`` defaults to the positivity offset over
    all nodes; pass ``0`` for an unbiased tree.
    """
    hist = np.asarray(hist)
    if hist.ndim != 1 or len(hist) < 2:
        raise ParameterError("range tree needs a domain of at least 2 bins")
    layout = KaryLayout(len(hist), k_h)
    scale = layout.levels / dp._check_epsilon(eps)
    if offset is None:
        offset = dp.solve_min_offset(layout.node_count, scale, beta).mu
    rng = dp.make_rng(rng)
    values = tuple(
        counts + dp.draw_noise(rng, scale, counts.shape, mechanism) + offset
        for counts in layout.level_counts(hist.astype(float))
    )
    return NoisyTree(layout, values, float(offset), scale, float(eps), float(beta))


def min_node_cover(tree: NoisyTree, a: int, b: int) -> list[tuple[int, int]]:
    return tree.layout.cover(a, b)


def range_count(tree: NoisyTree, a: int, b: int) -> int:
    cover = tree.layout.cover(a, b)
    return int(_ceil(sum(tree.values[level][i] for level, i in cover)))


def cumulative_from_tree(tree: NoisyTree) -> np.ndarray:
    """Noisy prefix counts ``[1, j]`` for every ``j``, made non-decreasing."""
    raw = np.array([range_count(tree, 1, j) for j in range(1, tree.domain + 1)], dtype=np.int64)
    return np.maximum.accumulate(raw)


@dataclass(frozen=True)
class NoisyHistogram:
    released: np.ndarray
    offset: float
    epsilon: float
    beta: float

    kind = "point"

    @property
    def domain(self) -> int:
        return len(self.released)

    def count(self, point: int) -> int:
        if not 1 <= point <= len(self.released):
            raise ParameterError(f"point {point} outside [1, {len(self.released)}]")
        return int(self.released[point - 1])

    def answer(self, query) -> int:
        return self.count(query.point)


def build_point_histogram(hist, eps: float, beta: float, rng,
                          mechanism=Mechanism.LAPLACE, check: bool = True) -> NoisyHistogram:
    """Per-bin noisy overcounts (Laplace perturbation with a positivity offset).

    Raises :class:`UndershootError` when some released count is below the
    true one and ``check`` is set.
    """
    hist = np.asarray(hist, dtype=np.int64)
    if hist.ndim != 1 or len(hist) < 1:
        raise ParameterError("point histogram needs at least one bin")
    eps = dp._check_epsilon(eps)
    scale = 1.0 / eps
    mu = dp.solve_min_offset(len(hist), scale, beta).mu
    rng = dp.make_rng(rng)
    noise = dp.draw_noise(rng, scale, hist.shape, mechanism)
    if Mechanism(mechanism) is Mechanism.LAPLACE:
        released = _ceil(hist + noise + mu)
    else:
        released = hist + noise.astype(np.int64) + math.ceil(mu)
    if check and np.any(released < hist):
        raise UndershootError(f"{int(np.sum(released < hist))} bins released below their true count")
    return NoisyHistogram(released.astype(np.int64), mu, eps, float(beta))


@dataclass(frozen=True)
class NoisyAttributeIndex:
    """Noisy counts of ones and zeros for every binary attribute column."""

    noisy_ones: np.ndarray
    released_ones: np.ndarray
    released_zeros: np.ndarray
    n: int
    offset: float
    epsilon: float
    beta: float

    kind = "attribute"

    @property
    def columns(self) -> int:
        return len(self.noisy_ones)

    def count(self, column: int, bit: int) -> int:
        if not 0 <= column < self.columns or bit not in (0, 1):
            raise ParameterError(f"no attribute query ({column}, {bit}) over {self.columns} columns")
        arr = self.released_ones if bit else self.released_zeros
        return int(arr[column])

    def answer(self, query) -> int:
        return self.count(query.column, query.bit)


def attribute_offset(k: int, eps: float, beta: float) -> dp.OffsetSolution:
    # both q_hat and n - q_hat must be overcounts: 2k one-sided events
    return dp.solve_min_offset(2 * k, k / eps, beta)


def build_attribute_index(keys, eps: float, beta: float, rng, mechanism=Mechanism.LAPLACE,
                          check: bool = True, k: int | None = None) -> NoisyAttributeIndex:
    keys = np.asarray(keys, dtype=np.int64)
    if keys.ndim == 1 and keys.size == 0:
        if k is None:
            raise ParameterError("column count k is required for an empty key set")
        keys = keys.reshape(0, k)
    if keys.ndim != 2 or keys.shape[1] < 1:
        raise ParameterError("attribute keys must be an (n, k) array of bits")
    if np.any((keys != 0) & (keys != 1)):
        raise ParameterError("attribute keys must be 0/1")
    n, k = keys.shape
    eps = dp._check_epsilon(eps)
    scale = k / eps
    mu = attribute_offset(k, eps, beta).mu
    ones = keys.sum(axis=0)
    noisy = ones + dp.draw_noise(dp.make_rng(rng), scale, (k,), mechanism)
    released_ones = _ceil(noisy + mu)
    released_zeros = _ceil(n - noisy + mu)
    if check and (np.any(released_ones < ones) or np.any(released_zeros < n - ones)):
        raise UndershootError("attribute count released below its true value")
    return NoisyAttributeIndex(noisy, released_ones, released_zeros, int(n), mu, eps, float(beta))
