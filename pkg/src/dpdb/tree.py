"""Complete k-ary tree geometry over a padded domain ``[1, N]``.

Nodes are addressed as ``(level, index)`` with level 0 the root. A node at
``level`` covers ``k ** (height - level)`` consecutive leaves.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class KaryLayout:
    domain: int
    arity: int

    def __post_init__(self):
        if self.arity < 2:
            raise ParameterError(f"arity must be >= 2, got {self.arity}")
        if self.domain < 1:
            raise ParameterError(f"domain size must be >= 1, got {self.domain}")

    @cached_property
    def height(self) -> int:
        h, width = 0, 1
        while width < self.domain:
            width *= self.arity
            h += 1
        return h

    @property
    def levels(self) -> int:
        return self.height + 1

    @property
    def padded(self) -> int:
        return self.arity ** self.height

    @cached_property
    def level_sizes(self) -> tuple[int, ...]:
        return tuple(self.arity ** level for level in range(self.levels))

    @property
    def node_count(self) -> int:
        return sum(self.level_sizes)

    @property
    def max_cover(self) -> int:
        """Upper bound on the size of a minimal cover of any range."""
        return max(1, 2 * (self.arity - 1) * self.height)

    def node_range(self, level: int, index: int) -> tuple[int, int]:
        """1-based inclusive leaf range of a node."""
        span = self.arity ** (self.height - level)
        return index * span + 1, (index + 1) * span

    def level_counts(self, hist: np.ndarray) -> list[np.ndarray]:
        """Exact per-node sums of ``hist`` (padded with zeros), root first."""
        leaves = np.zeros(self.padded, dtype=np.asarray(hist).dtype)
        leaves[: len(hist)] = hist
        out = [leaves]
        cur = leaves
        for _ in range(self.height):
            cur = cur.reshape(-1, self.arity).sum(axis=1)
            out.append(cur)
        return out[::-1]

    def cover(self, a: int, b: int) -> list[tuple[int, int]]:
        """Minimal set of disjoint nodes whose ranges union to ``[a, b]``."""
        if not 1 <= a <= b <= self.domain:
            raise ParameterError(f"range [{a}, {b}] outside domain [1, {self.domain}]")
        k = self.arity
        lo, hi = a - 1, b
        nodes: list[tuple[int, int]] = []
        for level in range(self.height, -1, -1):
            if lo >= hi:
                break
            if level == 0:
                nodes.append((0, 0))
                break
            plo = -(-lo // k) * k
            phi = (hi // k) * k
            if plo >= phi:
                nodes.extend((level, i) for i in range(lo, hi))
                break
            nodes.extend((level, i) for i in range(lo, plo))
            nodes.extend((level, i) for i in range(phi, hi))
            lo, hi = plo // k, phi // k
        return nodes
