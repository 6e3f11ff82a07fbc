"""Noise samplers, positivity offsets and the privacy-budget ledger.

Every sanitizer in the package releases ``true count + noise + offset`` where
the offset is the smallest shift making all noise draws positive with
probability at least ``1 - beta``. The solvers here compute those offsets.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import BudgetExceededError, ParameterError
from .tree import KaryLayout


class Mechanism(str, enum.Enum):
    """How node/bin noise is drawn.

    ``GEOMETRIC`` is the discrete analogue of Laplace for integer counts; it
    exists so tests can verify privacy by exact pmf enumeration. ``NONE``
    keeps offsets but draws zero noise (deterministic test hook).
    """

    LAPLACE = "laplace"
    GEOMETRIC = "geometric"
    NONE = "none"


def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_epsilon(eps: float) -> float:
    eps = float(eps)
    if not (eps > 0 and math.isfinite(eps)):
        raise ParameterError(f"epsilon must be positive and finite, got {eps}")
    return eps


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0 < beta <= 1:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    return beta


def sample_laplace(mean: float, scale: float, rng: np.random.Generator, size=None):
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    return rng.laplace(mean, scale, size=size)


def sample_two_sided_geometric(epsilon_over_sensitivity: float, rng: np.random.Generator, size=None):
    """Integer noise with pmf ``(1-a)/(1+a) * a**|z|``, ``a = exp(-eps/sens)``."""
    if not epsilon_over_sensitivity > 0:
        raise ParameterError(
            f"epsilon/sensitivity must be positive, got {epsilon_over_sensitivity}"
        )
    p = -math.expm1(-epsilon_over_sensitivity)
    return rng.geometric(p, size=size) - rng.geometric(p, size=size)


def two_sided_geometric_pmf(z, epsilon_over_sensitivity: float):
    alpha = math.exp(-epsilon_over_sensitivity)
    z = np.abs(np.asarray(z))
    return (1 - alpha) / (1 + alpha) * alpha ** z


def two_sided_geometric_logpmf(z, epsilon_over_sensitivity: float):
    alpha = math.exp(-epsilon_over_sensitivity)
    z = np.abs(np.asarray(z, dtype=float))
    return math.log((1 - alpha) / (1 + alpha)) - epsilon_over_sensitivity * z


def draw_noise(rng: np.random.Generator, scale: float, size, mechanism=Mechanism.LAPLACE) -> np.ndarray:
    """Zero-mean noise of the given Laplace scale (``sensitivity / eps``)."""
    mechanism = Mechanism(mechanism)
    if not scale > 0:
        raise ParameterError(f"noise scale must be positive, got {scale}")
    if mechanism is Mechanism.LAPLACE:
        return rng.laplace(0.0, scale, size=size)
    if mechanism is Mechanism.GEOMETRIC:
        return sample_two_sided_geometric(1.0 / scale, rng, size=size).astype(float)
    return np.zeros(size)


@dataclass(frozen=True)
class OffsetSolution:
    mu: float
    draws: int
    beta: float

    @property
    def ceil(self) -> int:
        return math.ceil(self.mu - 1e-12)


def min_offset_holds(mu: float, draws: int, scale: float, beta: float) -> bool:
    """Whether ``draws`` Laplace(mu, scale) samples are all positive w.p. >= 1-beta."""
    log_p_all = draws * math.log1p(-0.5 * math.exp(-mu / scale))
    return log_p_all >= math.log1p(-beta) if beta < 1 else True


def solve_min_offset(draws: int, scale: float, beta: float) -> OffsetSolution:
    """Smallest mean making ``draws`` Laplace samples all positive w.p. ``1 - beta``.

    Solves ``(1 - exp(-mu/scale)/2) ** draws >= 1 - beta`` in closed form.
    """
    if draws < 1:
        raise ParameterError(f"draws must be >= 1, got {draws}")
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    beta = _check_beta(beta)
    if beta == 1:
        return OffsetSolution(0.0, draws, beta)
    # per-draw failure allowed: 1 - (1 - beta) ** (1 / draws)
    per_draw = -math.expm1(math.log1p(-beta) / draws)
    mu = max(0.0, scale * math.log(1.0 / (2.0 * per_draw)))
    # the closed form sits on the boundary; step past float rounding
    while mu > 0 and not min_offset_holds(mu, draws, scale, beta):
        mu = math.nextafter(mu, math.inf)
    return OffsetSolution(mu, draws, beta)


def bucket_failure_probability(mu: float, nodes: int, terms: int, scale: float) -> float:
    """Union bound on a bucket receiving more than ``mu`` excess records.

    Term ``i`` is the probability that at least ``i + 1`` of the ``nodes``
    Laplace draws fall below ``-mu / (i + 1)``.
    """
    j = np.arange(nodes + 1)
    log_binom = gammaln(nodes + 1) - gammaln(j + 1) - gammaln(nodes - j + 1)
    i = np.arange(terms)[:, None]
    log_p = math.log(0.5) - mu / (scale * (i + 1))
    log_q = np.log1p(-np.exp(log_p))
    log_terms = log_binom[None, :] + j[None, :] * log_p + (nodes - j)[None, :] * log_q
    log_terms = np.where(j[None, :] >= i + 1, log_terms, -np.inf)
    return float(np.exp(logsumexp(log_terms, axis=1)).sum())


def bucket_offset_holds(mu: float, nodes: int, terms: int, scale: float, beta: float) -> bool:
    return 1.0 - bucket_failure_probability(mu, nodes, terms, scale) >= 1.0 - beta


def bucket_noise_scale(domain: int, arity: int, epsilon: float) -> float:
    """Per-node Laplace scale of the range tree: tree levels over epsilon."""
    return KaryLayout(domain, arity).levels / _check_epsilon(epsilon)


@functools.lru_cache(maxsize=256)
def solve_bucket_offset(n: int, b: int, k_b: int, N: int, epsilon: float, beta: float) -> OffsetSolution:
    """Integer padding ``mu_b`` added to each bucket's ``ceil(n / b)`` capacity.

    ``draws`` on the result is the number of tree nodes, counted from the
    layout itself.
    """
    if b < 1 or k_b < 2 or N < 2 or n < 0:
        raise ParameterError(f"need n >= 0, b >= 1, k_b >= 2, N >= 2; got n={n} b={b} k_b={k_b} N={N}")
    beta = _check_beta(beta)
    layout = KaryLayout(N, k_b)
    nodes = layout.node_count
    terms = layout.max_cover
    scale = layout.levels / _check_epsilon(epsilon)
    if beta == 1:
        return OffsetSolution(0.0, nodes, beta)

    def ok(mu: int) -> bool:
        return bucket_offset_holds(mu, nodes, terms, scale, beta)

    if ok(0):
        return OffsetSolution(0.0, nodes, beta)
    hi = max(1, math.ceil(solve_min_offset(nodes, scale, beta).mu))
    while not ok(hi):
        hi *= 2
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return OffsetSolution(float(hi), nodes, beta)


class Composition(str, enum.Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class Charge:
    label: str
    epsilon: float
    kind: Composition = Composition.SEQUENTIAL
    group: str = ""


@dataclass(frozen=True)
class PrivacyBudget:
    """Immutable epsilon ledger.

    Sequential charges add up. Parallel charges sharing a ``group`` act on
    disjoint data, so the group costs only its largest charge.
    """

    total: float
    ledger: tuple[Charge, ...] = field(default=())

    def __post_init__(self):
        _check_epsilon(self.total)

    @staticmethod
    def spent_of(ledger) -> float:
        seq = 0.0
        groups: dict[str, float] = {}
        for c in ledger:
            if c.kind is Composition.PARALLEL:
                groups[c.group] = max(groups.get(c.group, 0.0), c.epsilon)
            else:
                seq += c.epsilon
        return seq + sum(groups.values())

    @property
    def spent(self) -> float:
        return self.spent_of(self.ledger)

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def charge(self, label: str, eps: float, kind=Composition.SEQUENTIAL, group: str = "") -> "PrivacyBudget":
        return budget_charge(self, label, eps, kind, group)


def budget_charge(budget: PrivacyBudget, label: str, eps: float,
                  kind=Composition.SEQUENTIAL, group: str = "") -> PrivacyBudget:
    eps = _check_epsilon(eps)
    ledger = budget.ledger + (Charge(label, eps, Composition(kind), group),)
    spent = PrivacyBudget.spent_of(ledger)
    # relative slack absorbs float error from splitting eps into shares
    if spent > budget.total * (1 + 1e-12):
        raise BudgetExceededError(label, eps, budget.remaining)
    return replace(budget, ledger=ledger)
