"""Probabilistic model for discrete risk mapping.

Latent risk-class labels follow a pairwise Markov random field with an
external field ``alpha`` and a class-interaction matrix ``B``; observed
counts are conditionally Poisson with per-class rates ``population * risk``.
Besides the parameter containers, this module holds the energy function and
a brute-force enumeration oracle used to validate approximate inference on
small graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, logsumexp

from .graph import SpatialGraph

# Risks are kept strictly positive so every Poisson log-pmf stays finite.
LAMBDA_FLOOR = 1e-12

# Enumeration bound for the exact oracle (number of label configurations).
MAX_ORACLE_CONFIGS = 2 ** 20


class DegenerateSpecError(ValueError):
    """Interaction family undefined for the requested class count."""


class TooLargeError(ValueError):
    """Exact enumeration would exceed the configuration bound."""


class NonFiniteError(FloatingPointError):
    """A posterior row lost all mass; parameters are pathological."""


class InteractionKind(str, Enum):
    """Structural families for the class-interaction matrix.

    POTTS rewards equal neighboring classes only.  TRI_DIAGONAL also gives
    half credit to classes one risk level apart, encoding that neighboring
    risks should not jump.  SMOOTH_GRADATION decays linearly with class
    distance.  FULL_FREE carries an arbitrary symmetric matrix (usable in
    the prior, excluded from estimation).
    """

    POTTS = "potts"
    TRI_DIAGONAL = "tridiagonal"
    SMOOTH_GRADATION = "smooth"
    FULL_FREE = "full"


@dataclass(frozen=True)
class InteractionSpec:
    """Class-interaction matrix family plus its scalar strength ``b``."""

    kind: InteractionKind
    n_classes: int
    b: float = 1.0
    full_matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.kind is InteractionKind.FULL_FREE:
            m = self.full_matrix
            if m is None:
                raise ValueError("FULL_FREE requires full_matrix")
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (self.n_classes, self.n_classes):
                raise ValueError("full_matrix must be K x K")
            if not np.allclose(m, m.T):
                raise ValueError("full_matrix must be symmetric")
            object.__setattr__(self, "full_matrix", m)
        else:
            if self.b < 0:
                raise ValueError("b must be nonnegative")

    def with_b(self, b: float) -> "InteractionSpec":
        return InteractionSpec(self.kind, self.n_classes, b, self.full_matrix)


def structure_matrix(kind: InteractionKind, n_classes: int) -> np.ndarray:
    """Unit-strength pattern of a scalar family: B(b) = b * structure."""
    k = n_classes
    if kind is InteractionKind.POTTS:
        return np.eye(k)
    if kind is InteractionKind.TRI_DIAGONAL:
        dist = np.abs(np.subtract.outer(np.arange(k), np.arange(k)))
        return np.where(dist == 0, 1.0, np.where(dist == 1, 0.5, 0.0))
    if kind is InteractionKind.SMOOTH_GRADATION:
        if k == 1:
            raise DegenerateSpecError("smooth gradation undefined for one class")
        dist = np.abs(np.subtract.outer(np.arange(k), np.arange(k)))
        return 1.0 - dist / (k - 1)
    raise ValueError(f"no scalar structure for {kind}")


def interaction_matrix(spec: InteractionSpec) -> np.ndarray:
    """Materialize the K x K symmetric interaction matrix."""
    if spec.kind is InteractionKind.FULL_FREE:
        return spec.full_matrix.copy()
    return spec.b * structure_matrix(spec.kind, spec.n_classes)


@dataclass(frozen=True)
class HmrfParams:
    """Full parameter set: risks (ascending), external field, interaction.

    Risks are kept sorted ascending so that the distance-sensitive
    interaction families read class index as risk rank; the external field
    is gauged by pinning its last entry to zero (the prior is invariant
    under adding a constant to it).
    """

    risks: np.ndarray
    alpha: np.ndarray
    interaction: InteractionSpec

    def __post_init__(self):
        risks = np.asarray(self.risks, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        k = self.interaction.n_classes
        if risks.shape != (k,) or alpha.shape != (k,):
            raise ValueError("risks and alpha must have length n_classes")
        if np.any(risks < LAMBDA_FLOOR):
            raise ValueError("risks must be >= LAMBDA_FLOOR")
        if np.any(np.diff(risks) < 0):
            raise ValueError("risks must be sorted ascending")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be finite")
        object.__setattr__(self, "risks", risks)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n_classes(self) -> int:
        return self.interaction.n_classes


@dataclass(frozen=True)
class ObservedData:
    """Per-node case counts and population sizes."""

    counts: np.ndarray
    populations: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.counts, dtype=np.int64)
        n = np.asarray(self.populations, dtype=np.int64)
        if y.ndim != 1 or y.shape != n.shape:
            raise ValueError("counts and populations must be equal-length vectors")
        if np.any(y < 0) or np.any(n < 0):
            raise ValueError("counts and populations must be nonnegative")
        if np.any(y[n == 0] > 0):
            raise ValueError("a unit with zero population cannot have cases")
        object.__setattr__(self, "counts", y)
        object.__setattr__(self, "populations", n)

    @property
    def n_nodes(self) -> int:
        return self.counts.size


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """N x K indicator view of an integer label vector."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def poisson_log_pmf(counts, rates):
    """Log Poisson pmf, elementwise with broadcasting.

    A zero rate yields 0 for count 0 (empty-population convention) and
    -inf for positive counts.
    """
    y = np.asarray(counts, dtype=np.float64)
    rate = np.asarray(rates, dtype=np.float64)
    if np.any(rate < 0):
        raise ValueError("rates must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = y * np.log(rate) - rate - gammaln(y + 1.0)
    zero = rate == 0
    if np.any(zero):
        out = np.where(zero & (y == 0), 0.0, out)
        out = np.where(zero & (y > 0), -np.inf, out)
    return out if out.ndim else float(out)


def emission_log_pmf(data: ObservedData, risks: np.ndarray) -> np.ndarray:
    """N x K table of log P(count_i | class k)."""
    rates = data.populations[:, None] * np.asarray(risks)[None, :]
    return poisson_log_pmf(data.counts[:, None], rates)


def prior_energy(labels: np.ndarray, params: HmrfParams,
                 graph: SpatialGraph) -> float:
    """Energy of a label configuration; lower means more probable a priori.

    The pairwise sum runs over unordered neighbor pairs, each counted once.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (graph.node_count,):
        raise ValueError("labels length must match the graph")
    if labels.size and (labels.min() < 0 or labels.max() >= params.n_classes):
        raise ValueError("label out of range")
    mat = interaction_matrix(params.interaction)
    field_term = params.alpha[labels].sum()
    e = graph.edges()
    pair_term = mat[labels[e[:, 0]], labels[e[:, 1]]].sum() if e.size else 0.0
    return float(-(field_term + pair_term))


@dataclass(frozen=True)
class ExactOracle:
    """Brute-force quantities for a small model instance."""

    log_w: float
    log_evidence: float
    marginals: np.ndarray


def _enumerate_labelings(n_nodes: int, n_classes: int) -> np.ndarray:
    """All K^N label configurations as a (K^N, N) int8 array."""
    total = n_classes ** n_nodes
    idx = np.arange(total)
    configs = np.empty((total, n_nodes), dtype=np.int8)
    for i in range(n_nodes - 1, -1, -1):
        configs[:, i] = idx % n_classes
        idx //= n_classes
    return configs


def exact_oracle(data: ObservedData, params: HmrfParams,
                 graph: SpatialGraph) -> ExactOracle:
    """Exact normalizer, evidence, and posterior marginals by enumeration.

    Feasible only while K^N stays under ``MAX_ORACLE_CONFIGS``; raises
    :class:`TooLargeError` otherwise.
    """
    n, k = graph.node_count, params.n_classes
    if data.n_nodes != n:
        raise ValueError("data and graph disagree on node count")
    if k ** n > MAX_ORACLE_CONFIGS:
        raise TooLargeError(f"{k}^{n} configurations exceed the enumeration bound")

    configs = _enumerate_labelings(n, k)
    mat = interaction_matrix(params.interaction)
    neg_energy = params.alpha[configs].sum(axis=1)
    for a, b in graph.edges():
        neg_energy += mat[configs[:, a], configs[:, b]]

    log_pmf = emission_log_pmf(data, params.risks)
    log_lik = np.zeros(configs.shape[0])
    for i in range(n):
        log_lik += log_pmf[i, configs[:, i]]

    log_w = float(logsumexp(neg_energy))
    log_joint = neg_energy + log_lik
    log_z = float(logsumexp(log_joint))

    marginals = np.empty((n, k))
    for i in range(n):
        for c in range(k):
            mask = configs[:, i] == c
            marginals[i, c] = np.exp(logsumexp(log_joint[mask]) - log_z)
    return ExactOracle(log_w=log_w, log_evidence=log_z - log_w, marginals=marginals)
