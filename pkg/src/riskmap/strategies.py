"""Initialization strategies and the Search/Run/Select driver.

EM fits of poorly separated spatial Poisson mixtures are badly starting
point dependent, so fits are launched from many candidate parameter sets
and the highest-likelihood run wins.  Three search styles are provided:

* ``tra``  — risk vectors sampled on the EM-trajectory manifold, where the
  population-share weighted risks equal the global case ratio;
* ``rand`` — risks drawn uniformly at random;
* ``emm``  — uniform risks screened by a nonspatial EM pass, with the best
  nonspatial solution seeding a single spatial run.

For ``tra`` and ``rand`` each restart runs a first phase with the
interaction strength held at 1 (risks and field free) before releasing all
parameters, which keeps noisy data from collapsing onto meaningless
solutions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import SpatialGraph
from .inference import FitOptions, FitResult, vem_fit
from .model import LAMBDA_FLOOR, HmrfParams, InteractionKind, InteractionSpec, ObservedData


class EmptyPopulationError(ValueError):
    """The data set has no population at all."""


class RejectionExhaustedError(RuntimeError):
    """Constraint-respecting sampling kept producing nonpositive risks."""


class AllRestartsFailedError(RuntimeError):
    """Every restart of a multi-start search raised."""


class StrategyKind(str, Enum):
    TRAJECTORY = "tra"
    RANDOM = "rand"
    NONSPATIAL_EM = "emm"


@dataclass(frozen=True)
class StrategySpec:
    """Multi-start configuration: strategy kind, restart count, search knobs."""

    kind: StrategyKind
    restarts: int = 1
    rand_upper: float = 1.5
    search2: bool = True
    seed: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.rand_upper <= 0:
            raise ValueError("rand_upper must be positive")


@dataclass(frozen=True)
class InitDraw:
    """One starting point: risks (ascending), optional population shares,
    zero external field, and the phase-one interaction strength."""

    risks: np.ndarray
    shares: np.ndarray | None
    b: float

    def params(self, kind: InteractionKind) -> HmrfParams:
        k = self.risks.size
        return HmrfParams(self.risks, np.zeros(k), InteractionSpec(kind, k, self.b))


def average_risk(data: ObservedData) -> float:
    """Global case ratio: total counts over total population."""
    total = data.populations.sum()
    if total == 0:
        raise EmptyPopulationError("total population is zero")
    return float(data.counts.sum() / total)


def draw_tra(data: ObservedData, n_classes: int, rng: np.random.Generator,
             max_rejects: int = 10000) -> InitDraw:
    """Sample a risk vector on the EM-trajectory manifold.

    Population shares come from a flat Dirichlet; all but one risk are drawn
    without replacement from the empirical per-node case ratios (zero-
    population nodes excluded, ratios floored to stay positive); the last
    risk is solved so the share-weighted mean equals the global case ratio.
    A draw whose solved risk is not positive is discarded and the procedure
    restarts; :class:`RejectionExhaustedError` is raised after
    ``max_rejects`` consecutive discards.
    """
    avg = average_risk(data)
    observed = data.populations > 0
    ratios = data.counts[observed] / data.populations[observed]
    ratios = np.maximum(ratios.astype(np.float64), LAMBDA_FLOOR)
    if n_classes - 1 > ratios.size:
        raise ValueError("need at least n_classes - 1 observed units to draw from")

    for _ in range(max_rejects):
        shares = rng.dirichlet(np.ones(n_classes))
        solved = int(rng.integers(n_classes))
        others = np.delete(np.arange(n_classes), solved)
        picks = rng.choice(ratios.size, size=n_classes - 1, replace=False)
        risks = np.empty(n_classes)
        risks[others] = ratios[picks]
        residual = avg - float(shares[others] @ risks[others])
        risks[solved] = residual / shares[solved]
        if risks[solved] < LAMBDA_FLOOR:
            continue
        order = np.argsort(risks, kind="stable")
        return InitDraw(risks=risks[order], shares=shares[order], b=1.0)
    raise RejectionExhaustedError(f"no positive draw within {max_rejects} attempts")


def draw_rand(n_classes: int, rng: np.random.Generator,
              upper: float = 1.5) -> InitDraw:
    """Risks drawn iid uniform on (0, upper], sorted ascending."""
    risks = upper * (1.0 - rng.uniform(size=n_classes))
    return InitDraw(risks=np.sort(risks), shares=None, b=1.0)


def _two_phase_fit(data, graph, draw: InitDraw, kind: InteractionKind,
                   opts: FitOptions, search2: bool) -> FitResult:
    if opts.fix_b is not None or not search2:
        return vem_fit(data, graph, draw.params(kind), opts)
    phase1 = vem_fit(data, graph, draw.params(kind),
                     _replace(opts, fix_b=draw.b))
    return vem_fit(data, graph, phase1.params, opts, warm=phase1.posteriors)


def _replace(opts: FitOptions, **kw) -> FitOptions:
    from dataclasses import replace

    return replace(opts, **kw)


def _run_many(tasks, threads: int):
    """Map tasks to (result, error) pairs, preserving order."""
    def guarded(fn):
        try:
            return fn(), None
        except Exception as exc:  # noqa: BLE001 - per-restart failures are data
            return None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, tasks))
    return [guarded(fn) for fn in tasks]


def _select_best(outcomes) -> FitResult:
    best = None
    first_error = None
    for idx, (fit, err) in enumerate(outcomes):
        if fit is None:
            first_error = first_error or err
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            fit.restart_index = idx
            best = fit
    if best is None:
        raise AllRestartsFailedError(f"all restarts failed; first error: {first_error!r}")
    return best


def search_run_select(data: ObservedData, graph: SpatialGraph, n_classes: int,
                      strategy: StrategySpec, opts: FitOptions | None = None,
                      kind: InteractionKind = InteractionKind.TRI_DIAGONAL) -> FitResult:
    """Multi-start search: draw starting points, run EM, keep the best.

    Selection is by highest final surrogate log-likelihood, ties broken by
    lowest restart index.  Individual restart failures are tolerated;
    :class:`AllRestartsFailedError` is raised only when nothing survived.
    """
    if opts is None:
        opts = FitOptions()
    seeds = np.random.SeedSequence(strategy.seed).spawn(strategy.restarts)
    rngs = [np.random.default_rng(s) for s in seeds]

    if strategy.kind in (StrategyKind.TRAJECTORY, StrategyKind.RANDOM):
        def make_task(rng):
            def task():
                if strategy.kind is StrategyKind.TRAJECTORY:
                    draw = draw_tra(data, n_classes, rng)
                else:
                    draw = draw_rand(n_classes, rng, strategy.rand_upper)
                return _two_phase_fit(data, graph, draw, kind, opts, strategy.search2)
            return task

        outcomes = _run_many([make_task(rng) for rng in rngs], strategy.threads)
        return _select_best(outcomes)

    # Nonspatial screening: uniform draws, interaction off, best survivor
    # seeds one spatial fit.
    def make_screen(rng):
        def task():
            draw = draw_rand(n_classes, rng, strategy.rand_upper)
            return vem_fit(data, graph, draw.params(kind), _replace(opts, fix_b=0.0))
        return task

    outcomes = _run_many([make_screen(rng) for rng in rngs], strategy.threads)
    survivor = _select_best(outcomes)
    final = vem_fit(data, graph, survivor.params, opts, warm=survivor.posteriors)
    final.restart_index = survivor.restart_index
    return final
