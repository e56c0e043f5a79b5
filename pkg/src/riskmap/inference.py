"""Mean-field variational EM for the hidden Markov random field model.

The E-step replaces the intractable posterior over label configurations by
a row-stochastic table of per-node class probabilities, driven to a fixed
point by sequential (Gauss-Seidel) site sweeps.  The risk M-step is closed
form; the field parameters are updated by maximizing a mean-field surrogate
with gradient ascent and backtracking line search.  Nodes are classified by
the maximum posterior marginal rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import SpatialGraph
from .model import (
    LAMBDA_FLOOR,
    HmrfParams,
    InteractionKind,
    NonFiniteError,
    ObservedData,
    emission_log_pmf,
    interaction_matrix,
    structure_matrix,
)

ALPHA_BOUND = 40.0  # |alpha| beyond this is numerically indistinguishable from -inf


@dataclass(frozen=True)
class FitOptions:
    """Knobs for a single variational EM run.

    ``fix_b`` holds the interaction strength constant (used by the staged
    search phases); ``collapse_rel_eps`` scales the class-collapse detector
    relative to the mean per-cell population mass.
    """

    max_em_iters: int = 100
    em_rel_tol: float = 1e-6
    mf_max_sweeps: int = 50
    mf_tol: float = 1e-6
    fix_b: float | None = None
    seed: int | None = None
    b_max: float = 10.0
    beta_max_iters: int = 500
    beta_tol: float = 1e-8
    collapse_rel_eps: float = 1e-3


@dataclass
class FitResult:
    """Converged parameters plus per-iteration diagnostics."""

    params: HmrfParams
    posteriors: np.ndarray
    labels: np.ndarray
    ll_trace: np.ndarray
    bic: float
    iterations: int
    collapsed_classes: set[int] = field(default_factory=set)
    b_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    constraint_gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    no_ascent_count: int = 0
    restart_index: int | None = None

    @property
    def log_likelihood(self) -> float:
        return float(self.ll_trace[-1])


def _logsumexp_rows(logits: np.ndarray) -> np.ndarray:
    # scipy's logsumexp carries heavy per-call overhead; this runs in the
    # inner ascent loop, so keep it to a handful of vectorized ops.
    top = logits.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(logits - top).sum(axis=1, keepdims=True))).ravel()


def validate_posterior_table(post: np.ndarray, atol: float = 1e-10) -> None:
    post = np.asarray(post)
    if post.ndim != 2:
        raise ValueError("posterior table must be N x K")
    if np.any(post < -atol):
        raise ValueError("posterior entries must be nonnegative")
    if np.max(np.abs(post.sum(axis=1) - 1.0)) > atol:
        raise ValueError("posterior rows must sum to one")


def uniform_posteriors(n_nodes: int, n_classes: int) -> np.ndarray:
    return np.full((n_nodes, n_classes), 1.0 / n_classes)


def _gs_sweep_py(indptr, indices, log_emission, alpha, inter, post):
    # One Gauss-Seidel pass: each site is renormalized against the *current*
    # table, in index order.  Returns the largest single-cell change.
    n_nodes, n_classes = post.shape
    max_delta = 0.0
    nbr_sum = np.empty(n_classes)
    logits = np.empty(n_classes)
    for i in range(n_nodes):
        for k in range(n_classes):
            nbr_sum[k] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for k in range(n_classes):
                nbr_sum[k] += post[j, k]
        top = -np.inf
        for k in range(n_classes):
            acc = alpha[k] + log_emission[i, k]
            for l in range(n_classes):
                acc += inter[k, l] * nbr_sum[l]
            logits[k] = acc
            if acc > top:
                top = acc
        norm = 0.0
        for k in range(n_classes):
            logits[k] = math.exp(logits[k] - top)
            norm += logits[k]
        for k in range(n_classes):
            new = logits[k] / norm
            diff = abs(new - post[i, k])
            if diff > max_delta:
                max_delta = diff
            post[i, k] = new
    return max_delta


def _gs_run_py(indptr, indices, log_emission, alpha, inter, post,
               max_sweeps, tol):
    delta = np.inf
    for _ in range(max_sweeps):
        delta = _gs_sweep(indptr, indices, log_emission, alpha, inter, post)
        if delta <= tol:
            break
    return delta


def _surrogate_value_grad_py(post, drive, alpha, b):
    n_nodes, n_classes = post.shape
    value = 0.0
    grad_b = 0.0
    grad_alpha = np.zeros(n_classes)
    logits = np.empty(n_classes)
    for i in range(n_nodes):
        top = -np.inf
        for c in range(n_classes):
            logits[c] = alpha[c] + b * drive[i, c]
            if logits[c] > top:
                top = logits[c]
        norm = 0.0
        for c in range(n_classes):
            norm += math.exp(logits[c] - top)
        value -= top + math.log(norm)
        for c in range(n_classes):
            prob = math.exp(logits[c] - top) / norm
            resid = post[i, c] - prob
            value += post[i, c] * logits[c]
            grad_alpha[c] += resid
            grad_b += resid * drive[i, c]
    return value, grad_alpha, grad_b


def _surrogate_with_curvature_py(post, drive, alpha, b):
    # Same quantities as _surrogate_value_grad plus the (positive
    # semidefinite) curvature blocks of the negated Hessian, used to
    # precondition the ascent direction.
    n_nodes, n_classes = post.shape
    value = 0.0
    grad_b = 0.0
    grad_alpha = np.zeros(n_classes)
    caa = np.zeros((n_classes, n_classes))
    cab = np.zeros(n_classes)
    cbb = 0.0
    logits = np.empty(n_classes)
    probs = np.empty(n_classes)
    for i in range(n_nodes):
        top = -np.inf
        for c in range(n_classes):
            logits[c] = alpha[c] + b * drive[i, c]
            if logits[c] > top:
                top = logits[c]
        norm = 0.0
        for c in range(n_classes):
            probs[c] = math.exp(logits[c] - top)
            norm += probs[c]
        value -= top + math.log(norm)
        pd = 0.0
        pdd = 0.0
        for c in range(n_classes):
            probs[c] /= norm
            pd += probs[c] * drive[i, c]
            pdd += probs[c] * drive[i, c] * drive[i, c]
        for c in range(n_classes):
            resid = post[i, c] - probs[c]
            value += post[i, c] * logits[c]
            grad_alpha[c] += resid
            grad_b += resid * drive[i, c]
            cab[c] += probs[c] * (drive[i, c] - pd)
            for l in range(n_classes):
                caa[c, l] -= probs[c] * probs[l]
            caa[c, c] += probs[c]
        cbb += pdd - pd * pd
    return value, grad_alpha, grad_b, caa, cab, cbb


try:
    from numba import njit

    _gs_sweep = njit(cache=True, nogil=True)(_gs_sweep_py)
    _gs_run = njit(cache=True, nogil=True)(_gs_run_py)
    _surrogate_value_grad = njit(cache=True, nogil=True)(_surrogate_value_grad_py)
    _surrogate_with_curvature = njit(cache=True, nogil=True)(_surrogate_with_curvature_py)
except ImportError:  # pragma: no cover - numba is a declared dependency
    _gs_sweep = _gs_sweep_py
    _gs_run = _gs_run_py
    _surrogate_value_grad = _surrogate_value_grad_py
    _surrogate_with_curvature = _surrogate_with_curvature_py


def local_field(post: np.ndarray, alpha: np.ndarray, inter: np.ndarray,
                graph: SpatialGraph) -> np.ndarray:
    """N x K mean-field logits: alpha plus interaction with neighbor sums."""
    return alpha[None, :] + (graph.neighbor_matrix @ post) @ inter


def variational_objective(post: np.ndarray, log_emission: np.ndarray,
                          field_logits: np.ndarray) -> float:
    """Mean-field objective for a fixed field (neighbors frozen)."""
    entropy = -np.sum(np.where(post > 0, post * np.log(np.where(post > 0, post, 1.0)), 0.0))
    linear = np.sum(post * (field_logits + log_emission))
    return float(linear + entropy - _logsumexp_rows(field_logits).sum())


def mean_field_free_energy(post: np.ndarray, log_emission: np.ndarray,
                           alpha: np.ndarray, inter: np.ndarray,
                           graph: SpatialGraph) -> float:
    """Lyapunov function of the Gauss-Seidel sweep (monotone by construction).

    Equals the expected unnormalized log-joint under the factorized posterior
    plus its entropy, with each unordered edge counted once.
    """
    entropy = -np.sum(np.where(post > 0, post * np.log(np.where(post > 0, post, 1.0)), 0.0))
    unary = np.sum(post * (alpha[None, :] + log_emission))
    pair = 0.5 * np.sum(post * ((graph.neighbor_matrix @ post) @ inter))
    return float(unary + pair + entropy)


def mean_field_estep(data: ObservedData, params: HmrfParams,
                     graph: SpatialGraph, warm: np.ndarray,
                     opts: FitOptions) -> np.ndarray:
    """Drive the posterior table to a mean-field fixed point.

    Sites are updated sequentially in index order; iteration stops when the
    largest cell change falls below ``opts.mf_tol`` or after
    ``opts.mf_max_sweeps`` sweeps.  Raises :class:`NonFiniteError` if a row
    normalizer underflows despite the max-shift stabilization.
    """
    validate_posterior_table(warm)
    if warm.shape != (graph.node_count, params.n_classes):
        raise ValueError("warm table shape must be N x K")
    log_emission = emission_log_pmf(data, params.risks)
    inter = interaction_matrix(params.interaction)
    post = np.ascontiguousarray(warm, dtype=np.float64).copy()
    _gs_run(graph.indptr, graph.indices, log_emission, params.alpha,
            np.ascontiguousarray(inter), post, opts.mf_max_sweeps, opts.mf_tol)
    if not np.all(np.isfinite(post)):
        raise NonFiniteError("posterior row lost all mass during sweep")
    return post


def _lambda_raw(post: np.ndarray, data: ObservedData):
    weighted_counts = post.T @ data.counts.astype(np.float64)
    weighted_pops = post.T @ data.populations.astype(np.float64)
    return weighted_counts, weighted_pops


def mstep_lambda(post: np.ndarray, data: ObservedData,
                 collapse_eps: float | None = None):
    """Closed-form risk update.

    Returns ``(risks, collapsed)`` where ``risks[k]`` is the posterior-mass
    weighted case ratio for class k, floored at ``LAMBDA_FLOOR``, and
    ``collapsed`` flags classes whose population mass fell under
    ``collapse_eps`` (non-fatal).
    """
    weighted_counts, weighted_pops = _lambda_raw(post, data)
    if collapse_eps is None:
        n, k = post.shape
        collapse_eps = 1e-3 * data.populations.sum() / (n * k)
    collapsed = {int(c) for c in np.flatnonzero(weighted_pops < collapse_eps)}
    with np.errstate(divide="ignore", invalid="ignore"):
        risks = weighted_counts / weighted_pops
    risks = np.where(weighted_pops > 0, risks, 0.0)
    return np.maximum(risks, LAMBDA_FLOOR), collapsed


def constraint_gap(post: np.ndarray, data: ObservedData) -> float:
    """Relative gap in the average-risk identity for the raw risk update.

    The population-share weighted sum of the updated risks must equal the
    global case ratio; this is checked before flooring or re-sorting.
    """
    weighted_counts, weighted_pops = _lambda_raw(post, data)
    total_pop = float(data.populations.sum())
    if total_pop == 0:
        return 0.0
    avg = float(data.counts.sum()) / total_pop
    shares = weighted_pops / total_pop
    with np.errstate(divide="ignore", invalid="ignore"):
        risks = weighted_counts / weighted_pops
    terms = np.where(weighted_pops > 0, shares * risks, 0.0)
    return abs(float(terms.sum()) - avg) / max(avg, np.finfo(float).tiny)


def beta_surrogate(post: np.ndarray, graph: SpatialGraph,
                   kind: InteractionKind, alpha: np.ndarray, b: float):
    """Value and gradient of the mean-field field-parameter surrogate.

    The surrogate is the expected field score of the posterior table minus
    the per-node log-partition of the field logits; it is concave in
    ``(alpha, b)`` jointly.
    """
    n_classes = post.shape[1]
    pattern = structure_matrix(kind, n_classes)
    drive = (graph.neighbor_matrix @ post) @ pattern
    return _surrogate_value_grad(post, drive, alpha, b)


def mstep_beta(post: np.ndarray, graph: SpatialGraph, current: HmrfParams,
               fix_b: float | None = None, *, b_max: float = 10.0,
               max_iters: int = 500, tol: float = 1e-8):
    """Field-parameter update by projected gradient ascent.

    Maximizes :func:`beta_surrogate` over the external field and, unless
    ``fix_b`` is given, the interaction strength clamped to ``[0, b_max]``.
    Backtracking halves the step until the Armijo condition holds; the last
    field entry is pinned to zero afterwards.  Returns
    ``(alpha, b, no_ascent)`` where ``no_ascent`` flags a line search that
    failed on the very first iteration (current values are then returned).
    """
    kind = current.interaction.kind
    if kind is InteractionKind.FULL_FREE:
        raise ValueError("field estimation needs a scalar interaction family")
    n_nodes, n_classes = post.shape
    alpha = current.alpha.astype(np.float64).copy()
    b = float(fix_b) if fix_b is not None else float(current.interaction.b)
    b = min(max(b, 0.0), b_max)

    # The drive term depends only on the posterior table, which is frozen
    # for the whole ascent.
    pattern = structure_matrix(kind, n_classes)
    drive = (graph.neighbor_matrix @ post) @ pattern
    grad_tol = tol * max(1.0, n_nodes)
    free_b = fix_b is None
    no_ascent = False
    value, grad_alpha, grad_b, caa, cab, cbb = _surrogate_with_curvature(
        post, drive, alpha, b)
    for it in range(max_iters):
        if not free_b:
            grad_b = 0.0
        if max(float(np.max(np.abs(grad_alpha))), abs(grad_b)) < grad_tol:
            break
        # Newton-preconditioned ascent direction in gauge-reduced
        # coordinates (last field entry pinned); the surrogate is concave,
        # so the solved direction is uphill whenever the curvature block is
        # nondegenerate.  Plain scaled gradient is the fallback.
        dims = n_classes - 1 + (1 if free_b else 0)
        dir_alpha = np.zeros(n_classes)
        dir_b = 0.0
        if dims > 0:
            curv = np.empty((dims, dims))
            grad_red = np.empty(dims)
            curv[:n_classes - 1, :n_classes - 1] = caa[:-1, :-1]
            grad_red[:n_classes - 1] = grad_alpha[:-1]
            if free_b:
                curv[-1, :n_classes - 1] = cab[:-1]
                curv[:n_classes - 1, -1] = cab[:-1]
                curv[-1, -1] = cbb
                grad_red[-1] = grad_b
            curv[np.diag_indices(dims)] += 1e-9 * (1.0 + np.trace(curv))
            try:
                delta = np.linalg.solve(curv, grad_red)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and float(grad_red @ delta) > 0:
                dir_alpha[:n_classes - 1] = delta[:n_classes - 1]
                if free_b:
                    dir_b = float(delta[-1])
            else:
                scale = 4.0 / max(1.0, n_nodes)
                dir_alpha[:n_classes - 1] = scale * grad_alpha[:-1]
                if free_b:
                    dir_b = scale * grad_b
        trial = 1.0
        accepted = False
        while trial > 1e-18:
            alpha_new = np.clip(alpha + trial * dir_alpha, -ALPHA_BOUND, ALPHA_BOUND)
            b_new = min(max(b + trial * dir_b, 0.0), b_max) if free_b else b
            moved = float(grad_alpha @ (alpha_new - alpha)) + grad_b * (b_new - b)
            if moved <= 0:
                break  # projection blocked every ascent direction
            out = _surrogate_with_curvature(post, drive, alpha_new, b_new)
            if out[0] >= value + 1e-4 * moved:
                accepted = True
                break
            trial /= 2.0
        if not accepted:
            if it == 0:
                no_ascent = True
            break
        improvement = out[0] - value
        alpha, b = alpha_new, b_new
        value, grad_alpha, grad_b, caa, cab, cbb = out
        if improvement < 1e-12 * (1.0 + abs(value)):
            break
    if fix_b is not None:
        b = float(fix_b)
    return alpha - alpha[-1], b, no_ascent


def mean_field_log_likelihood(post: np.ndarray, data: ObservedData,
                              params: HmrfParams, graph: SpatialGraph) -> float:
    """Surrogate evidence: per-node mixture of emissions under field weights."""
    log_emission = emission_log_pmf(data, params.risks)
    logits = local_field(post, params.alpha, interaction_matrix(params.interaction), graph)
    log_weights = logits - _logsumexp_rows(logits)[:, None]
    return float(_logsumexp_rows(log_weights + log_emission).sum())


def vem_fit(data: ObservedData, graph: SpatialGraph, init: HmrfParams,
            opts: FitOptions | None = None,
            warm: np.ndarray | None = None) -> FitResult:
    """Run mean-field EM to convergence from one starting point.

    Each iteration performs the mean-field E-step, the closed-form risk
    update (with an ascending re-sort and matching column permutation so
    class index keeps meaning risk rank), and the field update.  Stops when
    the relative change of the surrogate log-likelihood drops below
    ``opts.em_rel_tol`` or at ``opts.max_em_iters``.
    """
    if opts is None:
        opts = FitOptions()
    n, k = graph.node_count, init.n_classes
    if data.n_nodes != n:
        raise ValueError("data and graph disagree on node count")

    spec = init.interaction
    if opts.fix_b is not None:
        spec = spec.with_b(opts.fix_b)
    params = HmrfParams(init.risks, init.alpha - init.alpha[-1], spec)
    post = uniform_posteriors(n, k) if warm is None else np.asarray(warm, dtype=np.float64)
    collapse_eps = opts.collapse_rel_eps * data.populations.sum() / (n * k)

    ll_trace: list[float] = []
    b_trace: list[float] = []
    gaps: list[float] = []
    collapsed: set[int] = set()
    no_ascent_count = 0
    iterations = 0

    for _ in range(opts.max_em_iters):
        iterations += 1
        post = mean_field_estep(data, params, graph, post, opts)

        gaps.append(constraint_gap(post, data))
        risks, collapsed = mstep_lambda(post, data, collapse_eps)
        order = np.argsort(risks, kind="stable")
        inverse = np.empty(k, dtype=np.int64)
        inverse[order] = np.arange(k)
        risks = risks[order]
        post = np.ascontiguousarray(post[:, order])
        alpha = params.alpha[order]
        collapsed = {int(inverse[c]) for c in collapsed}

        mid = HmrfParams(risks, alpha - alpha[-1], params.interaction)
        alpha, b, no_ascent = mstep_beta(
            post, graph, mid, fix_b=opts.fix_b, b_max=opts.b_max,
            max_iters=opts.beta_max_iters, tol=opts.beta_tol)
        no_ascent_count += int(no_ascent)
        params = HmrfParams(risks, alpha, params.interaction.with_b(b))

        ll = mean_field_log_likelihood(post, data, params, graph)
        if not np.isfinite(ll):
            raise NonFiniteError("log-likelihood diverged")
        ll_trace.append(ll)
        b_trace.append(b)
        if len(ll_trace) > 1:
            prev = ll_trace[-2]
            if abs(ll - prev) < opts.em_rel_tol * abs(prev):
                break

    labels = np.argmax(post, axis=1)
    result = FitResult(
        params=params,
        posteriors=post,
        labels=labels,
        ll_trace=np.asarray(ll_trace),
        bic=0.0,
        iterations=iterations,
        collapsed_classes=collapsed,
        b_trace=np.asarray(b_trace),
        constraint_gaps=np.asarray(gaps),
        no_ascent_count=no_ascent_count,
    )
    result.bic = bic(result, n)
    return result


def bic(fit: FitResult, n_nodes: int) -> float:
    """Mean-field information criterion: ``2 ll - d log N``; larger is better.

    The dimension counts the risks, the gauged external field, and the
    scalar interaction strength.
    """
    k = fit.params.n_classes
    dim = k + (k - 1) + 1
    return float(2.0 * fit.log_likelihood - dim * np.log(n_nodes))
