"""Diagnostics for fitted CORE models: Pearson objects, goodness of fit,
out-of-sample prediction error and a two-group permutation test."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._parallel import map_ordered, task_rng
from .errors import ContractError, DegenerateSignalError, DimensionError, SingularDesignError
from .panel import SparsePanel
from .regression import Estimator
from .simulation import quadrature_nodes
from .spaces import CorrMatrixObject

log = logging.getLogger(__name__)


def pearson_object(signals) -> CorrMatrixObject:
    """Correlation matrix between the columns of a (K time samples x V) signal matrix."""
    s = np.asarray(signals, dtype=float)
    if s.ndim != 2:
        raise DimensionError("signal matrix must be 2-D (samples x channels)")
    if s.shape[0] < 2:
        raise ContractError("need at least 2 time samples")
    c = s - s.mean(axis=0)
    norms = np.sqrt(np.einsum("kv,kv->v", c, c))
    flat = np.flatnonzero(~(norms > 0))
    if flat.size:
        raise DegenerateSignalError(f"signal column {flat[0]} is constant", int(flat[0]))
    u = c / norms
    r = u.T @ u
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    np.clip(r, -1.0, 1.0, out=r)
    return CorrMatrixObject(r)


def _predictor(model, panel: SparsePanel) -> Callable:
    """Normalise ``model`` to ``f(xq, tq) -> (rows, singular)`` for ``panel``."""
    if isinstance(model, Estimator):
        def f(xq, tq):
            xq = xq[:, 0] if model.kind == "local" else xq
            return model.predict(panel, xq, tq)
        return f
    return model


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class GofCurve:
    t: np.ndarray
    mse: np.ndarray
    counts: np.ndarray
    integrated: float
    skipped_nodes: int
    singular_obs: int

    def rows(self):
        return list(zip(self.t.tolist(), self.mse.tolist(), self.counts.tolist()))


def gof_curve(panel: SparsePanel, model, t_grid) -> GofCurve:
    """Squared distance between observed responses and their fits, binned in time.

    Every observation is paired with the model's fit at its own ``(X, T)``;
    the squared distances are averaged within the nearest-node cell of
    ``t_grid`` (sorted, at least 2 nodes). Nodes without observations are
    skipped. The integrated deviance sums ``mse * cell width`` over kept
    nodes, with cells bounded halfway between neighbouring nodes.

    ``model`` is an :class:`Estimator` (fitted on ``panel`` itself) or a
    callable ``(xq, tq) -> (rows, singular)`` returning flattened objects.
    """
    tg = np.sort(np.asarray(t_grid, dtype=float).reshape(-1))
    if tg.size < 2:
        raise ContractError("t_grid needs at least 2 nodes")
    predict = _predictor(model, panel)
    rows, singular = predict(panel.x, panel.t)
    d = np.asarray(rows, dtype=float) - panel.flat_y()
    err = panel.space.sq_scale * np.einsum("ij,ij->i", d, d)
    ok = ~np.asarray(singular, dtype=bool)

    node = np.argmin(np.abs(panel.t[:, None] - tg[None, :]), axis=1)
    counts = np.bincount(node[ok], minlength=tg.size)
    sums = np.bincount(node[ok], weights=err[ok], minlength=tg.size)
    mse = np.full(tg.size, np.nan)
    mse[counts > 0] = sums[counts > 0] / counts[counts > 0]

    mids = 0.5 * (tg[1:] + tg[:-1])
    edges = np.concatenate([[tg[0] - (mids[0] - tg[0])], mids, [tg[-1] + (tg[-1] - mids[-1])]])
    width = np.diff(edges)
    keep = counts > 0
    integrated = float(np.sum(mse[keep] * width[keep]))
    return GofCurve(tg, mse, counts, integrated, int((~keep).sum()), int((~ok).sum()))


# ---------------------------------------------------------------------------
# out-of-sample prediction error


@dataclass(frozen=True)
class RmpeResult:
    value: float
    excluded: int
    n_test: int


def split_panel(panel: SparsePanel, train_frac: float, seed: int, index: int = 0):
    """Random subject-level split into (train, test); ``index`` selects the repeat."""
    if not 0 < train_frac < 1:
        raise ContractError("train_frac must lie in (0, 1)")
    if panel.n < 2:
        raise ContractError("need at least 2 subjects to split")
    perm = task_rng(seed, index).permutation(panel.n)
    k = min(max(int(round(train_frac * panel.n)), 1), panel.n - 1)
    return panel.subset(np.sort(perm[:k])), panel.subset(np.sort(perm[k:]))


def rmpe(train: SparsePanel, test: SparsePanel, estimator: Estimator, space=None) -> RmpeResult:
    """Root mean squared prediction error of a model fitted on ``train`` over ``test``.

    ``sqrt( (1/n_test) sum_i (1/n_i) sum_l d^2(Y_il, fit(X_il, T_il)) )``;
    test points with a singular fit are excluded (and counted), subjects left
    with no usable points drop out of the outer average.
    """
    if set(train.subject_ids) & set(test.subject_ids):
        raise ContractError("train and test panels share subjects")
    space = space or train.space
    xq = test.x[:, 0] if estimator.kind == "local" else test.x
    rows, singular = estimator.predict(train, xq, test.t)
    d = rows - test.flat_y()
    err = space.sq_scale * np.einsum("ij,ij->i", d, d)
    ok = ~singular
    sums = np.bincount(test.subject[ok], weights=err[ok], minlength=test.n)
    cnt = np.bincount(test.subject[ok], minlength=test.n)
    used = cnt > 0
    if not used.any():
        raise SingularDesignError("every test point has a singular fit")
    value = float(np.sqrt(np.mean(sums[used] / cnt[used])))
    return RmpeResult(value, int(singular.sum()), int(used.sum()))


# ---------------------------------------------------------------------------
# permutation test


@dataclass(frozen=True)
class PermutationResult:
    observed: float
    permuted: np.ndarray
    p_value: float
    skipped_nodes: int
    count_drift: np.ndarray

    @property
    def B(self) -> int:
        return self.permuted.size


def _panel_key(panel: SparsePanel):
    h = hashlib.sha256()
    for a in (panel.subject, panel.t, panel.x, panel.y):
        h.update(np.ascontiguousarray(a).tobytes())
    return (panel.n, panel.N, h.hexdigest())


def _pool(first: SparsePanel, second: SparsePanel) -> SparsePanel:
    return SparsePanel(
        tuple(range(first.n + second.n)),
        np.concatenate([first.subject, second.subject + first.n]),
        np.concatenate([first.t, second.t]),
        np.concatenate([first.x, second.x]),
        np.concatenate([first.y, second.y]),
        first.space,
    )


def permutation_test(panel_a: SparsePanel, panel_b: SparsePanel, estimator: Estimator,
                     x_range, t_range, quad_points=10, B: int = 199, seed: int = 0,
                     n_jobs: int | None = None) -> PermutationResult:
    """Subject-level permutation test of equal regression surfaces in two groups.

    Statistic: midpoint-rule integral over the (x, t) rectangle of the object
    distance between the two groups' fitted surfaces. Nodes singular for the
    observed groups are dropped throughout; a node singular only under some
    permutation is dropped from that permutation alone, with the integral
    rescaled to the full area. ``p = (1 + #{perm >= obs}) / (B + 1)``.

    The two panels are put in a canonical order first, so swapping them gives
    the identical result.
    """
    if B < 1:
        raise ContractError("B must be >= 1")
    if panel_a.p != 1 or panel_b.p != 1:
        raise ContractError("the permutation grid supports a scalar covariate only")
    first, second = sorted((panel_a, panel_b), key=_panel_key)
    space = first.space
    xs, ts, cell = quadrature_nodes(x_range, t_range, quad_points)
    area = cell * xs.size
    xq = xs if estimator.kind == "local" else xs[:, None]

    def surfaces(pa, pb):
        ra, sa = estimator.predict(pa, xq, ts)
        rb, sb = estimator.predict(pb, xq, ts)
        return ra, rb, sa | sb

    ra, rb, bad = surfaces(first, second)
    valid = ~bad
    if not valid.any():
        raise SingularDesignError("every grid node is singular for the observed groups")
    if bad.any():
        log.warning("%d of %d grid nodes singular for the observed groups", bad.sum(), bad.size)

    def statistic(ra, rb, use):
        d = ra[use] - rb[use]
        dist = np.sqrt(space.sq_scale * np.einsum("ij,ij->i", d, d))
        return float(dist.sum() * area / use.sum())

    observed = statistic(ra, rb, valid)
    pooled = _pool(first, second)
    n1 = first.n

    def one(b):
        perm = task_rng(seed, b).permutation(pooled.n)
        ga = pooled.subset(np.sort(perm[:n1]))
        gb = pooled.subset(np.sort(perm[n1:]))
        pa, pb, pbad = surfaces(ga, gb)
        use = valid & ~pbad
        if not use.any():
            return np.nan, int(valid.sum()), ga.N - first.N
        return statistic(pa, pb, use), int((valid & pbad).sum()), ga.N - first.N

    res = map_ordered(one, range(B), n_jobs)
    permuted = np.array([r[0] for r in res])
    skipped = int(bad.sum()) + sum(r[1] for r in res)
    drift = np.array([r[2] for r in res])
    hits = np.sum(permuted[np.isfinite(permuted)] >= observed)
    p = (1.0 + hits) / (B + 1.0)
    return PermutationResult(observed, permuted, float(p), skipped, drift)
