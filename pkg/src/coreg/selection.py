"""Leave-one-subject-out cross-validation for the CORE bandwidths."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._parallel import map_ordered
from .errors import ContractError, SelectionError
from .kernels import as_kernel
from .panel import SparsePanel
from .regression import Estimator

log = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.2
_CHUNK = 512


@dataclass(frozen=True)
class CvCandidate:
    bandwidths: tuple
    score: float
    skipped_folds: int
    folds: int

    @property
    def disqualified(self) -> bool:
        return not np.isfinite(self.score)


@dataclass(frozen=True)
class CvGrid:
    candidates: tuple
    selected: int

    @property
    def best(self) -> CvCandidate:
        return self.candidates[self.selected]

    def scores(self) -> np.ndarray:
        return np.array([c.score for c in self.candidates])


def loso_squared_errors(panel: SparsePanel, estimator: Estimator, space=None):
    """Out-of-fold squared distance per observation, NaN where the fold fit is singular.

    Each observation is predicted from the panel with its whole subject removed.
    """
    if panel.n < 2:
        raise ContractError("cross-validation needs at least 2 subjects")
    space = space or panel.space
    yflat = panel.flat_y()
    out = np.empty(panel.N)
    xq = panel.x[:, 0] if estimator.kind == "local" else panel.x
    for lo in range(0, panel.N, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        rows, singular = estimator.predict(panel, xq[sl], panel.t[sl], exclude=panel.subject[sl])
        d = rows - yflat[sl]
        err = space.sq_scale * np.einsum("ij,ij->i", d, d)
        err[singular] = np.nan
        out[sl] = err
    return out


def _score(panel: SparsePanel, errors: np.ndarray, max_skip: float):
    per_subject = np.full(panel.n, np.nan)
    sums = np.bincount(panel.subject, weights=np.nan_to_num(errors, nan=0.0), minlength=panel.n)
    bad = np.bincount(panel.subject, weights=~np.isfinite(errors), minlength=panel.n) > 0
    per_subject[~bad] = sums[~bad] / panel.counts[~bad]
    skipped = int(bad.sum())
    if skipped > max_skip * panel.n or skipped == panel.n:
        return np.inf, skipped
    return float(np.mean(per_subject[~bad])), skipped


def _select(candidates: list[CvCandidate]) -> int:
    scores = np.array([c.score for c in candidates])
    if not np.any(np.isfinite(scores)):
        raise SelectionError("every bandwidth candidate was disqualified by singular folds")
    best = np.min(scores)
    tied = [k for k, s in enumerate(scores) if np.isfinite(s) and s <= best + 1e-9 * best + 1e-15]
    return min(tied, key=lambda k: candidates[k].bandwidths)


def _run(panel, estimators, space, n_jobs, max_skip):
    def one(est):
        err = loso_squared_errors(panel, est, space)
        score, skipped = _score(panel, err, max_skip)
        if skipped:
            log.info("bandwidths %s: %d of %d folds skipped", est.bandwidths, skipped, panel.n)
        return CvCandidate(est.bandwidths, score, skipped, panel.n)

    candidates = map_ordered(one, estimators, n_jobs)
    return CvGrid(tuple(candidates), _select(candidates))


def cv_select_local(panel: SparsePanel, grid, kernel="gaussian", space=None,
                    n_jobs: int | None = None, max_skip: float = MAX_SKIP_FRACTION):
    """Pick ``(h1, h2)`` minimising the leave-one-subject-out CV score.

    Ties go to the smallest ``h1``, then ``h2``. Returns ``(h1, h2, CvGrid)``.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ContractError("bandwidth grid is empty")
    kernel = as_kernel(kernel)
    ests = [Estimator("local", h1=a, h2=b, kernel=kernel) for a, b in grid]
    cv = _run(panel, ests, space, n_jobs, max_skip)
    h1, h2 = cv.best.bandwidths
    return h1, h2, cv


def cv_select_global(panel: SparsePanel, grid, kernel="gaussian", space=None,
                     n_jobs: int | None = None, max_skip: float = MAX_SKIP_FRACTION):
    """Pick the time bandwidth ``h`` of the partially global estimator; returns ``(h, CvGrid)``."""
    grid = [float(h) for h in grid]
    if not grid:
        raise ContractError("bandwidth grid is empty")
    kernel = as_kernel(kernel)
    ests = [Estimator("global", h=h, kernel=kernel) for h in grid]
    cv = _run(panel, ests, space, n_jobs, max_skip)
    return cv.best.bandwidths[0], cv
