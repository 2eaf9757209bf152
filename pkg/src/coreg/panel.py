"""Sparse longitudinal panels of (time, covariate, object response) triples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, EmptyInputError
from .spaces import ObjectSpace


@dataclass(frozen=True, eq=False)
class SparsePanel:
    """Observations ``(T_il, X_il, Y_il)`` for subjects i with n_i records each.

    Arrays are aligned by observation. ``subject`` holds integer codes
    0..n-1 into ``subject_ids``. ``x`` is always 2-D, shape (N, p).
    """

    subject_ids: tuple
    subject: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    space: ObjectSpace

    def __post_init__(self):
        subject = np.asarray(self.subject, dtype=np.int64)
        t = np.asarray(self.t, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float)
        n_obs = t.size
        if n_obs == 0:
            raise EmptyInputError("panel has no observations")
        if subject.shape != (n_obs,) or x.shape[0] != n_obs or y.shape[0] != n_obs:
            raise DimensionError("subject, t, x and y must have the same number of rows")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ContractError("times and covariates must be finite")
        n = len(self.subject_ids)
        counts = np.bincount(subject, minlength=n)
        if subject.min() < 0 or subject.max() >= n or np.any(counts == 0):
            raise ContractError("every subject needs at least one observation")
        self.space.validate_values(y)
        for name, arr in (("subject", subject), ("t", t), ("x", x), ("y", y)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def from_records(cls, subject_ids, t, x, y, space: ObjectSpace) -> "SparsePanel":
        """Build from per-observation subject labels, grouping by first appearance."""
        labels = list(subject_ids)
        order: dict = {}
        codes = np.array([order.setdefault(s, len(order)) for s in labels], dtype=np.int64)
        return cls(tuple(order), codes, t, x, y, space)

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def N(self) -> int:
        return self.t.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """n_i per subject."""
        return self._counts

    @property
    def obs_counts(self) -> np.ndarray:
        """n_i of the subject owning each observation."""
        return self._counts[self.subject]

    @property
    def obs_mass(self) -> np.ndarray:
        """``1 / (n n_i)``: the double-average factor of each observation; sums to 1."""
        return 1.0 / (self.n * self.obs_counts)

    def flat_y(self) -> np.ndarray:
        return self.space.flatten(self.y)

    def subset(self, subjects) -> "SparsePanel":
        """Panel restricted to the given subject codes, in the given order."""
        subjects = [int(s) for s in subjects]
        if not subjects:
            raise EmptyInputError("cannot build an empty panel")
        idx = np.concatenate([np.flatnonzero(self.subject == s) for s in subjects])
        remap = {s: k for k, s in enumerate(subjects)}
        codes = np.array([remap[s] for s in self.subject[idx]], dtype=np.int64)
        return SparsePanel(
            tuple(self.subject_ids[s] for s in subjects),
            codes,
            self.t[idx],
            self.x[idx],
            self.y[idx],
            self.space,
        )

    def without_subject(self, i: int) -> "SparsePanel":
        return self.subset([s for s in range(self.n) if s != i])

    def with_responses(self, y) -> "SparsePanel":
        return SparsePanel(self.subject_ids, self.subject, self.t, self.x, y, self.space)


def concat_panels(panels) -> SparsePanel:
    """Stack panels subject-wise; subject ids must not collide."""
    panels = list(panels)
    ids: list = []
    subj, t, x, y = [], [], [], []
    for p in panels:
        subj.append(p.subject + len(ids))
        ids.extend(p.subject_ids)
        t.append(p.t)
        x.append(p.x)
        y.append(p.y)
    if len(set(ids)) != len(ids):
        raise ContractError("subject ids collide across panels")
    return SparsePanel(
        tuple(ids), np.concatenate(subj), np.concatenate(t), np.concatenate(x),
        np.concatenate(y), panels[0].space,
    )
