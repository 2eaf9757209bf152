"""Nonparametric and Partially Global concurrent object regression.

Both estimators reduce to a weighted Fréchet mean of the observed responses,

    argmin_w  (1/n) sum_i (1/n_i) sum_l s_il d^2(Y_il, w),

and differ only in how the observation weights ``s_il`` are built:

* local: local-linear kernel weights in (X, T) jointly, with a product kernel
  ``K_{h1,h2}``;
* partially global: globally linear in X, local-linear in T with ``K_h``.

All weight and fit routines are vectorised over a batch of query points; the
single-query functions are thin wrappers over the batch path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SingularDesignError
from .kernels import KernelSpec, as_kernel
from .panel import SparsePanel
from .spaces import ObjectSpace

SINGULAR_RTOL = 1e-12


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class LocalMoments:
    x0: float
    t0: float
    h1: float
    h2: float
    mu00: float
    mu10: float
    mu01: float
    mu20: float
    mu02: float
    mu11: float
    sigma0_sq: float
    nu: tuple[float, float, float]

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.mu00, self.mu10, self.mu01],
                [self.mu10, self.mu20, self.mu11],
                [self.mu01, self.mu11, self.mu02],
            ]
        )


@dataclass(frozen=True)
class GlobalMoments:
    t0: float
    h: float
    mu00: float
    mu01: float
    mu02: float
    sigma0_sq: float
    xbar: np.ndarray
    Sigma_20: np.ndarray


@dataclass(frozen=True)
class WeightVector:
    """Per-observation weights ``s_il`` for one query, in panel order."""

    weights: np.ndarray
    query: tuple
    bandwidths: tuple
    mass: np.ndarray = field(repr=False)

    def panel_average(self) -> float:
        """``(1/n) sum_i (1/n_i) sum_l s_il``; equals 1 for a valid design."""
        return float(np.dot(self.mass, self.weights))

    @property
    def coefficients(self) -> np.ndarray:
        """Fréchet-mean coefficients ``s_il / (n n_i)``, summing to 1."""
        return self.weights * self.mass


@dataclass(frozen=True)
class FitResult:
    """Fitted object at one query point; ``fitted`` is None when singular."""

    fitted: object
    query: tuple
    bandwidths: tuple
    weights: np.ndarray | None
    objective: float
    iterations: int = 0
    residual: float = 0.0
    singular: bool = False

    @property
    def ok(self) -> bool:
        return not self.singular


# ---------------------------------------------------------------------------
# vectorised weight construction


@dataclass
class _Design:
    """Observation arrays plus the double-average mass of each observation."""

    t: np.ndarray
    x: np.ndarray
    mass: np.ndarray
    subject: np.ndarray
    n: int

    @classmethod
    def of(cls, panel: SparsePanel) -> "_Design":
        return cls(panel.t, panel.x, panel.obs_mass, panel.subject, panel.n)

    def masked_mass(self, exclude) -> np.ndarray:
        """(Q, N) mass with each query's own subject removed and n -> n-1."""
        exclude = np.asarray(exclude)
        keep = self.subject[None, :] != exclude[:, None]
        return np.where(keep, self.mass[None, :] * self.n / (self.n - 1), 0.0)


def _local_weight_matrix(design: _Design, xq, tq, h1, h2, kernel: KernelSpec, exclude=None):
    """Local-linear weights for every (query, observation) pair.

    Returns ``(S, coef, singular, moments)`` where ``S`` holds ``s_il`` and
    ``coef = S * mass`` are the Fréchet-mean coefficients (rows sum to 1).
    """
    if h1 <= 0 or h2 <= 0:
        raise ContractError("bandwidths must be positive")
    xq = np.asarray(xq, dtype=float).reshape(-1)
    tq = np.asarray(tq, dtype=float).reshape(-1)
    dx = design.x[None, :, 0] - xq[:, None]
    dt = design.t[None, :] - tq[:, None]
    K = kernel.profile(dx / h1) * kernel.profile(dt / h2) / (h1 * h2)
    mass = design.mass[None, :] if exclude is None else design.masked_mass(exclude)
    Km = K * mass
    mu00 = Km.sum(axis=1)
    mu10 = (Km * dx).sum(axis=1)
    mu01 = (Km * dt).sum(axis=1)
    mu20 = (Km * dx * dx).sum(axis=1)
    mu02 = (Km * dt * dt).sum(axis=1)
    mu11 = (Km * dx * dt).sum(axis=1)
    det = (
        mu00 * mu20 * mu02
        - mu00 * mu11**2
        - mu10**2 * mu02
        - mu01**2 * mu20
        + 2.0 * mu01 * mu10 * mu11
    )
    scale = mu00 * mu20 * mu02
    singular = ~(np.abs(det) > SINGULAR_RTOL * scale) | ~np.isfinite(det)
    # nu = M^{-1} e1 (the cofactor column over the determinant), by a stacked
    # solve plus one refinement step: the determinant alone loses digits on
    # ill-conditioned designs and would bias the weight average away from 1.
    M = np.stack([mu00, mu10, mu01, mu10, mu20, mu11, mu01, mu11, mu02], axis=-1)
    M = M.reshape(-1, 3, 3)
    M = np.where(singular[:, None, None], np.eye(3), M)
    e1 = np.zeros((M.shape[0], 3, 1))
    e1[:, 0] = 1.0
    nu = np.linalg.solve(M, e1)
    nu += np.linalg.solve(M, e1 - M @ nu)
    nu1, nu2, nu3 = nu[:, 0, 0], nu[:, 1, 0], nu[:, 2, 0]
    S = K * (nu1[:, None] + nu2[:, None] * dx + nu3[:, None] * dt)
    S[singular] = 0.0
    coef = S * mass
    moments = dict(
        mu00=mu00, mu10=mu10, mu01=mu01, mu20=mu20, mu02=mu02, mu11=mu11,
        sigma0_sq=det, nu1=nu1, nu2=nu2, nu3=nu3,
    )
    return S, coef, singular, moments


def _global_weight_matrix(design: _Design, xq, tq, h, kernel: KernelSpec, exclude=None):
    """Partially global weights ``s_1 + s_2`` for every (query, observation) pair.

    Covariates are centred at their kernel-weighted mean around ``t0`` so the
    ``s_1`` part averages to exactly zero over the panel.
    """
    if h <= 0:
        raise ContractError("bandwidth must be positive")
    p = design.x.shape[1]
    xq = np.asarray(xq, dtype=float).reshape(-1, p)
    tq = np.asarray(tq, dtype=float).reshape(-1)
    if xq.shape[0] != tq.shape[0]:
        raise ContractError("query covariates and times differ in length")
    dt = design.t[None, :] - tq[:, None]
    K = kernel.profile(dt / h) / h
    mass = design.mass[None, :] if exclude is None else design.masked_mass(exclude)
    Km = K * mass
    mu00 = Km.sum(axis=1)
    mu01 = (Km * dt).sum(axis=1)
    mu02 = (Km * dt * dt).sum(axis=1)
    sigma0_sq = mu02 * mu00 - mu01**2
    safe00 = np.where(mu00 > 0, mu00, 1.0)
    xbar = (Km @ design.x) / safe00[:, None]
    xc = design.x[None, :, :] - xbar[:, None, :]
    S20 = np.einsum("qn,qni,qnj->qij", Km, xc, xc)

    singular = ~(sigma0_sq > SINGULAR_RTOL * mu00 * mu02) | ~(mu00 > 0)
    lam = np.linalg.eigvalsh(S20)
    singular |= ~(lam[:, 0] > SINGULAR_RTOL * np.maximum(lam[:, -1], 0.0)) | ~(lam[:, -1] > 0)
    eye = np.broadcast_to(np.eye(p), S20.shape)
    S20_safe = np.where(singular[:, None, None], eye, S20)
    direction = np.linalg.solve(S20_safe, (xq - xbar)[:, :, None])[:, :, 0]
    s1 = K * np.einsum("qnj,qj->qn", xc, direction)
    safe_sig = np.where(singular, 1.0, sigma0_sq)
    s2 = K * (mu02[:, None] - dt * mu01[:, None]) / safe_sig[:, None]
    S = s1 + s2
    S[singular] = 0.0
    coef = S * mass
    moments = dict(mu00=mu00, mu01=mu01, mu02=mu02, sigma0_sq=sigma0_sq, xbar=xbar, Sigma_20=S20)
    return S, coef, singular, moments


def _project_fits(space: ObjectSpace, coef: np.ndarray, yflat: np.ndarray, singular: np.ndarray):
    avg = coef @ yflat
    rows, iters, res = space.project_rows(np.where(singular[:, None], 0.0, avg))
    rows[singular] = np.nan
    return rows, iters, res


def _objective(space: ObjectSpace, coef, yflat, fitted_rows):
    """``sum coef * d^2(Y, fit)`` by expanding the square (no N x Q x D temporaries)."""
    ysq = np.einsum("ij,ij->i", yflat, yflat)
    csum = coef.sum(axis=1)
    fsq = np.einsum("ij,ij->i", fitted_rows, fitted_rows)
    cross = np.einsum("ij,ij->i", coef @ yflat, fitted_rows)
    return space.sq_scale * (coef @ ysq - 2.0 * cross + csum * fsq)


# ---------------------------------------------------------------------------
# nonparametric (local) estimator


def _require_scalar_covariate(panel: SparsePanel):
    if panel.p != 1:
        raise ContractError("the local estimator supports a scalar covariate only (p = 1)")


def local_moments(panel: SparsePanel, x0: float, t0: float, h1: float, h2: float,
                  kernel="gaussian") -> LocalMoments:
    _require_scalar_covariate(panel)
    kernel = as_kernel(kernel)
    _, _, singular, m = _local_weight_matrix(_Design.of(panel), [x0], [t0], h1, h2, kernel)
    if singular[0]:
        raise SingularDesignError(
            f"local design is singular at (x0={x0}, t0={t0}) with h1={h1}, h2={h2}",
            query=(x0, t0),
        )
    g = {k: float(v[0]) for k, v in m.items()}
    return LocalMoments(
        float(x0), float(t0), float(h1), float(h2),
        g["mu00"], g["mu10"], g["mu01"], g["mu20"], g["mu02"], g["mu11"],
        g["sigma0_sq"], (g["nu1"], g["nu2"], g["nu3"]),
    )


def local_weights(m: LocalMoments, panel: SparsePanel, kernel="gaussian") -> WeightVector:
    kernel = as_kernel(kernel)
    dx = panel.x[:, 0] - m.x0
    dt = panel.t - m.t0
    K = kernel.profile(dx / m.h1) * kernel.profile(dt / m.h2) / (m.h1 * m.h2)
    nu1, nu2, nu3 = m.nu
    s = K * (nu1 + nu2 * dx + nu3 * dt)
    return WeightVector(s, (m.x0, m.t0), (m.h1, m.h2), panel.obs_mass)


def predict_local(panel: SparsePanel, xq, tq, h1, h2, kernel="gaussian", exclude=None):
    """Fitted flattened objects at many queries; NaN rows where singular.

    Returns ``(rows, singular)``. ``exclude`` optionally gives, per query, a
    subject code whose observations are dropped (leave-one-subject-out).
    """
    _require_scalar_covariate(panel)
    _, coef, singular, _ = _local_weight_matrix(
        _Design.of(panel), xq, tq, h1, h2, as_kernel(kernel), exclude
    )
    rows, _, _ = _project_fits(panel.space, coef, panel.flat_y(), singular)
    return rows, singular


def fit_local_batch(panel: SparsePanel, queries, h1: float, h2: float, kernel="gaussian",
                    space: ObjectSpace | None = None, on_singular: str = "raise"):
    """Nonparametric fits at each ``(x0, t0)`` in ``queries``.

    With ``on_singular="skip"`` a singular query yields a FitResult whose
    ``fitted`` is None instead of raising.
    """
    _require_scalar_covariate(panel)
    space = space or panel.space
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    S, coef, singular, _ = _local_weight_matrix(
        _Design.of(panel), q[:, 0], q[:, 1], h1, h2, as_kernel(kernel)
    )
    return _collect(space, panel, q, (float(h1), float(h2)), S, coef, singular, on_singular)


def fit_local(panel: SparsePanel, x0: float, t0: float, h1: float, h2: float,
              kernel="gaussian", space: ObjectSpace | None = None) -> FitResult:
    return fit_local_batch(panel, [(x0, t0)], h1, h2, kernel, space)[0]


# ---------------------------------------------------------------------------
# partially global estimator


def global_moments(panel: SparsePanel, t0: float, h: float, kernel="gaussian") -> GlobalMoments:
    kernel = as_kernel(kernel)
    xq = np.zeros((1, panel.p))
    _, _, singular, m = _global_weight_matrix(_Design.of(panel), xq, [t0], h, kernel)
    if singular[0]:
        raise SingularDesignError(
            f"partially global design is singular at t0={t0} with h={h}", query=(t0,)
        )
    return GlobalMoments(
        float(t0), float(h), float(m["mu00"][0]), float(m["mu01"][0]), float(m["mu02"][0]),
        float(m["sigma0_sq"][0]), m["xbar"][0].copy(), m["Sigma_20"][0].copy(),
    )


def global_weights(m: GlobalMoments, panel: SparsePanel, x, t0: float | None = None,
                   kernel="gaussian") -> WeightVector:
    kernel = as_kernel(kernel)
    t0 = m.t0 if t0 is None else float(t0)
    if t0 != m.t0:
        raise ContractError("moments were computed for a different t0")
    x = np.asarray(x, dtype=float).reshape(-1)
    dt = panel.t - t0
    K = kernel.profile(dt / m.h) / m.h
    xc = panel.x - m.xbar
    s1 = K * (xc @ np.linalg.solve(m.Sigma_20, x - m.xbar))
    s2 = K * (m.mu02 - dt * m.mu01) / m.sigma0_sq
    return WeightVector(s1 + s2, (*x.tolist(), t0), (m.h,), panel.obs_mass)


def predict_global(panel: SparsePanel, xq, tq, h, kernel="gaussian", exclude=None):
    """Partially global analogue of :func:`predict_local`."""
    _, coef, singular, _ = _global_weight_matrix(
        _Design.of(panel), xq, tq, h, as_kernel(kernel), exclude
    )
    rows, _, _ = _project_fits(panel.space, coef, panel.flat_y(), singular)
    return rows, singular


def predict_time_only(panel: SparsePanel, tq, h, kernel="gaussian", exclude=None):
    """Local-linear fits in time alone, ignoring the covariate.

    Uses only the ``s_2`` part of the partially global weights, which is the
    partially global fit evaluated at the centring point of the covariate.
    """
    tq = np.asarray(tq, dtype=float).reshape(-1)
    if h <= 0:
        raise ContractError("bandwidth must be positive")
    design = _Design.of(panel)
    kernel = as_kernel(kernel)
    dt = design.t[None, :] - tq[:, None]
    K = kernel.profile(dt / h) / h
    mass = design.mass[None, :] if exclude is None else design.masked_mass(exclude)
    Km = K * mass
    mu00 = Km.sum(axis=1)
    mu01 = (Km * dt).sum(axis=1)
    mu02 = (Km * dt * dt).sum(axis=1)
    sigma0_sq = mu02 * mu00 - mu01**2
    singular = ~(sigma0_sq > SINGULAR_RTOL * mu00 * mu02) | ~(mu00 > 0)
    safe = np.where(singular, 1.0, sigma0_sq)
    coef = K * (mu02[:, None] - dt * mu01[:, None]) / safe[:, None] * mass
    coef[singular] = 0.0
    rows, _, _ = _project_fits(panel.space, coef, panel.flat_y(), singular)
    return rows, singular


def fit_global_batch(panel: SparsePanel, xq, tq, h: float, kernel="gaussian",
                     space: ObjectSpace | None = None, on_singular: str = "raise"):
    space = space or panel.space
    xq = np.asarray(xq, dtype=float).reshape(-1, panel.p)
    tq = np.asarray(tq, dtype=float).reshape(-1)
    S, coef, singular, _ = _global_weight_matrix(_Design.of(panel), xq, tq, h, as_kernel(kernel))
    q = np.column_stack([xq, tq])
    return _collect(space, panel, q, (float(h),), S, coef, singular, on_singular)


def fit_global(panel: SparsePanel, x, t0: float, h: float, kernel="gaussian",
               space: ObjectSpace | None = None) -> FitResult:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return fit_global_batch(panel, x, [t0], h, kernel, space)[0]


def _collect(space, panel, q, bandwidths, S, coef, singular, on_singular):
    if on_singular not in ("raise", "skip"):
        raise ContractError("on_singular must be 'raise' or 'skip'")
    if on_singular == "raise" and singular.any():
        k = int(np.argmax(singular))
        raise SingularDesignError(
            f"design is singular at query {tuple(q[k])} with bandwidths {bandwidths}",
            query=tuple(q[k]),
        )
    yflat = panel.flat_y()
    rows, iters, res = _project_fits(space, coef, yflat, singular)
    obj = _objective(space, coef, yflat, np.nan_to_num(rows))
    out = []
    for k in range(len(q)):
        query = tuple(float(v) for v in q[k])
        if singular[k]:
            out.append(FitResult(None, query, bandwidths, None, np.nan, singular=True))
            continue
        fitted = space.wrap(space.unflatten(rows[k : k + 1])[0])
        out.append(
            FitResult(fitted, query, bandwidths, S[k].copy(), float(obj[k]),
                      int(iters[k]), float(res[k]))
        )
    return out


# ---------------------------------------------------------------------------
# estimator handle


@dataclass(frozen=True)
class Estimator:
    """Estimator choice plus bandwidths, usable wherever a fitted model is needed.

    ``kind`` is ``"local"`` (uses ``h1`` for the covariate, ``h2`` for time),
    ``"global"`` (uses ``h`` for time) or ``"time_only"`` (baseline that
    ignores the covariate, uses ``h``).
    """

    kind: str
    h1: float | None = None
    h2: float | None = None
    h: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_kernel(self.kernel))
        if self.kind == "local":
            if self.h1 is None or self.h2 is None:
                raise ContractError("local estimator needs h1 and h2")
        elif self.kind in ("global", "time_only"):
            if self.h is None:
                raise ContractError(f"{self.kind} estimator needs h")
        else:
            raise ContractError(f"unknown estimator kind {self.kind!r}")

    @property
    def bandwidths(self) -> tuple:
        return (self.h1, self.h2) if self.kind == "local" else (self.h,)

    def predict(self, panel: SparsePanel, xq, tq, exclude=None):
        """``(rows, singular)`` for queries ``(xq[k], tq[k])``."""
        if self.kind == "local":
            return predict_local(panel, xq, tq, self.h1, self.h2, self.kernel, exclude)
        if self.kind == "time_only":
            return predict_time_only(panel, tq, self.h, self.kernel, exclude)
        return predict_global(panel, xq, tq, self.h, self.kernel, exclude)

    def fit(self, panel: SparsePanel, xq, tq, on_singular: str = "skip"):
        if self.kind == "time_only":
            raise ContractError("the time-only baseline has no FitResult interface; use predict")
        if self.kind == "local":
            q = np.column_stack([np.asarray(xq, float).reshape(-1), np.asarray(tq, float)])
            return fit_local_batch(panel, q, self.h1, self.h2, self.kernel, on_singular=on_singular)
        return fit_global_batch(panel, xq, tq, self.h, self.kernel, on_singular=on_singular)
