"""Object spaces: distances and weighted Fréchet means.

Every implemented space embeds its objects isometrically (up to a constant
factor) into a Euclidean space of flattened vectors, so the weighted Fréchet
objective ``sum_i w_i d^2(Y_i, omega)`` is quadratic and its minimiser over the
space is the metric projection of the weighted average. Each space supplies
that projection:

* Wasserstein-2 on quantile functions: isotonic regression (PAVA), then
  clipping to the support.
* Frobenius on correlation matrices: nearest correlation matrix by
  alternating projections with Dykstra's correction.
* Euclidean scalars: identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ContractError, ConvergenceError, DimensionError, EmptyInputError

DEFAULT_GRID_SIZE = 100
EPS_PSD = 1e-8
TOL_NCM = 1e-8
MAX_ITER_NCM = 1000
WEIGHT_MEAN_TOL = 1e-8


def quantile_levels(m: int) -> np.ndarray:
    """Midpoint probability levels ``(k - 1/2) / m`` for k = 1..m."""
    return (np.arange(1, m + 1) - 0.5) / m


def normal_quantiles(m: int, loc=0.0, scale=1.0) -> np.ndarray:
    return loc + scale * norm.ppf(quantile_levels(m))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# object types


@dataclass(frozen=True, eq=False)
class QuantileObject:
    """A 1-D distribution stored as its quantile function on the midpoint grid."""

    values: np.ndarray
    support_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DimensionError("quantile object needs a 1-D vector of length >= 2")
        if not np.all(np.isfinite(v)):
            raise ContractError("quantile values must be finite")
        if np.any(np.diff(v) < 0):
            k = int(np.argmax(np.diff(v) < 0))
            raise ContractError(f"quantile values decrease between positions {k} and {k + 1}")
        if self.support_bounds is not None:
            lo, hi = map(float, self.support_bounds)
            if lo > hi:
                raise ContractError("support lower bound exceeds upper bound")
            if v[0] < lo or v[-1] > hi:
                raise ContractError("quantile values leave the support bounds")
            object.__setattr__(self, "support_bounds", (lo, hi))
        object.__setattr__(self, "values", _readonly(v))

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def levels(self) -> np.ndarray:
        return quantile_levels(self.grid_size)


@dataclass(frozen=True, eq=False)
class CorrMatrixObject:
    entries: np.ndarray
    psd_tol: float = field(default=EPS_PSD, repr=False)

    def __post_init__(self):
        c = np.asarray(self.entries, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise DimensionError(f"correlation object must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ContractError("correlation entries must be finite")
        if not np.array_equal(c, c.T):
            raise ContractError("correlation matrix is not symmetric")
        if not np.all(np.diag(c) == 1.0):
            raise ContractError("correlation matrix diagonal is not 1")
        if np.any(np.abs(c) > 1.0):
            raise ContractError("correlation entries must lie in [-1, 1]")
        lam = np.linalg.eigvalsh(c)[0]
        if lam < -self.psd_tol:
            raise ContractError(f"correlation matrix is not PSD (min eigenvalue {lam:.3e})")
        object.__setattr__(self, "entries", _readonly(c))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class EuclideanObject:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v):
            raise ContractError("euclidean object must be finite")
        object.__setattr__(self, "value", v)


# ---------------------------------------------------------------------------
# distances


def wasserstein_distance(a: QuantileObject, b: QuantileObject) -> float:
    if a.grid_size != b.grid_size:
        raise DimensionError(f"quantile grids differ: {a.grid_size} vs {b.grid_size}")
    diff = a.values - b.values
    return float(np.sqrt(np.mean(diff * diff)))


def frobenius_distance(a: CorrMatrixObject, b: CorrMatrixObject) -> float:
    if a.dim != b.dim:
        raise DimensionError(f"matrix dimensions differ: {a.dim} vs {b.dim}")
    return float(np.linalg.norm(a.entries - b.entries))


# ---------------------------------------------------------------------------
# projections


def pava(y) -> np.ndarray:
    """Least-squares projection of ``y`` onto nondecreasing vectors.

    Pool-adjacent-violators with unit weights. Monotone input is returned as
    an unmodified copy.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionError("pava expects a 1-D vector")
    if np.all(y[1:] >= y[:-1]):
        return y.copy()
    means: list[float] = []
    sizes: list[int] = []
    for v in y:
        means.append(float(v))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, s2 = means.pop(), sizes.pop()
            m1, s1 = means[-1], sizes[-1]
            s = s1 + s2
            means[-1] = (m1 * s1 + m2 * s2) / s
            sizes[-1] = s
    return np.repeat(means, sizes)


def project_psd(a: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(a)
    return (vec * np.maximum(lam, 0.0)) @ vec.T


@dataclass(frozen=True)
class NcmResult:
    matrix: np.ndarray
    iterations: int
    residual: float


def nearest_correlation(a, tol: float = TOL_NCM, max_iter: int = MAX_ITER_NCM) -> NcmResult:
    """Frobenius-nearest correlation matrix to the symmetric matrix ``a``.

    Alternates between the PSD cone and the unit-diagonal affine set, with
    Dykstra's correction applied to the (non-affine) PSD step. Stops when the
    Frobenius change between successive unit-diagonal iterates drops below
    ``tol``. The returned matrix is the final PSD iterate rescaled to unit
    diagonal, which is PSD and unit-diagonal exactly.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    y = a.copy()
    np.fill_diagonal(y, 1.0)
    ds = np.zeros_like(a)
    x = y
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        r = y - ds
        x = project_psd(r)
        x = 0.5 * (x + x.T)
        ds = x - r
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        residual = float(np.linalg.norm(y_new - y))
        y = y_new
        if residual < tol:
            break
    else:
        raise ConvergenceError("nearest correlation matrix did not converge", residual, it)

    d = np.diag(x)
    if np.all(d > 0):
        s = 1.0 / np.sqrt(d)
        out = x * np.outer(s, s)
    else:
        out = y
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    np.clip(out, -1.0, 1.0, out=out)
    return NcmResult(out, it, residual)


def _check_weights(weights, n: int) -> np.ndarray:
    if n == 0:
        raise EmptyInputError("no objects to average")
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != n:
        raise DimensionError(f"{n} objects but {w.size} weights")
    if not np.all(np.isfinite(w)):
        raise ContractError("weights must be finite")
    mean = w.mean()
    if abs(mean - 1.0) > WEIGHT_MEAN_TOL * max(1.0, float(np.mean(np.abs(w)))):
        raise ContractError(f"weights must average to 1, got mean {mean!r}")
    return w


# ---------------------------------------------------------------------------
# spaces


class ObjectSpace:
    """Common interface over flattened object vectors.

    ``sq_scale * ||flat(a) - flat(b)||^2`` is the squared distance. Subclasses
    implement :meth:`project_rows`, the metric projection of unconstrained
    averages back onto the space.
    """

    name = "abstract"
    sq_scale = 1.0

    @property
    def flat_size(self) -> int:
        raise NotImplementedError

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float).reshape(len(values), self.flat_size)

    def unflatten(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=float).reshape((len(rows),) + self.object_shape)

    @property
    def object_shape(self) -> tuple:
        raise NotImplementedError

    def project_rows(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project each row; returns (rows, iterations, residuals)."""
        raise NotImplementedError

    def validate_values(self, values: np.ndarray) -> None:
        raise NotImplementedError

    def wrap(self, value):
        raise NotImplementedError

    def unwrap(self, obj) -> np.ndarray:
        raise NotImplementedError

    # -- generic operations ------------------------------------------------

    def sq_distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Squared distances between row-aligned stacks of raw object arrays."""
        fa = self.flatten(np.asarray(a, dtype=float))
        fb = self.flatten(np.asarray(b, dtype=float))
        d = fa - fb
        return self.sq_scale * np.einsum("ij,ij->i", d, d)

    def distance(self, a, b) -> float:
        fa = self.unwrap(a).reshape(-1)
        fb = self.unwrap(b).reshape(-1)
        if fa.shape != fb.shape:
            raise DimensionError(f"object shapes differ: {fa.shape} vs {fb.shape}")
        return float(np.sqrt(self.sq_scale * np.sum((fa - fb) ** 2)))

    def frechet_mean(self, objects, weights):
        """Weighted Fréchet mean of ``objects``; ``weights`` must average to 1."""
        objects = list(objects)
        w = _check_weights(weights, len(objects))
        values = np.stack([self.unwrap(o) for o in objects])
        rows = self.flatten(values)
        if rows.shape[1] != self.flat_size:
            raise DimensionError("objects do not match the space dimension")
        avg = (w @ rows) / len(objects)
        proj, _, _ = self.project_rows(avg[None, :])
        return self.wrap(self.unflatten(proj)[0])


class WassersteinSpace(ObjectSpace):
    """1-D distributions under Wasserstein-2 via quantile functions on m levels."""

    name = "wasserstein"

    def __init__(self, grid_size: int = DEFAULT_GRID_SIZE, support_bounds=None):
        if int(grid_size) < 2:
            raise ContractError("grid_size must be >= 2")
        self.grid_size = int(grid_size)
        self.support_bounds = None if support_bounds is None else tuple(map(float, support_bounds))
        self.sq_scale = 1.0 / self.grid_size

    def __repr__(self):
        return f"WassersteinSpace(grid_size={self.grid_size}, support_bounds={self.support_bounds})"

    @property
    def flat_size(self) -> int:
        return self.grid_size

    @property
    def object_shape(self) -> tuple:
        return (self.grid_size,)

    def project_rows(self, rows):
        rows = np.array(rows, dtype=float, copy=True)
        bad = np.any(rows[:, 1:] < rows[:, :-1], axis=1)
        for i in np.flatnonzero(bad):
            rows[i] = pava(rows[i])
        if self.support_bounds is not None:
            np.clip(rows, *self.support_bounds, out=rows)
        k = len(rows)
        return rows, bad.astype(int), np.zeros(k)

    def validate_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.grid_size:
            raise DimensionError(f"expected (N, {self.grid_size}) quantile array, got {values.shape}")
        if np.any(values[:, 1:] < values[:, :-1]):
            raise ContractError("quantile payload is not nondecreasing")

    def wrap(self, value):
        return QuantileObject(value, self.support_bounds)

    def unwrap(self, obj):
        if isinstance(obj, QuantileObject):
            if obj.grid_size != self.grid_size:
                raise DimensionError(f"quantile grids differ: {obj.grid_size} vs {self.grid_size}")
            return obj.values
        return np.asarray(obj, dtype=float)


class CorrelationSpace(ObjectSpace):
    """V x V correlation matrices under the Frobenius metric."""

    name = "correlation"

    def __init__(self, dim: int, tol: float = TOL_NCM, max_iter: int = MAX_ITER_NCM):
        if int(dim) < 1:
            raise ContractError("dim must be >= 1")
        self.dim = int(dim)
        self.tol = tol
        self.max_iter = max_iter

    def __repr__(self):
        return f"CorrelationSpace(dim={self.dim})"

    @property
    def flat_size(self) -> int:
        return self.dim * self.dim

    @property
    def object_shape(self) -> tuple:
        return (self.dim, self.dim)

    def project_rows(self, rows):
        rows = np.asarray(rows, dtype=float)
        out = np.empty_like(rows)
        iters = np.zeros(len(rows), dtype=int)
        res = np.zeros(len(rows))
        v = self.dim
        for i, row in enumerate(rows):
            m = row.reshape(v, v)
            m = 0.5 * (m + m.T)
            np.fill_diagonal(m, 1.0)
            if np.all(np.abs(m) <= 1.0) and np.linalg.eigvalsh(m)[0] >= -EPS_PSD:
                out[i] = m.reshape(-1)
                continue
            r = nearest_correlation(m, self.tol, self.max_iter)
            out[i] = r.matrix.reshape(-1)
            iters[i], res[i] = r.iterations, r.residual
        return out, iters, res

    def validate_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[1:] != (self.dim, self.dim):
            raise DimensionError(f"expected (N, {self.dim}, {self.dim}) array, got {values.shape}")
        for c in values:
            CorrMatrixObject(c)

    def wrap(self, value):
        return CorrMatrixObject(value)

    def unwrap(self, obj):
        if isinstance(obj, CorrMatrixObject):
            if obj.dim != self.dim:
                raise DimensionError(f"matrix dimensions differ: {obj.dim} vs {self.dim}")
            return obj.entries
        return np.asarray(obj, dtype=float)


class EuclideanSpace(ObjectSpace):
    name = "euclidean"

    def __repr__(self):
        return "EuclideanSpace()"

    @property
    def flat_size(self) -> int:
        return 1

    @property
    def object_shape(self) -> tuple:
        return ()

    def project_rows(self, rows):
        rows = np.asarray(rows, dtype=float)
        return rows.copy(), np.zeros(len(rows), dtype=int), np.zeros(len(rows))

    def validate_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1:
            raise DimensionError(f"expected (N,) scalar responses, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ContractError("responses must be finite")

    def wrap(self, value):
        return EuclideanObject(float(np.asarray(value)))

    def unwrap(self, obj):
        if isinstance(obj, EuclideanObject):
            return np.asarray(obj.value)
        return np.asarray(obj, dtype=float)


def make_space(name: str, **kwargs) -> ObjectSpace:
    name = name.lower()
    if name == "wasserstein":
        return WassersteinSpace(**kwargs)
    if name == "correlation":
        return CorrelationSpace(**kwargs)
    if name == "euclidean":
        return EuclideanSpace()
    raise ContractError(f"unknown object space {name!r}")


# ---------------------------------------------------------------------------
# public convenience wrappers


def weighted_frechet_mean_wasserstein(objects, weights) -> QuantileObject:
    objects = list(objects)
    if not objects:
        raise EmptyInputError("no objects to average")
    m = objects[0].grid_size
    bounds = objects[0].support_bounds
    for o in objects[1:]:
        if o.grid_size != m:
            raise DimensionError("quantile objects have different grid sizes")
        if o.support_bounds != bounds:
            raise ContractError("quantile objects have different support bounds")
    return WassersteinSpace(m, bounds).frechet_mean(objects, weights)


def weighted_frechet_mean_correlation(
    objects, weights, tol: float = TOL_NCM, max_iter: int = MAX_ITER_NCM
) -> CorrMatrixObject:
    objects = list(objects)
    if not objects:
        raise EmptyInputError("no objects to average")
    v = objects[0].dim
    if any(o.dim != v for o in objects):
        raise DimensionError("correlation objects have different dimensions")
    return CorrelationSpace(v, tol, max_iter).frechet_mean(objects, weights)


def weighted_frechet_mean_euclidean(objects, weights) -> EuclideanObject:
    return EuclideanSpace().frechet_mean(list(objects), weights)
