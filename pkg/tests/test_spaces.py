import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coreg.errors import ContractError, ConvergenceError, DimensionError, EmptyInputError
from coreg.spaces import (
    CorrelationSpace,
    CorrMatrixObject,
    EuclideanObject,
    QuantileObject,
    WassersteinSpace,
    frobenius_distance,
    make_space,
    nearest_correlation,
    normal_quantiles,
    pava,
    quantile_levels,
    wasserstein_distance,
    weighted_frechet_mean_correlation,
    weighted_frechet_mean_euclidean,
    weighted_frechet_mean_wasserstein,
)

from conftest import random_corr

# cvxpy (SCS, eps 1e-12) solution of min ||X - A||_F s.t. X PSD, diag(X) = 1
# for A = [[1,1,0],[1,1,1],[0,1,1]]; frozen.
NCM_ORACLE_OFFDIAG = (0.76068985, 0.15729811)
NCM_ORACLE_DISTANCE = 0.52779046


# -- objects ---------------------------------------------------------------


def test_quantile_levels_are_midpoints():
    assert np.allclose(quantile_levels(4), [0.125, 0.375, 0.625, 0.875])


def test_quantile_object_rejects_decrease():
    with pytest.raises(ContractError):
        QuantileObject([0.0, 2.0, 1.0])


def test_quantile_object_is_read_only():
    q = QuantileObject([0.0, 1.0])
    with pytest.raises(ValueError):
        q.values[0] = 5.0


def test_quantile_object_support_bounds():
    with pytest.raises(ContractError):
        QuantileObject([-1.0, 0.5], support_bounds=(0.0, 1.0))
    assert QuantileObject([0.0, 1.0], support_bounds=(0, 1)).support_bounds == (0.0, 1.0)


@pytest.mark.parametrize(
    "bad",
    [
        [[1.0, 0.5], [0.4, 1.0]],  # asymmetric
        [[1.0, 0.5], [0.5, 0.9]],  # diagonal
        [[1.0, 1.5], [1.5, 1.0]],  # range
        [[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]],  # indefinite
    ],
)
def test_corr_object_invariants(bad):
    with pytest.raises(ContractError):
        CorrMatrixObject(np.array(bad, dtype=float))


def test_corr_object_shape():
    with pytest.raises(DimensionError):
        CorrMatrixObject(np.ones((2, 3)))


def test_euclidean_object_finite():
    with pytest.raises(ContractError):
        EuclideanObject(np.nan)


# -- distances -------------------------------------------------------------


def test_wasserstein_identity_and_shift():
    a = QuantileObject(normal_quantiles(50))
    assert wasserstein_distance(a, a) == 0.0
    z = QuantileObject(np.zeros(7))
    c = QuantileObject(np.full(7, -2.5))
    assert wasserstein_distance(z, c) == pytest.approx(2.5, abs=1e-15)


def test_wasserstein_gaussian_closed_form():
    a = QuantileObject(normal_quantiles(1000, 0.0, 1.0))
    b = QuantileObject(normal_quantiles(1000, 1.0, 1.0))
    assert wasserstein_distance(a, b) == pytest.approx(1.0, abs=1e-3)


def test_wasserstein_grid_mismatch():
    with pytest.raises(DimensionError):
        wasserstein_distance(QuantileObject([0.0, 1.0]), QuantileObject([0.0, 1.0, 2.0]))


def test_frobenius_examples(rng):
    eye = CorrMatrixObject(np.eye(3))
    assert frobenius_distance(eye, eye) == 0.0
    a = CorrMatrixObject(np.eye(2))
    b = CorrMatrixObject(np.ones((2, 2)))
    assert frobenius_distance(a, b) == pytest.approx(np.sqrt(2), abs=1e-15)
    with pytest.raises(DimensionError):
        frobenius_distance(eye, a)


def test_frobenius_matches_entrywise_sum(rng):
    a = CorrMatrixObject(random_corr(rng, 10))
    b = CorrMatrixObject(random_corr(rng, 10))
    total = 0.0
    for q in range(10):
        for r in range(10):
            total += (a.entries[q, r] - b.entries[q, r]) ** 2
    assert frobenius_distance(a, b) == pytest.approx(np.sqrt(total), rel=1e-13)


quantile_vectors = arrays(np.float64, 8, elements=st.floats(-50, 50)).map(np.sort)


@settings(max_examples=150, deadline=None)
@given(quantile_vectors, quantile_vectors, quantile_vectors)
def test_wasserstein_metric_axioms(a, b, c):
    qa, qb, qc = QuantileObject(a), QuantileObject(b), QuantileObject(c)
    dab = wasserstein_distance(qa, qb)
    assert dab >= 0
    assert dab == wasserstein_distance(qb, qa)
    assert dab <= wasserstein_distance(qa, qc) + wasserstein_distance(qc, qb) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_frobenius_metric_axioms(seed):
    r = np.random.default_rng(seed)
    a, b, c = (CorrMatrixObject(random_corr(r, 4)) for _ in range(3))
    dab = frobenius_distance(a, b)
    assert dab == pytest.approx(frobenius_distance(b, a), abs=0)
    assert dab <= frobenius_distance(a, c) + frobenius_distance(c, b) + 1e-12


# -- PAVA ------------------------------------------------------------------


@pytest.mark.parametrize(
    "y, expected",
    [
        ([5.0], [5.0]),
        ([3.0, 1.0, 2.0], [2.0, 2.0, 2.0]),
        ([1.0, 3.0, 2.0, 4.0], [1.0, 2.5, 2.5, 4.0]),
        ([4.0, 3.0, 2.0, 1.0], [2.5, 2.5, 2.5, 2.5]),
        ([0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 1.0, 2.0]),
    ],
)
def test_pava_hand_examples(y, expected):
    assert np.allclose(pava(y), expected, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3)))
def test_pava_properties(y):
    z = pava(y)
    assert np.all(np.diff(z) >= -1e-9)
    assert np.allclose(pava(z), z, atol=1e-12)
    # the projection preserves the total and makes the residual orthogonal to the fit
    assert z.sum() == pytest.approx(y.sum(), rel=1e-9, abs=1e-7)
    assert np.dot(y - z, z) == pytest.approx(0.0, abs=1e-6 * (1 + np.dot(y, y)))


def test_pava_beats_random_monotone_candidates(rng):
    for _ in range(20):
        y = rng.standard_normal(15).cumsum() * rng.choice([-1, 1])
        z = pava(y)
        best = np.sum((y - z) ** 2)
        cands = np.sort(rng.normal(y.mean(), y.std() + 1, (200, 15)), axis=1)
        assert np.all(np.sum((cands - y) ** 2, axis=1) >= best - 1e-12)


# -- nearest correlation ---------------------------------------------------


def test_ncm_matches_frozen_convex_oracle():
    a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    res = nearest_correlation(a)
    x = res.matrix
    assert np.allclose(np.diag(x), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(x)[0] >= -1e-8
    assert x[0, 1] == pytest.approx(NCM_ORACLE_OFFDIAG[0], abs=1e-6)
    assert x[0, 2] == pytest.approx(NCM_ORACLE_OFFDIAG[1], abs=1e-6)
    assert np.linalg.norm(x - a) == pytest.approx(NCM_ORACLE_DISTANCE, abs=1e-6)


def test_ncm_feasible_input_unchanged(rng):
    c = random_corr(rng, 5)
    assert np.allclose(nearest_correlation(c).matrix, c, atol=1e-7)


def test_ncm_convergence_error_carries_residual():
    a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    with pytest.raises(ConvergenceError) as info:
        nearest_correlation(a, tol=1e-30, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 0


# -- weighted Fréchet means ------------------------------------------------


def test_frechet_wasserstein_single_object():
    q = QuantileObject([0.0, 1.0, 3.0])
    assert np.array_equal(weighted_frechet_mean_wasserstein([q], [1.0]).values, q.values)


def test_frechet_wasserstein_pointwise_average():
    a = QuantileObject([0.0, 1.0, 2.0])
    b = QuantileObject([2.0, 3.0, 6.0])
    out = weighted_frechet_mean_wasserstein([a, b], [1.0, 1.0])
    assert np.allclose(out.values, [1.0, 2.0, 4.0])


def test_frechet_wasserstein_negative_weights():
    # weights average to 1, so (3, -1) gives 1.5 * a - 0.5 * b = (-2.5, -1, 0.5)
    a = QuantileObject([0.0, 1.0, 2.0])
    b = QuantileObject([5.0, 5.0, 5.0])
    out = weighted_frechet_mean_wasserstein([a, b], [1.5, 0.5])
    assert np.allclose(out.values, [1.25, 2.0, 2.75])
    out = weighted_frechet_mean_wasserstein([a, b], [3.0, -1.0])
    assert np.allclose(out.values, [-2.5, -1.0, 0.5])


def test_frechet_wasserstein_projects_nonmonotone_average():
    a = QuantileObject([0.0, 0.0, 10.0])
    b = QuantileObject([0.0, 5.0, 5.0])
    out = weighted_frechet_mean_wasserstein([a, b], [-1.0, 3.0])
    # raw average (0, 7.5, 2.5) -> PAVA pools the last two entries
    assert np.allclose(out.values, [0.0, 5.0, 5.0])


def test_frechet_weight_contract():
    a = QuantileObject([0.0, 1.0])
    with pytest.raises(ContractError):
        weighted_frechet_mean_wasserstein([a, a], [1.0, 0.5])
    with pytest.raises(EmptyInputError):
        weighted_frechet_mean_wasserstein([], [])


def test_frechet_euclidean_examples():
    assert weighted_frechet_mean_euclidean([EuclideanObject(5)], [1]).value == 5
    assert weighted_frechet_mean_euclidean(
        [EuclideanObject(0), EuclideanObject(10)], [1, 1]
    ).value == pytest.approx(5)
    out = weighted_frechet_mean_euclidean([EuclideanObject(v) for v in (1, 2, 3)], [1.5, 1.0, 0.5])
    assert out.value == pytest.approx(5 / 3, rel=1e-15)


def test_frechet_correlation_examples(rng):
    c = CorrMatrixObject(random_corr(rng, 4))
    out = weighted_frechet_mean_correlation([c, c, c], [2.0, -0.5, 1.5])
    assert np.allclose(out.entries, c.entries, atol=1e-12)
    a = CorrMatrixObject(np.eye(2))
    b = CorrMatrixObject(np.ones((2, 2)))
    out = weighted_frechet_mean_correlation([a, b], [1.0, 1.0])
    assert np.allclose(out.entries, [[1, 0.5], [0.5, 1]])


def test_frechet_correlation_infeasible_average_is_projected():
    a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    # extrapolating weights push the average outside the feasible set
    e = CorrMatrixObject(np.eye(3))
    mid = CorrMatrixObject(np.array([[1, 0.5, 0], [0.5, 1, 0.5], [0, 0.5, 1]]))
    out = weighted_frechet_mean_correlation([e, mid], [-2.0, 4.0])
    assert np.allclose(out.entries, nearest_correlation(a).matrix, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_frechet_mean_minimises_weighted_objective(seed):
    r = np.random.default_rng(seed)
    sp = WassersteinSpace(10)
    objs = [QuantileObject(np.sort(r.normal(size=10))) for _ in range(4)]
    w = r.normal(1.0, 1.0, 4)
    w = w - w.mean() + 1.0
    assume(np.all(np.abs(w) > 1e-3))
    fit = sp.frechet_mean(objs, w)

    def obj(v):
        return sum(wi * np.mean((o.values - v) ** 2) for wi, o in zip(w, objs))

    base = obj(fit.values)
    for _ in range(50):
        cand = np.sort(fit.values + 0.3 * r.standard_normal(10))
        assert obj(cand) >= base - 1e-10


def test_make_space():
    assert make_space("wasserstein", grid_size=5).flat_size == 5
    assert make_space("correlation", dim=3).flat_size == 9
    assert make_space("Euclidean").flat_size == 1
    with pytest.raises(ContractError):
        make_space("sphere")


def test_correlation_space_rows_round_trip(rng):
    sp = CorrelationSpace(3)
    vals = np.stack([random_corr(rng, 3) for _ in range(4)])
    rows = sp.flatten(vals)
    assert rows.shape == (4, 9)
    assert np.array_equal(sp.unflatten(rows), vals)
