import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from hydes.errors import BatchTooSmall, DimensionMismatch, NoPositives
from hydes.objective import (
    EmbeddingBatch,
    LossWeights,
    global_entropy,
    local_entropy,
    log_mean_exp,
    mi_gradient,
    mi_objective,
    pull_back_to_preprojection,
)
from hydes.sphere import KernelParams, log_vmf_normalizer, project_to_sphere

import oracles


def _batch(rng, n_sources, views, dim, kinds=None):
    z = oracles.unit_rows(rng, n_sources * views, dim)
    src = np.repeat(np.arange(n_sources), views)
    return EmbeddingBatch(z, src, kinds)


def test_log_mean_exp_examples():
    assert log_mean_exp([3.0, 3.0, 3.0]) == pytest.approx(3.0, abs=1e-15)
    assert log_mean_exp([0.0, 0.0]) == 0.0
    assert log_mean_exp([1000.0, 1000.0]) == pytest.approx(1000.0, abs=1e-12)


def test_identical_points_global_and_local():
    kappa, dim = 3.0, 5
    z = np.tile(project_to_sphere(np.arange(1.0, dim + 1)), (6, 1))
    b = EmbeddingBatch(z, np.repeat([0, 1, 2], 2))
    p = KernelParams(kappa, dim)
    expected = -p.log_norm_const - kappa
    assert global_entropy(b, p) == pytest.approx(expected, abs=1e-12)
    assert local_entropy(b, p) == pytest.approx(expected, abs=1e-12)
    assert mi_objective(b, p).mi_objective == pytest.approx(0.0, abs=1e-12)


def test_antipodal_pair_global():
    p = KernelParams(2.5, 4)
    b = EmbeddingBatch(np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]]), np.array([0, 1]))
    assert global_entropy(b, p) == pytest.approx(-p.log_norm_const + 2.5, abs=1e-12)


def test_orthogonal_views_local():
    p = KernelParams(7.0, 3)
    b = EmbeddingBatch(np.eye(3)[:2], np.array([0, 0]))
    assert local_entropy(b, p) == pytest.approx(-p.log_norm_const, abs=1e-12)


def test_identical_positives_antipodal_negatives_brute_force():
    kappa, dim = 2.0, 3
    mu = np.array([0.0, 0.0, 1.0])
    z = np.array([mu, mu, -mu, -mu])
    src = np.array([0, 0, 1, 1])
    p = KernelParams(kappa, dim)
    b = EmbeddingBatch(z, src)
    hg, hl, _ = oracles.entropies(z, src, kappa, oracles.log_c(kappa, dim))
    assert local_entropy(b, p) == pytest.approx(-p.log_norm_const - kappa, abs=1e-12)
    assert local_entropy(b, p) == pytest.approx(hl, abs=1e-12)
    assert global_entropy(b, p) == pytest.approx(hg, abs=1e-12)


def test_weight_degeneracy():
    rng = np.random.default_rng(1)
    b = _batch(rng, 4, 3, 6)
    p = KernelParams(1.5, 6)
    out = mi_objective(b, p, LossWeights(1.0, 0.0))
    assert out.mi_objective == pytest.approx(global_entropy(b, p), abs=1e-15)
    assert out.training_loss == -out.mi_objective


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("anchors", ["all", "global"])
def test_objective_matches_double_loop(seed, anchors):
    rng = np.random.default_rng(seed)
    kinds = np.tile([True, True, False, False], 4)
    b = _batch(rng, 4, 4, 8, kinds)
    kappa = 1.0
    p = KernelParams(kappa, 8)
    hg, hl, mi = oracles.entropies(
        b.rows, b.source_id, kappa, oracles.log_c(kappa, 8), 1.0, 1.0, kinds if anchors == "global" else None
    )
    out = mi_objective(b, p, LossWeights(), anchors=anchors)
    assert abs(out.h_global - hg) < 1e-12
    assert abs(out.h_local - hl) < 1e-12
    assert abs(out.mi_objective - mi) < 1e-12


def test_errors():
    p = KernelParams(1.0, 3)
    with pytest.raises(BatchTooSmall):
        EmbeddingBatch(np.eye(3)[:1], np.array([0]))
    b = EmbeddingBatch(np.eye(3), np.array([0, 0, 1]))
    with pytest.raises(NoPositives) as info:
        local_entropy(b, p)
    assert info.value.index == 2
    with pytest.raises(DimensionMismatch):
        global_entropy(b, KernelParams(1.0, 4))
    with pytest.raises(ValueError):
        EmbeddingBatch(np.ones((2, 3)), np.array([0, 0]))


def test_stationary_at_perfect_alignment():
    z = np.tile([0.6, 0.8], (2, 1))
    g = mi_gradient(EmbeddingBatch(z, np.array([0, 0])), KernelParams(4.0, 2), LossWeights(0.0, 1.0))
    # tangent component is what moves the point on the sphere
    tangent = g - np.sum(g * z, axis=1, keepdims=True) * z
    assert np.max(np.abs(tangent)) < 1e-15


def test_pullback_diagonal_case():
    d = 5
    v = np.zeros((1, d))
    v[0, 0] = 2.0
    g = np.arange(1.0, d + 1)[None, :]
    expected = ((np.eye(d) - np.outer(np.eye(d)[0], np.eye(d)[0])) / 2.0) @ g[0]
    np.testing.assert_allclose(pull_back_to_preprojection(v, g)[0], expected, atol=1e-15)


def _fd_check(batch, params, weights, anchors="all"):
    def f(flat):
        return mi_objective(EmbeddingBatch(flat, batch.source_id, batch.view_kind, check=False), params, weights, anchors).training_loss

    fd = oracles.central_difference(f, batch.rows)
    analytic = mi_gradient(batch, params, weights, anchors=anchors)
    return oracles.guarded_relative_error(analytic, fd)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.sampled_from([0.5, 5.0, 20.0]),
    st.sampled_from([0.0, 0.5, 1.0]),
    st.sampled_from([0.0, 0.5, 1.0]),
    st.sampled_from(["all", "global"]),
)
def test_gradient_matches_finite_differences(seed, kappa, alpha, beta, anchors):
    rng = np.random.default_rng(seed)
    kinds = np.tile([True, False, False, True], 2)
    b = _batch(rng, 2, 4, 4, kinds)
    assert _fd_check(b, KernelParams(kappa, 4), LossWeights(alpha, beta), anchors) < 1e-5


def test_preprojection_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((8, 4)) * 3.0
    src = np.repeat(np.arange(4), 2)
    p, w = KernelParams(5.0, 4), LossWeights(1.0, 0.5)

    def f(vv):
        return mi_objective(EmbeddingBatch(project_to_sphere(vv), src), p, w).training_loss

    fd = oracles.central_difference(f, v)
    analytic = mi_gradient(EmbeddingBatch(project_to_sphere(v), src), p, w, pre_projection=v)
    assert oracles.guarded_relative_error(analytic, fd) < 1e-5


def test_constant_cancels_when_weights_equal():
    rng = np.random.default_rng(4)
    b = _batch(rng, 5, 3, 7)
    for kappa in (0.5, 5.0, 50.0):
        with_c = mi_objective(b, KernelParams(kappa, 7, True), LossWeights(0.7, 0.7)).mi_objective
        without = mi_objective(b, KernelParams(kappa, 7, False), LossWeights(0.7, 0.7)).mi_objective
        assert abs(with_c - without) < 1e-12


def test_constant_shifts_entropies():
    rng = np.random.default_rng(6)
    b = _batch(rng, 3, 2, 5)
    kappa = 3.0
    shift = log_vmf_normalizer(kappa, 5)
    hg_c = global_entropy(b, KernelParams(kappa, 5, True))
    hg = global_entropy(b, KernelParams(kappa, 5, False))
    assert hg_c == pytest.approx(hg - shift, abs=1e-12)


def test_rotation_and_permutation_invariance():
    rng = np.random.default_rng(7)
    p = KernelParams(4.0, 6)
    for _ in range(10):
        b = _batch(rng, 4, 3, 6)
        base = mi_objective(b, p).mi_objective
        q = special_ortho_group.rvs(6, random_state=rng)
        rotated = EmbeddingBatch(project_to_sphere(b.rows @ q.T), b.source_id)
        perm = rng.permutation(len(b))
        permuted = EmbeddingBatch(b.rows[perm], b.source_id[perm])
        assert abs(mi_objective(rotated, p).mi_objective - base) < 1e-10
        assert abs(mi_objective(permuted, p).mi_objective - base) < 1e-10


def test_gradient_step_increases_objective():
    # a small step along -grad(loss) must raise MI
    rng = np.random.default_rng(8)
    b = _batch(rng, 4, 2, 5)
    p = KernelParams(2.0, 5)
    g = mi_gradient(b, p)
    stepped = EmbeddingBatch(project_to_sphere(b.rows - 1e-3 * g), b.source_id)
    assert mi_objective(stepped, p).mi_objective > mi_objective(b, p).mi_objective


def test_pulled_back_gradient_is_tangent():
    rng = np.random.default_rng(9)
    v = rng.standard_normal((6, 4))
    g = rng.standard_normal((6, 4))
    out = pull_back_to_preprojection(v, g)
    assert np.max(np.abs(np.sum(out * v, axis=1))) < 1e-12


def test_local_term_pulls_views_together():
    # beta-only descent shrinks the angle between two views
    z = project_to_sphere(np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.0]]))
    b = EmbeddingBatch(z, np.array([0, 0]))
    p = KernelParams(1.0, 3)
    g = mi_gradient(b, p, LossWeights(0.0, 1.0))
    z2 = project_to_sphere(z - 0.05 * g)
    assert z2[0] @ z2[1] > z[0] @ z[1]
    assert math.isfinite(local_entropy(EmbeddingBatch(z2, b.source_id), p))
