import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from hydes.errors import ImageTooSmall, InvalidParam
from hydes.views import (
    ViewRecipe,
    bilinear_resize,
    derive_seed,
    multicrop,
    sample_crop,
    sample_vmf,
    splitmix64,
    synthetic_views,
)


def _image(h=32, w=32, seed=0):
    return np.random.default_rng(seed).uniform(size=(h, w, 3))


def test_default_recipe_counts():
    r = ViewRecipe()
    assert r.n_views == 8
    assert r.view_kinds().sum() == 2
    views = multicrop(_image(), r, np.random.default_rng(0))
    assert len(views) == 8
    assert [v.is_global for v in views] == [True, True] + [False] * 6
    assert views[0].pixels.shape == (32, 32, 3) and views[-1].pixels.shape == (16, 16, 3)


def test_identity_recipe_reproduces_resized_original():
    img = _image(20, 24)
    r = ViewRecipe(
        n_global=2, n_local=2, global_scale=(1.0, 1.0), local_scale=(1.0, 1.0), hflip_prob=0.0, jitter_strength=0.0
    )
    for v in multicrop(img, r, np.random.default_rng(5)):
        size = r.global_size if v.is_global else r.local_size
        np.testing.assert_array_equal(v.pixels, bilinear_resize(img, size, size))
        assert v.box == (0, 0, 20, 24)


def test_multicrop_deterministic():
    img = _image()
    a = multicrop(img, ViewRecipe(), np.random.default_rng(derive_seed(9, 1)))
    b = multicrop(img, ViewRecipe(), np.random.default_rng(derive_seed(9, 1)))
    for va, vb in zip(a, b):
        assert va.box == vb.box and va.flipped == vb.flipped
        assert va.pixels.tobytes() == vb.pixels.tobytes()


def test_multicrop_output_range():
    for v in multicrop(_image(seed=3), ViewRecipe(jitter_strength=0.9), np.random.default_rng(2)):
        assert v.pixels.min() >= 0.0 and v.pixels.max() <= 1.0


def test_image_too_small():
    with pytest.raises(ImageTooSmall):
        multicrop(np.zeros((4, 4, 3)), ViewRecipe(), np.random.default_rng(0))


def test_recipe_validation():
    with pytest.raises(InvalidParam):
        ViewRecipe(global_scale=(0.5, 1.2))
    with pytest.raises(InvalidParam):
        ViewRecipe(n_global=0)


@settings(max_examples=200, deadline=None)
@given(st.integers(8, 64), st.integers(8, 64), st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_crop_inside_image_with_requested_area(height, width, lo, frac, seed):
    hi = lo + (1.0 - lo) * frac
    top, left, h, w = sample_crop(height, width, (lo, hi), np.random.default_rng(seed))
    assert 0 <= top and top + h <= height
    assert 0 <= left and left + w <= width
    assert h >= 2 and w >= 2
    # rounding to whole pixels perturbs the area by at most one row plus one column
    slack = h + w + 1
    area = h * w
    assert area >= lo * height * width - slack
    assert area <= max(hi * height * width, 4) + slack


def test_bilinear_corner_aligned():
    img = _image(5, 7)
    out = bilinear_resize(img, 9, 13)
    for (r, c), (rr, cc) in [((0, 0), (0, 0)), ((0, 6), (0, 12)), ((4, 0), (8, 0)), ((4, 6), (8, 12))]:
        np.testing.assert_allclose(out[rr, cc], img[r, c], atol=1e-15)
    np.testing.assert_array_equal(bilinear_resize(img, 5, 7), img)


def test_bilinear_linear_ramp_exact():
    ramp = np.linspace(0, 1, 6)[None, :, None] * np.ones((4, 1, 1))
    out = bilinear_resize(ramp, 4, 11)
    np.testing.assert_allclose(out[0, :, 0], np.linspace(0, 1, 11), atol=1e-15)


def test_seed_derivation():
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert derive_seed(1, 2) != derive_seed(1, 3)
    assert derive_seed(1, 2) == derive_seed(1, 2)


# --- vMF sampling -------------------------------------------------------------


def _cosine_cdf(kappa, dim):
    def dens(t):
        return math.exp(kappa * (t - 1.0)) * (1.0 - t * t) ** ((dim - 3) / 2.0)

    total = integrate.quad(dens, -1.0, 1.0, limit=200)[0]
    return lambda t: integrate.quad(dens, -1.0, float(t), limit=200)[0] / total


@pytest.mark.parametrize("kappa,dim", [(4.0, 4), (1.0, 3), (20.0, 8), (0.3, 5)])
def test_vmf_cosines_match_density(kappa, dim):
    rng = np.random.default_rng(derive_seed(77, dim))
    mu = np.zeros(dim)
    mu[-1] = 1.0
    x = sample_vmf(mu, kappa, 4000, rng)
    cdf = _cosine_cdf(kappa, dim)
    res = stats.kstest(x @ mu, np.vectorize(cdf))
    assert res.pvalue > 1e-3


def test_vmf_mean_resultant_length_within_3_se():
    # A_4(4) = I_2(4) / I_1(4) from mpmath
    a_true = 0.65804726735935958556
    rng = np.random.default_rng(11)
    mu = np.array([0.0, 1.0, 0.0, 0.0])
    t = sample_vmf(mu, 4.0, 200_000, rng) @ mu
    se = t.std(ddof=1) / math.sqrt(len(t))
    assert abs(t.mean() - a_true) < 3 * se


def test_vmf_concentration_limits():
    rng = np.random.default_rng(12)
    mu = np.array([0.0, 0.6, 0.8])
    x = synthetic_views(mu, 50, 1e8, rng)
    assert np.max(np.arccos(np.clip(x @ mu, -1, 1))) < 1e-3
    y = sample_vmf(mu, 1e-6, 100_000, rng)
    assert np.linalg.norm(y.mean(axis=0)) < 0.02
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)


def test_vmf_rejects_nonpositive_kappa():
    with pytest.raises(InvalidParam):
        sample_vmf(np.array([1.0, 0.0]), 0.0, 3, np.random.default_rng(0))
