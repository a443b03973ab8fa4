import math

import numpy as np
import pytest

from tokenbridge.calibration import constrained_softmax
from tokenbridge.context import (
    DimMismatch,
    EmptyInput,
    ZeroTextEmbedding,
    build_context,
    clip_relevance,
    context_dim,
    fit_pca,
    gram_singular_values,
    pool_text,
    pool_vision,
    project,
    spectral_complexity,
    spectral_entropy_norm,
)
from tokenbridge.core import LogitVector, TokenTensor


def tensor_from_rows(rows, frames, tpf, clip_size=4):
    rows = np.asarray(rows, dtype=np.float32)
    return TokenTensor(frames, tpf, rows.shape[1],
                       rows.reshape(frames, tpf, rows.shape[1]), clip_size=clip_size)


# -- PCA ---------------------------------------------------------------------

def test_pca_line_geometry(rng):
    direction = np.array([1.0, 1.0]) / math.sqrt(2)
    pts = np.outer(rng.normal(0, 3, 50), direction)
    model = fit_pca(pts, 1)
    assert not model.rank_deficient or True
    comp = model.components[:, 0]
    assert abs(abs(comp @ direction) - 1.0) < 1e-9
    assert model.explained_variance[0] > 0
    assert model.validate() == []


def test_pca_isotropic_cloud(rng):
    pts = rng.normal(size=(10000, 2))
    model = fit_pca(pts, 2)
    ratio = model.explained_variance[0] / model.explained_variance[1]
    assert 0.8 <= ratio <= 1.25


def test_pca_identical_vectors_rank_deficient():
    pts = np.tile([1.0, 2.0, 3.0], (3, 1))
    model = fit_pca(pts, 2)
    assert model.rank_deficient
    z = project(model, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(z, 0.0)


def test_pca_sign_convention(rng):
    pts = rng.normal(size=(200, 5))
    model = fit_pca(pts, 3)
    for j in range(3):
        col = model.components[:, j]
        assert col[np.argmax(np.abs(col))] >= 0


def test_pca_projected_covariance_is_diagonal(rng):
    pts = rng.normal(size=(500, 6)) @ np.diag([3, 2, 1.5, 1, 0.5, 0.2])
    model = fit_pca(pts, 4)
    Z = (pts - model.mean) @ model.components
    cov = np.cov(Z.T)
    assert np.allclose(cov, np.diag(model.explained_variance), atol=1e-6)


def test_project_examples(rng):
    pts = rng.normal(size=(50, 4))
    model = fit_pca(pts, 2)
    assert np.allclose(project(model, model.mean), 0.0)
    col = model.components[:, 1]
    z = project(model, model.mean + col)
    assert np.allclose(z, [0.0, 1.0], atol=1e-9)
    h = rng.normal(size=4)
    assert np.allclose(project(model, h), model.components.T @ (h - model.mean))
    with pytest.raises(DimMismatch):
        project(model, np.zeros(7))


def test_fit_pca_input_guards(rng):
    with pytest.raises(ValueError):
        fit_pca(rng.normal(size=(2, 4)), 2)  # need d+1 rows


# -- pooling -------------------------------------------------------------------

def test_pooling():
    single = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(pool_text(single), [1, 2, 3])
    two = np.array([[1.0, -2.0], [-1.0, 2.0]])
    assert np.allclose(pool_text(two), 0.0)
    rnd = np.arange(15.0).reshape(5, 3)
    assert np.allclose(pool_vision(rnd), rnd.mean(axis=0))
    with pytest.raises(EmptyInput):
        pool_text(np.zeros((0, 3)))


# -- clip relevance --------------------------------------------------------------

def test_clip_relevance_scale_invariance():
    data = np.zeros((4, 1, 3), np.float32)
    data[:, 0, 0] = 3.0  # one clip, four tokens along e1
    t = TokenTensor(4, 1, 3, data, clip_size=4)
    scores, smax, smean = clip_relevance([1.0, 0.0, 0.0], t)
    assert np.allclose(scores, [4.0])
    assert smax == smean == pytest.approx(4.0)


def test_clip_relevance_orthogonal():
    data = np.zeros((4, 2, 3), np.float32)
    data[:, :, 1] = 1.0
    t = TokenTensor(4, 2, 3, data, clip_size=4)
    scores, smax, smean = clip_relevance([1.0, 0.0, 0.0], t)
    assert np.allclose(scores, 0.0)


def test_clip_relevance_two_clips():
    data = np.zeros((8, 1, 2), np.float32)
    data[:4, 0, 0] = 1.0    # clip 0: +4
    data[4:, 0, 0] = -0.5   # clip 1: cosine -1 each, sums to -4... scale to -1
    t = TokenTensor(8, 1, 2, data, clip_size=4)
    scores, smax, smean = clip_relevance([1.0, 0.0], t)
    assert np.allclose(scores, [4.0, -4.0])
    assert smax == 4.0
    assert smean == pytest.approx(0.0)


def test_clip_relevance_zero_rows_contribute_zero():
    data = np.zeros((4, 1, 2), np.float32)
    data[0, 0, 0] = 1.0
    t = TokenTensor(4, 1, 2, data, clip_size=4)
    scores, _, _ = clip_relevance([1.0, 0.0], t)
    assert np.allclose(scores, [1.0])


def test_clip_relevance_zero_text_rejected():
    t = TokenTensor(4, 1, 2, np.ones((4, 1, 2), np.float32), clip_size=4)
    with pytest.raises(ZeroTextEmbedding):
        clip_relevance([0.0, 0.0], t)


def test_cosine_bounds_random(rng):
    data = rng.normal(size=(8, 4, 6)).astype(np.float32)
    t = TokenTensor(8, 4, 6, data, clip_size=4)
    h = rng.normal(size=6)
    scores, _, _ = clip_relevance(h, t)
    assert np.all(np.abs(scores) <= 4 * 4 + 1e-9)  # 16 tokens per clip, |cos| <= 1
    s2, _, _ = clip_relevance(3.7 * h, t)
    assert np.allclose(scores, s2)


# -- spectral complexity ----------------------------------------------------------

def test_spectral_closed_forms(rng):
    assert spectral_entropy_norm(np.tile(rng.normal(size=4), (6, 1))) == pytest.approx(0.0)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    assert spectral_entropy_norm(q) == pytest.approx(1.0, abs=1e-12)
    got = spectral_entropy_norm(np.diag([2.0, 1.0]))
    h = -(2 / 3 * math.log(2 / 3) + 1 / 3 * math.log(1 / 3))
    assert h == pytest.approx(0.6365, abs=1e-4)
    assert got == pytest.approx(h / math.log(2), abs=1e-9)
    assert got == pytest.approx(0.9183, abs=1e-3)


def test_spectral_invariances(rng):
    X = rng.normal(size=(8, 16))
    base = spectral_entropy_norm(X)
    q, _ = np.linalg.qr(rng.normal(size=(16, 16)))
    assert abs(spectral_entropy_norm(X @ q) - base) < 1e-9
    assert abs(spectral_entropy_norm(4.2 * X) - base) < 1e-9


def test_gram_spectrum_matches_reference_svd(rng):
    for _ in range(100):
        X = rng.normal(size=(16, 64))
        ours = gram_singular_values(X)
        ref = np.linalg.svd(X, compute_uv=False)
        assert np.allclose(ours, ref, rtol=1e-6, atol=1e-9)


def test_degenerate_clip_scores_zero():
    X = np.zeros((4, 8))
    assert spectral_entropy_norm(X) == 0.0


def test_spectral_complexity_top_k_selection(rng):
    # 3 clips: rank-1 (score high), noise (low), noise (low); K=1 takes the rank-1
    flat = np.tile(np.array([1.0, 0, 0, 0], np.float32), (4, 1))
    noisy = rng.normal(size=(8, 4)).astype(np.float32)
    rows = np.concatenate([flat, noisy])
    t = tensor_from_rows(rows, 12, 1, clip_size=4)
    scores = np.array([10.0, 1.0, 0.5])
    assert spectral_complexity(t, scores, 1) == pytest.approx(0.0, abs=1e-9)
    full = spectral_complexity(t, scores, 3)
    assert 0.0 < full <= 1.0


# -- context assembly --------------------------------------------------------------

def test_build_context_field_order(rng):
    D, d = 8, 2
    pts = rng.normal(size=(40, D))
    pca_t = fit_pca(pts, d)
    pca_v = fit_pca(rng.normal(size=(40, D)), d)
    data = rng.normal(size=(8, 4, D)).astype(np.float32)
    tokens = TokenTensor(8, 4, D, data, clip_size=4)
    dist = constrained_softmax(LogitVector((2.0, 0.5, 0.1)), 1.0)
    h_txt = rng.normal(size=D)
    ctx = build_context(8, dist, h_txt, tokens, pca_t, pca_v, top_k=3)
    v = ctx.as_array()
    assert len(v) == context_dim(d) == 4 + 2 * d + 3
    assert v[0] == 8.0
    assert v[1] == dist.confidence
    assert v[2] == dist.margin
    assert v[3] == dist.entropy_norm
    assert np.allclose(v[4:4 + d], project(pca_t, h_txt))
    assert np.allclose(v[4 + d:4 + 2 * d], project(pca_v, pool_vision(tokens.rows())))
    scores, smax, smean = clip_relevance(h_txt, tokens)
    assert v[-3] == pytest.approx(smax)
    assert v[-2] == pytest.approx(smean)
    assert v[-1] == pytest.approx(spectral_complexity(tokens, scores, 3))
    assert ctx.validate() == []
