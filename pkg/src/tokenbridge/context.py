"""Bandit context construction from local-inference artifacts.

The context concatenates frame count, the calibrated uncertainty summary,
PCA-compressed pooled embeddings for both modalities, clip-level
cross-modal relevance, and a query-grounded spectral complexity score
computed from the singular spectra of the most relevant clips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CalibratedDistribution, TokenTensor


class RankDeficient(Warning):
    pass


class DimMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class ZeroTextEmbedding(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus top-d principal directions (columns, orthonormal)."""

    mean: np.ndarray              # (D,)
    components: np.ndarray        # (D, d)
    explained_variance: np.ndarray  # (d,) non-increasing
    rank_deficient: bool = False

    @property
    def input_dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.components.shape[1])

    def validate(self) -> list[str]:
        errs = []
        d = self.out_dim
        gram = self.components.T @ self.components
        expect = np.eye(d)
        if self.rank_deficient:
            # zero-padded columns are allowed, diagonal entries may be 0
            expect = np.diag(np.diag(gram).round())
        if not np.allclose(gram, expect, atol=1e-6):
            errs.append("components must have orthonormal (or zero-padded) columns")
        ev = self.explained_variance
        if np.any(ev[:-1] < ev[1:] - 1e-12):
            errs.append("explained_variance must be non-increasing")
        return errs


def fit_pca(vectors, d: int) -> PcaModel:
    """Principal directions of mean-centered vectors via covariance eigendecomposition.

    Sign convention: the largest-magnitude entry of each component is made
    positive. With fewer than d non-degenerate directions the remaining
    columns are zero and the model is flagged rank-deficient.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    n, D = X.shape
    if d < 1:
        raise ValueError("d must be >= 1")
    if n < d + 1:
        raise ValueError(f"need at least d+1={d + 1} vectors, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    evals = evals[order].copy()
    comps = evecs[:, order].copy()
    tol = 1e-12 * max(1.0, float(np.trace(cov)))
    rank_deficient = False
    for j in range(d):
        if evals[j] <= tol:
            comps[:, j] = 0.0
            evals[j] = 0.0
            rank_deficient = True
        else:
            k = int(np.argmax(np.abs(comps[:, j])))
            if comps[k, j] < 0:
                comps[:, j] = -comps[:, j]
    return PcaModel(mean, comps, np.maximum(evals, 0.0), rank_deficient)


def project(pca: PcaModel, h) -> np.ndarray:
    """Compress a D-vector onto the principal directions after centering."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (pca.input_dim,):
        raise DimMismatch(f"expected shape ({pca.input_dim},), got {h.shape}")
    return pca.components.T @ (h - pca.mean)


def pool_text(question_embeddings) -> np.ndarray:
    """Mean-pool question token embeddings into one condensed vector."""
    E = np.asarray(question_embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 1:
        raise EmptyInput("need at least one embedding row")
    return E.mean(axis=0)


def pool_vision(vision_tokens) -> np.ndarray:
    """Global average pooling over vision-token embeddings."""
    return pool_text(vision_tokens)


def _clip_slices(tokens: TokenTensor):
    tpf = tokens.tokens_per_frame
    for t in range(tokens.n_clips):
        f0 = t * tokens.clip_size
        f1 = min(tokens.frames, f0 + tokens.clip_size)
        yield tokens.data[f0:f1].reshape((f1 - f0) * tpf, tokens.dim)


def clip_relevance(h_txt, tokens: TokenTensor):
    """Cosine-align each vision token with the pooled question, summed per clip.

    Returns (per-clip scores, max score, mean score). Zero-norm token rows
    contribute similarity 0.
    """
    h = np.asarray(h_txt, dtype=np.float64)
    hn = np.linalg.norm(h)
    if hn == 0:
        raise ZeroTextEmbedding("pooled question embedding has zero norm")
    if h.shape != (tokens.dim,):
        raise DimMismatch(f"expected shape ({tokens.dim},), got {h.shape}")
    rows = tokens.rows().astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    sims = (rows @ h) / (safe * hn)
    sims[norms == 0] = 0.0
    tpf = tokens.tokens_per_frame
    per_frame = sims.reshape(tokens.frames, tpf).sum(axis=1)
    scores = np.array([
        per_frame[t * tokens.clip_size:(t + 1) * tokens.clip_size].sum()
        for t in range(tokens.n_clips)
    ])
    return scores, float(scores.max()), float(scores.mean())


def gram_singular_values(X: np.ndarray) -> np.ndarray:
    """Singular values of X via the small-side Gram matrix X X^T.

    Eigenvalues below 1e-12 of the trace are clamped to zero before the
    square root. Returned in non-increasing order.
    """
    X = np.asarray(X, dtype=np.float64)
    gram = X @ X.T
    evals = np.linalg.eigvalsh(gram)[::-1]
    tol = 1e-12 * max(np.trace(gram), 0.0)
    evals = np.where(evals > tol, evals, 0.0)
    return np.sqrt(evals)


def spectral_entropy_norm(X: np.ndarray) -> float:
    """Normalized entropy of the singular-value distribution of X, in [0,1].

    A single dominant direction gives 0; a flat spectrum gives 1.
    Degenerate inputs (all-zero, or a one-point spectrum) score 0.
    """
    sv = gram_singular_values(X)
    total = sv.sum()
    J = min(X.shape)
    if total <= 0 or J <= 1:
        return 0.0
    p = sv[sv > 0] / total
    h = float(-np.sum(p * np.log(p)))
    return min(1.0, h / np.log(J))


def spectral_complexity(tokens: TokenTensor, clip_scores, top_k: int) -> float:
    """Average normalized spectral entropy over the top-k most relevant clips."""
    scores = np.asarray(clip_scores, dtype=np.float64)
    if scores.shape[0] != tokens.n_clips:
        raise DimMismatch("one relevance score per clip required")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    k = min(tokens.n_clips, top_k)
    chosen = np.argsort(scores)[::-1][:k]
    slices = list(_clip_slices(tokens))
    return float(np.mean([spectral_entropy_norm(slices[t]) for t in sorted(chosen)]))


@dataclass(frozen=True)
class ContextVector:
    """Per-query bandit context; layout documented in as_array."""

    n_frames: int
    confidence: float
    margin: float
    entropy: float
    z_txt: np.ndarray
    z_vis: np.ndarray
    s_max: float
    s_mean: float
    s_cplx: float

    def as_array(self) -> np.ndarray:
        """[n, confidence, margin, entropy, z_txt..., z_vis..., s_max, s_mean, s_cplx]"""
        return np.concatenate([
            [float(self.n_frames), self.confidence, self.margin, self.entropy],
            np.asarray(self.z_txt, dtype=np.float64),
            np.asarray(self.z_vis, dtype=np.float64),
            [self.s_max, self.s_mean, self.s_cplx],
        ])

    def __len__(self) -> int:
        return 4 + len(self.z_txt) + len(self.z_vis) + 3

    def validate(self) -> list[str]:
        errs = []
        v = self.as_array()
        if not np.isfinite(v).all():
            errs.append("context must be finite")
        if not -1e-9 <= self.entropy <= 1 + 1e-9:
            errs.append("entropy must be in [0,1]")
        if not -1e-9 <= self.s_cplx <= 1 + 1e-9:
            errs.append("s_cplx must be in [0,1]")
        return errs


def context_dim(pca_dim: int) -> int:
    return 4 + 2 * pca_dim + 3


def build_context(
    n_frames: int,
    dist: CalibratedDistribution,
    h_txt,
    tokens: TokenTensor,
    pca_txt: PcaModel,
    pca_vis: PcaModel,
    top_k: int,
) -> ContextVector:
    """Assemble the full context vector from local inference artifacts."""
    h_vis = pool_vision(tokens.rows())
    scores, s_max, s_mean = clip_relevance(h_txt, tokens)
    s_cplx = spectral_complexity(tokens, scores, top_k)
    return ContextVector(
        n_frames=n_frames,
        confidence=dist.confidence,
        margin=dist.margin,
        entropy=dist.entropy_norm,
        z_txt=project(pca_txt, np.asarray(h_txt, dtype=np.float64)),
        z_vis=project(pca_vis, h_vis),
        s_max=s_max,
        s_mean=s_mean,
        s_cplx=s_cplx,
    )
