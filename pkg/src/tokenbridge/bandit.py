"""Neural linear bandit for token-density selection.

A small MLP backbone is trained offline on profiling data with one
sigmoid head per candidate density (loss masked to each row's own
action), then frozen. Online decisions run Thompson sampling over
per-action Bayesian linear regressors on the frozen features; each
interaction updates only the selected arm's sufficient statistics.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

BUNDLE_MAGIC = b"TBX1"
BUNDLE_VERSION = 1


class ActionMissing(Warning):
    pass


class SingularArm(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    input_dim: int
    hidden: tuple[int, ...] = (128, 64)
    latent_dim: int = 64
    lr: float = 1e-3
    epochs: int = 200
    batch: int = 64
    seed: int = 0


class Extractor:
    """Frozen MLP feature map: hidden layers are rectified, the latent is linear."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for W, b in layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def features(self, x) -> np.ndarray:
        """Map contexts (d,) or (B, d) to frozen latent features."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for W, b in self.layers[:-1]:
            a = np.maximum(a @ W + b, 0.0)
        W, b = self.layers[-1]
        out = a @ W + b
        return out[0] if np.asarray(x).ndim == 1 else out


@dataclass
class ProfilingDataset:
    """Offline rows of (context, chosen density, binary correctness label)."""

    contexts: np.ndarray  # (m, d)
    actions: np.ndarray   # (m,) densities
    labels: np.ndarray    # (m,) in {0, 1}

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if not set(np.unique(self.labels)) <= {0.0, 1.0}:
            raise ValueError("labels must be binary")

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @classmethod
    def from_rows(cls, rows) -> "ProfilingDataset":
        ctx, act, lab = zip(*rows)
        return cls(np.stack(ctx), np.asarray(act), np.asarray(lab))


def _init_params(cfg: ExtractorConfig, n_heads: int, rng: np.random.Generator):
    dims = (cfg.input_dim,) + cfg.hidden + (cfg.latent_dim,)
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        scale = np.sqrt(2.0 / d_in)
        layers.append((rng.normal(0.0, scale, (d_in, d_out)), np.zeros(d_out)))
    head_W = rng.normal(0.0, np.sqrt(1.0 / cfg.latent_dim), (cfg.latent_dim, n_heads))
    head_b = np.zeros(n_heads)
    return layers, (head_W, head_b)


def masked_bce_loss_and_grads(layers, head, X, action_idx, y):
    """Forward + backward pass of the multi-head objective.

    Each row contributes binary cross entropy only through the head that
    matches its own action. Returns (loss, layer grads, head grads).
    """
    B = X.shape[0]
    acts = [X]
    a = X
    for W, b in layers[:-1]:
        a = np.maximum(a @ W + b, 0.0)
        acts.append(a)
    W_l, b_l = layers[-1]
    u = a @ W_l + b_l
    head_W, head_b = head
    logits = u @ head_W + head_b
    # stable sigmoid BCE on the selected head only
    z = logits[np.arange(B), action_idx]
    p = 1.0 / (1.0 + np.exp(-z))
    eps = 1e-12
    loss = float(np.mean(-(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))))

    dlogits = np.zeros_like(logits)
    dlogits[np.arange(B), action_idx] = (p - y) / B
    d_head_W = u.T @ dlogits
    d_head_b = dlogits.sum(axis=0)
    du = dlogits @ head_W.T

    grads = [None] * len(layers)
    grads[-1] = (acts[-1].T @ du, du.sum(axis=0))
    delta = du @ W_l.T
    for i in range(len(layers) - 2, -1, -1):
        delta = delta * (acts[i + 1] > 0)
        W, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ W.T
    return loss, grads, (d_head_W, d_head_b)


def train_extractor(dataset: ProfilingDataset, action_set: tuple[int, ...],
                    cfg: ExtractorConfig):
    """Fit the backbone offline with mini-batch gradient descent, then freeze it.

    The per-action heads exist only during training and are discarded on
    return. Deterministic for a given seed.
    """
    if len(dataset) < 200:
        warnings.warn(f"profiling dataset has only {len(dataset)} rows", ActionMissing)
    density_to_idx = {a: i for i, a in enumerate(action_set)}
    unseen = [a for a in action_set if a not in set(dataset.actions.tolist())]
    if unseen:
        warnings.warn(f"actions without profiling rows: {unseen}", ActionMissing)
    action_idx = np.asarray([density_to_idx[a] for a in dataset.actions], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    layers, head = _init_params(cfg, len(action_set), rng)
    X, y = dataset.contexts, dataset.labels
    m = len(dataset)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        epoch_loss = 0.0
        for s in range(0, m, cfg.batch):
            sel = order[s:s + cfg.batch]
            loss, grads, hgrads = masked_bce_loss_and_grads(
                layers, head, X[sel], action_idx[sel], y[sel])
            epoch_loss += loss * len(sel)
            layers = [(W - cfg.lr * gW, b - cfg.lr * gb)
                      for (W, b), (gW, gb) in zip(layers, grads)]
            head = (head[0] - cfg.lr * hgrads[0], head[1] - cfg.lr * hgrads[1])
        history.append(epoch_loss / m)
    extractor = Extractor(layers)
    return extractor, {"loss_history": history, "final_head": head}


def head_accuracy(extractor: Extractor, head, dataset: ProfilingDataset,
                  action_set: tuple[int, ...]) -> float:
    """Training accuracy of the matching heads; diagnostic for the offline fit."""
    density_to_idx = {a: i for i, a in enumerate(action_set)}
    idx = np.asarray([density_to_idx[a] for a in dataset.actions])
    u = extractor.features(dataset.contexts)
    logits = u @ head[0] + head[1]
    picked = logits[np.arange(len(dataset)), idx]
    pred = (picked > 0).astype(np.float64)
    return float((pred == dataset.labels).mean())


@dataclass
class ArmState:
    """Sufficient statistics of one action's Bayesian linear regressor."""

    density: int
    A: np.ndarray
    b: np.ndarray
    lam0: float
    chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.chol is None:
            self.refresh()

    def refresh(self):
        try:
            self.chol = cholesky(self.A, lower=True)
        except np.linalg.LinAlgError:
            # fall back to the guaranteed-SPD reconstruction around the prior
            self.A = self.lam0 * np.eye(self.A.shape[0]) + 0.5 * (
                (self.A - self.lam0 * np.eye(self.A.shape[0]))
                + (self.A - self.lam0 * np.eye(self.A.shape[0])).T)
            try:
                self.chol = cholesky(self.A, lower=True)
            except np.linalg.LinAlgError as e:
                raise SingularArm(f"arm {self.density}: cannot factor A") from e

    def posterior_mean(self) -> np.ndarray:
        z = solve_triangular(self.chol, self.b, lower=True)
        return solve_triangular(self.chol.T, z, lower=False)

    def sample_coefficients(self, alpha: float, rng: np.random.Generator) -> np.ndarray:
        beta = self.posterior_mean()
        if alpha == 0.0:
            return beta
        xi = rng.standard_normal(self.b.shape[0])
        return beta + alpha * solve_triangular(self.chol.T, xi, lower=False)


@dataclass
class BanditState:
    """Single-writer policy state: one ArmState per candidate density."""

    arms: dict[int, ArmState]

    @property
    def action_set(self) -> tuple[int, ...]:
        return tuple(sorted(self.arms))

    @property
    def latent_dim(self) -> int:
        return next(iter(self.arms.values())).b.shape[0]


def fresh_state(action_set: tuple[int, ...], d_u: int, lam0: float) -> BanditState:
    arms = {a: ArmState(a, lam0 * np.eye(d_u), np.zeros(d_u), lam0) for a in action_set}
    return BanditState(arms)


def warm_start_from_latents(latents, actions, labels,
                            action_set: tuple[int, ...], lam0: float) -> BanditState:
    """Batch-build sufficient statistics from frozen latents and labels."""
    U = np.asarray(latents, dtype=np.float64)
    acts = np.asarray(actions)
    y = np.asarray(labels, dtype=np.float64)
    d_u = U.shape[1]
    state = fresh_state(action_set, d_u, lam0)
    for a in action_set:
        mask = acts == a
        if mask.any():
            Ua = U[mask]
            arm = state.arms[a]
            arm.A = arm.A + Ua.T @ Ua
            arm.b = arm.b + Ua.T @ y[mask]
            arm.refresh()
    return state


def warm_start(extractor: Extractor, dataset: ProfilingDataset,
               action_set: tuple[int, ...], lam0: float) -> BanditState:
    """Initialize each arm's posterior from the profiling set."""
    U = extractor.features(dataset.contexts)
    return warm_start_from_latents(U, dataset.actions, dataset.labels, action_set, lam0)


def select_action(state: BanditState, u, n_frames: int, lam: float,
                  alpha: float, rng: np.random.Generator):
    """Thompson-sample every arm and pick the best cost-adjusted estimate.

    Score per arm: clip(u . beta_hat, 0, 1) - lam * n_frames * density.
    Ties break toward the smaller density. Returns (density, diagnostics).
    """
    u = np.asarray(u, dtype=np.float64)
    best_a, best_util, diag = None, -np.inf, {}
    for a in state.action_set:
        arm = state.arms[a]
        beta_hat = arm.sample_coefficients(alpha, rng)
        p_hat = float(np.clip(u @ beta_hat, 0.0, 1.0))
        util = p_hat - lam * n_frames * a
        diag[a] = {"p_hat": p_hat, "utility": util}
        if util > best_util:
            best_a, best_util = a, util
    return best_a, diag


def update(state: BanditState, action: int, u, reward_bit: float) -> None:
    """Fold one interaction into the selected arm only."""
    if action not in state.arms:
        raise KeyError(f"unknown action {action}")
    u = np.asarray(u, dtype=np.float64)
    arm = state.arms[action]
    arm.A = arm.A + np.outer(u, u)
    arm.b = arm.b + u * float(reward_bit)
    arm.refresh()


@dataclass(frozen=True)
class Reward:
    value: float
    correct_term: float
    cost_term: float
    proxy: bool

    def to_dict(self) -> dict:
        return {"value": self.value, "correct_term": self.correct_term,
                "cost_term": self.cost_term, "proxy": self.proxy}


def compute_reward(bit: float, n_frames: int, density: int, lam: float,
                   proxy: bool = False) -> Reward:
    """Unit reward for success minus the offloaded token-volume penalty."""
    if lam <= 0:
        raise ValueError("lam must be > 0")
    bit = float(bit)
    if bit not in (0.0, 1.0):
        raise ValueError("reward bit must be 0 or 1")
    cost = lam * n_frames * density
    return Reward(bit - cost, bit, cost, proxy)


def proxy_bit(kappa_large: float, tau_proxy: float) -> int:
    """Reliability filter: count the edge answer as correct only above threshold."""
    return int(kappa_large > tau_proxy)


# ---------------------------------------------------------------------------
# Bundle format: extractor layers + both PCA models + arm states, TBX1.

def _pack_f32(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _pack_f64(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_bundle(extractor: Extractor, pca_models, state: BanditState) -> bytes:
    """Serialize extractor + PCA models + arm states into the TBX1 format."""
    from .context import PcaModel  # local import to avoid a cycle

    out = [BUNDLE_MAGIC, struct.pack("<HH", BUNDLE_VERSION, len(extractor.layers))]
    for W, b in extractor.layers:
        out.append(struct.pack("<II", W.shape[0], W.shape[1]))
        out.append(_pack_f32(W))
        out.append(_pack_f32(b))
    out.append(struct.pack("<B", len(pca_models)))
    for pca in pca_models:
        out.append(struct.pack("<IIB", pca.input_dim, pca.out_dim, int(pca.rank_deficient)))
        out.append(_pack_f32(pca.mean))
        out.append(_pack_f32(pca.components))
        out.append(_pack_f32(pca.explained_variance))
    arms = [state.arms[a] for a in state.action_set]
    lam0 = arms[0].lam0 if arms else 0.0
    out.append(struct.pack("<Bd", len(arms), lam0))
    for arm in arms:
        out.append(struct.pack("<II", arm.density, arm.b.shape[0]))
        out.append(_pack_f64(arm.A))
        out.append(_pack_f64(arm.b))
    return b"".join(out)


def load_bundle(data: bytes):
    """Inverse of save_bundle; returns (extractor, [pca...], BanditState)."""
    from .context import PcaModel

    if data[:4] != BUNDLE_MAGIC:
        raise ValueError("bad bundle magic")
    version, n_layers = struct.unpack_from("<HH", data, 4)
    if version != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {version}")
    off = 8
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        W = np.frombuffer(data, "<f4", rows * cols, off).reshape(rows, cols)
        off += 4 * rows * cols
        b = np.frombuffer(data, "<f4", cols, off)
        off += 4 * cols
        layers.append((W.astype(np.float64), b.astype(np.float64)))
    (n_pca,) = struct.unpack_from("<B", data, off)
    off += 1
    pcas = []
    for _ in range(n_pca):
        D, d, deficient = struct.unpack_from("<IIB", data, off)
        off += 9
        mean = np.frombuffer(data, "<f4", D, off).astype(np.float64)
        off += 4 * D
        comps = np.frombuffer(data, "<f4", D * d, off).astype(np.float64).reshape(D, d)
        off += 4 * D * d
        ev = np.frombuffer(data, "<f4", d, off).astype(np.float64)
        off += 4 * d
        pcas.append(PcaModel(mean, comps, ev, bool(deficient)))
    n_arms, lam0 = struct.unpack_from("<Bd", data, off)
    off += 9
    arms = {}
    for _ in range(n_arms):
        density, d_u = struct.unpack_from("<II", data, off)
        off += 8
        A = np.frombuffer(data, "<f8", d_u * d_u, off).reshape(d_u, d_u).copy()
        off += 8 * d_u * d_u
        b = np.frombuffer(data, "<f8", d_u, off).copy()
        off += 8 * d_u
        arms[density] = ArmState(density, A, b, lam0)
    return Extractor(layers), pcas, BanditState(arms)


def save_bundle_file(path: str, extractor, pca_models, state) -> None:
    with open(path, "wb") as f:
        f.write(save_bundle(extractor, pca_models, state))


def load_bundle_file(path: str):
    with open(path, "rb") as f:
        return load_bundle(f.read())
