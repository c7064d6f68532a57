"""
Language autoencoder: compresses text embeddings (default 512 -> 128) and
reconstructs them.

- Layers compute act(W x + b) with W of shape (out, in).
- Hidden layers use shifted softplus, softplus(x) - ln 2 (zero at zero);
  the latent and output layers are linear.
- Objective per embedding: ||e - e_hat||_2 + (1 - cos(e, e_hat)).
- Optimizer: mini-batch gradient descent. An epoch that raises the full
  training loss is undone and the learning rate halved.
"""

import logging
from enum import Enum
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .seeding import LABEL_AE_INIT, LABEL_AE_SHUFFLE, LABEL_AE_SPLIT, derive_rng
from .vocab import EmbeddingMatrix, classify_many

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

DEFAULT_ARCH = (512, 256, 128)


class Activation(str, Enum):
    LINEAR = "linear"
    SHIFTED_SOFTPLUS = "shifted_softplus"

    @property
    def tag(self) -> int:
        return ACTIVATION_TAGS[self]


ACTIVATION_TAGS = {Activation.LINEAR: 0, Activation.SHIFTED_SOFTPLUS: 1}
ACTIVATION_BY_TAG = {v: k for k, v in ACTIVATION_TAGS.items()}


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Training diverged at epoch {epoch}: loss {loss}")
        self.epoch = epoch
        self.loss = loss


class Layer(NamedTuple):
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: Activation

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


class AutoencoderParams(NamedTuple):
    encoder: Tuple[Layer, ...]
    decoder: Tuple[Layer, ...]

    @property
    def input_dim(self) -> int:
        return self.encoder[0].in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].out_dim

    @property
    def layers(self) -> Tuple[Layer, ...]:
        return self.encoder + self.decoder


def make_layer(weight, bias, activation=Activation.LINEAR) -> Layer:
    w = np.array(weight, dtype=np.float64)
    b = np.array(bias, dtype=np.float64).reshape(-1)
    if w.ndim != 2 or b.shape[0] != w.shape[0]:
        raise ValueError(f"Layer weight {w.shape} and bias {b.shape} do not agree")
    return Layer(w, b, Activation(activation))


def make_params(encoder: Sequence[Layer], decoder: Sequence[Layer]) -> AutoencoderParams:
    """Check that layer shapes chain D -> D' -> D."""
    if not encoder or not decoder:
        raise ValueError("Encoder and decoder each need at least one layer")
    layers = list(encoder) + list(decoder)
    for i in range(1, len(layers)):
        if layers[i].in_dim != layers[i - 1].out_dim:
            raise ValueError(
                f"Layer {i} expects {layers[i].in_dim} inputs but layer {i - 1} produces {layers[i - 1].out_dim}"
            )
    if layers[-1].out_dim != layers[0].in_dim:
        raise ValueError(f"Decoder output {layers[-1].out_dim} differs from encoder input {layers[0].in_dim}")
    return AutoencoderParams(tuple(encoder), tuple(decoder))


def _act(a: Activation, z: np.ndarray) -> np.ndarray:
    if a == Activation.SHIFTED_SOFTPLUS:
        return np.logaddexp(0.0, z) - LN2
    return z


def _act_grad(a: Activation, z: np.ndarray) -> np.ndarray:
    if a == Activation.SHIFTED_SOFTPLUS:
        return expit(z)
    return np.ones_like(z)


def init_params(arch: Sequence[int] = DEFAULT_ARCH, seed: int = 0) -> AutoencoderParams:
    """
    Mirrored bottleneck for arch = (D, h1, ..., D'): encoder D -> ... -> D',
    decoder D' -> ... -> D. Weights uniform in +-sqrt(6 / fan_in), zero biases.
    """
    arch = [int(x) for x in arch]
    if len(arch) < 2 or min(arch) <= 0:
        raise ValueError(f"Architecture needs >= 2 positive sizes, got {arch}")
    if arch[-1] >= arch[0]:
        raise ValueError(f"Latent dimension {arch[-1]} must be smaller than input dimension {arch[0]}")
    rng = derive_rng(seed, LABEL_AE_INIT)
    sizes = arch + arch[-2::-1]
    layers = []
    n_enc = len(arch) - 1
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        last_of_half = i == n_enc - 1 or i == len(sizes) - 2
        act = Activation.LINEAR if last_of_half else Activation.SHIFTED_SOFTPLUS
        layers.append(Layer(w, np.zeros(fan_out), act))
    return make_params(layers[:n_enc], layers[n_enc:])


def _forward(layers: Sequence[Layer], x: np.ndarray):
    """Batch forward; returns output plus (inputs, pre-activations) per layer."""
    cache = []
    h = x
    for layer in layers:
        z = h @ layer.weight.T + layer.bias
        cache.append((h, z))
        h = _act(layer.activation, z)
    return h, cache


def _check_input(x: np.ndarray, dim: int, what: str) -> None:
    if x.shape[-1] != dim:
        raise ValueError(f"{what} expects dimension {dim}, got {x.shape[-1]}")


def encode_matrix(params: AutoencoderParams, rows) -> np.ndarray:
    x = np.asarray(rows, dtype=np.float64)
    _check_input(x, params.input_dim, "encode")
    return _forward(params.encoder, x)[0]


def decode_matrix(params: AutoencoderParams, rows) -> np.ndarray:
    z = np.asarray(rows, dtype=np.float64)
    _check_input(z, params.latent_dim, "decode")
    return _forward(params.decoder, z)[0]


def encode(params: AutoencoderParams, e) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1:
        raise ValueError(f"encode takes one vector, got shape {e.shape}")
    return encode_matrix(params, e[None, :])[0]


def decode(params: AutoencoderParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"decode takes one vector, got shape {z.shape}")
    return decode_matrix(params, z[None, :])[0]


def reconstruct_matrix(params: AutoencoderParams, rows) -> np.ndarray:
    x = np.asarray(rows, dtype=np.float64)
    _check_input(x, params.input_dim, "reconstruct")
    return _forward(params.layers, x)[0]


def _pair_terms(e: np.ndarray, e_hat: np.ndarray):
    en = np.linalg.norm(e, axis=-1)
    hn = np.linalg.norm(e_hat, axis=-1)
    if np.any(en == 0) or np.any(hn == 0):
        raise ValueError("ae_loss cosine term is undefined for a zero-norm vector")
    diff = e_hat - e
    dist = np.linalg.norm(diff, axis=-1)
    cos = np.sum(e * e_hat, axis=-1) / (en * hn)
    return diff, dist, cos, en, hn


def ae_loss(e, e_hat) -> float:
    """||e - e_hat|| + 1 - cos(e, e_hat) for one pair."""
    e = np.asarray(e, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if e.shape != e_hat.shape:
        raise ValueError(f"ae_loss shapes differ: {e.shape} vs {e_hat.shape}")
    _, dist, cos, _, _ = _pair_terms(e, e_hat)
    return float(dist + 1.0 - cos)


def ae_loss_grad(e, e_hat) -> np.ndarray:
    """Gradient of ae_loss with respect to e_hat; the norm term's gradient is 0 at e_hat = e."""
    e = np.asarray(e, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    return _batch_loss_grad(e[None, :], e_hat[None, :])[1][0]


def _batch_loss_grad(e: np.ndarray, e_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row losses and per-row gradients with respect to e_hat."""
    diff, dist, cos, en, hn = _pair_terms(e, e_hat)
    safe = np.where(dist > 0, dist, 1.0)
    g_dist = np.where((dist > 0)[:, None], diff / safe[:, None], 0.0)
    g_cos = -(e / (en * hn)[:, None] - cos[:, None] * e_hat / (hn ** 2)[:, None])
    return dist + 1.0 - cos, g_dist + g_cos


def mean_loss(params: AutoencoderParams, rows: np.ndarray) -> float:
    if rows.shape[0] == 0:
        return float("nan")
    out = reconstruct_matrix(params, rows)
    return float(np.mean(_batch_loss_grad(rows, out)[0]))


def _backward(layers: Sequence[Layer], cache, g_out: np.ndarray):
    grads = []
    g = g_out
    for layer, (h, z) in zip(reversed(layers), reversed(cache)):
        dz = g * _act_grad(layer.activation, z)
        grads.append((dz.T @ h, dz.sum(axis=0)))
        g = dz @ layer.weight
    return grads[::-1]


def loss_and_grads(params: AutoencoderParams, rows) -> Tuple[float, List[Tuple[np.ndarray, np.ndarray]]]:
    """Mean ae_loss over rows and (dW, db) for every layer, encoder first."""
    x = np.asarray(rows, dtype=np.float64)
    out, cache = _forward(params.layers, x)
    losses, g = _batch_loss_grad(x, out)
    grads = _backward(params.layers, cache, g / x.shape[0])
    return float(np.mean(losses)), grads


def _step(params: AutoencoderParams, grads, lr: float) -> AutoencoderParams:
    layers = [
        Layer(layer.weight - lr * dw, layer.bias - lr * db, layer.activation)
        for layer, (dw, db) in zip(params.layers, grads)
    ]
    n_enc = len(params.encoder)
    return AutoencoderParams(tuple(layers[:n_enc]), tuple(layers[n_enc:]))


class TrainConfig(NamedTuple):
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    holdout_fraction: float = 0.1
    lr_growth: float = 1.0  # applied after every accepted epoch


def check_config(cfg: TrainConfig) -> None:
    if cfg.epochs <= 0:
        raise ValueError(f"epochs must be positive, got {cfg.epochs}")
    if not cfg.learning_rate > 0:
        raise ValueError(f"learning_rate must be positive, got {cfg.learning_rate}")
    if cfg.batch_size <= 0:
        raise ValueError(f"batch_size must be positive, got {cfg.batch_size}")
    if not 0.0 <= cfg.holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in [0, 1), got {cfg.holdout_fraction}")
    if not cfg.lr_growth >= 1.0:
        raise ValueError(f"lr_growth must be >= 1, got {cfg.lr_growth}")


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float      # loss of the parameters kept after this epoch
    holdout_loss: float    # NaN with an empty holdout
    learning_rate: float   # rate used during this epoch
    accepted: bool


class TrainReport(NamedTuple):
    epochs: List[EpochRecord]
    train_indices: np.ndarray
    holdout_indices: np.ndarray
    initial_loss: float


def split_holdout(n: int, holdout_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """(train indices, holdout indices); holdout is empty when n < 2."""
    perm = derive_rng(seed, LABEL_AE_SPLIT).permutation(n)
    n_hold = min(int(np.floor(holdout_fraction * n)), n - 1) if n >= 2 else 0
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train(
    emb: EmbeddingMatrix, cfg: TrainConfig = TrainConfig(), arch: Sequence[int] = DEFAULT_ARCH
) -> Tuple[AutoencoderParams, TrainReport]:
    """Fit an autoencoder to the embedding rows; bitwise reproducible for a fixed seed."""
    check_config(cfg)
    rows = emb.rows
    if int(arch[0]) != emb.dim:
        raise ValueError(f"Architecture input {arch[0]} does not match embedding dimension {emb.dim}")
    train_idx, hold_idx = split_holdout(rows.shape[0], cfg.holdout_fraction, cfg.seed)
    x_train, x_hold = rows[train_idx], rows[hold_idx]
    params = init_params(arch, cfg.seed)
    best = mean_loss(params, x_train)
    initial = best
    lr = float(cfg.learning_rate)
    records: List[EpochRecord] = []
    logger.info("training on %d rows (%d held out), initial loss %.6f", len(train_idx), len(hold_idx), best)
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, LABEL_AE_SHUFFLE, epoch).permutation(x_train.shape[0])
        candidate = params
        for start in range(0, order.size, cfg.batch_size):
            _, grads = loss_and_grads(candidate, x_train[order[start:start + cfg.batch_size]])
            candidate = _step(candidate, grads, lr)
        loss = mean_loss(candidate, x_train)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        accepted = loss <= best
        used_lr = lr
        if accepted:
            params, best = candidate, loss
            lr *= cfg.lr_growth
        else:
            lr *= 0.5
        records.append(EpochRecord(epoch, best, mean_loss(params, x_hold), used_lr, accepted))
        logger.debug("epoch %d: loss %.6f lr %.4g %s", epoch, loss, used_lr, "kept" if accepted else "reverted")
    return params, TrainReport(records, train_idx, hold_idx, initial)


def reconstruction_cosines(params: AutoencoderParams, rows) -> np.ndarray:
    x = np.asarray(rows, dtype=np.float64)
    out = reconstruct_matrix(params, x)
    return np.sum(x * out, axis=1) / (np.linalg.norm(x, axis=1) * np.linalg.norm(out, axis=1))


def latent_embeddings(params: AutoencoderParams, emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Compressed text embeddings (N x D'), same vocabulary."""
    return EmbeddingMatrix(encode_matrix(params, emb.rows), emb.vocab)


def latent_identity_rate(params: AutoencoderParams, emb: EmbeddingMatrix) -> float:
    """Share of rows whose nearest latent neighbor (cosine) is the row itself."""
    latent = latent_embeddings(params, emb)
    labels, _ = classify_many(latent.rows, latent)
    return float(np.mean(labels.astype(np.int64) == np.arange(len(emb))))


def low_rank_unit_embeddings(n: int, dim: int, rank: int = 16, noise: float = 1e-3, seed: int = 0) -> np.ndarray:
    """n unit vectors near a random rank-`rank` subspace of R^dim."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, rank)))
    rows = rng.standard_normal((n, rank)) @ basis.T + noise * rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)
