"""
Language autoencoder tests: forward passes, objective and gradients,
deterministic training, and the 512 -> 128 capacity check (slow).
"""

import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from semocc.autoencoder import (
    Activation,
    AutoencoderParams,
    Layer,
    TrainConfig,
    TrainingDiverged,
    ae_loss,
    ae_loss_grad,
    decode,
    encode,
    encode_matrix,
    init_params,
    latent_embeddings,
    latent_identity_rate,
    loss_and_grads,
    low_rank_unit_embeddings,
    make_layer,
    make_params,
    reconstruction_cosines,
    split_holdout,
    train,
)
from semocc.vocab import EmbeddingMatrix, VocabScope, VocabularySet


def _softplus_shifted(z):
    return np.log1p(np.exp(z)) - math.log(2.0)


def _linear_params(w_enc, w_dec):
    enc = make_layer(w_enc, np.zeros(len(w_enc)))
    dec = make_layer(w_dec, np.zeros(len(w_dec)))
    return make_params([enc], [dec])


def _copy(params: AutoencoderParams):
    layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in params.layers]
    n = len(params.encoder)
    return AutoencoderParams(tuple(layers[:n]), tuple(layers[n:]))


# ---------------------------------------------------------------- forward


def test_zero_params_give_zero_vectors():
    p = init_params((6, 4, 2), seed=0)
    zero = make_params(
        [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias), l.activation) for l in p.encoder],
        [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias), l.activation) for l in p.decoder],
    )
    assert np.allclose(encode(zero, np.arange(6.0)), 0.0, atol=1e-15)
    assert np.allclose(decode(zero, np.ones(2)), 0.0, atol=1e-15)


def test_truncating_linear_layer():
    p = _linear_params([[1, 0, 0], [0, 1, 0]], [[1, 0], [0, 1], [0, 0]])
    assert encode(p, [1.0, 0.0, 0.0]).tolist() == [1.0, 0.0]
    assert encode(p, [0.0, 0.0, 1.0]).tolist() == [0.0, 0.0]


def test_decode_hand_product():
    p = _linear_params([[1, 0, 0], [0, 1, 0]], [[1, 2], [3, 4], [5, 6]])
    assert decode(p, [1.0, -1.0]).tolist() == [-1.0, -1.0, -1.0]
    assert decode(p, [2.0, 0.5]).tolist() == [3.0, 8.0, 13.0]


def test_forward_matches_matrix_multiply_oracle():
    p = init_params((8, 6, 4), seed=3)
    e = np.random.default_rng(3).standard_normal(8)
    h = _softplus_shifted(p.encoder[0].weight @ e + p.encoder[0].bias)
    z = p.encoder[1].weight @ h + p.encoder[1].bias
    assert np.allclose(encode(p, e), z, atol=1e-10)
    h = _softplus_shifted(p.decoder[0].weight @ z + p.decoder[0].bias)
    out = p.decoder[1].weight @ h + p.decoder[1].bias
    assert np.allclose(decode(p, z), out, atol=1e-10)


def test_init_params_shapes_and_activations():
    p = init_params((512, 256, 128), seed=0)
    assert [l.weight.shape for l in p.layers] == [(256, 512), (128, 256), (256, 128), (512, 256)]
    assert [l.activation for l in p.layers] == [
        Activation.SHIFTED_SOFTPLUS,
        Activation.LINEAR,
        Activation.SHIFTED_SOFTPLUS,
        Activation.LINEAR,
    ]
    assert p.input_dim == 512 and p.latent_dim == 128


def test_init_params_validation():
    with pytest.raises(ValueError):
        init_params((8,))
    with pytest.raises(ValueError):
        init_params((8, 8))


def test_shape_mismatch_errors():
    p = init_params((8, 6, 4), seed=0)
    with pytest.raises(ValueError):
        encode(p, np.ones(7))
    with pytest.raises(ValueError):
        decode(p, np.ones(8))
    with pytest.raises(ValueError):
        make_params([make_layer(np.ones((3, 4)), np.zeros(3))], [make_layer(np.ones((4, 2)), np.zeros(4))])


def test_decode_of_encode_is_defined_for_unit_vectors():
    p = init_params((16, 8, 4), seed=1)
    rows = low_rank_unit_embeddings(20, 16, rank=4)
    for e in rows:
        assert decode(p, encode(p, e)).shape == (16,)


# ---------------------------------------------------------------- objective


def test_ae_loss_examples():
    assert ae_loss([0.3, -0.4], [0.3, -0.4]) == pytest.approx(0.0, abs=1e-15)
    assert ae_loss([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.sqrt(2.0) + 1.0)


def test_ae_loss_zero_norm_is_an_error():
    with pytest.raises(ValueError):
        ae_loss([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        ae_loss([1.0, 0.0], [1.0, 0.0, 0.0])


def test_ae_loss_gradient_at_perfect_reconstruction():
    e = np.array([0.6, 0.8])
    assert np.allclose(ae_loss_grad(e, e), 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_ae_loss_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    e, e_hat = rng.standard_normal(8), rng.standard_normal(8)
    step = 1e-5
    numeric = np.zeros(8)
    for i in range(8):
        hi, lo = e_hat.copy(), e_hat.copy()
        hi[i] += step
        lo[i] -= step
        numeric[i] = (ae_loss(e, hi) - ae_loss(e, lo)) / (2 * step)
    analytic = ae_loss_grad(e, e_hat)
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-4


def test_parameter_gradients_match_finite_differences():
    params = _copy(init_params((8, 6, 4), seed=5))
    rows = np.random.default_rng(5).standard_normal((5, 8))
    _, grads = loss_and_grads(params, rows)
    step = 1e-5
    for layer, (dw, db) in zip(params.layers, grads):
        for arr, analytic in ((layer.weight, dw), (layer.bias, db)):
            numeric = np.zeros_like(arr)
            for idx in np.ndindex(*arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                hi = loss_and_grads(params, rows)[0]
                arr[idx] = orig - step
                lo = loss_and_grads(params, rows)[0]
                arr[idx] = orig
                numeric[idx] = (hi - lo) / (2 * step)
            denom = max(np.linalg.norm(numeric) + np.linalg.norm(analytic), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-4


# ---------------------------------------------------------------- training


def _emb(rows) -> EmbeddingMatrix:
    rows = np.asarray(rows)
    return EmbeddingMatrix(rows, VocabularySet([f"class {i}" for i in range(len(rows))], scope=VocabScope.DATASET))


def test_single_embedding_overfit():
    e = low_rank_unit_embeddings(1, 16, rank=4, seed=2)
    params, report = train(_emb(e), TrainConfig(epochs=500, learning_rate=0.05, batch_size=1), arch=(16, 8, 4))
    assert reconstruction_cosines(params, e)[0] >= 0.999
    assert report.holdout_indices.size == 0


def test_training_is_bitwise_reproducible():
    emb = _emb(low_rank_unit_embeddings(40, 16, rank=4, seed=1))
    cfg = TrainConfig(epochs=15, learning_rate=0.05, batch_size=8, seed=9)
    a, ra = train(emb, cfg, arch=(16, 8, 4))
    b, rb = train(emb, cfg, arch=(16, 8, 4))
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weight, lb.weight)
        assert np.array_equal(la.bias, lb.bias)
    assert [r.train_loss for r in ra.epochs] == [r.train_loss for r in rb.epochs]


def test_training_loss_non_increasing_with_backtracking():
    emb = _emb(low_rank_unit_embeddings(60, 16, rank=4, seed=4))
    _, report = train(emb, TrainConfig(epochs=30, learning_rate=0.2, batch_size=4, lr_growth=1.1), arch=(16, 8, 4))
    losses = [report.initial_loss] + [r.train_loss for r in report.epochs]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    for prev, cur in zip(report.epochs, report.epochs[1:]):
        expected = prev.learning_rate * (1.1 if prev.accepted else 0.5)
        assert cur.learning_rate == pytest.approx(expected)
    assert losses[-1] < losses[0]


def test_holdout_losses_reported():
    emb = _emb(low_rank_unit_embeddings(50, 16, rank=4, seed=6))
    _, report = train(emb, TrainConfig(epochs=3, holdout_fraction=0.2), arch=(16, 8, 4))
    assert report.holdout_indices.size == 10
    assert all(np.isfinite(r.holdout_loss) for r in report.epochs)
    assert not set(report.train_indices.tolist()) & set(report.holdout_indices.tolist())


def test_split_holdout():
    tr, ho = split_holdout(100, 0.1, seed=0)
    assert len(tr) == 90 and len(ho) == 10
    assert sorted(tr.tolist() + ho.tolist()) == list(range(100))
    tr, ho = split_holdout(1, 0.5, seed=0)
    assert tr.tolist() == [0] and ho.size == 0


def test_divergence_reports_epoch():
    emb = _emb(low_rank_unit_embeddings(10, 16, rank=4, seed=7))
    with pytest.raises(TrainingDiverged) as info:
        with np.errstate(all="ignore"):
            train(emb, TrainConfig(epochs=5, learning_rate=1e200, batch_size=2), arch=(16, 8, 4))
    assert info.value.epoch == 0


def test_train_config_validation():
    emb = _emb(low_rank_unit_embeddings(10, 16, rank=4))
    for bad in (TrainConfig(epochs=0), TrainConfig(learning_rate=0.0), TrainConfig(batch_size=0),
                TrainConfig(holdout_fraction=1.0), TrainConfig(lr_growth=0.9)):
        with pytest.raises(ValueError):
            train(emb, bad, arch=(16, 8, 4))
    with pytest.raises(ValueError):
        train(emb, TrainConfig(epochs=1), arch=(32, 8, 4))


def test_latent_embeddings_keep_vocabulary():
    emb = _emb(low_rank_unit_embeddings(12, 16, rank=4, seed=8))
    params = init_params((16, 8, 4), seed=0)
    latent = latent_embeddings(params, emb)
    assert latent.vocab == emb.vocab
    assert np.allclose(latent.rows, encode_matrix(params, emb.rows))


@pytest.mark.slow
def test_capacity_512_to_128():
    rows = low_rank_unit_embeddings(512, 512, seed=0)
    emb = _emb(rows)
    cfg = TrainConfig(epochs=800, learning_rate=0.05, batch_size=32, seed=0, holdout_fraction=0.1, lr_growth=1.05)
    params, report = train(emb, cfg, arch=(512, 256, 128))
    holdout = rows[report.holdout_indices]
    assert float(np.mean(reconstruction_cosines(params, holdout))) >= 0.99
    assert latent_identity_rate(params, emb) >= 0.95
