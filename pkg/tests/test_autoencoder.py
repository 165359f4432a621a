import numpy as np
import pytest

from deepgmm import (CorruptionSpec, DecoderStack, EncoderStack, LayerParams,
                     SeededRng, TrainConfig, backprop_autoencoder, corrupt,
                     decode, encode, finetune, pretrain_layerwise,
                     reconstruction_loss)
from deepgmm.autoencoder import glorot_layer, mean_reconstruction_loss

from conftest import rel_vec_err


def linear_layer(weight, bias=None):
    weight = np.asarray(weight, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weight.shape[0])
    return LayerParams(weight, bias, "linear")


def random_stacks(rng, dims):
    """Random mirrored encoder/decoder pair over the given dimension chain."""
    enc_layers, dec_layers = [], []
    for i in range(1, len(dims)):
        act = "linear" if i == len(dims) - 1 else "relu"
        enc_layers.append(glorot_layer(dims[i - 1], dims[i], act, rng))
    rev = dims[::-1]
    for i in range(1, len(rev)):
        act = "linear" if i == len(rev) - 1 else "relu"
        dec_layers.append(glorot_layer(rev[i - 1], rev[i], act, rng))
    return EncoderStack(enc_layers), DecoderStack(dec_layers)


class TestCorrupt:
    def test_zero_fraction_is_identity(self, rng):
        x = rng.generator.normal(size=12)
        assert np.array_equal(corrupt(x, CorruptionSpec(0.0), rng), x)

    def test_full_fraction_zeroes_everything(self, rng):
        x = rng.generator.normal(size=12) + 5.0
        assert np.array_equal(corrupt(x, CorruptionSpec(1.0), rng),
                              np.zeros(12))

    def test_exact_mask_count(self):
        x = np.ones(10)
        for seed in range(200):
            out = corrupt(x, CorruptionSpec(0.2), SeededRng(seed))
            assert np.sum(out == 0.0) == 2
            assert np.sum(out == 1.0) == 8

    def test_every_position_eventually_masked(self):
        x = np.ones(10)
        hit = np.zeros(10)
        for seed in range(300):
            hit += corrupt(x, CorruptionSpec(0.2), SeededRng(seed)) == 0.0
        assert (hit > 0).all()
        # uniform choice: each position masked about 20% of the time
        assert np.abs(hit / 300 - 0.2).max() < 0.12

    def test_batch_masks_rows_independently(self, rng):
        x = np.ones((40, 10))
        out = corrupt(x, CorruptionSpec(0.2), rng)
        assert np.array_equal(np.sum(out == 0.0, axis=1), np.full(40, 2))
        assert len({tuple(row) for row in out}) > 1

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            CorruptionSpec(1.5)


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        enc = EncoderStack([
            LayerParams(np.zeros((4, 3)), np.zeros(4), "relu"),
            LayerParams(np.zeros((2, 4)), np.zeros(2), "linear"),
        ])
        assert np.array_equal(encode(enc, np.ones(3)), np.zeros(2))

    def test_single_linear_identity(self):
        enc = EncoderStack([linear_layer(np.eye(5))])
        x = np.arange(5.0) - 2.0
        assert np.array_equal(encode(enc, x), x)

    def test_two_layer_matches_manual_forward(self, rng):
        enc, _ = random_stacks(rng, [6, 4, 3])
        x = rng.generator.normal(size=6)
        h = np.maximum(enc.layers[0].weight @ x + enc.layers[0].bias, 0.0)
        expected = enc.layers[1].weight @ h + enc.layers[1].bias
        assert rel_vec_err(encode(enc, x), expected) < 1e-12

    def test_decode_identity_roundtrip(self):
        enc = EncoderStack([linear_layer(np.eye(4))])
        dec = DecoderStack([linear_layer(np.eye(4))])
        x = np.array([0.3, -1.0, 2.0, 0.0])
        assert np.array_equal(decode(dec, encode(enc, x)), x)

    def test_decode_zero_stack(self):
        dec = DecoderStack([LayerParams(np.zeros((3, 2)), np.zeros(3), "linear")])
        assert np.array_equal(decode(dec, np.ones(2)), np.zeros(3))

    def test_dimension_mismatch(self):
        enc = EncoderStack([linear_layer(np.eye(4))])
        with pytest.raises(ValueError):
            encode(enc, np.ones(5))

    def test_representation_can_be_negative(self, rng):
        # the encoder output layer is linear, never rectified
        enc, _ = random_stacks(rng, [5, 8, 3])
        reps = encode(enc, rng.generator.normal(size=(200, 5)))
        assert reps.min() < 0

    def test_hidden_layer_must_be_relu(self):
        with pytest.raises(ValueError, match="relu"):
            EncoderStack([linear_layer(np.eye(3)), linear_layer(np.eye(3))])

    def test_final_layer_must_be_linear(self):
        with pytest.raises(ValueError, match="linear"):
            EncoderStack([LayerParams(np.zeros((3, 3)), np.zeros(3), "relu")])


class TestReconstructionLoss:
    def test_equal_vectors(self):
        x = np.array([1.0, 2.0])
        assert reconstruction_loss(x, x) == 0.0

    def test_hand_value(self):
        assert reconstruction_loss([1.0, 0.0], [0.0, 1.0]) == 2.0

    def test_matches_direct_loop(self, rng):
        x = rng.generator.normal(size=9)
        z = rng.generator.normal(size=9)
        expected = sum((float(a) - float(b)) ** 2 for a, b in zip(x, z))
        assert reconstruction_loss(x, z) == expected

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_loss(np.ones(3), np.ones(4))


class TestBackprop:
    def test_zero_loss_means_zero_gradients(self):
        enc = EncoderStack([linear_layer(np.eye(3))])
        dec = DecoderStack([linear_layer(np.eye(3))])
        x = np.array([0.5, -0.25, 1.0])
        enc_grads, dec_grads = backprop_autoencoder(enc, dec, x, x)
        for dw, db in enc_grads + dec_grads:
            assert np.array_equal(dw, np.zeros_like(dw))
            assert np.array_equal(db, np.zeros_like(db))

    def test_one_dimensional_hand_derivation(self):
        # y = w x, z = w' y, loss (x - w' w x)^2; at w = w' = 0.5, x = 1 the
        # derivative w.r.t. w is -2 x^2 w' (1 - w' w) = -0.75
        enc = EncoderStack([linear_layer([[0.5]])])
        dec = DecoderStack([linear_layer([[0.5]])])
        x = np.array([1.0])
        enc_grads, dec_grads = backprop_autoencoder(enc, dec, x, x)
        assert enc_grads[0][0][0, 0] == pytest.approx(-0.75, abs=1e-12)
        # symmetric role: d/dw' = -2 x^2 w (1 - w' w) = -0.75 as well
        assert dec_grads[0][0][0, 0] == pytest.approx(-0.75, abs=1e-12)

    @pytest.mark.parametrize("dims", [[3, 2], [4, 3, 2], [5, 4, 3]])
    def test_matches_finite_differences(self, dims):
        rng = SeededRng(hash(tuple(dims)) % 2**32)
        enc, dec = random_stacks(rng, dims)
        x_clean = rng.generator.normal(size=dims[0])
        x_corrupt = corrupt(x_clean, CorruptionSpec(0.25), rng)
        enc_grads, dec_grads = backprop_autoencoder(enc, dec, x_clean, x_corrupt)

        def loss():
            return reconstruction_loss(x_clean, decode(dec, encode(enc, x_corrupt)))

        h = 1e-5
        for stack, grads in ((enc, enc_grads), (dec, dec_grads)):
            for layer, (dw, db) in zip(stack.layers, grads):
                fd_w = np.zeros_like(dw)
                for idx in np.ndindex(*dw.shape):
                    layer.weight[idx] += h
                    up = loss()
                    layer.weight[idx] -= 2 * h
                    down = loss()
                    layer.weight[idx] += h
                    fd_w[idx] = (up - down) / (2 * h)
                assert rel_vec_err(dw, fd_w) < 1e-5
                fd_b = np.zeros_like(db)
                for i in range(db.shape[0]):
                    layer.bias[i] += h
                    up = loss()
                    layer.bias[i] -= 2 * h
                    down = loss()
                    layer.bias[i] += h
                    fd_b[i] = (up - down) / (2 * h)
                assert rel_vec_err(db, fd_b) < 1e-5

    def test_batch_gradient_is_mean_of_per_sample(self, rng):
        enc, dec = random_stacks(rng, [4, 3])
        xs = rng.generator.normal(size=(5, 4))
        batch_enc, batch_dec = backprop_autoencoder(enc, dec, xs, xs)
        acc = [np.zeros_like(l.weight) for l in enc.layers + dec.layers]
        for x in xs:
            eg, dg = backprop_autoencoder(enc, dec, x, x)
            for slot, (dw, _) in enumerate(eg + dg):
                acc[slot] += dw / len(xs)
        for slot, (dw, _) in enumerate(batch_enc + batch_dec):
            assert rel_vec_err(dw, acc[slot]) < 1e-12


def rank2_dataset(n=160, seed=3):
    """4-dim samples lying exactly in a 2-dim subspace."""
    g = SeededRng(seed).generator
    basis = np.array([[1.0, 0.5, -0.5, 0.25], [0.0, 1.0, 0.5, -1.0]])
    return g.normal(size=(n, 2)) @ basis


class TestPretrain:
    def test_loss_decreases_over_training(self):
        x = rank2_dataset()
        _, _, losses = pretrain_layerwise(
            x, [4, 3], CorruptionSpec(0.2), TrainConfig(0.01, 12, 32),
            SeededRng(0))
        assert losses[-1]["loss"] < losses[0]["loss"]

    def test_rank2_data_reconstructed_through_2d_bottleneck(self):
        x = rank2_dataset()
        enc, dec, _ = pretrain_layerwise(
            x, [4, 2], CorruptionSpec(0.0), TrainConfig(0.02, 300, 32),
            SeededRng(1))
        enc, dec, _ = finetune(enc, dec, x, TrainConfig(0.02, 200, 32),
                               SeededRng(2))
        assert mean_reconstruction_loss(enc, dec, x) < 1e-2

    def test_zero_epochs_returns_initialization(self):
        x = rank2_dataset()
        rng_a = SeededRng(7)
        enc, dec, losses = pretrain_layerwise(
            x, [4, 3, 2], CorruptionSpec(0.2), TrainConfig(0.01, 0, 32), rng_a)
        assert losses == []
        # replay the same draws: stacks must equal their random initialization
        rng_b = SeededRng(7)
        for stage, (i, o) in enumerate(((4, 3), (3, 2)), start=1):
            enc_act = "linear" if stage == 2 else "relu"
            dec_act = "linear" if stage == 1 else "relu"
            w_enc = glorot_layer(i, o, enc_act, rng_b)
            w_dec = glorot_layer(o, i, dec_act, rng_b)
            assert np.array_equal(enc.layers[stage - 1].weight, w_enc.weight)
            assert np.array_equal(dec.layers[2 - stage].weight, w_dec.weight)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            pretrain_layerwise(np.zeros((0, 4)), [4, 2], CorruptionSpec(0.2),
                               TrainConfig(), SeededRng(0))

    def test_non_chaining_shape_rejected(self):
        with pytest.raises(ValueError):
            pretrain_layerwise(rank2_dataset(), [5, 2], CorruptionSpec(0.2),
                               TrainConfig(), SeededRng(0))

    def test_deterministic_given_seed(self):
        x = rank2_dataset()
        spec, cfg = CorruptionSpec(0.2), TrainConfig(0.01, 3, 32)
        enc_a, _, _ = pretrain_layerwise(x, [4, 3, 2], spec, cfg, SeededRng(11))
        enc_b, _, _ = pretrain_layerwise(x, [4, 3, 2], spec, cfg, SeededRng(11))
        for la, lb in zip(enc_a.layers, enc_b.layers):
            assert np.array_equal(la.weight, lb.weight)
            assert np.array_equal(la.bias, lb.bias)


class TestFinetune:
    def test_zero_learning_rate_changes_nothing(self):
        x = rank2_dataset()
        enc, dec, _ = pretrain_layerwise(
            x, [4, 2], CorruptionSpec(0.2), TrainConfig(0.01, 2, 32),
            SeededRng(4))
        tuned_enc, tuned_dec, _ = finetune(enc, dec, x,
                                           TrainConfig(0.0, 4, 32), SeededRng(5))
        for before, after in zip(enc.layers + dec.layers,
                                 tuned_enc.layers + tuned_dec.layers):
            assert np.array_equal(before.weight, after.weight)
            assert np.array_equal(before.bias, after.bias)

    def test_epoch_losses_never_jump_up(self):
        x = rank2_dataset()
        enc, dec, _ = pretrain_layerwise(
            x, [4, 3, 2], CorruptionSpec(0.2), TrainConfig(0.005, 10, 32),
            SeededRng(6))
        _, _, losses = finetune(enc, dec, x, TrainConfig(0.005, 20, 32),
                                SeededRng(7))
        for prev, cur in zip(losses, losses[1:]):
            assert cur <= prev * 1.05

    def test_finetune_improves_on_pretraining(self):
        x = rank2_dataset()
        enc, dec, _ = pretrain_layerwise(
            x, [4, 3, 2], CorruptionSpec(0.2), TrainConfig(0.005, 10, 32),
            SeededRng(8))
        before = mean_reconstruction_loss(enc, dec, x)
        enc2, dec2, _ = finetune(enc, dec, x, TrainConfig(0.005, 20, 32),
                                 SeededRng(9))
        assert mean_reconstruction_loss(enc2, dec2, x) <= before
