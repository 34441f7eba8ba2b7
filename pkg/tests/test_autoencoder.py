import numpy as np
import pytest

from app.autoencoder.model import (
    Autoencoder, Gradients, backward, batch_loss, forward, init_model, reconstruction_error,
    reconstruction_errors, validate_layer_dims,
)
from app.autoencoder.optimizer import AdamState, adam_step
from app.autoencoder.trainer import Trainer, train
from app.core.config import RunMode
from app.core.exceptions import ModelShapeError, StaleCacheError
from app.schemas import HyperParams
from app.services.feature_encode import EncodedFlows, fit_normalization, raw_matrix
from app.synth.benign import generate_benign


H = 1e-5


def _random_dims(rng):
    outer = int(rng.integers(5, 11))
    middle = int(rng.integers(3, outer))
    bottleneck = int(rng.integers(1, middle))
    return (outer, middle, bottleneck, middle, outer)


def _loss_and_pattern(model, x, dropout_seed=None):
    if dropout_seed is None:
        _, cache = forward(model, x, RunMode.EVAL)
    else:
        _, cache = forward(
            model, x, RunMode.TRAIN,
            rng=np.random.default_rng(dropout_seed), dropout_ratio=0.3, dropout_min_width=1,
        )
    pattern = tuple((z > 0).tobytes() for z in cache.preacts)
    return batch_loss(cache, x), pattern


def _check_gradients(model, x, dropout_seed=None):
    """Центральные разности по каждому параметру; точки излома ReLU пропускаются"""
    if dropout_seed is None:
        _, cache = forward(model, x, RunMode.EVAL)
    else:
        _, cache = forward(
            model, x, RunMode.TRAIN,
            rng=np.random.default_rng(dropout_seed), dropout_ratio=0.3, dropout_min_width=1,
        )
    grads = backward(model, cache, x)

    checked = skipped = 0
    for params, analytic in ((model.weights, grads.weights), (model.biases, grads.biases)):
        for param, grad in zip(params, analytic):
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + H
                plus, plus_pattern = _loss_and_pattern(model, x, dropout_seed)
                param[index] = original - H
                minus, minus_pattern = _loss_and_pattern(model, x, dropout_seed)
                param[index] = original
                if plus_pattern != minus_pattern:
                    skipped += 1
                    continue
                numeric = (plus - minus) / (2 * H)
                np.testing.assert_allclose(grad[index], numeric, rtol=1e-4, atol=1e-8)
                checked += 1
    return checked, skipped


def test_layer_dims_validation():
    assert validate_layer_dims([4, 2, 4]) == (4, 2, 4)
    for dims in ([4, 2, 3, 2, 4], [4, 2, 2, 4], [4, 5, 4], [4, 2, 3], [4]):
        with pytest.raises(ModelShapeError):
            validate_layer_dims(dims)


def test_init_shapes_and_determinism():
    first = init_model((10, 6, 4, 6, 10), seed=3)
    second = init_model((10, 6, 4, 6, 10), seed=3)

    assert [w.shape for w in first.weights] == [(6, 10), (4, 6), (6, 4), (10, 6)]
    assert all(np.all(b == 0) for b in first.biases)
    for a, b in zip(first.weights, second.weights):
        np.testing.assert_array_equal(a, b)
    assert first.bottleneck_layer == 1


def test_model_rejects_wrong_shapes():
    with pytest.raises(ModelShapeError):
        Autoencoder(layer_dims=(4, 2, 4), weights=[np.zeros((2, 4)), np.zeros((2, 4))], biases=[np.zeros(2), np.zeros(4)])


def test_forward_single_vector_matches_batch():
    model = init_model((8, 4, 2, 4, 8), seed=1)
    x = np.random.default_rng(0).normal(size=(3, 8))
    batch, _ = forward(model, x)
    single, _ = forward(model, x[1])
    np.testing.assert_allclose(single, batch[1], rtol=1e-12)
    with pytest.raises(ModelShapeError):
        forward(model, np.zeros(7))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2019)
    total_checked = total_skipped = 0
    for trial in range(20):
        model = init_model(_random_dims(rng), seed=trial)
        for bias in model.biases:
            bias[:] = rng.normal(scale=0.1, size=bias.shape)
        x = rng.normal(size=(3, model.input_dim))
        checked, skipped = _check_gradients(model, x)
        total_checked += checked
        total_skipped += skipped
    assert total_skipped <= 0.01 * (total_checked + total_skipped)


def test_gradients_with_dropout_mask():
    rng = np.random.default_rng(7)
    model = init_model((10, 6, 4, 6, 10), seed=5)
    x = rng.normal(size=(4, 10))
    checked, skipped = _check_gradients(model, x, dropout_seed=11)
    assert checked > 0.95 * (checked + skipped)


def test_dropout_skips_bottleneck_and_narrow_layers():
    model = init_model((10, 6, 4, 6, 10), seed=5)
    x = np.ones((2, 10))
    _, cache = forward(model, x, RunMode.TRAIN, rng=np.random.default_rng(0), dropout_ratio=0.5)
    assert all(mask is None for mask in cache.masks)

    _, cache = forward(
        model, x, RunMode.TRAIN, rng=np.random.default_rng(0), dropout_ratio=0.5, dropout_min_width=1,
    )
    assert cache.masks[model.bottleneck_layer] is None
    assert cache.masks[0] is not None and cache.masks[2] is not None


def test_eval_mode_is_deterministic():
    model = init_model((10, 6, 4, 6, 10), seed=5)
    x = np.random.default_rng(1).normal(size=(5, 10))
    first, _ = forward(model, x, RunMode.EVAL, dropout_ratio=0.5)
    second, _ = forward(model, x, RunMode.EVAL, dropout_ratio=0.5)
    np.testing.assert_array_equal(first, second)


def test_backward_rejects_stale_cache():
    model = init_model((6, 3, 6), seed=0)
    x = np.random.default_rng(0).normal(size=(2, 6))
    _, cache = forward(model, x)
    grads = backward(model, cache, x)
    adam_step(model, grads, AdamState.zeros_like(model), HyperParams(learning_rate=1e-3))

    with pytest.raises(StaleCacheError):
        backward(model, cache, x)
    with pytest.raises(StaleCacheError):
        backward(model, None, x)


def test_reconstruction_error_is_mean_squared():
    f_in = np.array([1.0, 0.0, 0.5, 0.0])
    f_out = np.array([0.0, 0.0, 0.0, 1.0])
    assert reconstruction_error(f_in, f_out) == pytest.approx((1 + 0.25 + 1) / 4)
    with pytest.raises(ModelShapeError):
        reconstruction_error(f_in, f_out[:3])


def test_reconstruction_error_matches_loop():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        f_in, f_out = rng.normal(size=n), rng.normal(size=n)
        expected = 0.0
        for a, b in zip(f_in, f_out):
            expected += (a - b) ** 2
        assert reconstruction_error(f_in, f_out) == pytest.approx(expected / n, rel=1e-9)


def test_errors_do_not_depend_on_chunk_contents():
    model = init_model((12, 6, 3, 6, 12), seed=8)
    x = np.random.default_rng(3).normal(size=(50, 12))
    full = reconstruction_errors(model, x, chunk=16)
    prefix = reconstruction_errors(model, x[:7], chunk=16)
    np.testing.assert_array_equal(prefix, full[:7])


def test_adam_first_step():
    model = Autoencoder(
        layer_dims=(2, 1, 2),
        weights=[np.array([[0.5, -0.5]]), np.array([[1.0], [2.0]])],
        biases=[np.array([0.0]), np.array([0.3, -0.3])],
    )
    grads = Gradients(
        weights=[np.array([[0.1, -0.2]]), np.zeros((2, 1))],
        biases=[np.array([0.4]), np.zeros(2)],
    )
    hyper = HyperParams(learning_rate=0.01, weight_decay=0.0)
    adam_step(model, grads, AdamState.zeros_like(model), hyper)

    # Первый шаг с коррекцией смещения: lr * g / (|g| + eps)
    np.testing.assert_allclose(model.weights[0], [[0.5 - 0.01, -0.5 + 0.01]], rtol=1e-6)
    np.testing.assert_allclose(model.biases[0], [-0.01], rtol=1e-6)
    np.testing.assert_array_equal(model.weights[1], [[1.0], [2.0]])
    assert model.revision == 1


def test_weight_decay_applies_to_weights_only():
    model = init_model((6, 3, 6), seed=1)
    for weight in model.weights:
        weight[:] = 0.5
    for bias in model.biases:
        bias[:] = 0.5
    zero = Gradients(
        weights=[np.zeros_like(w) for w in model.weights],
        biases=[np.zeros_like(b) for b in model.biases],
    )
    adam_step(model, zero, AdamState.zeros_like(model), HyperParams(learning_rate=0.01, weight_decay=0.1))

    for weight in model.weights:
        np.testing.assert_allclose(weight, 0.49, rtol=1e-6)
    for bias in model.biases:
        np.testing.assert_array_equal(bias, 0.5)


def test_adam_shape_mismatch():
    model = init_model((6, 3, 6), seed=1)
    grads = Gradients(weights=[np.zeros((3, 5)), np.zeros((6, 3))], biases=[np.zeros(3), np.zeros(6)])
    with pytest.raises(ModelShapeError):
        adam_step(model, grads, AdamState.zeros_like(model), HyperParams())


def _encoded(profile, n=1000, seed=6):
    raw = raw_matrix(generate_benign(profile, n, seed=seed))
    return EncodedFlows(raw, fit_normalization(raw))


def test_training_reduces_loss(profile):
    dataset = _encoded(profile)
    hyper = HyperParams(batch_size=64, learning_rate=2e-3, dropout_ratio=0.0, weight_decay=0.0, epochs=3, seed=1)
    trainer = Trainer(init_model((2848, 16, 4, 16, 2848), seed=1), hyper)
    trainer.train(dataset)

    history = trainer.history
    assert len(history.epoch_losses) == 3
    assert len(history.batch_losses) == 3 * 16
    assert history.epoch_losses[-1] < history.epoch_losses[0]
    assert history.final_loss == history.epoch_losses[-1]


def test_training_is_reproducible(profile):
    dataset = _encoded(profile, n=300)
    hyper = HyperParams(batch_size=32, learning_rate=1e-3, dropout_ratio=0.5, epochs=1, seed=9)
    first = Trainer(init_model((2848, 128, 4, 128, 2848), seed=9), hyper)
    second = Trainer(init_model((2848, 128, 4, 128, 2848), seed=9), hyper)
    first.train(dataset)
    second.train(dataset)

    for a, b in zip(first.model.weights, second.model.weights):
        np.testing.assert_array_equal(a, b)
    assert first.history.batch_losses == second.history.batch_losses


def test_training_accepts_plain_sequence():
    vector = np.random.default_rng(12).random(6)
    model = init_model((6, 3, 6), seed=2)
    before = [weight.copy() for weight in model.weights]
    hyper = HyperParams(batch_size=4, learning_rate=1e-3, dropout_ratio=0.0, epochs=1, seed=2)

    trained = train(model, [vector] * 10, hyper)

    assert trained is model
    assert model.revision == 3
    assert any(not np.array_equal(a, b) for a, b in zip(before, model.weights))


def test_error_decreases_on_repeated_vector():
    rng = np.random.default_rng(13)
    batch = np.tile(rng.random(8), (10, 1))
    hyper = HyperParams(batch_size=10, learning_rate=1e-3, dropout_ratio=0.0, weight_decay=0.0, epochs=1, seed=3)
    trainer = Trainer(init_model((8, 4, 2, 4, 8), seed=3), hyper)

    errors = [reconstruction_errors(trainer.model, batch[:1])[0]]
    for _ in range(10):
        trainer.step(batch)
        errors.append(reconstruction_errors(trainer.model, batch[:1])[0])
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_errors_follow_row_permutation():
    rng = np.random.default_rng(14)
    model = init_model((12, 6, 3, 6, 12), seed=4)
    x = rng.normal(size=(40, 12))
    order = rng.permutation(40)

    errors = reconstruction_errors(model, x)
    np.testing.assert_allclose(reconstruction_errors(model, x[order]), errors[order], rtol=1e-12)


def _forward_by_hand(model, x):
    """Поэлементное умножение матриц: ReLU на скрытых слоях, линейный выход"""
    activation = list(x)
    for l, (weight, bias) in enumerate(zip(model.weights, model.biases)):
        out = []
        for j in range(weight.shape[0]):
            z = bias[j]
            for i in range(weight.shape[1]):
                z += weight[j, i] * activation[i]
            out.append(z if l == model.n_layers - 1 else max(z, 0.0))
        activation = out
    return np.array(activation)


def test_forward_matches_hand_computation():
    rng = np.random.default_rng(15)
    model = init_model((6, 3, 2, 3, 6), seed=6)
    for bias in model.biases:
        bias[:] = rng.normal(scale=0.2, size=bias.shape)

    for _ in range(50):
        x = rng.normal(size=6)
        output, _ = forward(model, x, RunMode.EVAL)
        np.testing.assert_allclose(output, _forward_by_hand(model, x), rtol=1e-12, atol=1e-14)
