import numpy as np
import pytest

from engine import (
    DataError,
    FeatureMap,
    GeometryError,
    LabelMap,
    NumericalError,
    ParameterError,
    ShapeError,
    Tape,
    gradient_check,
    ops,
)
from engine.errors import EXIT_INPUT_ERROR, EXIT_NUMERICAL_ERROR, exit_code_for


def direct_conv(x, kernel, stride, padding):
    """Brute-force cross-correlation"""
    k = kernel.shape[0]
    padded = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    out_h = (x.shape[0] + 2 * padding - k) // stride + 1
    out_w = (x.shape[1] + 2 * padding - k) // stride + 1
    out = np.zeros((out_h, out_w, kernel.shape[3]))
    for y in range(out_h):
        for x_ in range(out_w):
            for o in range(kernel.shape[3]):
                window = padded[y * stride:y * stride + k, x_ * stride:x_ * stride + k, :]
                out[y, x_, o] = np.sum(window * kernel[:, :, :, o])
    return out


def test_feature_map_rejects_non_finite():
    with pytest.raises(NumericalError):
        FeatureMap(np.array([[1.0, np.nan]]))


def test_feature_map_is_immutable():
    fmap = FeatureMap(np.ones((2, 2, 1)))
    with pytest.raises(ValueError):
        fmap.data[0, 0, 0] = 5.0


def test_label_map_validation():
    with pytest.raises(DataError):
        LabelMap(np.array([[0, -1]]))
    labels = LabelMap(np.array([[0, 1], [255, 2]]))
    with pytest.raises(DataError):
        labels.validate_classes(2)
    labels.validate_classes(3)
    assert labels.labeled.sum() == 3


def test_conv_identity_kernel():
    tape = Tape()
    x = np.arange(9, dtype=float).reshape(3, 3, 1)
    out = ops.conv2d(tape.constant(x), tape.constant(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.value, x)


def test_conv_stride_two_corners():
    tape = Tape()
    out = ops.conv2d(tape.constant(np.ones((4, 4, 1))), tape.constant(np.ones((3, 3, 1, 1))),
                     stride=2, padding=1)
    assert out.shape == (2, 2, 1)
    assert out.value[0, 0, 0] == 4.0
    np.testing.assert_allclose(out.value[..., 0], direct_conv(np.ones((4, 4, 1)), np.ones((3, 3, 1, 1)), 2, 1)[..., 0])


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 2)])
def test_conv_matches_direct_oracle(rng, stride, padding):
    x = rng.normal(size=(7, 6, 2))
    kernel = rng.normal(size=(3, 3, 2, 4))
    tape = Tape()
    out = ops.conv2d(tape.constant(x), tape.constant(kernel), stride=stride, padding=padding)
    np.testing.assert_allclose(out.value, direct_conv(x, kernel, stride, padding), atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_same_padding_preserves_size(rng, k):
    tape = Tape()
    out = ops.conv2d(tape.constant(rng.normal(size=(6, 5, 2))),
                     tape.constant(rng.normal(size=(k, k, 2, 3))), padding=(k - 1) // 2)
    assert out.shape == (6, 5, 3)


def test_conv_errors():
    tape = Tape()
    x = tape.constant(np.ones((4, 4, 2)))
    with pytest.raises(ShapeError):
        ops.conv2d(x, tape.constant(np.ones((3, 3, 1, 1))))
    with pytest.raises(ShapeError):
        ops.conv2d(x, tape.constant(np.ones((2, 2, 2, 1))))
    with pytest.raises(ParameterError):
        ops.conv2d(x, tape.constant(np.ones((3, 3, 2, 1))), stride=3)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_gradients(rng, stride):
    params = {'x': rng.normal(size=(8, 8, 2)), 'kernel': rng.normal(size=(3, 3, 2, 3))}

    def loss(tape, nodes):
        out = ops.conv2d(nodes['x'], nodes['kernel'], stride=stride, padding=1)
        return ops.sum_all(ops.square(out))

    result = gradient_check(loss, params, epsilon=1e-5, tolerance=1e-5)
    assert result.passed, result.message


def test_relu_values():
    tape = Tape()
    out = ops.relu(tape.constant(np.array([-1.0, 0.0, 2.0])))
    np.testing.assert_array_equal(out.value, [0.0, 0.0, 2.0])
    assert not np.any(ops.relu(tape.constant(-np.ones((3, 3, 2)))).value)


def test_relu_gradient_away_from_zero(rng):
    value = rng.normal(size=(5, 5, 2))
    value[np.abs(value) < 1e-3] = 0.5

    def loss(tape, nodes):
        return ops.sum_all(ops.square(ops.relu(nodes['v'])))

    result = gradient_check(loss, {'v': value}, epsilon=1e-6, tolerance=1e-6)
    assert result.passed, result.message


def test_softmax_equal_logits():
    tape = Tape()
    valid = np.ones((1, 1, 9), dtype=bool)
    out = ops.softmax_candidates(tape.constant(np.zeros((1, 1, 9))), valid)
    np.testing.assert_allclose(out.value, np.full((1, 1, 9), 1 / 9))

    corner = np.zeros((1, 1, 9), dtype=bool)
    corner[0, 0, [4, 5, 7, 8]] = True
    out = ops.softmax_candidates(tape.constant(np.full((1, 1, 9), 3.0)), corner)
    np.testing.assert_allclose(out.value[0, 0, [4, 5, 7, 8]], 0.25)
    assert np.all(out.value[0, 0, [0, 1, 2, 3, 6]] == 0.0)


def test_softmax_rows_sum_to_one(rng):
    tape = Tape()
    valid = rng.random((6, 6, 9)) < 0.6
    valid[..., 4] = True
    out = ops.softmax_candidates(tape.constant(rng.normal(scale=5, size=(6, 6, 9))), valid)
    np.testing.assert_allclose(out.value.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(out.value[~valid] == 0.0)


def test_softmax_empty_mask():
    tape = Tape()
    with pytest.raises(GeometryError):
        ops.softmax_candidates(tape.constant(np.zeros((1, 2, 9))), np.zeros((1, 2, 9), dtype=bool))


def test_softmax_jacobian(rng):
    valid = rng.random((3, 3, 9)) < 0.7
    valid[..., 0] = True
    weights = rng.normal(size=(3, 3, 9))

    def loss(tape, nodes):
        probs = ops.softmax_candidates(nodes['logits'], valid)
        return ops.sum_all(ops.multiply(probs, tape.constant(weights)))

    result = gradient_check(loss, {'logits': rng.normal(size=(3, 3, 9))}, epsilon=1e-5, tolerance=1e-5)
    assert result.passed, result.message


def test_backward_trivial_cases(rng):
    p = rng.normal(size=(3, 4))
    tape = Tape()
    node = tape.parameter('p', p)
    np.testing.assert_array_equal(tape.backward(ops.sum_all(node))['p'], np.ones_like(p))

    tape = Tape()
    node = tape.parameter('p', p)
    grads = tape.backward(ops.scale(ops.sum_all(ops.square(node)), 0.5))
    np.testing.assert_allclose(grads['p'], p)


def test_backward_is_idempotent(rng):
    tape = Tape()
    node = tape.parameter('p', rng.normal(size=(4, 4, 2)))
    loss = ops.mean_all(ops.pixel_norm(node))
    first = tape.backward(loss)['p']
    second = tape.backward(loss)['p']
    np.testing.assert_array_equal(first, second)


def test_unreachable_parameter_gets_zero_gradient():
    tape = Tape()
    used = tape.parameter('used', np.ones(3))
    tape.parameter('unused', np.ones((2, 2)))
    grads = tape.backward(ops.sum_all(used))
    np.testing.assert_array_equal(grads['unused'], np.zeros((2, 2)))


def test_backward_rejects_foreign_and_vector_loss():
    tape, other = Tape(), Tape()
    node = tape.parameter('p', np.ones(3))
    with pytest.raises(ShapeError):
        tape.backward(node)
    with pytest.raises(ShapeError):
        other.backward(ops.sum_all(node))


def test_record_rejects_non_finite():
    tape = Tape()
    node = tape.parameter('p', np.array([1e308]))
    with pytest.raises(NumericalError):
        ops.scale(node, 10.0)


def test_pixel_norm_zero_residual():
    tape = Tape()
    out = ops.pixel_norm(tape.constant(np.zeros((2, 2, 3))))
    np.testing.assert_array_equal(out.value, np.zeros((2, 2)))
    out = ops.pixel_norm(tape.constant(np.full((1, 1, 2), [3.0, 4.0])))
    assert abs(out.value[0, 0] - 5.0) < 1e-6


def test_gradient_check_linear_and_quadratic(rng):
    weights = rng.normal(size=(3, 3))

    def linear(tape, nodes):
        return ops.sum_all(ops.multiply(nodes['p'], tape.constant(weights)))

    def quadratic(tape, nodes):
        return ops.sum_all(ops.square(nodes['p']))

    params = {'p': rng.normal(size=(3, 3))}
    assert gradient_check(linear, params, epsilon=1e-5).max_relative_error < 1e-10
    assert gradient_check(quadratic, params, epsilon=1e-5).max_relative_error < 1e-8


def test_gradient_check_samples_and_epsilon(rng):
    def quadratic(tape, nodes):
        return ops.sum_all(ops.square(nodes['p']))

    result = gradient_check(quadratic, {'p': rng.normal(size=(10, 10))}, samples=7)
    assert result.checked == 7
    with pytest.raises(ParameterError):
        gradient_check(quadratic, {'p': np.ones(2)}, epsilon=0.0)


def test_gradient_check_reports_overflow():
    def overflowing(tape, nodes):
        return ops.sum_all(ops.scale(ops.square(nodes['p']), 1e308))

    result = gradient_check(overflowing, {'p': np.array([10.0])})
    assert not result.passed
    assert result.max_relative_error == float('inf')
    assert "Non-finite" in result.message


def test_composite_chain_gradients(rng):
    valid = np.ones((6, 6, 9), dtype=bool)
    target = rng.random((6, 6, 9))
    params = {
        'x': rng.normal(size=(6, 6, 2)),
        'kernel': rng.normal(scale=0.5, size=(3, 3, 2, 9)),
        'bias': rng.normal(size=9),
    }

    def loss(tape, nodes):
        hidden = ops.relu(ops.add_bias(ops.conv2d(nodes['x'], nodes['kernel'], padding=1), nodes['bias']))
        probs = ops.softmax_candidates(hidden, valid)
        return ops.mean_all(ops.square(ops.subtract(probs, tape.constant(target))))

    result = gradient_check(loss, params, epsilon=1e-6, tolerance=1e-4)
    assert result.passed, result.message


def test_exit_codes():
    assert exit_code_for(NumericalError("x")) == EXIT_NUMERICAL_ERROR
    assert exit_code_for(ShapeError("x")) == EXIT_INPUT_ERROR
