import numpy as np
import pytest

from engine import ShapeError, Tape, gradient_check, ops
from superpixels import (
    AssignmentPyramid,
    PoolingDiagnostics,
    SeedGrid,
    assignment_from_logits,
    constant_pyramid,
    decode,
    nearest_level,
    pyramid_from_arrays,
    q_pool,
    sp_downsample,
    sp_upsample,
)


def dense_matrix(weights, grid):
    """Explicit (pixels x seeds) assignment matrix"""
    matrix = np.zeros((grid.height * grid.width, grid.seed_count))
    index = grid.candidate_index.reshape(-1, 9)
    valid = grid.valid.reshape(-1, 9)
    flat = weights.reshape(-1, 9)
    for p in range(matrix.shape[0]):
        for k in range(9):
            if valid[p, k]:
                matrix[p, index[p, k]] += flat[p, k]
    return matrix


def random_level(tape, rng, height, width, level=0):
    grid = SeedGrid(height, width, level)
    return assignment_from_logits(tape.constant(rng.normal(scale=2.0, size=(height, width, 9))), grid)


def test_constant_maps_pass_through(rng):
    tape = Tape()
    level = random_level(tape, rng, 6, 5)
    x = tape.constant(np.full((6, 5, 2), 3.5))
    np.testing.assert_allclose(sp_downsample(x, level).value, 3.5)
    np.testing.assert_allclose(sp_upsample(tape.constant(np.full((3, 3, 2), -1.25)), level).value, -1.25)

    pyramid = AssignmentPyramid((random_level(tape, rng, 8, 8, 0), random_level(tape, rng, 4, 4, 1)))
    np.testing.assert_allclose(q_pool(tape.constant(np.full((8, 8, 3), 0.7)), pyramid).value, 0.7)


def test_block_means_under_hard_assignment(rng):
    tape = Tape()
    x = rng.normal(size=(4, 4, 1))
    level = nearest_level(tape, SeedGrid(4, 4))
    blocks = x.reshape(2, 2, 2, 2, 1).mean(axis=(1, 3))
    np.testing.assert_allclose(sp_downsample(tape.constant(x), level).value, blocks, atol=1e-12)

    pooled = q_pool(tape.constant(x), AssignmentPyramid((level,))).value
    np.testing.assert_allclose(pooled, np.repeat(np.repeat(blocks, 2, axis=0), 2, axis=1), atol=1e-12)


@pytest.mark.parametrize("height,width", [(4, 4), (5, 7), (8, 8)])
def test_dense_oracle(rng, height, width):
    tape = Tape()
    level = random_level(tape, rng, height, width)
    grid = level.grid
    matrix = dense_matrix(level.array, grid)

    x = rng.normal(size=(height, width, 2))
    expected_down = (matrix.T @ x.reshape(-1, 2)) / matrix.sum(axis=0)[:, None]
    down = sp_downsample(tape.constant(x), level).value
    np.testing.assert_allclose(down.reshape(-1, 2), expected_down, atol=1e-12)

    y = rng.normal(size=(grid.seed_height, grid.seed_width, 2))
    up = sp_upsample(tape.constant(y), level).value
    np.testing.assert_allclose(up.reshape(-1, 2), matrix @ y.reshape(-1, 2), atol=1e-12)


def test_decode_matches_matrix_product(rng):
    tape = Tape()
    fine = random_level(tape, rng, 4, 4, 0)
    coarse = random_level(tape, rng, 2, 2, 1)
    pyramid = AssignmentPyramid((fine, coarse))
    y = np.array([[[1.7]]])
    expected = dense_matrix(fine.array, fine.grid) @ dense_matrix(coarse.array, coarse.grid) @ y.reshape(-1, 1)
    np.testing.assert_allclose(decode(tape.constant(y), pyramid).value.reshape(-1, 1), expected, atol=1e-12)


def test_decode_one_hot_is_piecewise_constant(rng):
    tape = Tape()
    pyramid = constant_pyramid(tape, 8, 8, 2)
    scores = np.zeros((2, 2, 3))
    scores[..., 0] = 1.0
    scores[1, 1] = (0.0, 0.0, 1.0)
    classes = decode(tape.constant(scores), pyramid).value.argmax(axis=-1)
    expected = np.zeros((8, 8), dtype=int)
    expected[4:, 4:] = 2
    np.testing.assert_array_equal(classes, expected)


def test_decode_argmax_invariant_to_rescaling(rng):
    tape = Tape()
    pyramid = AssignmentPyramid((random_level(tape, rng, 8, 8, 0), random_level(tape, rng, 4, 4, 1)))
    scores = rng.normal(size=(2, 2, 4))
    base = decode(tape.constant(scores), pyramid).value.argmax(axis=-1)
    scaled = decode(tape.constant(scores * 3.7), pyramid).value.argmax(axis=-1)
    np.testing.assert_array_equal(base, scaled)


def test_upsample_stays_in_candidate_hull(rng):
    tape = Tape()
    level = random_level(tape, rng, 7, 6)
    y = rng.normal(size=(4, 3, 2))
    out = sp_upsample(tape.constant(y), level).value
    gathered = level.grid.gather(y)
    valid = level.grid.valid[..., None]
    low = np.where(valid, gathered, np.inf).min(axis=2)
    high = np.where(valid, gathered, -np.inf).max(axis=2)
    assert np.all(out >= low - 1e-12) and np.all(out <= high + 1e-12)


def test_q_pool_idempotent_under_hard_assignments(rng):
    tape = Tape()
    pyramid = constant_pyramid(tape, 8, 8, 2)
    once = q_pool(tape.constant(rng.normal(size=(8, 8, 3))), pyramid)
    twice = q_pool(once, pyramid)
    np.testing.assert_allclose(twice.value, once.value, atol=1e-12)


def test_q_pool_preserves_mean(rng):
    tape = Tape()
    x = rng.normal(size=(8, 6, 2))
    pooled = q_pool(tape.constant(x), constant_pyramid(tape, 8, 6, 1)).value
    np.testing.assert_allclose(pooled.mean(axis=(0, 1)), x.mean(axis=(0, 1)), atol=1e-12)


def test_empty_seeds_are_counted():
    tape = Tape()
    grid = SeedGrid(4, 4)
    weights = np.zeros((4, 4, 9))
    for y in range(4):
        for x in range(4):
            slot = int(np.flatnonzero(grid.valid[y, x] & (grid.candidate_index[y, x] == 0))[0])
            weights[y, x, slot] = 1.0
    level = pyramid_from_arrays(tape, [weights]).levels[0]
    diagnostics = PoolingDiagnostics()
    out = sp_downsample(tape.constant(np.full((4, 4, 1), 2.0)), level, diagnostics).value
    assert diagnostics.empty_seeds == 3
    assert out[0, 0, 0] == pytest.approx(2.0)
    assert np.all(out.ravel()[1:] == 0.0)


def test_shape_errors():
    tape = Tape()
    level = nearest_level(tape, SeedGrid(4, 4))
    with pytest.raises(ShapeError):
        sp_downsample(tape.constant(np.zeros((4, 5, 1))), level)
    with pytest.raises(ShapeError):
        sp_upsample(tape.constant(np.zeros((3, 2, 1))), level)


def _pooling_check(rng, build):
    targets = {}

    def loss(tape, nodes):
        level = assignment_from_logits(nodes['logits'], SeedGrid(6, 5))
        out = build(nodes, level)
        weights = targets.setdefault('w', rng.normal(size=out.value.shape))
        return ops.sum_all(ops.multiply(out, tape.constant(weights)))

    return loss


def test_downsample_gradients(rng):
    params = {'x': rng.normal(size=(6, 5, 2)), 'logits': rng.normal(size=(6, 5, 9))}
    loss = _pooling_check(rng, lambda nodes, level: sp_downsample(nodes['x'], level))
    result = gradient_check(loss, params, epsilon=1e-6, tolerance=1e-5)
    assert result.passed, result.message


def test_upsample_gradients(rng):
    params = {'y': rng.normal(size=(3, 3, 2)), 'logits': rng.normal(size=(6, 5, 9))}
    loss = _pooling_check(rng, lambda nodes, level: sp_upsample(nodes['y'], level))
    result = gradient_check(loss, params, epsilon=1e-6, tolerance=1e-5)
    assert result.passed, result.message


def test_q_pool_and_decode_gradients(rng):
    target = rng.normal(size=(8, 8, 2))
    params = {
        'x': rng.normal(size=(8, 8, 2)),
        'y': rng.normal(size=(2, 2, 2)),
        'fine': rng.normal(size=(8, 8, 9)),
        'coarse': rng.normal(size=(4, 4, 9)),
    }

    def loss(tape, nodes):
        pyramid = AssignmentPyramid((
            assignment_from_logits(nodes['fine'], SeedGrid(8, 8, 0)),
            assignment_from_logits(nodes['coarse'], SeedGrid(4, 4, 1)),
        ))
        pooled = q_pool(nodes['x'], pyramid)
        decoded = decode(nodes['y'], pyramid)
        mixed = ops.add(pooled, decoded)
        return ops.mean_all(ops.square(ops.subtract(mixed, tape.constant(target))))

    result = gradient_check(loss, params, epsilon=1e-6, samples=200, tolerance=1e-4)
    assert result.passed, result.message
