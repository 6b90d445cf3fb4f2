import numpy as np
import pytest
from scipy import stats

from engine import DataError, FeatureMap, LabelMap, ParameterError, Tape, gradient_check
from evaluation import aggregate_reports, boundary_recall, mann_whitney_one_sided, pixel_accuracy
from superpixels import hard_labels
from training import (
    AdamState,
    EncoderConfig,
    LossConfig,
    Sample,
    ToyEncoder,
    TrainConfig,
    adam_step,
    compactness_term,
    coarsen_dataset,
    direct_fit,
    evaluate_model,
    fit_assignments,
    fit_encoder,
    predict,
    slic_loss,
    split_dataset,
    synth_dataset,
    train_toy,
    training_step_loss,
)
from training.trainer import EpochRecord, TrainHistory

SMALL_ENCODER = EncoderConfig(levels=3, widths=(4, 6, 8), class_count=2, embedding=4)


def two_tone_sample(size=32, edge=16, name="two-tone", noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    image = np.zeros((size, size, 3))
    image[:, :edge] = (0.9, 0.15, 0.1)
    image[:, edge:] = (0.1, 0.2, 0.85)
    image = np.clip(image + rng.normal(0.0, noise, size=image.shape), 0.0, 1.0)
    labels = np.zeros((size, size), dtype=np.int64)
    labels[:, edge:] = 1
    return Sample(name, FeatureMap(image), LabelMap(labels))


# --- Adam ---

def test_adam_zero_gradient():
    params = {'w': np.array([1.0, -2.0])}
    state = AdamState.for_params(params)
    updated = adam_step(params, {'w': np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(updated['w'], params['w'])

    state = AdamState.for_params(params)
    adam_step(params, {'w': np.array([1.0, 2.0])}, state, lr=0.1)
    first, second = state.first['w'].copy(), state.second['w'].copy()
    adam_step(params, {'w': np.zeros(2)}, state, lr=0.1)
    np.testing.assert_allclose(state.first['w'], 0.9 * first)
    np.testing.assert_allclose(state.second['w'], 0.999 * second)


def test_adam_first_step_is_sign_like():
    params = {'w': np.array([0.5, 0.5, 0.5])}
    grads = {'w': np.array([3.0, -0.01, 250.0])}
    updated = adam_step(params, grads, AdamState.for_params(params), lr=0.01)
    np.testing.assert_allclose(updated['w'] - params['w'], [-0.01, 0.01, -0.01], rtol=1e-5)


def test_adam_quadratic_descends_monotonically():
    params = {'w': np.full((2, 2), 3.0)}
    state = AdamState.for_params(params)
    losses = []
    for _ in range(100):
        losses.append(float((params['w'] ** 2).sum()))
        params = adam_step(params, {'w': 2.0 * params['w']}, state, lr=0.01)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_skips_non_finite_gradient():
    params = {'w': np.ones(2)}
    state = AdamState.for_params(params)
    updated = adam_step(params, {'w': np.array([np.nan, 1.0])}, state, lr=0.1)
    np.testing.assert_array_equal(updated['w'], params['w'])
    assert state.skipped == 1 and state.step == 0


def test_adam_errors():
    params = {'w': np.ones(2)}
    with pytest.raises(ParameterError):
        adam_step(params, {'w': np.ones(2)}, AdamState(), lr=0.0)
    with pytest.raises(ValueError):
        adam_step(params, {'w': np.ones(3)}, AdamState(), lr=0.1)


# --- direct fit ---

def test_direct_fit_constant_image_stays_uniform():
    result = fit_assignments(FeatureMap(np.full((8, 8, 3), 0.4)), levels=2, steps=20)
    assert max(abs(v) for v in result.losses) < 1e-9
    for level in result.pyramid.levels:
        valid = level.grid.valid
        np.testing.assert_allclose(level.array, valid / valid.sum(axis=-1, keepdims=True), atol=1e-3)


def test_direct_fit_reduces_loss(rng):
    image = FeatureMap(rng.random((12, 12, 3)))
    result = fit_assignments(image, levels=2, steps=60, lr=0.1)
    assert result.final_loss < result.initial_loss


def test_direct_fit_small_steps_do_not_increase_loss():
    sample = two_tone_sample(16, 8, noise=0.02, seed=3)
    result = fit_assignments(sample.image, levels=1, steps=100, lr=0.005)
    assert all(b <= a + 1e-7 for a, b in zip(result.losses, result.losses[1:]))


def test_direct_fit_recovers_color_edge():
    sample = two_tone_sample(64, 32, noise=0.02, seed=11)
    pyramid = direct_fit(sample.image, levels=1, steps=300, lr=0.1, seed=0)
    superpixels = hard_labels(pyramid)
    assert boundary_recall(superpixels, sample.labels, "auto") >= 0.9


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_direct_fit_recovers_color_edge_across_seeds(seed):
    sample = two_tone_sample(64, 32, noise=0.02, seed=100 + seed)
    pyramid = direct_fit(sample.image, levels=1, steps=300, lr=0.1, seed=seed)
    assert boundary_recall(hard_labels(pyramid), sample.labels, "auto") >= 0.9


def test_direct_fit_with_compactness():
    sample = two_tone_sample(16, 8, noise=0.02)
    plain = fit_assignments(sample.image, steps=30, seed=1)
    compact = fit_assignments(sample.image, steps=30, m=0.5, seed=1)
    assert compact.losses[0] > plain.losses[0]
    assert compactness_term(compact.pyramid).item() < compactness_term(plain.pyramid).item()


def test_direct_fit_parameter_errors():
    image = FeatureMap(np.zeros((4, 4, 3)))
    with pytest.raises(ParameterError):
        fit_assignments(image, steps=0)
    with pytest.raises(ParameterError):
        fit_assignments(image, levels=0)
    with pytest.raises(ParameterError):
        fit_assignments(image, m=-1.0)


# --- encoder and full objective ---

def test_encoder_output_shapes():
    encoder = ToyEncoder(SMALL_ENCODER, seed=2)
    output = encoder.forward(Tape(), two_tone_sample(16, 8).image)
    assert output.class_scores.shape == (16, 16, 2)
    assert output.coarse_scores.shape == (4, 4, 2)
    assert len(output.pyramid) == 2


def test_encoder_rejects_indivisible_image():
    encoder = ToyEncoder(SMALL_ENCODER)
    with pytest.raises(DataError):
        encoder.forward(Tape(), FeatureMap(np.zeros((18, 16, 3))))


def test_encoder_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(levels=3, widths=(4, 4))
    with pytest.raises(ValueError):
        EncoderConfig(levels=1, widths=(4,))


def test_full_training_step_gradients():
    sample = two_tone_sample(16, 8, noise=0.05, seed=5)
    ids = sample.labels.ids.copy()
    ids[:, 6:10] = 255
    encoder = ToyEncoder(SMALL_ENCODER, seed=4)
    loss = training_step_loss(encoder, sample.image, LabelMap(ids), LossConfig(lam=0.075, m=0.1))
    result = gradient_check(loss, encoder.params, epsilon=1e-4, samples=100, tolerance=1e-4, seed=9)
    assert result.passed, result.message


def test_slic_branch_does_not_reach_classifier():
    sample = two_tone_sample(16, 8, noise=0.05)
    encoder = ToyEncoder(SMALL_ENCODER, seed=1)
    tape = Tape()
    output = encoder.forward(tape, sample.image)
    grads = tape.backward(slic_loss(sample.image, output.pyramid))
    assert not np.any(grads['classifier.kernel'])
    assert not np.any(grads['classifier.bias'])
    assert np.any(grads['head0.pixel']) and np.any(grads['head1.seed'])


# --- training ---

def test_lambda_zero_matches_disabled_regularizer():
    train = [two_tone_sample(16, 8, noise=0.05, seed=s, name=f"s{s}") for s in range(2)]
    base = dict(lr=0.01, epochs=2, seed=3)
    with_branch = fit_encoder(train, TrainConfig(lam=0.0, **base), encoder_config=SMALL_ENCODER)
    without = fit_encoder(train, TrainConfig(lam=0.0, regularize=False, **base), encoder_config=SMALL_ENCODER)
    for name, value in with_branch.checkpoint.params.items():
        np.testing.assert_array_equal(value, without.checkpoint.params[name])
    assert [r.cross_entropy for r in with_branch.history.epochs] == [r.cross_entropy for r in without.history.epochs]


def test_training_is_deterministic():
    train = [two_tone_sample(16, 8, noise=0.05, seed=s, name=f"s{s}") for s in range(2)]
    config = TrainConfig(lr=0.01, epochs=2, seed=7)
    first = train_toy(train, config, encoder_config=SMALL_ENCODER)
    second = train_toy(train, config, encoder_config=SMALL_ENCODER)
    for name, value in first.params.items():
        np.testing.assert_array_equal(value, second.params[name])
    assert first.best_epoch == second.best_epoch


def test_memorizes_single_image():
    sample = two_tone_sample(32, 16, noise=0.02, seed=1)
    checkpoint = train_toy([sample], TrainConfig(lr=0.05, epochs=50, seed=0))
    pred = predict(checkpoint, sample.image)
    assert pixel_accuracy(pred, sample.labels) >= 0.95
    np.testing.assert_array_equal(pred.ids, predict(checkpoint, sample.image).ids)
    assert pred.ids.max() < checkpoint.encoder.class_count


def test_training_rejects_bad_labels():
    sample = two_tone_sample(16, 8)
    bad = Sample("bad", sample.image, LabelMap(np.full((16, 16), 7)))
    with pytest.raises(DataError):
        fit_encoder([bad], TrainConfig(epochs=1), encoder_config=SMALL_ENCODER)
    with pytest.raises(DataError):
        fit_encoder([], TrainConfig(epochs=1))


def test_history_best_prefers_earliest_tie():
    history = TrainHistory()
    for epoch, accuracy in enumerate([0.5, 0.8, 0.8, 0.7], start=1):
        history.append(EpochRecord(epoch, 1.0, 1.0, 0.0, accuracy, None))
    assert history.best.epoch == 2
    assert len(history.to_json_lines().splitlines()) == 4


def test_train_config_alias():
    assert TrainConfig.model_validate({'lambda': 0.1}).lam == 0.1
    assert TrainConfig().loss_config(3).class_count == 3


def test_coarse_training_learns_foreground():
    corpus = synth_dataset(20, (64, 64), 3, seed=21)
    train, val = split_dataset(corpus, (16, 4))
    coarse = coarsen_dataset(train, 4, 2)
    checkpoint = train_toy(coarse, TrainConfig(lr=0.01, epochs=5, seed=0), coarsen_dataset(val, 4, 2))
    summary = aggregate_reports(evaluate_model(checkpoint, val, "auto"))
    background_only = np.mean([np.mean(s.labels.ids == 0) for s in val])
    assert summary.pixel_accuracy > background_only
    assert summary.boundary_recall > 0.0


@pytest.mark.slow
def test_regularization_improves_coarse_boundary_recall():
    corpus = synth_dataset(300, (64, 64), 3, seed=100)
    train, val, test = split_dataset(corpus, (200, 50, 50))
    train, val = coarsen_dataset(train, 4, 2), coarsen_dataset(val, 4, 2)
    recalls = {0.0: [], 0.075: []}
    accuracies = {0.0: [], 0.075: []}
    for lam in recalls:
        for seed in range(5):
            checkpoint = train_toy(train, TrainConfig(lam=lam, lr=0.01, epochs=8, seed=seed), val)
            summary = aggregate_reports(evaluate_model(checkpoint, test, "auto"))
            recalls[lam].append(summary.boundary_recall)
            accuracies[lam].append(summary.pixel_accuracy)

    assert min(recalls[0.0]) > 0.0, "unregularized model never predicts foreground"
    assert np.mean(recalls[0.075]) > np.mean(recalls[0.0])
    assert mann_whitney_one_sided(recalls[0.075], recalls[0.0]).p_value < 0.05
    assert np.mean(accuracies[0.075]) >= np.mean(accuracies[0.0]) - 0.01


# --- synthetic data ---

def test_synth_dataset_is_deterministic():
    first = synth_dataset(4, (24, 20), 3, seed=5)
    second = synth_dataset(4, (24, 20), 3, seed=5)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.image.data, b.image.data)
        np.testing.assert_array_equal(a.labels.ids, b.labels.ids)
        assert a.name == b.name
    assert not np.array_equal(first[0].image.data, synth_dataset(1, (24, 20), 3, seed=6)[0].image.data)


def test_synth_labels_are_complete():
    for sample in synth_dataset(5, (32, 32), 4, seed=1):
        assert sample.labels.labeled.all()
        assert sample.labels.ids.max() < 4
        assert sample.labels.ids.any()
        assert np.all((sample.image.data >= 0) & (sample.image.data <= 1))


def test_synth_errors():
    with pytest.raises(ParameterError):
        synth_dataset(2, (16, 16), 1)
    with pytest.raises(ParameterError):
        synth_dataset(2, (2, 16), 3)


def test_coarsen_dataset_keeps_fine_truth():
    samples = coarsen_dataset(synth_dataset(2, (32, 32), 3, seed=2), radius=3)
    for sample in samples:
        assert sample.fine_labels is not None
        assert sample.truth is sample.fine_labels
        assert (~sample.labels.labeled).any()


def test_split_dataset():
    samples = synth_dataset(5, (8, 8), 2)
    train, val = split_dataset(samples, (3, 2))
    assert [s.name for s in train] == ["0000", "0001", "0002"]
    assert [s.name for s in val] == ["0003", "0004"]
    with pytest.raises(ParameterError):
        split_dataset(samples, (4, 2))


@pytest.mark.slow
def test_class_presence_is_roughly_uniform():
    classes = 4
    presence = np.zeros(classes - 1)
    for sample in synth_dataset(1000, (16, 16), classes, seed=42):
        present = np.unique(sample.labels.ids)
        presence[present[present > 0] - 1] += 1
    assert stats.chisquare(presence).pvalue > 0.01
