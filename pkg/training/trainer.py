"""
Gradient-descent harnesses: direct superpixel fitting with the SLIC loss
and end-to-end training of the toy encoder with the total loss.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from engine import ops
from engine.errors import DataError, NumericalError, ParameterError
from engine.gradcheck import LossBuilder
from engine.tensor import DTYPE, FeatureMap, LabelMap, Node, Tape
from evaluation.metrics import AUTO, MetricsReport, boundary_recall, evaluate_pair, pixel_accuracy
from superpixels.assignment import AssignmentPyramid, assignment_from_logits, pyramid_from_arrays
from superpixels.grid import pyramid_grids
from superpixels.pooling import PoolingDiagnostics
from .checkpoint import Checkpoint
from .dataset import Sample
from .encoder import EncoderConfig, ToyEncoder
from .losses import (
    DEFAULT_LAMBDA,
    LossConfig,
    check_label_range,
    compactness_term,
    masked_cross_entropy,
    slic_loss,
    total_loss,
    zero_loss,
)
from .optimizer import AdamState, adam_step

logger = logging.getLogger(__name__)

DEFAULT_LR = 0.0005


class TrainConfig(BaseModel):
    """End-to-end training settings; one image per optimizer step"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    lr: float = Field(DEFAULT_LR, gt=0.0)
    epochs: int = Field(10, ge=1)
    lam: float = Field(DEFAULT_LAMBDA, ge=0.0, alias="lambda")
    m: float = Field(0.0, ge=0.0)
    seed: int = 0
    squared: bool = False
    regularize: bool = True
    shuffle: bool = True
    radius: Union[int, str] = AUTO
    progress: bool = False

    def loss_config(self, class_count: int) -> LossConfig:
        return LossConfig(lam=self.lam, m=self.m, class_count=class_count, squared=self.squared)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    cross_entropy: float
    slic: float
    val_accuracy: float
    val_boundary_recall: Optional[float]
    skipped_steps: int = 0


@dataclass
class TrainHistory:
    """Per-epoch training summary"""
    epochs: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.epochs.append(record)

    def to_json_lines(self) -> str:
        return "".join(json.dumps(asdict(record)) + "\n" for record in self.epochs)

    @property
    def best(self) -> Optional[EpochRecord]:
        """Earliest epoch with the highest validation accuracy"""
        best = None
        for record in self.epochs:
            if best is None or record.val_accuracy > best.val_accuracy:
                best = record
        return best


@dataclass(frozen=True)
class TrainResult:
    checkpoint: Checkpoint
    history: TrainHistory


@dataclass(frozen=True)
class StepLosses:
    total: Node
    cross_entropy: Node
    slic: Node


def compose_loss(tape: Tape, encoder: ToyEncoder, image: FeatureMap, labels: LabelMap,
                 config: LossConfig, nodes: Optional[Dict[str, Node]] = None,
                 regularize: bool = True, diagnostics: Optional[PoolingDiagnostics] = None) -> StepLosses:
    """Total loss of one image; regularize=False leaves the SLIC branch off the tape"""
    output = encoder.forward(tape, image, nodes)
    ce = masked_cross_entropy(output.class_scores, labels)
    if regularize:
        slic = slic_loss(image, output.pyramid, config.squared, diagnostics)
        compact = compactness_term(output.pyramid, squared=config.squared) if config.m > 0 else zero_loss(tape)
    else:
        slic = compact = zero_loss(tape)
    return StepLosses(total_loss(ce, slic, compact, config), ce, slic)


def training_step_loss(encoder: ToyEncoder, image: FeatureMap, labels: LabelMap,
                       config: LossConfig, regularize: bool = True) -> LossBuilder:
    """The full training objective as a function of the parameter registry"""
    def build(tape: Tape, nodes: Dict[str, Node]) -> Node:
        return compose_loss(tape, encoder, image, labels, config, nodes, regularize).total
    return build


def _class_count(samples: Sequence[Sample]) -> int:
    highest = 1
    for sample in samples:
        truth = sample.truth
        if truth.labeled.any():
            highest = max(highest, int(truth.ids[truth.labeled].max()))
    return highest + 1


def _check_dataset(samples: Sequence[Sample], class_count: int, stride: int) -> None:
    for sample in samples:
        if (sample.image.height, sample.image.width) != sample.labels.shape:
            raise DataError(f"Image and labels of '{sample.name}' differ in size")
        if sample.image.height % stride or sample.image.width % stride:
            raise DataError(
                f"'{sample.name}' is {sample.image.height}x{sample.image.width}, not divisible by stride {stride}"
            )
        check_label_range(sample.labels, class_count, f"labels of '{sample.name}'")


def predict(model: Union[Checkpoint, ToyEncoder], image: FeatureMap) -> LabelMap:
    """Per-pixel argmax of the decoded class scores (ties go to the lowest id)"""
    encoder = model.model() if isinstance(model, Checkpoint) else model
    output = encoder.forward(Tape(), image)
    return LabelMap(np.argmax(output.class_scores.value, axis=-1))


def _validate(encoder: ToyEncoder, samples: Sequence[Sample], radius: Union[int, str]) -> Tuple[float, Optional[float]]:
    accuracies, recalls = [], []
    for sample in samples:
        pred = predict(encoder, sample.image)
        truth = sample.truth
        if truth.labeled.any():
            accuracies.append(pixel_accuracy(pred, truth))
        try:
            recalls.append(boundary_recall(pred, truth, radius))
        except DataError:
            logger.debug(f"No boundary in '{sample.name}'; skipped for validation BR")
    accuracy = float(np.mean(accuracies)) if accuracies else 0.0
    recall = float(np.mean(recalls)) if recalls else None
    return accuracy, recall


def fit_encoder(train: Sequence[Sample], config: TrainConfig,
                validation: Optional[Sequence[Sample]] = None,
                encoder_config: Optional[EncoderConfig] = None) -> TrainResult:
    """Train on `train`, keep the parameters with the best validation accuracy"""
    if not train:
        raise DataError("Training set is empty")
    validation = list(validation) if validation else list(train)
    if encoder_config is None:
        encoder_config = EncoderConfig(class_count=max(_class_count(train), _class_count(validation)))
    class_count = encoder_config.class_count
    _check_dataset(train, class_count, encoder_config.stride)
    _check_dataset(validation, class_count, encoder_config.stride)

    loss_config = config.loss_config(class_count)
    encoder = ToyEncoder(encoder_config, seed=config.seed)
    params = encoder.params
    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best_params, best_accuracy, best_epoch = dict(params), -1.0, 0

    logger.info(f"Training on {len(train)} image(s), validating on {len(validation)}: "
                f"lambda={config.lam} m={config.m} lr={config.lr} epochs={config.epochs} seed={config.seed}")
    for epoch in tqdm(range(1, config.epochs + 1), desc="epochs", disable=not config.progress):
        order = rng.permutation(len(train)) if config.shuffle else np.arange(len(train))
        totals, ces, slics = [], [], []
        skipped_before = state.skipped
        for index in order:
            sample = train[int(index)]
            tape = Tape()
            losses = compose_loss(tape, encoder, sample.image, sample.labels, loss_config,
                                  regularize=config.regularize)
            if not np.isfinite(losses.total.item()):
                raise NumericalError(f"Non-finite loss on '{sample.name}' in epoch {epoch}")
            grads = tape.backward(losses.total)
            params = adam_step(params, grads, state, config.lr)
            encoder = ToyEncoder(encoder_config, params)
            totals.append(losses.total.item())
            ces.append(losses.cross_entropy.item())
            slics.append(losses.slic.item())

        accuracy, recall = _validate(encoder, validation, config.radius)
        record = EpochRecord(epoch, float(np.mean(totals)), float(np.mean(ces)), float(np.mean(slics)),
                             accuracy, recall, state.skipped - skipped_before)
        history.append(record)
        logger.info(f"Epoch {epoch}/{config.epochs}: loss {record.loss:.4f} ce {record.cross_entropy:.4f} "
                    f"slic {record.slic:.4f} val acc {accuracy:.4f}")
        if accuracy > best_accuracy:
            best_params, best_accuracy, best_epoch = dict(params), accuracy, epoch

    checkpoint = Checkpoint(encoder_config, best_params, best_epoch, best_accuracy,
                            {"train": config.model_dump(by_alias=True)})
    return TrainResult(checkpoint, history)


def train_toy(train: Sequence[Sample], config: TrainConfig,
              validation: Optional[Sequence[Sample]] = None,
              encoder_config: Optional[EncoderConfig] = None) -> Checkpoint:
    return fit_encoder(train, config, validation, encoder_config).checkpoint


def evaluate_model(model: Union[Checkpoint, ToyEncoder], samples: Sequence[Sample],
                   r: Union[int, str] = AUTO, seed: Optional[int] = None) -> List[MetricsReport]:
    """Metrics of the model's predictions against each sample's fine labels"""
    encoder = model.model() if isinstance(model, Checkpoint) else model
    return [evaluate_pair(predict(encoder, s.image), s.truth, r, seed=seed, image=s.name) for s in samples]


@dataclass(frozen=True)
class DirectFitResult:
    pyramid: AssignmentPyramid
    losses: List[float]
    logits: List[np.ndarray]

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def _fit_objective(tape: Tape, image: FeatureMap, logits: Sequence[Node], grids, m: float,
                   squared: bool) -> Tuple[Node, AssignmentPyramid]:
    pyramid = AssignmentPyramid(tuple(assignment_from_logits(node, grid) for node, grid in zip(logits, grids)))
    loss = slic_loss(image, pyramid, squared)
    if m > 0:
        loss = ops.add(loss, ops.scale(compactness_term(pyramid, squared=squared), m))
    return loss, pyramid


def fit_assignments(image: FeatureMap, levels: int = 1, m: float = 0.0, steps: int = 300,
                    lr: float = 0.1, seed: int = 0, init_scale: float = 0.0,
                    squared: bool = False, progress: bool = False) -> DirectFitResult:
    """Optimize raw per-level assignment logits with Adam on slic + m * compact.

    Logits start at 0 (uniform assignments) plus seeded Gaussian noise of
    standard deviation init_scale.
    """
    if steps < 1:
        raise ParameterError(f"steps must be at least 1, got {steps}")
    if levels < 1:
        raise ParameterError(f"levels must be at least 1, got {levels}")
    if m < 0:
        raise ParameterError(f"m must be non-negative, got {m}")

    grids = pyramid_grids(image.height, image.width, levels)
    rng = np.random.default_rng(seed)
    params = {
        f"logits{grid.level}": init_scale * rng.standard_normal((grid.height, grid.width, 9))
        for grid in grids
    }
    state = AdamState.for_params(params)
    losses: List[float] = []

    for step in tqdm(range(steps), desc="direct fit", disable=not progress):
        tape = Tape()
        nodes = [tape.parameter(name, value) for name, value in params.items()]
        loss, _ = _fit_objective(tape, image, nodes, grids, m, squared)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"Direct fit diverged at step {step}")
        losses.append(value)
        logger.debug(f"direct fit step {step}: loss {value:.6f}")
        params = adam_step(params, tape.backward(loss), state, lr)

    tape = Tape()
    nodes = [tape.parameter(name, value) for name, value in params.items()]
    loss, pyramid = _fit_objective(tape, image, nodes, grids, m, squared)
    losses.append(loss.item())
    frozen = pyramid_from_arrays(Tape(), [level.array for level in pyramid.levels])
    logger.info(f"Direct fit: loss {losses[0]:.6f} -> {losses[-1]:.6f} over {steps} steps")
    return DirectFitResult(frozen, losses, [params[f"logits{g.level}"].astype(DTYPE) for g in grids])


def direct_fit(image: FeatureMap, levels: int = 1, m: float = 0.0, steps: int = 300,
               lr: float = 0.1, seed: int = 0) -> AssignmentPyramid:
    return fit_assignments(image, levels, m, steps, lr, seed).pyramid
