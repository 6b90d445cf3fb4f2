"""
Command implementations behind the CLI: file I/O around the library
operations, run manifests and the sweep worker pool.
"""

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from annotations.coarsen import coarsen_with_polygons, unlabeled_fraction
from engine.errors import EXIT_INPUT_ERROR, EXIT_OK, DataError, ParameterError, SpixError, exit_code_for
from engine.tensor import UNLABELED
from evaluation.metrics import MetricsReport, aggregate_reports, evaluate_pair, resolve_radius
from evaluation.significance import ALPHA, mann_whitney_one_sided, mean_std
from superpixels.assignment import hard_labels
from superpixels.slic import slic
from training.checkpoint import load_checkpoint, save_checkpoint
from training.dataset import Sample, coarsen_dataset, split_dataset, synth_dataset
from training.encoder import EncoderConfig
from training.losses import compactness_term
from training.trainer import TrainConfig, evaluate_model, fit_assignments, fit_encoder, predict
from .imageio import (
    boundary_overlay,
    read_image,
    read_labels,
    write_image,
    write_labels,
)
from .settings import Settings
from .validation import load_experiment_config

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FIELDS = {"BR": "boundary_recall", "ACC": "pixel_accuracy"}
CSV_COLUMNS = ("sweep", "value", "runs", "acc_mean", "acc_std", "br_mean", "br_std",
               "unlabeled_fraction", "p_vs_first")


@dataclass(frozen=True)
class CommandResult:
    """Outcome of one command"""
    success: bool
    message: str
    exit_code: int = EXIT_OK
    data: Dict[str, Any] = field(default_factory=dict)


class RunManifest(BaseModel):
    """One JSON record per command run"""
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    artifacts: Dict[str, str] = Field(default_factory=dict)
    metrics: Dict[str, Any] = Field(default_factory=dict)
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = path.with_name(path.name + ".tmp")
    temp.write_text(text, encoding='utf-8')
    os.replace(temp, path)
    return path


def write_manifest(output: PathLike, manifest: RunManifest) -> Path:
    return atomic_write_text(manifest_path(output), manifest.model_dump_json(indent=2) + "\n")


# Dataset directories

def _indexed(directory: Path, prefix: str, suffix: str) -> Dict[str, Path]:
    return {p.name[len(prefix):-len(suffix)]: p for p in sorted(directory.glob(f"{prefix}*{suffix}"))}


def load_dataset_dir(directory: PathLike) -> List[Sample]:
    """Pairs image_XXXX.ppm with label_XXXX.pgm (and fine_XXXX.pgm when present)"""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"Dataset directory not found: {directory}")
    images = _indexed(directory, "image_", ".ppm")
    labels = _indexed(directory, "label_", ".pgm")
    fines = _indexed(directory, "fine_", ".pgm")
    unpaired = sorted([images[k].name for k in set(images) - set(labels)] +
                      [labels[k].name for k in set(labels) - set(images)])
    if unpaired:
        raise DataError(f"Unpaired files in {directory}: {', '.join(unpaired)}")
    if not images:
        raise DataError(f"No image_XXXX.ppm / label_XXXX.pgm pairs in {directory}")

    samples = []
    for key in sorted(images):
        image = read_image(images[key])
        label_map = read_labels(labels[key])
        if (image.height, image.width) != label_map.shape:
            raise DataError(f"{images[key].name} and {labels[key].name} differ in size")
        fine = read_labels(fines[key]) if key in fines else None
        samples.append(Sample(key, image, label_map, fine))
    return samples


def write_dataset_dir(directory: PathLike, samples: Sequence[Sample]) -> List[Path]:
    directory = Path(directory)
    written = []
    for sample in samples:
        written.append(write_image(directory / f"image_{sample.name}.ppm", sample.image))
        written.append(write_labels(directory / f"label_{sample.name}.pgm", sample.labels))
        if sample.fine_labels is not None and sample.fine_labels is not sample.labels:
            written.append(write_labels(directory / f"fine_{sample.name}.pgm", sample.fine_labels))
    return written


def read_metric_values(path: PathLike, field_name: str) -> List[float]:
    """Per-image values of one metric from an eval JSON-lines file (aggregate lines skipped)"""
    key = FIELDS.get(field_name.upper(), field_name)
    values = []
    for number, line in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{number}: not JSON ({e})") from e
        if isinstance(record, (int, float)):
            values.append(float(record))
            continue
        if record.get("image") == "aggregate":
            continue
        if key not in record:
            raise DataError(f"{path}:{number}: missing field '{key}'")
        values.append(float(record[key]))
    if not values:
        raise DataError(f"No '{key}' values in {path}")
    return values


# Sweep cells run in worker processes and must stay top-level

def run_cell(config: Dict[str, Any], value: float, seed: int) -> Dict[str, Any]:
    """synth -> coarsen -> train -> eval for one (sweep value, seed)"""
    sweep = config['sweep']
    lam = value if sweep == 'lambda' else config['lambda']
    m = value if sweep == 'm' else config['m']
    radius = value if sweep == 'radius' else config['radius']

    counts = (config['train_images'], config['val_images'], config['test_images'])
    corpus = synth_dataset(sum(counts), tuple(config['size']), config['classes'], seed)
    train, val, test = split_dataset(corpus, counts)
    train = coarsen_dataset(train, radius, config['epsilon'])
    val = coarsen_dataset(val, radius, config['epsilon'])

    train_config = TrainConfig(lr=config['lr'], epochs=config['epochs'], lam=lam, m=m, seed=seed,
                               squared=config['squared'], radius=config['eval_radius'])
    encoder = EncoderConfig(class_count=config['classes'])
    checkpoint = fit_encoder(train, train_config, val, encoder).checkpoint
    reports = evaluate_model(checkpoint, test, config['eval_radius'], seed)
    summary = aggregate_reports(reports)
    return {
        "sweep": sweep,
        "value": value,
        "seed": seed,
        "pixel_accuracy": summary.pixel_accuracy,
        "boundary_recall": summary.boundary_recall,
        "unlabeled_fraction": float(np.mean([unlabeled_fraction(s.labels) for s in train])),
        "best_epoch": checkpoint.best_epoch,
    }


def _cell_worker(job: Tuple[Dict[str, Any], float, int, str]) -> Dict[str, Any]:
    config, value, seed, cell_path = job
    result = run_cell(config, value, seed)
    atomic_write_text(cell_path, json.dumps(result, sort_keys=True) + "\n")
    return result


def sweep_rows(config: Dict[str, Any], results: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """One CSV row per sweep value, in config order"""
    rows, first_br = [], None
    for value in config['values']:
        cells = sorted((r for r in results if r['value'] == value), key=lambda r: r['seed'])
        acc_mean, acc_std = mean_std([c['pixel_accuracy'] for c in cells])
        br_values = [c['boundary_recall'] for c in cells]
        br_mean, br_std = mean_std(br_values)
        if first_br is None:
            first_br, p_value = br_values, ""
        else:
            p_value = f"{mann_whitney_one_sided(br_values, first_br).p_value:.6f}"
        rows.append({
            "sweep": config['sweep'],
            "value": value,
            "runs": len(cells),
            "acc_mean": f"{acc_mean:.6f}",
            "acc_std": f"{acc_std:.6f}",
            "br_mean": f"{br_mean:.6f}",
            "br_std": f"{br_std:.6f}",
            "unlabeled_fraction": f"{float(np.mean([c['unlabeled_fraction'] for c in cells])):.6f}",
            "p_vs_first": p_value,
        })
    return rows


def rows_to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


class BackendOrchestrator:
    """
    Runs CLI commands with settings-derived defaults.

    Every command writes its artifacts plus one manifest and returns a
    CommandResult; execute() turns exceptions into exit codes.
    """

    def __init__(self, settings: Optional[Settings] = None, progress: bool = False):
        self.settings = settings or Settings()
        self.progress = progress
        self._commands: Dict[str, Callable[..., CommandResult]] = {
            'slic': self.cmd_slic,
            'coarsen': self.cmd_coarsen,
            'eval': self.cmd_eval,
            'fit': self.cmd_fit,
            'train': self.cmd_train,
            'predict': self.cmd_predict,
            'compare': self.cmd_compare,
            'experiment': self.cmd_experiment,
            'synth': self.cmd_synth,
        }

    @property
    def commands(self) -> List[str]:
        return list(self._commands)

    def execute(self, command: str, **kwargs) -> CommandResult:
        if command not in self._commands:
            return CommandResult(False, f"Unknown command '{command}'", EXIT_INPUT_ERROR)
        try:
            return self._commands[command](**kwargs)
        except (SpixError, OSError, ValueError) as e:
            code = exit_code_for(e) if isinstance(e, SpixError) else EXIT_INPUT_ERROR
            logger.error(f"{command} failed: {e}")
            return CommandResult(False, str(e), code)

    def cmd_slic(self, image: PathLike, out_labels: PathLike, out_overlay: Optional[PathLike] = None,
                 n: Optional[int] = None, compactness: Optional[float] = None,
                 iters: Optional[int] = None) -> CommandResult:
        defaults = self.settings.slic
        n = defaults.n if n is None else n
        compactness = defaults.compactness if compactness is None else compactness
        iters = defaults.iterations if iters is None else iters

        rgb = read_image(image)
        labels = slic(rgb, n, compactness, iters)
        artifacts = {"labels": str(write_labels(out_labels, labels, sentinel=False))}
        if out_overlay is not None:
            artifacts["overlay"] = str(write_image(out_overlay, boundary_overlay(rgb, labels)))
        count = int(labels.ids.max()) + 1
        write_manifest(out_labels, RunManifest(
            command="slic", config={"image": str(image), "n": n, "compactness": compactness, "iters": iters},
            artifacts=artifacts, metrics={"superpixels": count},
        ))
        return CommandResult(True, f"{count} superpixels written to {out_labels}", data={"superpixels": count})

    def cmd_coarsen(self, fine: PathLike, out: PathLike, radius: Optional[float] = None,
                    epsilon: Optional[float] = None) -> CommandResult:
        radius = self.settings.coarsen.radius if radius is None else radius
        epsilon = self.settings.coarsen.epsilon if epsilon is None else epsilon
        labels = read_labels(fine)
        if labels.ids.max() > UNLABELED:
            raise DataError(f"{fine}: class ids must fit in 8 bits, found {int(labels.ids.max())}")
        result = coarsen_with_polygons(labels, radius, epsilon)
        write_labels(out, result.labels)
        fraction = result.unlabeled_fraction
        write_manifest(out, RunManifest(
            command="coarsen", config={"fine": str(fine), "radius": radius, "epsilon": epsilon},
            artifacts={"coarse": str(out)},
            metrics={"unlabeled_fraction": fraction, "polygons": len(result.polygons)},
        ))
        return CommandResult(True, f"unlabeled fraction {fraction:.4f}", data={"unlabeled_fraction": fraction})

    def _pairs(self, pred: Path, truth: Path) -> List[Tuple[str, Path, Path]]:
        if pred.is_dir() != truth.is_dir():
            raise DataError("--pred and --truth must both be files or both be directories")
        if not pred.is_dir():
            return [(pred.name, pred, truth)]
        truth_files = {p.name: p for p in sorted(truth.glob("*.pgm"))}
        pairs = [(p.name, p, truth_files[p.name]) for p in sorted(pred.glob("*.pgm")) if p.name in truth_files]
        missing = sorted(p.name for p in pred.glob("*.pgm") if p.name not in truth_files)
        if missing:
            raise DataError(f"Unpaired label maps: {', '.join(missing)}")
        if not pairs:
            raise DataError(f"No .pgm label maps in {pred}")
        return pairs

    def cmd_eval(self, pred: PathLike, truth: PathLike, out_json: Optional[PathLike] = None,
                 r: Union[int, str, None] = None, variant: Optional[str] = None,
                 seed: Optional[int] = None) -> CommandResult:
        r = self.settings.evaluation.radius if r is None else r
        variant = self.settings.evaluation.variant if variant is None else variant
        pairs = self._pairs(Path(pred), Path(truth))

        reports: List[MetricsReport] = []
        for name, pred_path, truth_path in pairs:
            report = evaluate_pair(read_labels(pred_path), read_labels(truth_path), r, seed=seed,
                                   config={"r": r, "variant": variant}, image=name, variant=variant)
            reports.append(report)
        lines = [report.to_json() for report in reports]
        summary = reports[0] if len(reports) == 1 else aggregate_reports(reports)
        if len(reports) > 1:
            lines.append(summary.to_json())

        data = {"pixel_accuracy": summary.pixel_accuracy, "boundary_recall": summary.boundary_recall,
                "r_used": summary.r_used, "images": len(reports)}
        if out_json is not None:
            atomic_write_text(out_json, "\n".join(lines) + "\n")
            write_manifest(out_json, RunManifest(
                command="eval", config={"pred": str(pred), "truth": str(truth), "r": r, "variant": variant},
                seed=seed, artifacts={"metrics": str(out_json)}, metrics=data,
            ))
        return CommandResult(True, "\n".join(lines), data=data)

    def cmd_fit(self, image: PathLike, out_labels: PathLike, levels: Optional[int] = None,
                m: Optional[float] = None, steps: Optional[int] = None, lr: Optional[float] = None,
                seed: Optional[int] = None) -> CommandResult:
        defaults = self.settings.direct_fit
        levels = defaults.levels if levels is None else levels
        m = defaults.m if m is None else m
        steps = defaults.steps if steps is None else steps
        lr = defaults.lr if lr is None else lr
        seed = defaults.seed if seed is None else seed

        result = fit_assignments(read_image(image), levels, m, steps, lr, seed, progress=self.progress)
        labels = hard_labels(result.pyramid)
        write_labels(out_labels, labels, sentinel=False)
        compact = compactness_term(result.pyramid).item()
        metrics = {"initial_loss": result.initial_loss, "final_loss": result.final_loss, "compactness": compact}
        write_manifest(out_labels, RunManifest(
            command="fit", config={"image": str(image), "levels": levels, "m": m, "steps": steps, "lr": lr},
            seed=seed, artifacts={"labels": str(out_labels)}, metrics=metrics,
        ))
        return CommandResult(True, f"initial loss {result.initial_loss:.6f}, final loss {result.final_loss:.6f}",
                             data=metrics)

    def cmd_train(self, data_dir: PathLike, out_checkpoint: PathLike, lam: Optional[float] = None,
                  m: Optional[float] = None, epochs: Optional[int] = None, lr: Optional[float] = None,
                  seed: Optional[int] = None) -> CommandResult:
        data_dir = Path(data_dir)
        train_dir, val_dir = data_dir / "train", data_dir / "val"
        if train_dir.is_dir():
            train = load_dataset_dir(train_dir)
            validation = load_dataset_dir(val_dir) if val_dir.is_dir() else train
        else:
            train = validation = load_dataset_dir(data_dir)

        config = TrainConfig(
            lr=self.settings.train.lr if lr is None else lr,
            epochs=self.settings.train.epochs if epochs is None else epochs,
            lam=self.settings.loss.lam if lam is None else lam,
            m=self.settings.loss.m if m is None else m,
            seed=self.settings.train.seed if seed is None else seed,
            squared=self.settings.loss.squared,
            radius=self.settings.evaluation.radius,
            progress=self.progress,
        )
        class_count = max(_highest_class(train), _highest_class(validation)) + 1
        encoder = EncoderConfig(class_count=class_count, **self.settings.encoder.model_dump())
        result = fit_encoder(train, config, validation, encoder)

        save_checkpoint(out_checkpoint, result.checkpoint)
        log_path = Path(str(out_checkpoint) + ".log.jsonl")
        atomic_write_text(log_path, result.history.to_json_lines())
        metrics = {"best_epoch": result.checkpoint.best_epoch, "val_accuracy": result.checkpoint.val_accuracy}
        write_manifest(out_checkpoint, RunManifest(
            command="train", config=config.model_dump(by_alias=True) | {"data_dir": str(data_dir)},
            seed=config.seed, artifacts={"checkpoint": str(out_checkpoint), "log": str(log_path)},
            metrics=metrics,
        ))
        return CommandResult(True, f"best validation accuracy {result.checkpoint.val_accuracy:.4f} "
                                   f"at epoch {result.checkpoint.best_epoch}", data=metrics)

    def cmd_predict(self, checkpoint: PathLike, image: PathLike, out: PathLike) -> CommandResult:
        labels = predict(load_checkpoint(checkpoint), read_image(image))
        write_labels(out, labels)
        write_manifest(out, RunManifest(
            command="predict", config={"checkpoint": str(checkpoint), "image": str(image)},
            artifacts={"labels": str(out)},
        ))
        return CommandResult(True, f"prediction written to {out}")

    def cmd_compare(self, metrics_a: PathLike, metrics_b: PathLike, field_name: str = "BR") -> CommandResult:
        group_a = read_metric_values(metrics_a, field_name)
        group_b = read_metric_values(metrics_b, field_name)
        result = mann_whitney_one_sided(group_a, group_b)
        verdict = "significant" if result.significant(ALPHA) else "not significant"
        message = f"U = {result.u:g}, p = {result.p_value:.6f} ({result.method}), {verdict} at alpha {ALPHA}"
        return CommandResult(True, message, data={"u": result.u, "p_value": result.p_value,
                                                  "significant": result.significant(ALPHA),
                                                  "method": result.method})

    def _experiment_defaults(self) -> Dict[str, Any]:
        s = self.settings
        defaults = s.experiment.model_dump()
        defaults.update({'lambda': s.loss.lam, 'm': s.loss.m, 'squared': s.loss.squared,
                         'radius': s.coarsen.radius, 'epsilon': s.coarsen.epsilon,
                         'seed': s.train.seed,
                         'eval_radius': str(s.evaluation.radius)})
        return defaults

    def cmd_experiment(self, config: PathLike, out: Optional[PathLike] = None,
                       workers: Optional[int] = None) -> CommandResult:
        experiment = load_experiment_config(config, self._experiment_defaults())
        resolve_radius(experiment['eval_radius'], 1, 1)
        values = list(experiment['values'])
        if len(set(values)) != len(values):
            raise ParameterError(f"Duplicate sweep values in {values}")
        out_path = Path(out if out is not None else experiment['out'])
        cell_dir = out_path.with_name(out_path.name + ".cells")
        workers = experiment['workers'] if workers is None else workers

        jobs = [(experiment, float(value), experiment['seed'] + run,
                 str(cell_dir / f"{experiment['sweep']}_{value:g}_seed{experiment['seed'] + run}.json"))
                for value in values for run in range(experiment['runs'])]
        logger.info(f"Running {len(jobs)} sweep cell(s) on {workers} worker(s)")
        if workers == 1:
            results = [_cell_worker(job) for job in tqdm(jobs, desc="cells", disable=not self.progress)]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(tqdm(pool.map(_cell_worker, jobs), total=len(jobs), desc="cells",
                                    disable=not self.progress))

        rows = sweep_rows(experiment, results)
        atomic_write_text(out_path, rows_to_csv(rows))
        write_manifest(out_path, RunManifest(
            command="experiment", config={k: list(v) if isinstance(v, tuple) else v for k, v in experiment.items()},
            seed=experiment['seed'], artifacts={"csv": str(out_path), "cells": str(cell_dir)},
            metrics={"rows": len(rows), "cells": len(results)},
        ))
        return CommandResult(True, rows_to_csv(rows), data={"rows": rows})

    def cmd_synth(self, out_dir: PathLike, train: int = 200, val: int = 50, test: int = 50,
                  size: Tuple[int, int] = (64, 64), classes: int = 3, seed: int = 0,
                  coarse_radius: Optional[float] = None, epsilon: Optional[float] = None) -> CommandResult:
        epsilon = self.settings.coarsen.epsilon if epsilon is None else epsilon
        corpus = synth_dataset(train + val + test, size, classes, seed)
        splits = dict(zip(("train", "val", "test"), split_dataset(corpus, (train, val, test))))
        if coarse_radius is not None:
            splits["train"] = coarsen_dataset(splits["train"], coarse_radius, epsilon)
            splits["val"] = coarsen_dataset(splits["val"], coarse_radius, epsilon)

        out_dir = Path(out_dir)
        written = 0
        for name, samples in splits.items():
            written += len(write_dataset_dir(out_dir / name, samples))
        write_manifest(out_dir / "dataset", RunManifest(
            command="synth",
            config={"train": train, "val": val, "test": test, "size": list(size), "classes": classes,
                    "coarse_radius": coarse_radius, "epsilon": epsilon},
            seed=seed, artifacts={"directory": str(out_dir)}, metrics={"files": written},
        ))
        return CommandResult(True, f"{written} files written under {out_dir}", data={"files": written})


def _highest_class(samples: Sequence[Sample]) -> int:
    highest = 1
    for sample in samples:
        for labels in (sample.labels, sample.truth):
            if labels.labeled.any():
                highest = max(highest, int(labels.ids[labels.labeled].max()))
    return highest
