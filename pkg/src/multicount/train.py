"""End-to-end training, evaluation, ablation sweeps, and density export.

A run is described by a flat ``section.key = value`` text config (see
:func:`RunConfig.from_file`).  Training is deterministic under the seed:
the per-step batch stream (sample choice, flip coins, crop windows) is
derived from ``seed`` and the step index alone, so two runs with the same
config produce identical logs, and runs that differ only in model switches
consume identical data (the logged batch digests match).
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (
    Sample,
    SceneConfig,
    derive_seed,
    flip_augment,
    random_crop,
    read_manifest,
    synth_dataset,
)
from .engine import Tensor
from .gridio import ensure_dir, load_ppm, save_grid_stack, save_pgm
from .groundtruth import (
    DensityConfig,
    MaskConfig,
    render_density_maps,
    render_pseudo_masks,
)
from .losses import training_loss
from .metrics import MetricsReport, count_from_density, evaluate_metrics
from .model import CountingNet, ModelConfig, load_checkpoint, save_checkpoint
from .optim import Adam

OUT_ROOT_ENV = "MULTICOUNT_OUT_ROOT"

ABLATION_CONFIGS = (
    ("baseline", False, False),
    ("baseline+DSAM", True, False),
    ("baseline+CAM", False, True),
    ("baseline+DSAM+CAM", True, True),
)


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    manifest: str | None = None
    val_manifest: str | None = None
    train_scenes: int = 10
    val_scenes: int = 0
    steps: int = 2000
    batch_size: int = 4
    crop: int = 128
    flip_probability: float = 0.5
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_interval: int = 500
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be at least 1")
        if self.model.num_classes != self.scene.num_classes:
            raise ValueError("model and scene class counts disagree")
        if len(self.density.sigma_per_class) != self.model.num_classes:
            raise ValueError("density sigmas do not match the class count")

    # -- flat text config ------------------------------------------------------

    @staticmethod
    def from_file(path) -> "RunConfig":
        mapping: dict[str, str] = {}
        with open(path, "r", encoding="ascii") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                mapping[key.strip()] = value.strip()
        try:
            return RunConfig.from_mapping(mapping)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: {exc}") from None

    @staticmethod
    def from_mapping(mapping: dict[str, str]) -> "RunConfig":
        sections: dict[str, dict[str, object]] = {
            "model": {}, "density": {}, "mask": {}, "scene": {}, "train": {},
            "data": {},
        }
        for key, raw in mapping.items():
            section, dot, name = key.partition(".")
            if not dot or section not in sections:
                raise ValueError(f"unknown config key {key!r}")
            sections[section][name] = _parse_value(raw)

        scene_kwargs = _scene_kwargs(sections["scene"])
        density_kwargs = dict(sections["density"])
        if "sigma_per_class" in density_kwargs:
            density_kwargs["sigma_per_class"] = _as_tuple(
                density_kwargs["sigma_per_class"], float)
        mask_kwargs = {}
        if "threshold_j" in sections["mask"]:
            mask_kwargs["threshold_J"] = sections["mask"]["threshold_j"]
        train_kwargs = dict(sections["train"])
        data_kwargs = sections["data"]
        return RunConfig(
            model=ModelConfig(**sections["model"]),
            density=DensityConfig(**density_kwargs),
            mask=MaskConfig(**mask_kwargs),
            scene=SceneConfig(**scene_kwargs),
            manifest=data_kwargs.get("manifest"),
            val_manifest=data_kwargs.get("val_manifest"),
            **train_kwargs,
        )


def _parse_value(raw: str):
    if "," in raw:
        return [_parse_value(part.strip()) for part in raw.split(",")]
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _as_tuple(value, cast):
    if not isinstance(value, list):
        value = [value]
    return tuple(cast(v) for v in value)


def _scene_kwargs(section: dict[str, object]) -> dict[str, object]:
    """Recombine flat per-class min/max lists into the paired ranges."""
    out = dict(section)
    for stem, target in (("radius", "radius_ranges"),
                         ("count", "count_ranges"),
                         ("intensity", "intensity_ranges")):
        lo_key, hi_key = f"{stem}_min", f"{stem}_max"
        if lo_key in out or hi_key in out:
            cast = int if stem == "count" else float
            lows = _as_tuple(out.pop(lo_key), cast)
            highs = _as_tuple(out.pop(hi_key), cast)
            if len(lows) != len(highs):
                raise ValueError(f"{lo_key}/{hi_key} lengths disagree")
            out[target] = tuple(zip(lows, highs))
    return out


def resolve_out_dir(out_dir) -> Path:
    """Relative output dirs land under $MULTICOUNT_OUT_ROOT when it is set."""
    out_dir = Path(out_dir)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not out_dir.is_absolute():
        return Path(root) / out_dir
    return out_dir


# -- training ---------------------------------------------------------------------


@dataclass
class LogRow:
    step: int
    l2_intermediate: float
    l2_final: float
    bce_total: float
    total: float
    batch_digest: str
    wall_ms: float


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    rows: list[LogRow]
    model: CountingNet


def load_train_samples(cfg: RunConfig) -> list[Sample]:
    if cfg.manifest is not None:
        return read_manifest(cfg.manifest, cfg.model.num_classes)
    return synth_dataset(cfg.scene, cfg.train_scenes)


def load_val_samples(cfg: RunConfig) -> list[Sample]:
    if cfg.val_manifest is not None:
        return read_manifest(cfg.val_manifest, cfg.model.num_classes)
    if cfg.val_scenes < 1:
        raise ValueError("no validation data configured")
    both = synth_dataset(cfg.scene, cfg.train_scenes + cfg.val_scenes)
    return both[cfg.train_scenes:]


def _build_batch(samples: list[Sample], cfg: RunConfig, step: int):
    rng = np.random.default_rng(derive_seed(cfg.seed, step))
    picks = rng.integers(0, len(samples), size=cfg.batch_size)
    images, densities, masks = [], [], []
    for i in picks:
        sample = samples[int(i)]
        if rng.uniform() < cfg.flip_probability:
            sample = flip_augment(sample)
        sample = random_crop(sample, (cfg.crop, cfg.crop),
                             seed=int(rng.integers(0, 2 ** 63)))
        images.append(sample.image)
        densities.append(render_density_maps(sample.annotations, cfg.density,
                                             sample.extent))
        if cfg.model.use_cam:
            masks.append(render_pseudo_masks(sample.annotations, cfg.mask,
                                             sample.extent,
                                             cfg.density.output_scale))
    images = np.stack(images)
    densities = np.stack(densities)
    digest = hashlib.sha256(images.tobytes()
                            + densities.tobytes()).hexdigest()[:12]
    mask_batch = Tensor(np.stack(masks)) if masks else None
    return Tensor(images), Tensor(densities), mask_batch, digest


def train(cfg: RunConfig) -> TrainResult:
    out_dir = ensure_dir(resolve_out_dir(cfg.out_dir))
    samples = load_train_samples(cfg)
    model = CountingNet(cfg.model, seed=cfg.seed)
    optimizer = Adam(model.params, learning_rate=cfg.learning_rate,
                     beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    checkpoint_path = out_dir / "checkpoint.ckpt"
    log_path = out_dir / "train_log.csv"
    rows: list[LogRow] = []
    try:
        for step in range(1, cfg.steps + 1):
            started = time.perf_counter()
            images, gt_density, gt_masks, digest = _build_batch(samples, cfg,
                                                                step)
            model.zero_grad()
            output = model(images)
            total, report = training_loss(output, gt_density, gt_masks)
            if not np.isfinite(report.total):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            total.backward()
            try:
                optimizer.step()
            except FloatingPointError as exc:
                raise TrainingDiverged(f"step {step}: {exc}") from None
            rows.append(LogRow(
                step=step,
                l2_intermediate=report.l2_intermediate,
                l2_final=report.l2_final,
                bce_total=sum(report.bce_per_class),
                total=report.total,
                batch_digest=digest,
                wall_ms=(time.perf_counter() - started) * 1000.0,
            ))
            if step % cfg.eval_interval == 0 and step < cfg.steps:
                save_checkpoint(out_dir / f"checkpoint_step{step}.ckpt",
                                model, optimizer)
    finally:
        _write_log(log_path, rows)
    save_checkpoint(checkpoint_path, model, optimizer)
    return TrainResult(checkpoint_path=checkpoint_path, log_path=log_path,
                       rows=rows, model=model)


def _write_log(path, rows: list[LogRow]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("step,l2_intermediate,l2_final,bce_total,total,"
                 "batch_digest,wall_ms\n")
        for r in rows:
            fh.write(f"{r.step},{r.l2_intermediate:.9g},{r.l2_final:.9g},"
                     f"{r.bce_total:.9g},{r.total:.9g},{r.batch_digest},"
                     f"{r.wall_ms:.3f}\n")


# -- evaluation ---------------------------------------------------------------------


def predicted_counts(model: CountingNet, sample: Sample) -> list[float]:
    output = model(Tensor(sample.image[None]))
    return [count_from_density(output.final.data[0, k])
            for k in range(model.cfg.num_classes)]


def evaluate(model: CountingNet, samples: list[Sample],
             use_gt_as_prediction: bool = False,
             density_cfg: DensityConfig | None = None) -> MetricsReport:
    """Count every image per class and reduce to MAE / MSE.

    ``use_gt_as_prediction`` short-circuits the model with the rendered
    ground-truth densities, a pipeline oracle whose metrics must vanish.
    """
    if not samples:
        raise ValueError("evaluation needs at least one sample")
    predicted = []
    truth = []
    for sample in samples:
        truth.append([float(c) for c in sample.annotations.counts()])
        if use_gt_as_prediction:
            cfg = density_cfg or DensityConfig()
            stack = render_density_maps(sample.annotations, cfg, sample.extent)
            predicted.append([count_from_density(stack[k])
                              for k in range(stack.shape[0])])
        else:
            predicted.append(predicted_counts(model, sample))
    return evaluate_metrics(np.asarray(predicted), np.asarray(truth))


def evaluate_checkpoint(checkpoint_path, manifest_path,
                        out_path=None) -> MetricsReport:
    model, _ = load_checkpoint(checkpoint_path)
    samples = read_manifest(manifest_path, model.cfg.num_classes)
    report = evaluate(model, samples)
    if out_path is not None:
        report.save(out_path)
    return report


# -- density export ------------------------------------------------------------------


def export_density(checkpoint_path, image_path, out_dir) -> list[Path]:
    """Per-class density (and attention) grids plus a count summary."""
    model, _ = load_checkpoint(checkpoint_path)
    image = load_ppm(image_path)
    out_dir = ensure_dir(resolve_out_dir(out_dir))
    output = model(Tensor(image[None]))
    written: list[Path] = []
    summary_lines = []
    for k in range(model.cfg.num_classes):
        density = output.final.data[0, k]
        raw = out_dir / f"density_c{k}.grids"
        save_grid_stack(raw, density)
        save_pgm(out_dir / f"density_c{k}.pgm", density)
        written.append(raw)
        summary_lines.append(f"class_{k}_count = {density.sum():.6f}\n")
        if output.attention is not None:
            raw = out_dir / f"attention_c{k}.grids"
            save_grid_stack(raw, output.attention.data[0, k])
            save_pgm(out_dir / f"attention_c{k}.pgm",
                     output.attention.data[0, k])
            written.append(raw)
    summary = out_dir / "summary.txt"
    summary.write_text("".join(summary_lines), encoding="ascii")
    written.append(summary)
    return written


# -- ablation -----------------------------------------------------------------------


def ablation_sweep(cfg: RunConfig) -> dict[str, MetricsReport]:
    """Train the four module configurations under one seed and budget.

    All four runs consume the same batch stream; the sweep asserts that by
    comparing the logged digests, then evaluates each run on the held-out
    split and writes a comparison table.
    """
    out_dir = ensure_dir(resolve_out_dir(cfg.out_dir))
    val = load_val_samples(cfg)
    reports: dict[str, MetricsReport] = {}
    digest_traces = []
    for name, use_dsam, use_cam in ABLATION_CONFIGS:
        run_cfg = replace(
            cfg,
            model=replace(cfg.model, use_dsam=use_dsam, use_cam=use_cam),
            out_dir=str(Path(cfg.out_dir) / name.replace("+", "_")),
        )
        result = train(run_cfg)
        digest_traces.append([row.batch_digest for row in result.rows])
        reports[name] = evaluate(result.model, val)
    if any(trace != digest_traces[0] for trace in digest_traces[1:]):
        raise RuntimeError("ablation runs consumed different data streams")
    _write_ablation_table(out_dir / "ablation.txt", reports)
    return reports


def _write_ablation_table(path, reports: dict[str, MetricsReport]) -> None:
    num_classes = len(next(iter(reports.values())).mae_per_class)
    columns = ["mae_mean", "mse_mean"]
    for k in range(num_classes):
        columns += [f"mae_c{k}", f"mse_c{k}"]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("config\t" + "\t".join(columns) + "\n")
        for name, report in reports.items():
            values = [report.mae_mean, report.mse_mean]
            for k in range(num_classes):
                values += [report.mae_per_class[k], report.mse_per_class[k]]
            fh.write(name + "\t" + "\t".join(f"{v:.6f}" for v in values)
                     + "\n")
