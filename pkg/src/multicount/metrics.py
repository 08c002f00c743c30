"""Counting metrics: per-class MAE and root-mean-square error over
per-image counts, plus their across-class means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def count_from_density(channel: np.ndarray) -> float:
    """A density map integrates to its count: plain sum of the grid."""
    return float(np.asarray(channel, dtype=np.float64).sum())


@dataclass
class MetricsReport:
    mae_per_class: list[float]
    mse_per_class: list[float]
    mae_mean: float
    mse_mean: float
    per_image_counts: list[tuple[list[float], list[float]]] = field(
        default_factory=list)

    def to_text(self) -> str:
        lines = [f"mae_mean = {self.mae_mean:.6f}",
                 f"mse_mean = {self.mse_mean:.6f}"]
        for k, (mae, mse) in enumerate(zip(self.mae_per_class,
                                           self.mse_per_class)):
            lines.append(f"mae_class_{k} = {mae:.6f}")
            lines.append(f"mse_class_{k} = {mse:.6f}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())


def mean_over_classes(per_class: list[float]) -> float:
    """The across-class aggregation that turns MAE_k into MAE_mean."""
    return float(np.mean(per_class))


def evaluate_metrics(predicted: np.ndarray,
                     ground_truth: np.ndarray) -> MetricsReport:
    """Per-class MAE / root-mean-square error from M x N count matrices."""
    predicted = np.asarray(predicted, dtype=np.float64)
    ground_truth = np.asarray(ground_truth, dtype=np.float64)
    if predicted.ndim == 1:
        predicted = predicted[:, None]
        ground_truth = ground_truth[:, None]
    if predicted.shape != ground_truth.shape:
        raise ValueError(
            f"count matrices disagree: {predicted.shape} vs "
            f"{ground_truth.shape}")
    if predicted.shape[0] < 1:
        raise ValueError("need at least one image to evaluate")
    err = predicted - ground_truth
    mae = np.abs(err).mean(axis=0)
    mse = np.sqrt((err ** 2).mean(axis=0))
    return MetricsReport(
        mae_per_class=[float(v) for v in mae],
        mse_per_class=[float(v) for v in mse],
        mae_mean=mean_over_classes(list(mae)),
        mse_mean=mean_over_classes(list(mse)),
        per_image_counts=[(list(map(float, p)), list(map(float, g)))
                          for p, g in zip(predicted, ground_truth)],
    )


def load_metrics_text(path) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = float(value)
    return out
