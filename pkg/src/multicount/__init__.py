"""Multi-class object counting via per-class density-map regression."""

from .engine import ConvSpec, Tensor
from .groundtruth import (
    DensityConfig,
    MaskConfig,
    PointAnnotationSet,
    distance_transform,
    make_pseudo_mask,
    render_density_maps,
    render_pseudo_masks,
)
from .model import CountingNet, ModelConfig, load_checkpoint, save_checkpoint
from .metrics import MetricsReport, count_from_density, evaluate_metrics
from .train import RunConfig, ablation_sweep, evaluate, export_density, train

__all__ = [
    "ConvSpec",
    "CountingNet",
    "DensityConfig",
    "MaskConfig",
    "MetricsReport",
    "ModelConfig",
    "PointAnnotationSet",
    "RunConfig",
    "Tensor",
    "ablation_sweep",
    "count_from_density",
    "distance_transform",
    "evaluate",
    "evaluate_metrics",
    "export_density",
    "load_checkpoint",
    "make_pseudo_mask",
    "render_density_maps",
    "render_pseudo_masks",
    "save_checkpoint",
    "train",
]

__version__ = "0.1.0"
