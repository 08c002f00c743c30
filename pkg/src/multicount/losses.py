"""The composite training objective.

Total = L2 over the pre-attention density stack + L2 over the
post-attention stack + one pixel-averaged binary cross entropy per class
between the attention maps and the foreground pseudo-masks.  L2 is an
unnormalized sum of squares; BCE carries the 1/(W*H) average.  Without the
attention module the objective collapses to L2 over the final stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, slice_channels
from .model import ModelOutput

BCE_EPSILON = 1e-7


@dataclass
class LossReport:
    l2_intermediate: float
    l2_final: float
    bce_per_class: list[float]
    total: float

    def recompute_total(self) -> float:
        return self.l2_intermediate + self.l2_final + sum(self.bce_per_class)


def l2_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Sum over classes and pixels of squared differences."""
    diff = pred - gt
    return (diff * diff).sum()


def bce_loss(attention: Tensor, mask: Tensor) -> Tensor:
    """Pixel mean of -(T log R + (1-T) log(1-R)); R clamped away from 0/1."""
    values = mask.data
    if not np.all((values == 0.0) | (values == 1.0)):
        raise ValueError("pseudo-mask must be binary")
    r = attention.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
    one_minus = (1.0 - r).clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
    term = mask * r.log() + (1.0 - mask) * one_minus.log()
    return -term.mean()


def training_loss(output: ModelOutput, gt_density: Tensor,
                  gt_masks: Tensor | None) -> tuple[Tensor, LossReport]:
    """Differentiable total plus a per-component report.

    ``gt_masks`` is required exactly when the model produced attention.
    """
    if output.attention is None:
        total = l2_loss(output.final, gt_density)
        report = LossReport(l2_intermediate=0.0, l2_final=total.item(),
                            bce_per_class=[], total=total.item())
        return total, report

    if gt_masks is None:
        raise ValueError("attention output needs pseudo-mask targets")
    l2_int = l2_loss(output.intermediate, gt_density)
    l2_fin = l2_loss(output.final, gt_density)
    num_classes = output.attention.shape[1]
    bce_terms = []
    for n in range(num_classes):
        bce_terms.append(bce_loss(slice_channels(output.attention, n, n + 1),
                                  slice_channels(gt_masks, n, n + 1)))
    total = l2_int + l2_fin
    for term in bce_terms:
        total = total + term
    report = LossReport(
        l2_intermediate=l2_int.item(),
        l2_final=l2_fin.item(),
        bce_per_class=[t.item() for t in bce_terms],
        total=total.item(),
    )
    return total, report
