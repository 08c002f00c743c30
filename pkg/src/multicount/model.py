"""The counting network.

A truncated VGG-16-style backbone (13 convs, widths scaled by a multiplier,
no pooling between the last two stages) feeds two optional modules: a
dilated multi-scale fusion block over stages 3/4/5 (rates 2/3/5) and a
per-class spatial attention head over stage 5 (rates 1/2/3/4, sigmoid).
A small convolutional backend regresses one density map per class at 1/4
of the input resolution; with attention on, the final maps are the
elementwise product of density and attention.

Both modules toggle independently, giving the four ablation
configurations: baseline, +fusion, +attention, +both.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .engine import (
    ConvSpec,
    Tensor,
    concat_channels,
    conv2d,
    upsample_bilinear,
    maxpool2d,
)

# Full VGG-16 widths per stage; (width, conv count)
_VGG_PLAN = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))


@dataclass
class ModelConfig:
    num_classes: int = 2
    width_multiplier: float = 0.25
    use_dsam: bool = True
    use_cam: bool = True
    init_std: float = 0.01

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be at least 1")
        if not 0.0 < self.width_multiplier <= 1.0:
            raise ValueError("width_multiplier must be in (0, 1]")
        if self.init_std <= 0:
            raise ValueError("init_std must be positive")
        if self.scaled(64) < 1:
            raise ValueError("width_multiplier scales a channel count to 0")

    def scaled(self, channels: int) -> int:
        return int(round(channels * self.width_multiplier))


@dataclass
class FeaturePyramid:
    f3: Tensor  # 1/4 resolution
    f4: Tensor  # 1/8 resolution
    f5: Tensor  # 1/8 resolution


@dataclass
class ModelOutput:
    intermediate: Tensor
    attention: Tensor | None
    final: Tensor


class _ConvLayer:
    """One convolution's spec plus its weight/bias tensors."""

    def __init__(self, spec: ConvSpec, weight: Tensor, bias: Tensor):
        self.spec = spec
        self.weight = weight
        self.bias = bias

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec)


class CountingNet:
    """Multi-class density regressor; owns a named, ordered parameter dict."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)

        def conv(name, in_c, out_c, kernel=3, dilation=1):
            padding = dilation * (kernel - 1) // 2
            spec = ConvSpec(kernel_size=kernel, stride=1, padding=padding,
                            dilation=dilation, in_channels=in_c,
                            out_channels=out_c)
            weight = Tensor(rng.normal(0.0, cfg.init_std,
                                       size=(out_c, in_c, kernel, kernel)),
                            requires_grad=True)
            bias = Tensor(np.zeros(out_c), requires_grad=True)
            self.params[f"{name}.weight"] = weight
            self.params[f"{name}.bias"] = bias
            return _ConvLayer(spec, weight, bias)

        self.stages = []
        in_c = 3
        for si, (width, depth) in enumerate(_VGG_PLAN, start=1):
            stage = []
            for ci in range(depth):
                out_c = cfg.scaled(width)
                stage.append(conv(f"backbone.conv{si}_{ci + 1}", in_c, out_c))
                in_c = out_c
            self.stages.append(stage)
        f3_c = cfg.scaled(256)
        f4_c = f5_c = cfg.scaled(512)  # stages 4 and 5 share the VGG width

        branch_c = cfg.scaled(128)
        self.fused_channels = cfg.scaled(256)
        if cfg.use_dsam:
            self.dsam_branch3 = conv("dsam.branch3", f3_c, branch_c, dilation=2)
            self.dsam_branch4 = conv("dsam.branch4", f4_c, branch_c, dilation=3)
            self.dsam_branch5 = conv("dsam.branch5", f5_c, branch_c, dilation=5)
            self.dsam_fuse = conv("dsam.fuse", 3 * branch_c,
                                  self.fused_channels)

        if cfg.use_cam:
            cam_c = cfg.scaled(64)
            self.cam_branches = [conv(f"cam.branch{r}", f5_c, cam_c,
                                      dilation=r) for r in (1, 2, 3, 4)]
            self.cam_fuse1 = conv("cam.fuse1", 4 * cam_c, cfg.scaled(128))
            self.cam_fuse2 = conv("cam.fuse2", cfg.scaled(128), cam_c)
            self.cam_head = conv("cam.head", cam_c, cfg.num_classes, kernel=1)

        backend_in = self.fused_channels if cfg.use_dsam else f5_c
        self.backend_conv1 = conv("backend.conv1", backend_in, cfg.scaled(128))
        self.backend_conv2 = conv("backend.conv2", cfg.scaled(128),
                                  cfg.scaled(64))
        self.backend_head = conv("backend.head", cfg.scaled(64),
                                 cfg.num_classes, kernel=1)

    # -- forward pieces --------------------------------------------------------

    def backbone_forward(self, image: Tensor) -> FeaturePyramid:
        if image.data.ndim != 4 or image.shape[1] != 3:
            raise ValueError(f"expected B x 3 x H x W input, got {image.shape}")
        _, _, h, w = image.shape
        if h % 8 or w % 8:
            raise ValueError(f"input extents must be divisible by 8, got {h}x{w}")
        x = image
        for layer in self.stages[0]:
            x = layer(x).relu()
        x = maxpool2d(x)
        for layer in self.stages[1]:
            x = layer(x).relu()
        x = maxpool2d(x)
        for layer in self.stages[2]:
            x = layer(x).relu()
        f3 = x
        x = maxpool2d(f3)
        for layer in self.stages[3]:
            x = layer(x).relu()
        f4 = x
        # no pooling between the last two stages: f4 and f5 share extent
        for layer in self.stages[4]:
            x = layer(x).relu()
        f5 = x
        return FeaturePyramid(f3=f3, f4=f4, f5=f5)

    def dsam_forward(self, pyramid: FeaturePyramid) -> Tensor:
        b3 = self.dsam_branch3(pyramid.f3).relu()
        b4 = upsample_bilinear(self.dsam_branch4(pyramid.f4).relu(), 2)
        b5 = upsample_bilinear(self.dsam_branch5(pyramid.f5).relu(), 2)
        return self.dsam_fuse(concat_channels([b3, b4, b5]))

    def cam_forward(self, f5: Tensor) -> Tensor:
        branches = [layer(f5).relu() for layer in self.cam_branches]
        x = concat_channels(branches)
        x = self.cam_fuse1(x).relu()
        x = self.cam_fuse2(x).relu()
        x = self.cam_head(x)
        return upsample_bilinear(x, 2).sigmoid()

    def backend_forward(self, fused: Tensor) -> Tensor:
        x = self.backend_conv1(fused).relu()
        x = self.backend_conv2(x).relu()
        return self.backend_head(x).relu()

    def forward(self, image: Tensor) -> ModelOutput:
        pyramid = self.backbone_forward(image)
        if self.cfg.use_dsam:
            fused = self.dsam_forward(pyramid)
        else:
            fused = upsample_bilinear(pyramid.f5, 2)
        intermediate = self.backend_forward(fused)
        if self.cfg.use_cam:
            attention = self.cam_forward(pyramid.f5)
            final = intermediate * attention
        else:
            attention = None
            final = intermediate
        return ModelOutput(intermediate=intermediate, attention=attention,
                           final=final)

    __call__ = forward

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


# -- checkpoints -------------------------------------------------------------------

_CHECKPOINT_FORMAT = 1


def save_checkpoint(path, model: CountingNet, optimizer=None) -> None:
    """One-line JSON header (config + manifest) then raw float64 buffers."""
    manifest = [[name, list(p.shape)] for name, p in model.params.items()]
    header: dict = {
        "format": _CHECKPOINT_FORMAT,
        "config": asdict(model.cfg),
        "params": manifest,
    }
    buffers = [p.data for p in model.params.values()]
    if optimizer is not None:
        state = optimizer.state_buffers()
        header["optimizer"] = {
            "step_count": optimizer.step_count,
            "learning_rate": optimizer.learning_rate,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "epsilon": optimizer.epsilon,
            "buffers": [[name, list(b.shape)] for name, b in state.items()],
        }
        buffers.extend(state.values())
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for buf in buffers:
            fh.write(np.ascontiguousarray(buf, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[CountingNet, dict | None]:
    """Rebuild the model (and optimizer state, when present) bit-exactly."""
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError(f"{path}: not a checkpoint file") from None
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format")
        model = CountingNet(ModelConfig(**header["config"]))

        def read_buffer(shape):
            shape = tuple(shape)
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint")
            return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

        for name, shape in header["params"]:
            if name not in model.params:
                raise ValueError(f"{path}: unknown parameter {name!r}")
            if tuple(shape) != model.params[name].shape:
                raise ValueError(f"{path}: shape mismatch for {name!r}")
            model.params[name].data = read_buffer(shape)

        optim_state = None
        if "optimizer" in header:
            info = header["optimizer"]
            optim_state = {
                "step_count": info["step_count"],
                "learning_rate": info["learning_rate"],
                "beta1": info["beta1"],
                "beta2": info["beta2"],
                "epsilon": info["epsilon"],
                "buffers": {name: read_buffer(shape)
                            for name, shape in info["buffers"]},
            }
    return model, optim_state
