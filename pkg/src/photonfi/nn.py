"""CNN layer graph, forward passes, and accuracy evaluation.

``reference_forward`` is the plain dense pass used as the oracle;
``accelerated_forward`` routes every conv/fc layer through the photonic
dot-product engine (all other operators are electronic and exact, including
biases, which never touch the rings).  With a healthy device the two paths
agree to accumulation order.

Tensors are stored as float32 (the interchange precision of the weights
archive); both forward paths compute in float64 internally so that path
differences reflect modeled faults rather than rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Union

import numpy as np

from . import ops
from .accelerator import FaultedAccelerator, MappingPlan, layer_forward_via_accelerator
from .errors import ContractError, ShapeError


@dataclass
class Conv2d:
    out_channels: int
    in_channels: int
    kernel_size: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    weight: Optional[np.ndarray] = None  # (out, in, kh, kw) float32
    bias: Optional[np.ndarray] = None
    name: str = "conv"

    def __post_init__(self) -> None:
        self.kernel_size = ops._pair(self.kernel_size)
        self.stride = ops._pair(self.stride)
        self.padding = ops._pair(self.padding)
        shape = (self.out_channels, self.in_channels, *self.kernel_size)
        if self.weight is None:
            self.weight = np.zeros(shape, dtype=np.float32)
        if self.weight.shape != shape:
            raise ShapeError(f"{self.name}: weight shape {self.weight.shape} != {shape}")

    @property
    def parameter_count(self) -> int:
        return self.weight.size + (self.bias.size if self.bias is not None else 0)


@dataclass
class Linear:
    out_features: int
    in_features: int
    weight: Optional[np.ndarray] = None  # (out, in) float32
    bias: Optional[np.ndarray] = None
    name: str = "fc"

    def __post_init__(self) -> None:
        shape = (self.out_features, self.in_features)
        if self.weight is None:
            self.weight = np.zeros(shape, dtype=np.float32)
        if self.weight.shape != shape:
            raise ShapeError(f"{self.name}: weight shape {self.weight.shape} != {shape}")

    @property
    def parameter_count(self) -> int:
        return self.weight.size + (self.bias.size if self.bias is not None else 0)


@dataclass
class ReLU:
    parameter_count: int = 0


@dataclass
class MaxPool2d:
    kernel: int
    stride: int
    parameter_count: int = 0


@dataclass
class AvgPool2d:
    kernel: int
    stride: int
    parameter_count: int = 0


@dataclass
class Flatten:
    parameter_count: int = 0


@dataclass
class Residual:
    """Adds the output of an earlier layer (by index) to the current tensor."""

    source: int
    parameter_count: int = 0


@dataclass
class BatchNorm2d:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    name: str = "bn"

    @property
    def parameter_count(self) -> int:
        return self.gamma.size + self.beta.size


Layer = Union[Conv2d, Linear, ReLU, MaxPool2d, AvgPool2d, Flatten, Residual, BatchNorm2d]


@dataclass
class Model:
    name: str
    layers: list
    dataset: str = ""
    variant: str = "original"
    metadata: dict = dc_field(default_factory=dict)

    @property
    def parameter_count(self) -> int:
        return sum(l.parameter_count for l in self.layers)

    @property
    def conv_parameter_count(self) -> int:
        return sum(l.parameter_count for l in self.layers if isinstance(l, Conv2d))

    @property
    def fc_parameter_count(self) -> int:
        return sum(l.parameter_count for l in self.layers if isinstance(l, Linear))


def fold_batchnorm(model: Model) -> Model:
    """Merge every BatchNorm2d into the nearest preceding Conv2d.

    Folding happens once at load time so that ring faults corrupt the folded
    parameters exactly once; models without batchnorm pass through.
    """
    layers = []
    for layer in model.layers:
        if isinstance(layer, BatchNorm2d):
            if not layers or not isinstance(layers[-1], Conv2d):
                raise ContractError(f"{layer.name}: batchnorm must directly follow a conv layer")
            target = layers[-1]
            scale = layer.gamma / np.sqrt(layer.running_var + layer.eps)
            target.weight = (target.weight * scale[:, None, None, None]).astype(np.float32)
            old_bias = target.bias if target.bias is not None else np.zeros(
                target.out_channels, dtype=np.float32)
            target.bias = ((old_bias - layer.running_mean) * scale + layer.beta).astype(np.float32)
        else:
            layers.append(layer)
    return Model(name=model.name, layers=layers, dataset=model.dataset,
                 variant=model.variant, metadata=model.metadata)


def _forward(model: Model, x: np.ndarray, plan: Optional[MappingPlan],
             facc: Optional[FaultedAccelerator]) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"model input must be NCHW, got shape {x.shape}")
    h = np.asarray(x, dtype=np.float64)
    outputs = []
    for li, layer in enumerate(model.layers):
        if isinstance(layer, Conv2d):
            if facc is None:
                h = ops.conv2d(h, layer.weight, layer.bias, layer.stride, layer.padding)
            else:
                h = layer_forward_via_accelerator(layer, h, plan.layer(li), facc)
        elif isinstance(layer, Linear):
            if facc is None:
                h = ops.linear(h, layer.weight, layer.bias)
            else:
                h = layer_forward_via_accelerator(layer, h, plan.layer(li), facc)
        elif isinstance(layer, ReLU):
            h = ops.relu(h)
        elif isinstance(layer, MaxPool2d):
            h = ops.maxpool2d(h, layer.kernel, layer.stride)
        elif isinstance(layer, AvgPool2d):
            h = ops.avgpool2d(h, layer.kernel, layer.stride)
        elif isinstance(layer, Flatten):
            h = ops.flatten(h)
        elif isinstance(layer, Residual):
            src = outputs[layer.source]
            if src.shape != h.shape:
                raise ShapeError(
                    f"residual source shape {src.shape} != current shape {h.shape}")
            h = h + src
        elif isinstance(layer, BatchNorm2d):
            if h.ndim != 4:
                raise ShapeError(f"batchnorm expects NCHW, got shape {h.shape}")
            scale = layer.gamma / np.sqrt(layer.running_var + layer.eps)
            h = (h - layer.running_mean[:, None, None]) * scale[:, None, None] \
                + layer.beta[:, None, None]
        else:
            raise ContractError(f"unknown layer type {type(layer).__name__}")
        outputs.append(h)
    return np.asarray(h, dtype=np.float32)


def reference_forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Plain dense forward pass; the oracle the photonic path is held to."""
    return _forward(model, x, None, None)


def accelerated_forward(model: Model, x: np.ndarray, plan: MappingPlan,
                        facc: FaultedAccelerator) -> np.ndarray:
    """Forward pass with conv/fc layers executed on the (possibly faulted) device."""
    return _forward(model, x, plan, facc)


@dataclass
class EvalResult:
    accuracy: float
    correct: int
    total: int
    per_class_total: np.ndarray
    per_class_correct: np.ndarray


def evaluate_accuracy(model: Model, images: np.ndarray, labels: np.ndarray,
                      plan: Optional[MappingPlan] = None,
                      facc: Optional[FaultedAccelerator] = None,
                      batch_size: int = 512) -> EvalResult:
    """Top-1 accuracy plus per-class tallies.

    With ``facc`` given, inference runs through the accelerator; otherwise
    the reference path is used.  Deterministic for fixed inputs and faults.
    """
    n = len(images)
    if n == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    if len(labels) != n:
        raise ContractError(f"{n} images but {len(labels)} labels")
    n_classes = None
    correct = 0
    per_total = None
    per_correct = None
    for lo in range(0, n, batch_size):
        batch = images[lo:lo + batch_size]
        lab = labels[lo:lo + batch_size]
        logits = _forward(model, batch, plan, facc)
        if n_classes is None:
            n_classes = logits.shape[1]
            per_total = np.zeros(n_classes, dtype=np.int64)
            per_correct = np.zeros(n_classes, dtype=np.int64)
            if labels.max() >= n_classes or labels.min() < 0:
                raise ContractError("labels outside the model's class range")
        pred = logits.argmax(axis=1)
        hit = pred == lab
        correct += int(hit.sum())
        np.add.at(per_total, lab, 1)
        np.add.at(per_correct, lab[hit], 1)
    return EvalResult(accuracy=correct / n, correct=correct, total=n,
                      per_class_total=per_total, per_class_correct=per_correct)
