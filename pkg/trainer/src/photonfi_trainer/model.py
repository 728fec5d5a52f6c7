"""The 5-layer digit classifier and its functional forward pass.

Architecture (all layers bias-free so every parameter rides on a ring):

    conv1  6 x 1 x 5x5      150 weights
    relu, maxpool 2x2
    conv2  16 x 6 x 5x5     2400 weights
    relu, maxpool 2x2
    flatten (16*4*4 = 256)
    fc1    120 x 256        30720 weights
    relu
    fc2    84 x 120         10080 weights
    relu
    fc3    10 x 84          840 weights

Total 44190 parameters (2550 conv + 41640 fc).

The forward pass is written against an explicit parameter dict so that
noise-aware training can perturb the weights seen by a step while the
optimizer keeps updating the clean copies.
"""

from __future__ import annotations

from collections import OrderedDict

import torch
import torch.nn.functional as F

WEIGHT_SHAPES = OrderedDict([
    ("conv1.weight", (6, 1, 5, 5)),
    ("conv2.weight", (16, 6, 5, 5)),
    ("fc1.weight", (120, 256)),
    ("fc2.weight", (84, 120)),
    ("fc3.weight", (10, 84)),
])

ARCHITECTURE = [
    {"kind": "conv2d", "name": "conv1", "out_channels": 6, "in_channels": 1,
     "kernel": [5, 5], "stride": [1, 1], "padding": [0, 0], "bias": False},
    {"kind": "relu"},
    {"kind": "maxpool2d", "kernel": 2, "stride": 2},
    {"kind": "conv2d", "name": "conv2", "out_channels": 16, "in_channels": 6,
     "kernel": [5, 5], "stride": [1, 1], "padding": [0, 0], "bias": False},
    {"kind": "relu"},
    {"kind": "maxpool2d", "kernel": 2, "stride": 2},
    {"kind": "flatten"},
    {"kind": "linear", "name": "fc1", "out_features": 120, "in_features": 256, "bias": False},
    {"kind": "relu"},
    {"kind": "linear", "name": "fc2", "out_features": 84, "in_features": 120, "bias": False},
    {"kind": "relu"},
    {"kind": "linear", "name": "fc3", "out_features": 10, "in_features": 84, "bias": False},
]


def init_params(seed_consuming: bool = True) -> "OrderedDict[str, torch.Tensor]":
    """Kaiming-uniform init (torch's default fan-in rule), from the global RNG."""
    params = OrderedDict()
    for name, shape in WEIGHT_SHAPES.items():
        w = torch.empty(shape)
        torch.nn.init.kaiming_uniform_(w, a=5 ** 0.5)
        w.requires_grad_(True)
        params[name] = w
    return params


def parameter_count(params) -> int:
    return sum(p.numel() for p in params.values())


def _perturbed(params, noise_sigma: float, noise_ref: str = "std"):
    """Weights with fresh relative Gaussian noise; clean weights keep the grads.

    The noise std is sigma times a per-layer reference scale: the weight
    range ``max`` (|w|_max, as in noise-aware training for analog memories)
    or the weight ``std``.
    """
    if noise_sigma <= 0:
        return params
    noisy = {}
    for name, w in params.items():
        ref = w.detach().abs().max() if noise_ref == "max" else w.detach().std()
        noisy[name] = w + torch.randn_like(w) * (noise_sigma * ref)
    return noisy


def forward(x: torch.Tensor, params, noise_sigma: float = 0.0,
            noise_in: str = "weights", noise_ref: str = "std") -> torch.Tensor:
    """Logits for a batch; optional noise in weights (default) or activations."""
    in_weights = noise_in == "weights"
    w = _perturbed(params, noise_sigma if in_weights else 0.0, noise_ref)

    def act_noise(h):
        if noise_sigma > 0 and not in_weights:
            return h + torch.randn_like(h) * (noise_sigma * h.detach().std())
        return h

    h = act_noise(F.conv2d(x, w["conv1.weight"]))
    h = F.max_pool2d(F.relu(h), 2)
    h = act_noise(F.conv2d(h, w["conv2.weight"]))
    h = F.max_pool2d(F.relu(h), 2)
    h = h.flatten(1)
    h = F.relu(act_noise(F.linear(h, w["fc1.weight"])))
    h = F.relu(act_noise(F.linear(h, w["fc2.weight"])))
    return act_noise(F.linear(h, w["fc3.weight"]))


def l2_penalty(params, reg_lambda: float, sample_count: int) -> torch.Tensor:
    """lambda / (2m) * sum of squared weights."""
    total = sum((w ** 2).sum() for w in params.values())
    return reg_lambda / (2.0 * sample_count) * total
