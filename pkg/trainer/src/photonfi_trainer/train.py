"""Deterministic training of the digit-classifier variants.

The loss is  cross-entropy + lambda/(2m) * sum ||w||^2  with m the batch's
sample count, and noise-aware variants draw fresh Gaussian perturbations of
the weights each step (std = sigma * per-layer weight std) while the
optimizer updates the clean weights.  With sigma = 0 the noise path is
never entered and with lambda = 0 the penalty is skipped, so those settings
reproduce the plain trainer bit for bit under a fixed seed.

Everything runs single-threaded on CPU with torch's deterministic
algorithms enabled: a (seed, hyperparams) pair pins the resulting archive.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
import torch

from . import model as M
from . import slwa
from .data import load_idx


@dataclass
class TrainingHyperparams:
    variant: str = "original"
    reg_lambda: float = 0.0
    noise_sigma: float = 0.0
    noise_in: str = "weights"  # or "activations"
    noise_ref: str = "std"  # per-layer noise scale: weight std (or "max" = range)
    grad_clip: float = 0.0  # >0: global grad-norm ceiling for unstable recipes
    lr_decay_at: float = 0.0  # >0: epoch fraction after which lr drops by 10x
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 2024

    def __post_init__(self) -> None:
        if self.reg_lambda < 0 or self.noise_sigma < 0:
            raise ValueError("reg_lambda and noise_sigma must be >= 0")
        if self.noise_in not in ("weights", "activations"):
            raise ValueError(f"noise_in must be weights|activations, got {self.noise_in!r}")


def variant_hyperparams(variant: str, **overrides) -> TrainingHyperparams:
    """Hyperparameters for a variant tag: original, l2, n1..n9, l2+n1..l2+n9."""
    hp = TrainingHyperparams(variant=variant)
    parts = variant.split("+")
    for part in parts:
        if part == "original":
            pass
        elif part == "l2":
            hp.reg_lambda = overrides.get("reg_lambda", 0.05)
        elif part.startswith("n") and part[1:].isdigit():
            hp.noise_sigma = int(part[1:]) / 10.0
        else:
            raise ValueError(f"unknown variant component {part!r}")
    for key, val in overrides.items():
        if val is not None:
            setattr(hp, key, val)
    hp.variant = variant
    return hp


def _setup_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


@torch.no_grad()
def evaluate(params, images: torch.Tensor, labels: torch.Tensor,
             batch_size: int = 512) -> float:
    correct = 0
    for lo in range(0, len(images), batch_size):
        logits = M.forward(images[lo:lo + batch_size], params)
        correct += int((logits.argmax(1) == labels[lo:lo + batch_size]).sum())
    return correct / len(images)


def train(hp: TrainingHyperparams, train_images: np.ndarray, train_labels: np.ndarray,
          test_images: np.ndarray, test_labels: np.ndarray,
          log_every: int = 0) -> tuple[dict, dict]:
    """Train one variant; returns (params as numpy float32, manifest)."""
    _setup_determinism(hp.seed)
    x = torch.from_numpy(np.ascontiguousarray(train_images))
    y = torch.from_numpy(np.ascontiguousarray(train_labels))
    tx = torch.from_numpy(np.ascontiguousarray(test_images))
    ty = torch.from_numpy(np.ascontiguousarray(test_labels))

    params = M.init_params()
    opt = torch.optim.SGD(params.values(), lr=hp.lr, momentum=hp.momentum)
    milestones = [int(hp.epochs * hp.lr_decay_at)] if 0 < hp.lr_decay_at < 1 else []
    scheduler = torch.optim.lr_scheduler.MultiStepLR(opt, milestones=milestones, gamma=0.1)
    loss_fn = torch.nn.CrossEntropyLoss()

    n = len(x)
    for epoch in range(hp.epochs):
        order = torch.randperm(n)
        epoch_loss = 0.0
        for lo in range(0, n, hp.batch_size):
            idx = order[lo:lo + hp.batch_size]
            xb, yb = x[idx], y[idx]
            opt.zero_grad()
            logits = M.forward(xb, params, noise_sigma=hp.noise_sigma,
                               noise_in=hp.noise_in, noise_ref=hp.noise_ref)
            loss = loss_fn(logits, yb)
            if hp.reg_lambda > 0:
                loss = loss + M.l2_penalty(params, hp.reg_lambda, len(xb))
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"{hp.variant}: loss diverged at epoch {epoch} (got {loss.item()})")
            loss.backward()
            if hp.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params.values(), hp.grad_clip)
            opt.step()
            epoch_loss += float(loss.detach()) * len(xb)
        scheduler.step()
        if log_every and (epoch + 1) % log_every == 0:
            acc = evaluate(params, tx, ty)
            print(f"  epoch {epoch + 1:3d}  loss {epoch_loss / n:.4f}  test {acc:.4f}")

    test_accuracy = evaluate(params, tx, ty)
    weights = {name: w.detach().numpy().astype(np.float32) for name, w in params.items()}
    manifest = {
        "format": "slwa",
        "model": {"name": "digitnet", "dataset": "mnist-subset-10k", "variant": hp.variant},
        "architecture": M.ARCHITECTURE,
        "parameter_count": int(sum(w.size for w in weights.values())),
        "training": {**asdict(hp), "optimizer": "sgd"},
        "test_accuracy": test_accuracy,
    }
    return weights, manifest


def train_variant(variant: str, images_path: str, labels_path: str,
                  test_images_path: str, test_labels_path: str,
                  out_path: str, log_every: int = 0, **overrides) -> dict:
    """Train one variant tag end to end and write its archive."""
    hp = variant_hyperparams(variant, **overrides)
    tr_x, tr_y = load_idx(images_path, labels_path)
    te_x, te_y = load_idx(test_images_path, test_labels_path)
    weights, manifest = train(hp, tr_x, tr_y, te_x, te_y, log_every=log_every)
    slwa.write_archive(out_path, manifest, weights)
    return manifest


def export_fixture_set(out_dir: str, images_path: str, labels_path: str,
                       test_images_path: str, test_labels_path: str,
                       robust_variant: str = "l2+n3", log_every: int = 0,
                       **overrides) -> dict:
    """Write the two archives the simulator test suite ships as fixtures:
    the plain baseline and the most robust combined variant."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for variant in ("original", robust_variant):
        path = os.path.join(out_dir, f"{variant}.slwa")
        manifest = train_variant(variant, images_path, labels_path,
                                 test_images_path, test_labels_path, path,
                                 log_every=log_every, **overrides)
        results[variant] = manifest["test_accuracy"]
        print(f"{variant}: test accuracy {manifest['test_accuracy']:.4f} -> {path}")
    return results
