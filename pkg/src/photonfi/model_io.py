"""Bit-exact serialization: the SLWA weights archive and IDX datasets.

SLWA ("simulator-loadable weights archive") is the single documented binary
format exchanged between the simulator and any trainer, so neither side ever
depends on ML-framework checkpoints.  Layout (all integers little-endian):

    offset  size  field
    0       4     magic ``SLWA``
    4       2     format version (u16), currently 1
    6       4     manifest length L (u32)
    10      L     manifest, UTF-8 JSON text
    ...     4     tensor count T (u32)
    then per tensor:
            2     name length n (u16)
            n     tensor name, UTF-8, unique within the archive
            1     rank r (u8)
            4*r   dims (u32 each)
            4*prod(dims)  raw IEEE-754 float32 values, little-endian

The manifest carries the model architecture (see ``manifest_from_model``),
the variant tag, training hyperparameters, and the recorded test accuracy;
``read_archive`` rebuilds the layer graph from it and binds tensors by name.
Writing then reading an archive reproduces tensors bit-exactly and the
manifest text byte-exactly.

IDX is the standard MNIST container: images carry magic 0x00000803 and
labels 0x00000801, with big-endian u32 dimension headers.  Gzip-compressed
files are detected and decompressed transparently.
"""

from __future__ import annotations

import gzip
import json
import struct
from typing import BinaryIO, Union

import numpy as np

from . import nn
from .errors import ArchiveError, DatasetError

MAGIC = b"SLWA"
FORMAT_VERSION = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


# --- manifest <-> model ----------------------------------------------------------


def _layer_to_spec(layer) -> dict:
    if isinstance(layer, nn.Conv2d):
        return {"kind": "conv2d", "name": layer.name,
                "out_channels": layer.out_channels, "in_channels": layer.in_channels,
                "kernel": list(layer.kernel_size), "stride": list(layer.stride),
                "padding": list(layer.padding), "bias": layer.bias is not None}
    if isinstance(layer, nn.Linear):
        return {"kind": "linear", "name": layer.name,
                "out_features": layer.out_features, "in_features": layer.in_features,
                "bias": layer.bias is not None}
    if isinstance(layer, nn.ReLU):
        return {"kind": "relu"}
    if isinstance(layer, nn.MaxPool2d):
        return {"kind": "maxpool2d", "kernel": layer.kernel, "stride": layer.stride}
    if isinstance(layer, nn.AvgPool2d):
        return {"kind": "avgpool2d", "kernel": layer.kernel, "stride": layer.stride}
    if isinstance(layer, nn.Flatten):
        return {"kind": "flatten"}
    if isinstance(layer, nn.Residual):
        return {"kind": "residual", "source": layer.source}
    if isinstance(layer, nn.BatchNorm2d):
        return {"kind": "batchnorm2d", "name": layer.name, "eps": layer.eps}
    raise ArchiveError("manifest_invalid", f"unserializable layer {type(layer).__name__}")


def manifest_from_model(model: nn.Model) -> dict:
    return {
        "format": "slwa",
        "model": {"name": model.name, "dataset": model.dataset, "variant": model.variant},
        "architecture": [_layer_to_spec(l) for l in model.layers],
        "parameter_count": model.parameter_count,
        **model.metadata,
    }


def _spec_to_layer(spec: dict):
    kind = spec.get("kind")
    if kind == "conv2d":
        return nn.Conv2d(out_channels=spec["out_channels"], in_channels=spec["in_channels"],
                         kernel_size=tuple(spec["kernel"]), stride=tuple(spec["stride"]),
                         padding=tuple(spec["padding"]), name=spec["name"])
    if kind == "linear":
        return nn.Linear(out_features=spec["out_features"], in_features=spec["in_features"],
                         name=spec["name"])
    if kind == "relu":
        return nn.ReLU()
    if kind == "maxpool2d":
        return nn.MaxPool2d(kernel=spec["kernel"], stride=spec["stride"])
    if kind == "avgpool2d":
        return nn.AvgPool2d(kernel=spec["kernel"], stride=spec["stride"])
    if kind == "flatten":
        return nn.Flatten()
    if kind == "residual":
        return nn.Residual(source=spec["source"])
    if kind == "batchnorm2d":
        return None  # placeholder, tensors bound below
    raise ArchiveError("manifest_invalid", f"unknown layer kind {kind!r}")


# --- archive write/read -----------------------------------------------------------


def model_tensors(model: nn.Model) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for layer in model.layers:
        if isinstance(layer, (nn.Conv2d, nn.Linear)):
            tensors[f"{layer.name}.weight"] = layer.weight
            if layer.bias is not None:
                tensors[f"{layer.name}.bias"] = layer.bias
        elif isinstance(layer, nn.BatchNorm2d):
            for part in ("gamma", "beta", "running_mean", "running_var"):
                tensors[f"{layer.name}.{part}"] = getattr(layer, part)
    return tensors


def write_archive(target: Union[str, BinaryIO], model: nn.Model) -> None:
    """Serialize a model; the manifest is derived from the model and its metadata."""
    manifest = json.dumps(manifest_from_model(model), sort_keys=True).encode("utf-8")
    tensors = model_tensors(model)
    if len(set(tensors)) != len(tensors):
        raise ArchiveError("duplicate_tensor", "duplicate tensor names")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", FORMAT_VERSION)
    out += struct.pack("<I", len(manifest))
    out += manifest
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    if hasattr(target, "write"):
        target.write(bytes(out))
    else:
        with open(target, "wb") as f:
            f.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArchiveError("truncated",
                               f"needed {n} bytes at offset {self.pos}, file ends at {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_archive(source: Union[str, bytes, BinaryIO]) -> tuple[nn.Model, dict]:
    """Parse an archive into a Model (batchnorm folded) plus its manifest.

    Raises :class:`ArchiveError` with a distinct ``code`` per failure mode.
    """
    if isinstance(source, bytes):
        data = source
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ArchiveError("bad_magic", "not an SLWA archive")
    version = r.u16()
    if version != FORMAT_VERSION:
        raise ArchiveError("unsupported_version", f"format version {version} unsupported")
    manifest_len = r.u32()
    try:
        manifest = json.loads(r.take(manifest_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError("manifest_invalid", f"manifest is not valid JSON: {exc}") from None
    tensor_count = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        name = r.take(r.u16()).decode("utf-8")
        if name in tensors:
            raise ArchiveError("duplicate_tensor", f"tensor {name!r} appears twice")
        rank = r.u8()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank)) if rank else ()
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = r.take(4 * count)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise ArchiveError("truncated", f"{len(data) - r.pos} trailing bytes after last tensor")
    model = _model_from_manifest(manifest, tensors)
    return model, manifest


def _model_from_manifest(manifest: dict, tensors: dict[str, np.ndarray]) -> nn.Model:
    try:
        arch = manifest["architecture"]
        meta = manifest["model"]
    except (KeyError, TypeError):
        raise ArchiveError("manifest_invalid", "manifest lacks architecture/model sections") from None
    layers = []
    for spec in arch:
        layer = _spec_to_layer(spec)
        if spec.get("kind") == "batchnorm2d":
            name = spec["name"]
            try:
                layer = nn.BatchNorm2d(gamma=tensors[f"{name}.gamma"],
                                       beta=tensors[f"{name}.beta"],
                                       running_mean=tensors[f"{name}.running_mean"],
                                       running_var=tensors[f"{name}.running_var"],
                                       eps=spec.get("eps", 1e-5), name=name)
            except KeyError as exc:
                raise ArchiveError("tensor_mismatch", f"missing batchnorm tensor {exc}") from None
        elif isinstance(layer, (nn.Conv2d, nn.Linear)):
            wname = f"{layer.name}.weight"
            if wname not in tensors:
                raise ArchiveError("tensor_mismatch", f"missing tensor {wname!r}")
            layer.weight = tensors[wname]
            expected = ((layer.out_channels, layer.in_channels, *layer.kernel_size)
                        if isinstance(layer, nn.Conv2d)
                        else (layer.out_features, layer.in_features))
            if layer.weight.shape != expected:
                raise ArchiveError("tensor_mismatch",
                                   f"{wname}: shape {layer.weight.shape} != manifest {expected}")
            if spec.get("bias"):
                bname = f"{layer.name}.bias"
                if bname not in tensors:
                    raise ArchiveError("tensor_mismatch", f"missing tensor {bname!r}")
                layer.bias = tensors[bname]
        layers.append(layer)
    extra = {k: v for k, v in manifest.items()
             if k not in ("format", "model", "architecture", "parameter_count")}
    model = nn.Model(name=meta.get("name", ""), layers=layers,
                     dataset=meta.get("dataset", ""), variant=meta.get("variant", ""),
                     metadata=extra)
    return nn.fold_batchnorm(model)


# --- IDX datasets ------------------------------------------------------------------


def _read_maybe_gzip(path: str) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as g:
                return g.read()
        return f.read()


def _idx_body(path: str, expected_magic: int, rank: int) -> tuple[tuple[int, ...], np.ndarray]:
    data = _read_maybe_gzip(path)
    if len(data) < 4:
        raise DatasetError("truncated", f"{path}: shorter than its magic")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise DatasetError("bad_magic",
                           f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    header = 4 + 4 * rank
    if len(data) < header:
        raise DatasetError("truncated", f"{path}: shorter than its header")
    dims = struct.unpack(f">{rank}I", data[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != count:
        raise DatasetError("truncated",
                           f"{path}: {len(data) - header} payload bytes for {count} declared")
    return dims, np.frombuffer(data, dtype=np.uint8, offset=header)


def load_idx(images_path: str, labels_path: str,
             n_classes: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Load an IDX image/label pair.

    Returns images shaped (N, 1, rows, cols) as float32 scaled to [0, 1] and
    labels as int64.  Counts must agree and labels must fall below
    ``n_classes``.
    """
    idims, ibody = _idx_body(images_path, IDX_IMAGES_MAGIC, 3)
    ldims, lbody = _idx_body(labels_path, IDX_LABELS_MAGIC, 1)
    n, rows, cols = idims
    if n != ldims[0]:
        raise DatasetError("count_mismatch", f"{n} images but {ldims[0]} labels")
    labels = lbody.astype(np.int64)
    if labels.size and labels.max() >= n_classes:
        raise DatasetError("label_range",
                           f"label {labels.max()} outside {n_classes} classes")
    images = (ibody.astype(np.float32) / 255.0).reshape(n, 1, rows, cols)
    return images, labels
