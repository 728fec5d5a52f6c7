"""Dense tensor operators shared by the reference and accelerated paths.

Everything here is exact electronic arithmetic (float64 internally); the
only operators that ever run on the photonic substrate are conv/fc matrix
products, and both forward paths funnel through the same im2col layout so
their flattened kernel order matches the weight-stationary mapping:
(channel, kernel row, kernel col), row-major.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_output_shape(h: int, w: int, kernel, stride, padding) -> tuple[int, int]:
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {kernel} with stride {stride} does not fit {h}x{w}")
    return oh, ow


def im2col(x: np.ndarray, kernel, stride, padding) -> tuple[np.ndarray, int, int]:
    """Patch matrix of shape (N*OH*OW, C*KH*KW), plus the output extent.

    Row order is sample-major, then output row, then output column, matching
    the reshape in both forward paths.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oh, ow = conv_output_shape(h, w, kernel, stride, padding)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    x = np.ascontiguousarray(x, dtype=np.float64)
    sn, sc, sh_, sw_ = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh_ * sh, sw_ * sw, sh_, sw_),
        writeable=False,
    )
    # (n, oh, ow, c, kh, kw) -> rows of flattened (c, kh, kw) patches
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def conv2d(x: np.ndarray, weight: np.ndarray, bias, stride, padding) -> np.ndarray:
    n = x.shape[0]
    out_ch = weight.shape[0]
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv input channels {x.shape[1]} != weight channels {weight.shape[1]}")
    cols, oh, ow = im2col(x, weight.shape[2:], stride, padding)
    wmat = np.asarray(weight, dtype=np.float64).reshape(out_ch, -1)
    rows = cols @ wmat.T
    if bias is not None:
        rows = rows + np.asarray(bias, dtype=np.float64)[None, :]
    return rows.reshape(n, oh, ow, out_ch).transpose(0, 3, 1, 2)


def linear(x: np.ndarray, weight: np.ndarray, bias) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError(f"linear expects 2-D input, got shape {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear input width {x.shape[1]} != weight width {weight.shape[1]}")
    out = np.asarray(x, dtype=np.float64) @ np.asarray(weight, dtype=np.float64).T
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :]
    return out


def _pool_windows(x: np.ndarray, kernel, stride):
    if x.ndim != 4:
        raise ShapeError(f"pool expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"pool kernel {kernel} does not fit {h}x{w}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    sn, sc, sh_, sw_ = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh_ * sh, sw_ * sw, sh_, sw_),
        writeable=False,
    )


def maxpool2d(x: np.ndarray, kernel, stride) -> np.ndarray:
    return _pool_windows(x, kernel, stride).max(axis=(4, 5))


def avgpool2d(x: np.ndarray, kernel, stride) -> np.ndarray:
    return _pool_windows(x, kernel, stride).mean(axis=(4, 5))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)
