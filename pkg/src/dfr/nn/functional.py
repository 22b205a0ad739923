"""Raw numpy forward/backward kernels for the layer set.

All spatial kernels work on batched ``(N, C, H, W)`` arrays. The Tensor
wrappers in :mod:`dfr.nn.tensor` handle unbatched inputs.
"""
import numpy as np

from dfr.errors import DimensionError, ParameterError


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(xp, k, stride, ho, wo):
    # columns laid out as (C, k, k, N, Ho, Wo) so one GEMM covers the batch
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols


def conv2d_forward(x, w, b, stride=1, padding=0):
    """Cross-correlate ``x`` (N, C_in, H, W) with ``w`` (C_out, C_in, k, k).

    Returns the output and a cache for :func:`conv2d_backward`.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and kernels, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    c_out, c_in, k, k2 = w.shape
    if c != c_in:
        raise DimensionError(f"input has {c} channels but kernels expect {c_in}")
    if k != k2:
        raise DimensionError(f"kernels must be square, got {k}x{k2}")
    if b.shape != (c_out,):
        raise DimensionError(f"bias shape {b.shape} does not match {c_out} output channels")
    if stride < 1 or padding < 0:
        raise ParameterError(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    if h + 2 * padding < k or wd + 2 * padding < k:
        raise DimensionError(f"kernel {k} larger than padded input {h + 2 * padding}x{wd + 2 * padding}")

    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(wd, k, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _im2col(xp, k, stride, ho, wo).reshape(c * k * k, n * ho * wo)
    out = w.reshape(c_out, -1) @ cols
    out = out.reshape(c_out, n, ho, wo).transpose(1, 0, 2, 3) + b[None, :, None, None]
    return np.ascontiguousarray(out), (x.shape, cols, stride, padding)


def conv2d_backward(dout, w, cache):
    """Gradients ``(dx, dw, db)`` of a conv layer given upstream ``dout``."""
    x_shape, cols, stride, padding = cache
    n, c, h, wd = x_shape
    c_out, _, k, _ = w.shape
    ho, wo = dout.shape[2:]
    dflat = dout.transpose(1, 0, 2, 3).reshape(c_out, -1)
    dw = (dflat @ cols.T).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = (w.reshape(c_out, -1).T @ dflat).reshape(c, k, k, n, ho, wo)
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += (
                dcols[:, i, j].transpose(1, 0, 2, 3)
            )
    dx = dxp[:, :, padding:padding + h, padding:padding + wd] if padding else dxp
    return dx, dw, db


def maxpool2d_forward(x, size=2, stride=2):
    """Window max over ``x`` (N, C, H, W).

    Returns ``(out, argmax)`` where ``argmax`` holds the flat in-window offset
    (``row * size + col``) of the winning element. Ties go to the first
    offset in row-major order.
    """
    if size < 1 or stride < 1:
        raise ParameterError(f"pool size and stride must be >= 1, got {size}, {stride}")
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d expects 4-d input, got {x.shape}")
    h, wd = x.shape[2:]
    if h < size or wd < size:
        raise DimensionError(f"pool window {size} larger than input {h}x{wd}")
    ho = (h - size) // stride + 1
    wo = (wd - size) // stride + 1
    out = None
    idx = np.zeros(x.shape[:2] + (ho, wo), dtype=np.int16)
    for i in range(size):
        for j in range(size):
            win = x[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            if out is None:
                out = win.copy()
                continue
            better = win > out
            out = np.where(better, win, out)
            idx[better] = i * size + j
    return out, idx


def maxpool2d_backward(dout, idx, x_shape, size=2, stride=2):
    ho, wo = dout.shape[2:]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(size):
        for j in range(size):
            hit = idx == i * size + j
            dx[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += np.where(hit, dout, 0)
    return dx


def dense_forward(x, w, b):
    """``x`` (N, n) times ``w.T`` for ``w`` (m, n), plus ``b`` (m,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"dense: input {x.shape} incompatible with weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise DimensionError(f"dense: bias {b.shape} does not match {w.shape[0]} outputs")
    return x @ w.T + b


def mae(pred, target):
    if pred.shape != target.shape:
        raise DimensionError(f"mae: shapes differ, {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ParameterError("mae of empty input")
    return np.abs(pred - target).mean()
