"""Bicubic resampling with the Keys kernel (a = -0.5).

Matches the semantics of the classic imresize-style resampler: when
downscaling with antialiasing the kernel is stretched by 1/scale and the
tap weights renormalized, output coordinates map through the
center-aligned convention u = (j + 0.5)/scale - 0.5, and out-of-range
source indices reflect symmetrically at the borders.

Planes are processed in float64; quantization to 8 bits happens only
when the input itself was 8-bit.
"""

import numpy as np

KERNEL_A = -0.5
KERNEL_SUPPORT = 4.0  # total width of the cubic kernel


def cubic_weight(x):
    """Keys cubic interpolation kernel with a = -0.5, support |x| < 2."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    a = KERNEL_A
    inner = (a + 2.0) * x**3 - (a + 3.0) * x**2 + 1.0
    outer = a * x**3 - 5.0 * a * x**2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, inner, np.where(x < 2.0, outer, 0.0))


def _resize_length(length, scale):
    out = int(np.floor(length * scale + 0.5))
    if out < 1:
        raise ValueError(f"scale {scale} maps length {length} to {out} samples")
    return out


def _dim_weights(in_len, out_len, scale, antialias):
    """Tap indices and normalized weights for one dimension.

    Returns (indices, weights), each of shape (out_len, taps). Border
    indices are folded back by symmetric reflection.
    """
    u = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    if scale < 1.0 and antialias:
        kernel = lambda x: scale * cubic_weight(scale * x)
        width = KERNEL_SUPPORT / scale
    else:
        kernel = cubic_weight
        width = KERNEL_SUPPORT
    taps = int(np.ceil(width)) + 2
    left = np.floor(u - width / 2.0)
    indices = left[:, None] + np.arange(1, taps + 1)[None, :]
    weights = kernel(u[:, None] - indices)
    weights /= weights.sum(axis=1, keepdims=True)

    # symmetric reflection: ... 2 1 0 | 0 1 2 ... m-1 | m-1 ... 1 0 | 0 1 ...
    aux = np.concatenate([np.arange(in_len), np.arange(in_len - 1, -1, -1)])
    indices = aux[np.mod(indices.astype(np.int64), 2 * in_len)]

    used = ~np.all(weights == 0.0, axis=0)
    return indices[:, used], weights[:, used]


def _resize_axis(plane, scale, axis, antialias):
    in_len = plane.shape[axis]
    out_len = _resize_length(in_len, scale)
    indices, weights = _dim_weights(in_len, out_len, scale, antialias)
    if axis == 0:
        gathered = plane[indices, :]  # (out_len, taps, w)
        return np.einsum("otw,ot->ow", gathered, weights)
    gathered = plane[:, indices]  # (h, out_len, taps)
    return np.einsum("hot,ot->ho", gathered, weights)


def bicubic_resize(img, scale, antialias=True):
    """Resize a 2-D image by a positive scale factor.

    uint8 input is returned as uint8 (values clamped and rounded at the
    end); float input stays float with no clamping.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    was_uint8 = img.dtype == np.uint8
    plane = img.astype(np.float64)
    plane = _resize_axis(plane, scale, 0, antialias)
    plane = _resize_axis(plane, scale, 1, antialias)
    if was_uint8:
        return np.clip(np.floor(plane + 0.5), 0, 255).astype(np.uint8)
    return plane
