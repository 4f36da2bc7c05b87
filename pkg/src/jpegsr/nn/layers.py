"""Dense 4-axis tensor layers with exact reverse-mode gradients.

Tensors are numpy arrays of shape (batch, channels, height, width).
Convolution uses the cross-correlation convention (no kernel flip).
Every forward is pure; layers cache what their backward needs.
"""

import numpy as np


class Parameter:
    """A named trainable array with a gradient accumulator."""

    def __init__(self, name, data):
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0


def _check_input(x):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"expected (n, c, h, w) tensor, got shape {x.shape}")
    return x


def _im2col(x, kh, kw, stride, pad):
    """Patch matrix of shape (n*oh*ow, c*kh*kw) plus output dims."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"kernel {kh}x{kw} stride {stride} pad {pad} does not fit input {h}x{w}"
        )
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, oh, ow, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, x_shape, kh, kw, stride, pad, oh, ow):
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    dwin = dcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dwin[
                :, :, :, :, i, j
            ]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d_forward(x, weight, bias, stride=1, pad=0):
    """Cross-correlation of (n, c, h, w) input with (o, c, kh, kw) kernels."""
    x = _check_input(x)
    o, c, kh, kw = weight.shape
    if x.shape[1] != c:
        raise ValueError(
            f"input channels {x.shape[1]} (input {x.shape}) do not match "
            f"kernel channels {c} (kernel {weight.shape})"
        )
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    y = cols @ weight.reshape(o, -1).T
    if bias is not None:
        y += bias
    n = x.shape[0]
    return y.reshape(n, oh, ow, o).transpose(0, 3, 1, 2), (cols, oh, ow)


def conv2d_backward(x, weight, grad_out, stride=1, pad=0, cache=None):
    """Exact gradients of conv2d_forward w.r.t. input, weight and bias."""
    x = _check_input(x)
    o, c, kh, kw = weight.shape
    if cache is None:
        cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    else:
        cols, oh, ow = cache
    if grad_out.shape != (x.shape[0], o, oh, ow):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match forward output "
            f"{(x.shape[0], o, oh, ow)}"
        )
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, o)
    dweight = (g.T @ cols).reshape(weight.shape)
    dbias = g.sum(axis=0)
    dcols = g @ weight.reshape(o, -1)
    dx = _col2im(dcols, x.shape, kh, kw, stride, pad, oh, ow)
    return dx, dweight, dbias


def _stuff(x, stride, extra):
    """Insert stride-1 zeros between samples, plus trailing zeros."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, (h - 1) * stride + 1 + extra, (w - 1) * stride + 1 + extra), x.dtype)
    out[:, :, ::stride, ::stride] = x
    return out


def deconv2d_forward(x, weight, bias, stride=2, pad=4, output_pad=1):
    """Transposed convolution: exact adjoint of the strided convolution.

    weight has shape (in_ch, out_ch, kh, kw), the same array that maps
    out_ch -> in_ch when used as a forward convolution kernel.
    """
    x = _check_input(x)
    i, o, kh, kw = weight.shape
    if x.shape[1] != i:
        raise ValueError(
            f"input channels {x.shape[1]} (input {x.shape}) do not match "
            f"kernel input channels {i} (kernel {weight.shape})"
        )
    if stride < 1:
        raise ValueError(f"unsupported stride {stride}")
    stuffed = _stuff(x, stride, output_pad)
    flipped = weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    y, _ = conv2d_forward(stuffed, np.ascontiguousarray(flipped), bias,
                          stride=1, pad=kh - 1 - pad)
    return y


def deconv2d_backward(x, weight, grad_out, stride=2, pad=4, output_pad=1):
    """Gradients of deconv2d_forward w.r.t. input, weight and bias."""
    x = _check_input(x)
    i, o, kh, kw = weight.shape
    stuffed = _stuff(x, stride, output_pad)
    flipped = np.ascontiguousarray(weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dstuffed, dflipped, dbias = conv2d_backward(
        stuffed, flipped, grad_out, stride=1, pad=kh - 1 - pad
    )
    dx = dstuffed[:, :, ::stride, ::stride]
    h, w = x.shape[2], x.shape[3]
    dx = np.ascontiguousarray(dx[:, :, :h, :w])
    dweight = dflipped[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return dx, np.ascontiguousarray(dweight), dbias


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def mse_loss(pred, target):
    """Half mean (over the batch) of squared Frobenius norms.

    loss = 1/(2N) * sum_i ||pred_i - target_i||_F^2 with N the batch
    size; the gradient w.r.t. pred is (pred - target)/N.
    """
    pred = _check_input(pred)
    target = _check_input(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    n = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(diff * diff)) / (2.0 * n)
    return loss, diff / n


class Conv2d:
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, pad=0,
                 dtype=np.float64, name="conv"):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.pad = pad
        self.weight = Parameter(
            f"{name}.weight",
            np.zeros((out_channels, in_channels, kernel_size, kernel_size), dtype),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False):
        # Only the input is kept for backward; patch matrices are large
        # and cheap to rebuild.
        y, _ = conv2d_forward(x, self.weight.data, self.bias.data, self.stride, self.pad)
        self._cache = x if train else None
        return y

    def backward(self, grad_out):
        dx, dw, db = conv2d_backward(
            self._cache, self.weight.data, grad_out, self.stride, self.pad
        )
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class TransposedConv2d:
    """Stride-s transposed convolution producing exact s-fold upsampling."""

    def __init__(self, in_channels, out_channels, kernel_size=9, stride=2,
                 dtype=np.float64, name="deconv"):
        if stride != 2:
            raise ValueError(f"unsupported stride {stride} (factor-2 upsampling only)")
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.pad = (kernel_size - 1) // 2
        self.output_pad = 1
        self.weight = Parameter(
            f"{name}.weight",
            np.zeros((in_channels, out_channels, kernel_size, kernel_size), dtype),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False):
        y = deconv2d_forward(
            x, self.weight.data, self.bias.data, self.stride, self.pad, self.output_pad
        )
        self._cache = x if train else None
        return y

    def backward(self, grad_out):
        dx, dw, db = deconv2d_backward(
            self._cache, self.weight.data, grad_out, self.stride, self.pad, self.output_pad
        )
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Training mode normalizes by batch statistics over (n, h, w) and
    updates the running mean/variance by an exponential moving average;
    eval mode is a fixed per-channel affine map using the running stats.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64, name="bn"):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype))
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=False):
        x = _check_input(x)
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        if x.shape[2] == 0 or x.shape[3] == 0:
            raise ValueError(f"zero-size spatial extent: {x.shape}")
        c = self.channels
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m < 2:
                raise ValueError("training-mode batch norm needs at least 2 samples per channel")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        y = self.gamma.data.reshape(1, c, 1, 1) * xhat + self.beta.data.reshape(1, c, 1, 1)
        self._cache = (xhat, inv_std, train)
        return y

    def backward(self, grad_out):
        xhat, inv_std, train = self._cache
        c = self.channels
        self.gamma.grad += np.sum(grad_out * xhat, axis=(0, 2, 3))
        self.beta.grad += np.sum(grad_out, axis=(0, 2, 3))
        dxhat = grad_out * self.gamma.data.reshape(1, c, 1, 1)
        if not train:
            return dxhat * inv_std.reshape(1, c, 1, 1)
        mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return inv_std.reshape(1, c, 1, 1) * (dxhat - mean_d - xhat * mean_dx)


class ReLU:
    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x, train=False):
        self._cache = x if train else None
        return relu_forward(x)

    def backward(self, grad_out):
        return relu_backward(self._cache, grad_out)


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out
