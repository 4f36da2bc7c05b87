"""The joint deblocking / x2 upsampling / enhancement network.

Three sub-networks composed end to end on [0, 1] luma planes:

  deblock:  residual CNN at LR resolution (input + learned correction)
  upsample: plain CNN stack ending in a stride-2 9x9 transposed
            convolution that doubles both spatial dimensions
  enhance:  residual CNN at HR resolution

The upsampler is initialized so that, before any training, its eval-mode
forward is exactly factor-2 bilinear interpolation: channel 0 of the
conv stack carries the input through untouched and the transposed
convolution holds a bilinear kernel on that channel only.
"""

import hashlib
import io
import json
import struct

import numpy as np

from . import nn

CHECKPOINT_MAGIC = b"CISR"
CHECKPOINT_VERSION = 1

DEFAULT_DEPTHS = (20, 10, 10)
DEFAULT_CHANNELS = 64

# 9-tap factor-2 bilinear synthesis filter for the stride-2 transposed conv
# (center-aligned convention: even outputs 0.25/0.75, odd outputs 0.75/0.25).
BILINEAR_TAPS = np.array([0, 0, 0, 0.25, 0.75, 0.75, 0.25, 0, 0])


class ResidualCNN:
    """Conv stack with an identity skip: y = x + branch(x)."""

    def __init__(self, depth, channels=DEFAULT_CHANNELS, dtype=np.float64, prefix="net"):
        if depth < 2:
            raise ValueError(f"depth must be >= 2, got {depth}")
        self.depth = depth
        self.channels = channels
        layers = []
        for i in range(1, depth):
            in_ch = 1 if i == 1 else channels
            layers.append(nn.Conv2d(in_ch, channels, 3, pad=1, dtype=dtype,
                                    name=f"{prefix}.conv{i:02d}"))
            layers.append(nn.BatchNorm2d(channels, dtype=dtype, name=f"{prefix}.bn{i:02d}"))
            layers.append(nn.ReLU())
        layers.append(nn.Conv2d(channels, 1, 3, pad=1, dtype=dtype,
                                name=f"{prefix}.conv{depth:02d}"))
        self.branch = nn.Sequential(layers)

    def parameters(self):
        return self.branch.parameters()

    def forward(self, x, train=False):
        if x.shape[2] < 3 or x.shape[3] < 3:
            raise ValueError(f"spatial dims too small for 3x3 kernels: {x.shape}")
        return x + self.branch.forward(x, train=train)

    def backward(self, grad_out):
        return grad_out + self.branch.backward(grad_out)


class UpsampleCNN:
    """Conv stack ending in a stride-2 transposed convolution (2h, 2w)."""

    def __init__(self, depth, channels=DEFAULT_CHANNELS, dtype=np.float64, prefix="upsample"):
        if depth < 2:
            raise ValueError(f"depth must be >= 2, got {depth}")
        self.depth = depth
        self.channels = channels
        layers = []
        for i in range(1, depth):
            in_ch = 1 if i == 1 else channels
            layers.append(nn.Conv2d(in_ch, channels, 3, pad=1, dtype=dtype,
                                    name=f"{prefix}.conv{i:02d}"))
            layers.append(nn.BatchNorm2d(channels, dtype=dtype, name=f"{prefix}.bn{i:02d}"))
            layers.append(nn.ReLU())
        layers.append(nn.TransposedConv2d(channels, 1, 9, stride=2, dtype=dtype,
                                          name=f"{prefix}.deconv"))
        self.stack = nn.Sequential(layers)

    def parameters(self):
        return self.stack.parameters()

    def forward(self, x, train=False):
        if x.shape[2] < 3 or x.shape[3] < 3:
            raise ValueError(f"spatial dims too small for 3x3 kernels: {x.shape}")
        return self.stack.forward(x, train=train)

    def backward(self, grad_out):
        return self.stack.backward(grad_out)


class CompressedSRNet:
    """deblock -> upsample -> enhance, doubling resolution overall."""

    def __init__(self, depths=DEFAULT_DEPTHS, channels=DEFAULT_CHANNELS,
                 dtype=np.float64, qf=0):
        self.depths = tuple(int(d) for d in depths)
        self.channels = channels
        self.dtype = dtype
        self.qf = qf
        self.scale = 2
        self.stage = "init"
        k1, k2, k3 = self.depths
        self.deblock = ResidualCNN(k1, channels, dtype, prefix="deblock")
        self.upsample = UpsampleCNN(k2, channels, dtype, prefix="upsample")
        self.enhance = ResidualCNN(k3, channels, dtype, prefix="enhance")

    # -- forward/backward -------------------------------------------------

    def forward(self, z, train=False):
        y_hat = self.deblock.forward(z, train=train)
        x_hat = self.upsample.forward(y_hat, train=train)
        return self.enhance.forward(x_hat, train=train)

    def forward_stages(self, z, train=False):
        """(y_hat, x_hat, x_final) from one composed pass."""
        y_hat = self.deblock.forward(z, train=train)
        x_hat = self.upsample.forward(y_hat, train=train)
        return y_hat, x_hat, self.enhance.forward(x_hat, train=train)

    def backward(self, grad_out):
        g = self.enhance.backward(grad_out)
        g = self.upsample.backward(g)
        return self.deblock.backward(g)

    def parameters(self):
        return (self.deblock.parameters() + self.upsample.parameters()
                + self.enhance.parameters())

    # -- initialization ----------------------------------------------------

    def initialize(self, seed=0):
        """He-normal conv init plus the bilinear-exact upsampler lane."""
        rng = np.random.default_rng(seed)
        for sub in (self.deblock, self.upsample, self.enhance):
            stack = sub.branch if isinstance(sub, ResidualCNN) else sub.stack
            for layer in stack.layers:
                if isinstance(layer, nn.Conv2d):
                    fan_in = layer.in_channels * layer.kernel_size**2
                    std = np.sqrt(2.0 / fan_in)
                    layer.weight.data[...] = rng.normal(
                        0.0, std, layer.weight.shape
                    ).astype(self.dtype)
                    layer.bias.data[...] = 0.0

        # Upsampler passthrough lane: channel 0 of every hidden layer is the
        # identity, and eval-mode batch norm must be identity too, which
        # needs gamma = sqrt(1 + eps) against running stats (0, 1).
        mid = 1  # center of the 3x3 kernel
        for layer in self.upsample.stack.layers:
            if isinstance(layer, nn.Conv2d):
                layer.weight.data[0, :, :, :] = 0.0
                layer.weight.data[0, 0, mid, mid] = 1.0
            elif isinstance(layer, nn.BatchNorm2d):
                layer.gamma.data[...] = np.sqrt(1.0 + layer.eps)
            elif isinstance(layer, nn.TransposedConv2d):
                kernel = np.outer(BILINEAR_TAPS, BILINEAR_TAPS)
                layer.weight.data[...] = 0.0
                layer.weight.data[0, 0] = kernel.astype(self.dtype)
                layer.bias.data[...] = 0.0
        self.stage = "init"
        return self

    # -- inference ---------------------------------------------------------

    def receptive_radius_lr(self):
        """Dependency radius of one output pixel, in LR pixels."""
        k1, k2, k3 = self.depths
        return k1 + (k2 - 1) + 3 + (k3 + 1) // 2

    def super_resolve(self, plane, tile=96):
        """x2 super-resolve a [0,1] float LR plane in eval mode.

        Large planes are processed in overlapping tiles whose margin
        covers the full receptive radius, so tiling is exact.
        """
        plane = np.asarray(plane, dtype=self.dtype)
        if plane.ndim != 2:
            raise ValueError(f"expected a 2-D plane, got shape {plane.shape}")
        h, w = plane.shape
        margin = self.receptive_radius_lr()
        if h <= tile and w <= tile:
            out = self.forward(plane[None, None], train=False)
            return out[0, 0]
        result = np.empty((2 * h, 2 * w), dtype=self.dtype)
        for r0 in range(0, h, tile):
            for c0 in range(0, w, tile):
                r1, c1 = min(r0 + tile, h), min(c0 + tile, w)
                rr0, cc0 = max(0, r0 - margin), max(0, c0 - margin)
                rr1, cc1 = min(h, r1 + margin), min(w, c1 + margin)
                out = self.forward(plane[None, None, rr0:rr1, cc0:cc1], train=False)[0, 0]
                result[2 * r0 : 2 * r1, 2 * c0 : 2 * c1] = out[
                    2 * (r0 - rr0) : 2 * (r1 - rr0), 2 * (c0 - cc0) : 2 * (c1 - cc0)
                ]
        return result

    # -- named tensors / checkpointing --------------------------------------

    def named_tensors(self):
        """Ordered (name, array) pairs: parameters then batch-norm stats."""
        out = [(p.name, p.data) for p in self.parameters()]
        for sub in (self.deblock, self.upsample, self.enhance):
            stack = sub.branch if isinstance(sub, ResidualCNN) else sub.stack
            for layer in stack.layers:
                if isinstance(layer, nn.BatchNorm2d):
                    base = layer.gamma.name.rsplit(".", 1)[0]
                    out.append((f"{base}.running_mean", layer.running_mean))
                    out.append((f"{base}.running_var", layer.running_var))
        return out

    def metadata(self):
        return {
            "qf": int(self.qf),
            "scale": self.scale,
            "depths": list(self.depths),
            "channels": self.channels,
            "normalization": "pixel/255",
            "stage": self.stage,
        }

    def save(self, path):
        with open(path, "wb") as f:
            f.write(serialize_checkpoint(self))

    @classmethod
    def load(cls, path, dtype=np.float64):
        with open(path, "rb") as f:
            return deserialize_checkpoint(f.read(), dtype=dtype)


def serialize_checkpoint(net):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    meta = json.dumps(net.metadata(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    for name, arr in net.named_tensors():
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<I", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def deserialize_checkpoint(data, dtype=np.float64):
    view = memoryview(data)
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", view[4:8])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", view[8:12])
    pos = 12
    meta = json.loads(bytes(view[pos : pos + meta_len]).decode("utf-8"))
    pos += meta_len

    tensors = {}
    order = []
    while pos < len(data):
        (name_len,) = struct.unpack("<I", view[pos : pos + 4])
        pos += 4
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack("<I", view[pos : pos + 4])
        pos += 4
        dims = struct.unpack(f"<{rank}I", view[pos : pos + 4 * rank])
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(view[pos : pos + 4 * count], dtype="<f4").reshape(dims)
        pos += 4 * count
        tensors[name] = arr
        order.append(name)

    net = CompressedSRNet(depths=meta["depths"], channels=meta["channels"],
                          dtype=dtype, qf=meta["qf"])
    net.stage = meta.get("stage", "loaded")
    expected = dict(net.named_tensors())
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise ValueError(f"checkpoint tensor mismatch: missing {sorted(missing)}, "
                         f"unexpected {sorted(extra)}")
    for name in order:
        target = expected[name]
        if tensors[name].shape != target.shape:
            raise ValueError(f"tensor {name}: shape {tensors[name].shape} != {target.shape}")
        target[...] = tensors[name].astype(dtype)
    return net


def checkpoint_hash(path_or_bytes):
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as f:
            blob = f.read()
    return hashlib.sha256(blob).hexdigest()[:16]
