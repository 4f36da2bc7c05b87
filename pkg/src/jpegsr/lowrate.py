"""Low-bit-rate coding built on the SR network.

Encoder: bicubic half-size downsample, then JPEG. Decoder: JPEG decode,
then network x2 super-resolution. Rates are measured from the exact
stream byte length (headers included) against the pixel count of the
original HR image.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import imageio
from .jpegcodec import JpegStream, jpeg_decode, jpeg_encode
from .metrics import psnr
from .model import CompressedSRNet, checkpoint_hash
from .resample import bicubic_resize

DEFAULT_SWEEP_QFS = (5, 10, 20, 30, 40, 50, 60, 70, 80)


class MissingModelError(LookupError):
    def __init__(self, qf, available):
        have = ", ".join(str(q) for q in sorted(available)) or "none"
        super().__init__(f"no checkpoint for qf={qf}; available checkpoints: {have}")
        self.qf = qf
        self.available = sorted(available)


@dataclass
class RdPoint:
    method: str  # "jpeg" or "lbrc"
    qf: int
    bpp: float
    psnr_db: float
    image_id: str = ""
    model_hash: str = ""


class ModelBank:
    """Directory of checkpoints, looked up by the QF they were trained on."""

    def __init__(self, directory):
        self.directory = directory
        self._paths = {}
        self._cache = {}
        for name in sorted(os.listdir(directory)):
            if not name.endswith(".ckpt"):
                continue
            path = os.path.join(directory, name)
            try:
                net = CompressedSRNet.load(path)
            except ValueError:
                continue
            self._paths[int(net.qf)] = path
            self._cache[int(net.qf)] = net
        if not self._paths:
            raise MissingModelError(0, [])

    @property
    def qfs(self):
        return sorted(self._paths)

    def nearest(self, qf):
        """(net, trained_qf, checkpoint_hash) for the closest trained QF."""
        if not self._paths:
            raise MissingModelError(qf, [])
        best = min(self._paths, key=lambda q: (abs(q - qf), q))
        return self._cache[best], best, checkpoint_hash(self._paths[best])


def lbrc_encode(img, qf):
    """Downsample a uint8 HR plane by 2 and JPEG-encode it."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 plane, got {img.dtype} shape {img.shape}")
    if img.shape[0] % 2 or img.shape[1] % 2:
        raise ValueError(f"even dimensions required, got {img.shape}")
    return jpeg_encode(bicubic_resize(img, 0.5), qf)


def lbrc_decode(stream, net):
    """JPEG-decode a stream and restore full resolution with the network.

    Returns (plane, info): the uint8 HR plane plus metadata about which
    model handled it (trained qf, checkpoint provenance).
    """
    decoded = jpeg_decode(stream)
    out01 = net.super_resolve(imageio.to_unit(decoded))
    info = {"model_qf": int(net.qf), "model_stage": net.stage}
    return imageio.from_unit(out01), info


def rd_sweep(img, bank, qfs=DEFAULT_SWEEP_QFS, image_id=""):
    """Rate-distortion points for direct JPEG and the SR pipeline.

    Returns the points sorted by method then bpp. Every bpp is the exact
    stream length in bits divided by the HR pixel count.
    """
    img = np.asarray(img)
    pixels = img.size
    points = []
    for qf in qfs:
        stream = jpeg_encode(img, qf)
        rec = jpeg_decode(stream)
        points.append(RdPoint("jpeg", qf, stream.bpp(pixels), psnr(img, rec), image_id))

        stream = lbrc_encode(img, qf)
        net, model_qf, model_hash = bank.nearest(qf)
        rec, _ = lbrc_decode(stream, net)
        points.append(
            RdPoint("lbrc", qf, stream.bpp(pixels), psnr(img, rec), image_id, model_hash)
        )
    points.sort(key=lambda p: (p.method, p.bpp))
    return points


def write_rd_csv(path, points):
    """CSV plus a gnuplot-ready two-column .dat file per method."""
    import csv as _csv

    with open(path, "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(["method", "qf", "bpp", "psnr_db", "image_id", "model_checkpoint_hash"])
        for p in points:
            writer.writerow([p.method, p.qf, f"{p.bpp:.8f}", f"{p.psnr_db:.6f}",
                             p.image_id, p.model_hash])
    stem = os.path.splitext(path)[0]
    for method in sorted({p.method for p in points}):
        with open(f"{stem}_{method}.dat", "w") as f:
            for p in sorted((q for q in points if q.method == method), key=lambda q: q.bpp):
                f.write(f"{p.bpp:.8f} {p.psnr_db:.6f}\n")


def interpolate_psnr(points, bpp):
    """PSNR at a rate by linear interpolation between measured points.

    Refuses to extrapolate: returns None outside the measured range.
    """
    pts = sorted(points, key=lambda p: p.bpp)
    if not pts or bpp < pts[0].bpp or bpp > pts[-1].bpp:
        return None
    for lo, hi in zip(pts, pts[1:]):
        if lo.bpp <= bpp <= hi.bpp:
            if hi.bpp == lo.bpp:
                return lo.psnr_db
            t = (bpp - lo.bpp) / (hi.bpp - lo.bpp)
            return lo.psnr_db + t * (hi.psnr_db - lo.psnr_db)
    return None
