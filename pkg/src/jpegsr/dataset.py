"""Training configuration and triplet dataset construction.

Each source image is degraded once as a whole (antialiased bicubic
half-size, then a JPEG round trip), and aligned (x, y, z) patch triplets
are cut on a stride grid whose LR geometry is a multiple of 8 so the
JPEG block phase is the same in every patch. Augmentation applies the
eight dihedral transforms consistently to all three planes of a triplet.
"""

import os
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from . import imageio
from .jpegcodec import degrade

DIHEDRAL_COUNT = 8


@dataclass
class TrainConfig:
    """Everything that determines a training run.

    Keys (all have explicit defaults and are honored from YAML):
      qf              JPEG quality factor of the degradation
      depths          [deblock, upsample, enhance] layer counts
      channels        feature channels of every hidden conv layer
      hr_patch        HR patch edge (even; LR patch is half)
      hr_stride       HR patch grid stride (multiple of 16 so the LR
                      grid stays aligned to the 8x8 JPEG block grid)
      batch_size      minibatch size
      epochs_stage1..3, epochs_joint   per-stage epoch counts
      lr_stages       learning rate for the three individual stages
      lr_joint        learning rate for joint fine-tuning
      plateau_patience  epochs without val improvement before halving lr
      augment         apply the 8 dihedral transforms to every triplet
      antialias       widen the bicubic kernel when downsampling
      val_fraction    fraction of source images held out for validation
      seed            controls init, shuffling and the val split
      dtype           'float32' or 'float64' training arithmetic
      image_dir       directory of 8-bit source images
      out_dir         checkpoints, loss CSV and stage caches go here
      init_checkpoint optional checkpoint to start from (QF transfer)
    """

    qf: int = 10
    depths: tuple = (20, 10, 10)
    channels: int = 64
    hr_patch: int = 64
    hr_stride: int = 32
    batch_size: int = 16
    epochs_stage1: int = 20
    epochs_stage2: int = 10
    epochs_stage3: int = 10
    epochs_joint: int = 10
    lr_stages: float = 1e-4
    lr_joint: float = 1e-5
    plateau_patience: int = 2
    augment: bool = True
    antialias: bool = True
    val_fraction: float = 0.1
    seed: int = 0
    dtype: str = "float32"
    image_dir: str = "images"
    out_dir: str = "run"
    init_checkpoint: str = ""

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        if len(self.depths) != 3:
            raise ValueError("depths must list three layer counts")
        if self.hr_patch % 2:
            raise ValueError(f"hr_patch must be even, got {self.hr_patch}")
        if self.hr_stride % 16:
            raise ValueError(
                f"hr_stride must be a multiple of 16 to keep LR patches "
                f"aligned to the JPEG block grid, got {self.hr_stride}"
            )
        if not 1 <= self.qf <= 100:
            raise ValueError(f"qf must be in [1, 100], got {self.qf}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @classmethod
    def from_yaml(cls, path):
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_yaml(self, path):
        data = asdict(self)
        data["depths"] = list(self.depths)
        with open(path, "w") as f:
            yaml.safe_dump(data, f, sort_keys=True)


def dihedral(plane, t):
    """One of the eight axis-aligned flips/rotations, t in 0..7."""
    if t >= 4:
        plane = plane[:, ::-1]
    return np.rot90(plane, t % 4)


def dihedral_inverse(plane, t):
    plane = np.rot90(plane, -(t % 4))
    if t >= 4:
        plane = plane[:, ::-1]
    return plane


@dataclass
class PatchSet:
    """Aligned training triplets plus their provenance.

    x: (p, 1, hp, hp), y/z: (p, 1, hp/2, hp/2), values in [0, 1].
    source[i], lr_pos[i], transform[i] identify how patch i was cut, so
    any triplet can be reconstructed from the source images.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    source: np.ndarray
    lr_pos: np.ndarray
    transform: np.ndarray
    image_names: list
    train_idx: np.ndarray
    val_idx: np.ndarray
    skipped: list = field(default_factory=list)

    def __len__(self):
        return self.x.shape[0]

    def summary(self):
        return (
            f"{len(self)} triplets from {len(self.image_names)} images "
            f"({len(self.train_idx)} train / {len(self.val_idx)} val patches); "
            f"skipped: {self.skipped or 'none'}"
        )


IMAGE_EXTENSIONS = (".png", ".pgm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")


def list_images(image_dir):
    names = sorted(
        f for f in os.listdir(image_dir) if f.lower().endswith(IMAGE_EXTENSIONS)
    )
    return [os.path.join(image_dir, f) for f in names]


def build_dataset(image_dir, cfg):
    """Degrade every image in a directory and cut aligned patch triplets."""
    paths = list_images(image_dir)
    if not paths:
        raise ValueError(f"no images found in {image_dir!r}")

    hp = cfg.hr_patch
    lp, ls = hp // 2, cfg.hr_stride // 2
    dtype = cfg.np_dtype

    xs, ys, zs = [], [], []
    source, lr_pos, transform = [], [], []
    names, skipped = [], []
    for path in paths:
        plane, _ = imageio.read_image(path)
        h, w = plane.shape
        plane = plane[: h - (h % 2), : w - (w % 2)]
        if plane.shape[0] < hp or plane.shape[1] < hp:
            skipped.append(f"{os.path.basename(path)} ({w}x{h} < patch {hp})")
            continue
        y8, z8 = degrade(plane, cfg.qf)
        x01 = imageio.to_unit(plane)
        y01 = imageio.to_unit(y8)
        z01 = imageio.to_unit(z8)

        img_index = len(names)
        names.append(os.path.basename(path))
        lh, lw = y01.shape
        for r in range(0, lh - lp + 1, ls):
            for c in range(0, lw - lp + 1, ls):
                xp = x01[2 * r : 2 * r + hp, 2 * c : 2 * c + hp]
                yp = y01[r : r + lp, c : c + lp]
                zp = z01[r : r + lp, c : c + lp]
                for t in range(DIHEDRAL_COUNT if cfg.augment else 1):
                    xs.append(dihedral(xp, t))
                    ys.append(dihedral(yp, t))
                    zs.append(dihedral(zp, t))
                    source.append(img_index)
                    lr_pos.append((r, c))
                    transform.append(t)

    if not names:
        raise ValueError(
            f"no usable images in {image_dir!r}: all skipped ({'; '.join(skipped)})"
        )

    x = np.stack(xs)[:, None].astype(dtype)
    y = np.stack(ys)[:, None].astype(dtype)
    z = np.stack(zs)[:, None].astype(dtype)
    source = np.array(source)
    lr_pos = np.array(lr_pos)
    transform = np.array(transform)

    # Hold out whole source images, not patches, to avoid overlap leakage.
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(names))
    n_val = max(1, int(round(cfg.val_fraction * len(names)))) if len(names) > 1 else 0
    val_images = set(order[:n_val].tolist())
    val_mask = np.isin(source, list(val_images))
    train_idx = np.nonzero(~val_mask)[0]
    val_idx = np.nonzero(val_mask)[0]

    return PatchSet(x, y, z, source, lr_pos, transform, names, train_idx, val_idx, skipped)
