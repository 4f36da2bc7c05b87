"""Joint deblocking and x2 super-resolution for JPEG-compressed images.

Library layout:
  nn         tensor layers with exact reverse-mode gradients
  jpegcodec  baseline JPEG encoder/decoder and the degradation operator
  resample   antialiased bicubic resampling
  model      the three-stage network, checkpoints, tiled inference
  dataset    training config and patch triplet construction
  training   the four-stage training procedure
  metrics    PSNR / SSIM / luma conversion
  lowrate    downsample+JPEG coding with learned upsampling, RD sweeps
  checks     finite-difference gradient verification battery
"""

from . import nn
from .dataset import TrainConfig, build_dataset
from .imageio import from_unit, read_image, to_unit, write_image
from .jpegcodec import (
    JpegFormatError,
    JpegStream,
    degrade,
    jpeg_decode,
    jpeg_encode,
    quant_table_from_qf,
)
from .lowrate import ModelBank, RdPoint, lbrc_decode, lbrc_encode, rd_sweep
from .metrics import MetricReport, psnr, ssim, to_luma
from .model import CompressedSRNet
from .resample import bicubic_resize, cubic_weight
from .training import Trainer

__version__ = "0.1.0"
