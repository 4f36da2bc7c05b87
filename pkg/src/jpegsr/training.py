"""Staged training: deblock, then upsample, then enhance, then joint.

Stages 1-3 each optimize one sub-network with the others frozen; the
inputs a stage needs from the frozen upstream (deblocked LR planes,
upsampled HR planes) are computed once in eval mode and cached to disk,
keyed by the hash of the upstream checkpoint. The joint stage fine-tunes
everything end to end starting exactly from the composed stage
checkpoints.

Runs are deterministic: the config seed fixes initialization, the
train/val split, and every shuffle.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import TrainConfig, build_dataset
from .model import CompressedSRNet, checkpoint_hash
from .nn import Adam, mse_loss


class TrainingDivergedError(RuntimeError):
    def __init__(self, stage, epoch, checkpoint):
        kept = f"last good checkpoint: {checkpoint}" if checkpoint else "no checkpoint saved yet"
        super().__init__(f"{stage} diverged (non-finite loss) at epoch {epoch}; {kept}")
        self.checkpoint = checkpoint


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    train_loss: float
    val_loss: float


_STAGE_SEEDS = {"stage1": 1, "stage2": 2, "stage3": 3, "joint": 4}

STAGE_FILES = {
    "stage1": "stage1.ckpt",
    "stage2": "stage2.ckpt",
    "stage3": "stage3.ckpt",
    "joint": "final.ckpt",
}


class Trainer:
    def __init__(self, cfg: TrainConfig, patches=None):
        self.cfg = cfg
        self.patches = patches
        self.net = None
        self.records = []
        os.makedirs(cfg.out_dir, exist_ok=True)
        self.cache_dir = os.path.join(cfg.out_dir, "cache")
        os.makedirs(self.cache_dir, exist_ok=True)

    def ckpt_path(self, stage):
        return os.path.join(self.cfg.out_dir, STAGE_FILES[stage])

    def prepare(self):
        cfg = self.cfg
        if self.patches is None:
            self.patches = build_dataset(cfg.image_dir, cfg)
        if self.net is None:
            if cfg.init_checkpoint:
                self.net = CompressedSRNet.load(cfg.init_checkpoint, dtype=cfg.np_dtype)
                self.net.qf = cfg.qf
            else:
                self.net = CompressedSRNet(
                    depths=cfg.depths, channels=cfg.channels,
                    dtype=cfg.np_dtype, qf=cfg.qf,
                ).initialize(seed=cfg.seed)
        return self

    # -- helpers -------------------------------------------------------------

    def _forward_all(self, part, inputs):
        bs = max(1, self.cfg.batch_size)
        outs = [
            part.forward(inputs[i : i + bs], train=False)
            for i in range(0, len(inputs), bs)
        ]
        return np.concatenate(outs) if outs else inputs[:0]

    def _dataset_loss(self, part, inputs, targets):
        """Eval-mode value of the stage loss over a whole patch collection."""
        bs = max(1, self.cfg.batch_size)
        total = 0.0
        for i in range(0, len(inputs), bs):
            out = part.forward(inputs[i : i + bs], train=False)
            loss, _ = mse_loss(out, targets[i : i + bs])
            total += loss * out.shape[0]
        return total / len(inputs)

    def _cached(self, tag, upstream_ckpt, compute):
        key = checkpoint_hash(upstream_ckpt)
        path = os.path.join(self.cache_dir, f"{tag}_{key}.npy")
        if os.path.exists(path):
            return np.load(path)
        arr = compute()
        np.save(path, arr)
        return arr

    def _run_stage(self, stage, part, train_in, train_tgt, val_in, val_tgt,
                   epochs, lr):
        cfg = self.cfg
        ckpt = self.ckpt_path(stage)
        opt = Adam(part.parameters(), lr=lr)
        rng = np.random.default_rng((cfg.seed, _STAGE_SEEDS[stage]))
        records = [
            EpochRecord(
                stage, 0,
                self._dataset_loss(part, train_in, train_tgt),
                self._dataset_loss(part, val_in, val_tgt) if len(val_in) else float("nan"),
            )
        ]
        best_val = records[0].val_loss
        bad_epochs = 0
        saved = None
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(train_in))
            total = 0.0
            for i in range(0, len(order), cfg.batch_size):
                idx = order[i : i + cfg.batch_size]
                out = part.forward(train_in[idx], train=True)
                loss, grad = mse_loss(out, train_tgt[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(stage, epoch, saved)
                opt.zero_grad()
                part.backward(grad.astype(cfg.np_dtype))
                opt.step()
                total += loss * len(idx)
            train_loss = total / len(order)
            val_loss = (
                self._dataset_loss(part, val_in, val_tgt) if len(val_in) else float("nan")
            )
            records.append(EpochRecord(stage, epoch, train_loss, val_loss))

            self.net.stage = stage
            self.net.save(ckpt)
            saved = ckpt

            if np.isfinite(val_loss):
                if val_loss < best_val:
                    best_val = val_loss
                    bad_epochs = 0
                else:
                    bad_epochs += 1
                    if bad_epochs >= cfg.plateau_patience:
                        opt.lr *= 0.5
                        bad_epochs = 0
        if saved is None:  # zero-epoch run still leaves a checkpoint behind
            self.net.stage = stage
            self.net.save(ckpt)
        self.records.extend(records)
        return records

    # -- stages ----------------------------------------------------------------

    def stage1(self, epochs=None):
        """Deblocker on (z, y): the network learns the LR residual y - z."""
        self.prepare()
        p = self.patches
        return self._run_stage(
            "stage1", self.net.deblock,
            p.z[p.train_idx], p.y[p.train_idx],
            p.z[p.val_idx], p.y[p.val_idx],
            self.cfg.epochs_stage1 if epochs is None else epochs,
            self.cfg.lr_stages,
        )

    def stage2(self, epochs=None):
        """Upsampler on (deblock(z), x) with the deblocker frozen."""
        self.prepare()
        p = self.patches
        yhat = self._cached(
            "yhat", self.ckpt_path("stage1"),
            lambda: self._forward_all(self.net.deblock, p.z).astype(self.cfg.np_dtype),
        )
        return self._run_stage(
            "stage2", self.net.upsample,
            yhat[p.train_idx], p.x[p.train_idx],
            yhat[p.val_idx], p.x[p.val_idx],
            self.cfg.epochs_stage2 if epochs is None else epochs,
            self.cfg.lr_stages,
        )

    def stage3(self, epochs=None):
        """Enhancer on (upsample(deblock(z)), x) with stages 1-2 frozen."""
        self.prepare()
        p = self.patches
        yhat = self._cached(
            "yhat", self.ckpt_path("stage1"),
            lambda: self._forward_all(self.net.deblock, p.z).astype(self.cfg.np_dtype),
        )
        xhat = self._cached(
            "xhat", self.ckpt_path("stage2"),
            lambda: self._forward_all(self.net.upsample, yhat).astype(self.cfg.np_dtype),
        )
        return self._run_stage(
            "stage3", self.net.enhance,
            xhat[p.train_idx], p.x[p.train_idx],
            xhat[p.val_idx], p.x[p.val_idx],
            self.cfg.epochs_stage3 if epochs is None else epochs,
            self.cfg.lr_stages,
        )

    def joint(self, epochs=None):
        """End-to-end fine-tuning of all three sub-networks on (z, x)."""
        self.prepare()
        p = self.patches
        return self._run_stage(
            "joint", self.net,
            p.z[p.train_idx], p.x[p.train_idx],
            p.z[p.val_idx], p.x[p.val_idx],
            self.cfg.epochs_joint if epochs is None else epochs,
            self.cfg.lr_joint,
        )

    def run(self, stage="all", resume=False):
        """Run one stage, or the full sequence (optionally skipping stages
        whose checkpoint already exists)."""
        self.prepare()
        stages = ["stage1", "stage2", "stage3", "joint"] if stage == "all" else [stage]
        methods = {"stage1": self.stage1, "stage2": self.stage2,
                   "stage3": self.stage3, "joint": self.joint,
                   "1": self.stage1, "2": self.stage2, "3": self.stage3}
        for s in stages:
            path = self.ckpt_path(s if s in STAGE_FILES else f"stage{s}")
            if resume and os.path.exists(path):
                self.net = CompressedSRNet.load(path, dtype=self.cfg.np_dtype)
                continue
            methods[s]()
        self.save_csv()
        return self.net

    def save_csv(self, path=None):
        path = path or os.path.join(self.cfg.out_dir, "loss_curves.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "stage", "train_loss", "val_loss"])
            for r in self.records:
                writer.writerow([r.epoch, r.stage, f"{r.train_loss:.10e}", f"{r.val_loss:.10e}"])
        return path
