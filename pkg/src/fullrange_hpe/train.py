"""Contrastive representation training, frozen-encoder pose head, supervised baseline."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import geo, mining, so3, synth
from .data import Corpus, augmented_split, make_pair_batch
from .models import EncoderConfig, EncoderNet, HeadConfig, HeadMLP, predict_pose
from .nn import Adam

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32          # anchors per batch; generated positives double it
    epochs: int = 12              # representation epochs
    head_epochs: int = 12
    lr: float = 1e-3
    head_lr: float = 1e-3
    seed: int = 0
    patience: int = 4
    policy: str = "rotate_flip"
    rotate_span_deg: float = 90.0  # clockwise rotation range [0, span]
    pixel_aug: bool = True
    embed_dim: int = 64
    hidden: int = 256
    activation: str = "tanh"

    def __post_init__(self):
        if self.batch_size < 4:
            raise ValueError("batch_size must be at least 4")
        if self.lr <= 0 or self.head_lr <= 0:
            raise ValueError("learning rates must be positive")

    def augment_policy(self) -> geo.AugmentPolicy:
        return geo.AugmentPolicy.named(self.policy, math.radians(self.rotate_span_deg))

    def pixel_cfg(self) -> synth.PixelAugConfig | None:
        return synth.PixelAugConfig() if self.pixel_aug else None

    def encoder_config(self, image_size: int) -> EncoderConfig:
        return EncoderConfig(image_size=image_size, hidden=(self.hidden, self.hidden), embed_dim=self.embed_dim,
                             activation=self.activation)


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)       # per-epoch mean training loss
    val_errors: list[float] = field(default_factory=list)   # per-epoch validation geodesic error (deg)
    updates: int = 0
    best_epoch: int = -1
    skipped: int = 0


def _iters_per_epoch(n: int, b: int) -> int:
    return math.ceil(n / b)


def _epoch_batches(rng: np.random.Generator, idx: np.ndarray, b: int):
    perm = rng.permutation(idx)
    for s in range(0, len(perm), b):
        yield np.sort(perm[s:s + b])


def train_representation(cfg: TrainConfig, loss_cfg: mining.LossConfig, corpus: Corpus,
                         encoder: EncoderNet | None = None) -> tuple[EncoderNet, TrainLog]:
    """Contrastive training: pair batch, shared augmentation, embed, mine, Circle Loss, Adam."""
    encoder = encoder or EncoderNet(cfg.encoder_config(corpus.cfg.image_size), seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 100])
    opt = Adam([p for _, p in encoder.named_params()], lr=cfg.lr)
    policy, pix = cfg.augment_policy(), cfg.pixel_cfg()
    tlog = TrainLog()
    train_idx = corpus.indices("train")
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _epoch_batches(rng, train_idx, cfg.batch_size):
            batch = make_pair_batch(corpus, idx, policy, pix, rng)
            loss = contrastive_step(encoder, opt, batch, loss_cfg)
            if loss is not None:
                losses.append(loss)
                tlog.updates += 1
        tlog.losses.append(float(np.mean(losses)) if losses else float("nan"))
        log.info("repr epoch %d loss %.4f", epoch, tlog.losses[-1])
    return encoder, tlog


def contrastive_loss(encoder: EncoderNet, images: np.ndarray, poses: np.ndarray,
                     loss_cfg: mining.LossConfig) -> tuple[float, np.ndarray] | None:
    """Forward pass, mining and loss; returns (loss, dL/d embedding) or None if nothing was mined."""
    emb = encoder.forward(images)
    pairs = mining.find_positive_pairs(poses, cfg=loss_cfg)
    if not pairs:
        return None
    trip = mining.mine_negative_triplets(emb, pairs, loss_cfg)
    if len(trip) == 0:
        return None
    return mining.circle_loss(emb, trip, loss_cfg)


def contrastive_step(encoder: EncoderNet, opt: Adam, batch, loss_cfg: mining.LossConfig) -> float | None:
    out = contrastive_loss(encoder, batch.images, batch.poses, loss_cfg)
    if out is None:
        return None
    loss, g = out
    encoder.zero_grad()
    encoder.backward(g)
    opt.step([g for _, g in encoder.named_grads()])
    return loss


def head_loss_and_grad(head: HeadMLP, feats: np.ndarray, poses: np.ndarray) -> tuple[float, np.ndarray, int]:
    """Geodesic loss through Gram-Schmidt; degenerate 6D rows are skipped.

    Returns (loss, dL/d head-input, number of skipped rows) and leaves
    parameter gradients in ``head``.
    """
    six = head.forward(feats)
    R, ok = so3.gram_schmidt_6d_masked(six)
    n_bad = int((~ok).sum())
    if n_bad:
        log.warning("skipping %d degenerate 6D outputs", n_bad)
    if not ok.any():
        head.zero_grad()
        return float("nan"), np.zeros_like(feats), n_bad
    loss, gR = so3.geodesic_loss(R[ok], poses[ok])
    g6 = np.zeros_like(six)
    g6[ok] = so3.gram_schmidt_6d_backward(six[ok], gR)
    head.zero_grad()
    gx = head.backward(g6)
    return loss, gx, n_bad


def mean_geodesic_deg(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.degrees(np.mean(so3.geodesic_distance(pred, target, validate=False))))


def train_head(encoder: EncoderNet, cfg: TrainConfig, corpus: Corpus,
               head: HeadMLP | None = None) -> tuple[HeadMLP, TrainLog]:
    """Fit the pose head on frozen embeddings; keep the best validation checkpoint."""
    head = head or HeadMLP(HeadConfig(in_dim=encoder.cfg.embed_dim), seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 200])
    opt = Adam([p for _, p in head.named_params()], lr=cfg.head_lr)
    policy, pix = cfg.augment_policy(), cfg.pixel_cfg()
    val_imgs, val_poses = augmented_split(corpus, "val", policy, cfg.seed)
    val_feats = encoder.embed(val_imgs)
    tlog = TrainLog()
    best_err, best_state, stale = _val_error(head, val_feats, val_poses), head.state(), 0
    train_idx = corpus.indices("train")
    for epoch in range(cfg.head_epochs):
        losses = []
        for idx in _epoch_batches(rng, train_idx, cfg.batch_size):
            batch = make_pair_batch(corpus, idx, policy, pix, rng)
            feats = encoder.forward(batch.images)
            loss, _, bad = head_loss_and_grad(head, feats, batch.poses)
            tlog.skipped += bad
            opt.step([g for _, g in head.named_grads()])
            tlog.updates += 1
            losses.append(loss)
        tlog.losses.append(float(np.nanmean(losses)))
        err = _val_error(head, val_feats, val_poses)
        tlog.val_errors.append(err)
        log.info("head epoch %d loss %.4f val %.2f deg", epoch, tlog.losses[-1], err)
        if err < best_err:
            best_err, best_state, stale, tlog.best_epoch = err, head.state(), 0, epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    head.load_state(best_state)
    return head, tlog


def _val_error(head: HeadMLP, feats: np.ndarray, poses: np.ndarray) -> float:
    R, _ = so3.gram_schmidt_6d_masked(head.forward(feats))
    return mean_geodesic_deg(R, poses)


def supervised_budget(cfg: TrainConfig, corpus: Corpus) -> int:
    return (cfg.epochs + cfg.head_epochs) * _iters_per_epoch(len(corpus.indices("train")), cfg.batch_size)


def train_supervised(cfg: TrainConfig, corpus: Corpus, budget: int | None = None
                     ) -> tuple[EncoderNet, HeadMLP, TrainLog]:
    """End-to-end encoder + head on geodesic loss for exactly ``budget`` updates.

    Same batches and augmentation as the contrastive pipeline; the best
    validation checkpoint (checked once per epoch) is returned.
    """
    encoder = EncoderNet(cfg.encoder_config(corpus.cfg.image_size), seed=cfg.seed)
    head = HeadMLP(HeadConfig(in_dim=encoder.cfg.embed_dim), seed=cfg.seed)
    budget = supervised_budget(cfg, corpus) if budget is None else budget
    rng = np.random.default_rng([cfg.seed, 300])
    opt = Adam([p for _, p in encoder.named_params()] + [p for _, p in head.named_params()], lr=cfg.lr)
    policy, pix = cfg.augment_policy(), cfg.pixel_cfg()
    val_imgs, val_poses = augmented_split(corpus, "val", policy, cfg.seed)
    tlog = TrainLog()

    def val_err():
        return mean_geodesic_deg(predict_pose(encoder, head, val_imgs), val_poses)

    best_err, best = val_err(), (encoder.state(), head.state())
    train_idx = corpus.indices("train")
    epoch = 0
    while tlog.updates < budget:
        losses = []
        for idx in _epoch_batches(rng, train_idx, cfg.batch_size):
            if tlog.updates >= budget:
                break
            batch = make_pair_batch(corpus, idx, policy, pix, rng)
            feats = encoder.forward(batch.images)
            loss, gx, bad = head_loss_and_grad(head, feats, batch.poses)
            tlog.skipped += bad
            encoder.zero_grad()
            encoder.backward(gx)
            opt.step([g for _, g in encoder.named_grads()] + [g for _, g in head.named_grads()])
            tlog.updates += 1
            losses.append(loss)
        tlog.losses.append(float(np.nanmean(losses)))
        err = val_err()
        tlog.val_errors.append(err)
        log.info("supervised epoch %d loss %.4f val %.2f deg", epoch, tlog.losses[-1], err)
        if err < best_err:
            best_err, best, tlog.best_epoch = err, (encoder.state(), head.state()), epoch
        epoch += 1
    encoder.load_state(best[0])
    head.load_state(best[1])
    return encoder, head, tlog
