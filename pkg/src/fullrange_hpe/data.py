"""Synthetic corpora and anchor/positive batch assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geo, so3, synth


@dataclass(frozen=True)
class CorpusConfig:
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 500
    n_anchor_ids: int = 60
    n_test_ids: int = 20
    n_positive_ids: int = 60
    positive_views: int = 2
    image_size: int = 32
    pose_range: str = "frontal"     # "frontal" or "grid"
    yaw_deg: float = 90.0
    pitch_deg: float = 45.0
    roll_deg: float = 30.0


@dataclass
class Corpus:
    """Labelled anchors split into train/val/test plus cached positive renders.

    ``positive_base[i, k]`` is positive identity ``positive_ids[i, k]``
    rendered at the yaw and pitch of anchor ``i`` with zero roll; the
    anchor's roll is applied per batch as an image rotation.
    """

    cfg: CorpusConfig
    images: np.ndarray
    poses: np.ndarray
    identities: np.ndarray
    split: np.ndarray
    positive_base: np.ndarray
    positive_ids: np.ndarray
    rolls: np.ndarray

    def indices(self, name: str) -> np.ndarray:
        return np.nonzero(self.split == name)[0]


def sample_poses(cfg: CorpusConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if cfg.pose_range == "frontal":
        e = synth.sample_frontal_poses(rng, n, cfg.yaw_deg, cfg.pitch_deg, cfg.roll_deg)
    elif cfg.pose_range == "grid":
        e = synth.sample_grid_poses(rng, n)
    else:
        raise ValueError(f"unknown pose range {cfg.pose_range!r}")
    return so3.euler_to_rotation(e)


def build_corpus(cfg: CorpusConfig, seed: int) -> Corpus:
    rng = np.random.default_rng([seed, 7])
    n_tv = cfg.n_train + cfg.n_val
    n = n_tv + cfg.n_test
    train_ids = synth.ANCHOR_SEED_BASE + np.arange(cfg.n_anchor_ids)
    test_ids = synth.ANCHOR_SEED_BASE + cfg.n_anchor_ids + np.arange(cfg.n_test_ids)
    identities = np.concatenate([rng.choice(train_ids, n_tv), rng.choice(test_ids, cfg.n_test)])
    split = np.array(["train"] * cfg.n_train + ["val"] * cfg.n_val + ["test"] * cfg.n_test)
    poses = sample_poses(cfg, rng, n)

    scenes = {int(s): synth.sample_identity(int(s)) for s in np.unique(identities)}
    images = synth.render_scenes([scenes[int(s)] for s in identities], poses, cfg.image_size)

    pos_seeds = synth.POSITIVE_SEED_BASE + np.arange(cfg.n_positive_ids)
    pos_scenes = [synth.sample_identity(int(s)) for s in pos_seeds]
    positive_ids = rng.integers(0, cfg.n_positive_ids, size=(n_tv, cfg.positive_views))
    base, rolls = synth.yaw_pitch_pose(poses[:n_tv])
    flat_ids = positive_ids.reshape(-1)
    flat_base = np.repeat(base, cfg.positive_views, axis=0)
    renders = synth.render_scenes([pos_scenes[i] for i in flat_ids], flat_base, cfg.image_size)
    positive_base = renders.reshape(n_tv, cfg.positive_views, *renders.shape[1:])
    return Corpus(cfg, images, poses, identities, split, positive_base,
                  pos_seeds[positive_ids], rolls)


@dataclass
class PairBatch:
    images: np.ndarray      # (2B, H, W, 3): anchors then their positives
    poses: np.ndarray       # (2B, 3, 3)
    sources: list[str]


def make_pair_batch(corpus: Corpus, idx: np.ndarray, policy: geo.AugmentPolicy,
                    pixel_cfg: synth.PixelAugConfig | None, rng: np.random.Generator) -> PairBatch:
    """Anchors ``idx`` plus one generated positive each, sharing one geometric augmentation per pair."""
    b = len(idx)
    view = rng.integers(0, corpus.positive_base.shape[1], size=b)
    augs = [geo.sample_augmentation(policy, rng) for _ in range(b)]
    aug_m = np.stack([geo.plane_matrix(a) for a in augs])
    roll_m = so3.rot_roll(corpus.rolls[idx])[:, :2, :2]

    anchors = corpus.images[idx]
    moved = np.array([a is not None for a in augs])
    if moved.any():
        anchors = anchors.copy()
        anchors[moved] = geo.warp_batch(anchors[moved], aug_m[moved])
    # roll the yaw/pitch render into the anchor's pose, then the shared augmentation, in one resample
    positives = geo.warp_batch(corpus.positive_base[idx, view], aug_m @ roll_m)
    poses = np.stack([geo.transform_pose(R, a, validate=False) for R, a in zip(corpus.poses[idx], augs)])

    images = np.concatenate([anchors, positives])
    if pixel_cfg is not None:
        images = np.stack([synth.pixel_augment(im, rng, pixel_cfg) for im in images])
    return PairBatch(images, np.concatenate([poses, poses]),
                     ["anchor_pool"] * b + ["positive_pool"] * b)


def augmented_split(corpus: Corpus, name: str, policy: geo.AugmentPolicy, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """A fixed geometrically augmented copy of a split (used for validation)."""
    idx = corpus.indices(name)
    rng = np.random.default_rng([seed, 11])
    augs = [geo.sample_augmentation(policy, rng) for _ in idx]
    imgs = geo.warp_batch(corpus.images[idx], np.stack([geo.plane_matrix(a) for a in augs]))
    poses = np.stack([geo.transform_pose(R, a, validate=False) for R, a in zip(corpus.poses[idx], augs)])
    return imgs, poses
