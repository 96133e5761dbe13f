"""Desk-scale comparison runs: contrastive vs supervised, and the augmentation ablation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import mining
from .data import Corpus, CorpusConfig, build_corpus
from .evaluate import evaluate_arrays, model_predictor
from .train import TrainConfig, supervised_budget, train_head, train_representation, train_supervised

log = logging.getLogger(__name__)

ABLATION_POLICIES = ("none", "flip", "rotate", "rotate_flip")


def desk_corpus() -> CorpusConfig:
    return CorpusConfig(n_train=2000, n_val=200, n_test=500, n_anchor_ids=60, n_test_ids=20,
                        n_positive_ids=60, positive_views=2, image_size=16, roll_deg=90.0)


def desk_train() -> TrainConfig:
    return TrainConfig(epochs=30, head_epochs=30, patience=30, rotate_span_deg=360.0)


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=desk_corpus)
    train: TrainConfig = field(default_factory=desk_train)
    loss: mining.LossConfig = field(default_factory=mining.LossConfig)
    supervised_lr: float = 3e-4
    policies: tuple[str, ...] = ABLATION_POLICIES


@dataclass
class SeedResult:
    seed: int
    # policy -> {"original": deg, "fa": deg}, geodesic error of the contrastive pipeline
    contrastive: dict[str, dict[str, float]]
    supervised: dict[str, float]
    seconds: float


def run_contrastive(cfg: TrainConfig, loss_cfg: mining.LossConfig, corpus: Corpus, seed: int) -> dict[str, float]:
    enc, _ = train_representation(cfg, loss_cfg, corpus)
    head, _ = train_head(enc, cfg, corpus)
    return _score(model_predictor(enc, head), corpus, seed)


def run_supervised(cfg: TrainConfig, corpus: Corpus, seed: int, lr: float, budget: int) -> dict[str, float]:
    enc, head, _ = train_supervised(replace(cfg, lr=lr), corpus, budget)
    return _score(model_predictor(enc, head), corpus, seed)


def _score(predict, corpus: Corpus, seed: int) -> dict[str, float]:
    idx = corpus.indices("test")
    imgs, poses = corpus.images[idx], corpus.poses[idx]
    return {v: evaluate_arrays(predict, imgs, poses, v, seed).geodesic_deg for v in ("original", "fa")}


def run_seed(exp: ExperimentConfig, seed: int) -> SeedResult:
    t0 = time.perf_counter()
    corpus = build_corpus(exp.corpus, seed)
    base = replace(exp.train, seed=seed)
    contrastive = {}
    for policy in exp.policies:
        contrastive[policy] = run_contrastive(replace(base, policy=policy), exp.loss, corpus, seed)
        log.info("seed %d %s: %s", seed, policy, contrastive[policy])
    budget = supervised_budget(base, corpus)
    supervised = run_supervised(base, corpus, seed, exp.supervised_lr, budget)
    log.info("seed %d supervised: %s", seed, supervised)
    return SeedResult(seed, contrastive, supervised, time.perf_counter() - t0)


def run_experiment(exp: ExperimentConfig, seeds=(0, 1, 2)) -> list[SeedResult]:
    return [run_seed(exp, s) for s in seeds]


def summary_rows(results: list[SeedResult]) -> list[dict]:
    rows = []
    for r in results:
        for policy, errs in r.contrastive.items():
            rows.append({"seed": r.seed, "model": "contrastive", "policy": policy, **errs})
        rows.append({"seed": r.seed, "model": "supervised", "policy": "rotate_flip", **r.supervised})
    return rows


def mean_fa(results: list[SeedResult], policy: str) -> float:
    return float(np.mean([r.contrastive[policy]["fa"] for r in results]))
