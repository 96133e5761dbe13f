"""Batch triplet mining on pose labels and Circle Loss with analytic gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import so3

IDENTICAL_SIM = 1.0 - 1e-12


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 80.0
    m: float = 0.4
    t_gd: float = 0.8
    v: float = 0.1

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.m < 1:
            raise ValueError("m must lie in (0, 1)")
        if not -1 < self.t_gd < 1:
            raise ValueError("t_gd must lie in (-1, 1)")
        if self.v <= 0:
            raise ValueError("v must be positive")


@dataclass
class TripletSet:
    positive_pairs: list[tuple[int, int]]
    triplets: np.ndarray                  # (T, 3) int: anchor, positive, negative
    n_pos: dict[int, int] = field(default_factory=dict)
    n_neg: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.triplets)


def find_positive_pairs(poses, sources=None, cfg: LossConfig = LossConfig()) -> list[tuple[int, int]]:
    """Unordered index pairs whose pose similarity ``cos d`` exceeds ``t_gd``.

    Identical poses (generated anchor-positives) are always paired.
    ``sources`` is accepted for bookkeeping symmetry and does not change the
    result.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if len(poses) < 2:
        raise ValueError("need at least two poses")
    sim = so3.pairwise_trace_similarity(poses)
    keep = (sim > cfg.t_gd) | (sim >= IDENTICAL_SIM)
    i, j = np.nonzero(np.triu(keep, k=1))
    return list(zip(i.tolist(), j.tolist()))


def embedding_distances(emb: np.ndarray) -> np.ndarray:
    # unit rows: |a - b| = sqrt(2 - 2 a.b)
    s = emb @ emb.T
    return np.sqrt(np.maximum(2.0 - 2.0 * s, 0.0))


def mine_negative_triplets(emb: np.ndarray, positive_pairs, cfg: LossConfig = LossConfig()) -> TripletSet:
    """Keep (a, p, n) when ``d_ap - d_an + v > 0``: hard and semi-hard negatives.

    Every positive pair is used in both directions.
    """
    if len(positive_pairs) == 0:
        raise ValueError("no positive pairs to mine against")
    emb = np.asarray(emb, dtype=np.float64)
    n = len(emb)
    pos = np.zeros((n, n), dtype=bool)
    for i, j in positive_pairs:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"bad positive pair {(i, j)}")
        pos[i, j] = pos[j, i] = True
    cand = ~pos
    np.fill_diagonal(cand, False)
    d = embedding_distances(emb)

    a_idx, p_idx = np.nonzero(pos)
    # (P, n) mask of kept negatives per directed positive pair
    viol = d[a_idx, p_idx][:, None] - d[a_idx] + cfg.v > 0
    keep = viol & cand[a_idx]
    rows, negs = np.nonzero(keep)
    triplets = np.stack([a_idx[rows], p_idx[rows], negs], axis=1) if len(rows) else np.zeros((0, 3), dtype=np.int64)
    n_pos, n_neg = {}, {}
    for a in np.unique(triplets[:, 0]) if len(triplets) else []:
        t = triplets[triplets[:, 0] == a]
        n_pos[int(a)] = len(np.unique(t[:, 1]))
        n_neg[int(a)] = len(np.unique(t[:, 2]))
    return TripletSet(list(map(tuple, positive_pairs)), triplets.astype(np.int64), n_pos, n_neg)


def circle_loss_terms(sp: np.ndarray, sn: np.ndarray, gamma: float, m: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Circle Loss for one anchor from its positive and negative similarities.

    Returns ``(loss, dL/dsp, dL/dsn)`` with the re-weighting factors held
    constant, as in the original formulation.
    """
    sp = np.asarray(sp, dtype=np.float64)
    sn = np.asarray(sn, dtype=np.float64)
    ap = np.maximum(0.0, 1.0 + m - sp)
    an = np.maximum(0.0, sn + m)
    logit_p = -gamma * ap * (sp - (1.0 - m))
    logit_n = gamma * an * (sn - m)
    lse_p = _logsumexp(logit_p)
    lse_n = _logsumexp(logit_n)
    z = lse_p + lse_n
    loss = float(np.logaddexp(0.0, z))
    sig = 0.5 * (1.0 + math.tanh(0.5 * z))
    gp = sig * np.exp(logit_p - lse_p) * (-gamma * ap)
    gn = sig * np.exp(logit_n - lse_n) * (gamma * an)
    return loss, gp, gn


def _logsumexp(x: np.ndarray) -> float:
    mx = float(np.max(x))
    return mx + math.log(float(np.sum(np.exp(x - mx))))


def circle_loss(emb: np.ndarray, triplet_set: TripletSet, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Mean per-anchor Circle Loss over the mined pairs and its gradient w.r.t. ``emb``.

    For each anchor the positive set is the distinct positives and the
    negative set the distinct negatives appearing in its kept triplets.
    """
    if len(triplet_set) == 0:
        raise ValueError("empty triplet set")
    emb = np.asarray(emb, dtype=np.float64)
    t = triplet_set.triplets
    grad = np.zeros_like(emb)
    anchors = np.unique(t[:, 0])
    total = 0.0
    for a in anchors:  # sorted, so the reduction order is fixed
        rows = t[t[:, 0] == a]
        ps = np.unique(rows[:, 1])
        ns = np.unique(rows[:, 2])
        sp = emb[ps] @ emb[a]
        sn = emb[ns] @ emb[a]
        loss, gp, gn = circle_loss_terms(sp, sn, cfg.gamma, cfg.m)
        total += loss
        grad[a] += gp @ emb[ps] + gn @ emb[ns]
        grad[ps] += gp[:, None] * emb[a]
        grad[ns] += gn[:, None] * emb[a]
    k = len(anchors)
    return total / k, grad / k


def estimate_anchor_positive_rate(n_samples: int, window_deg: float, rng: np.random.Generator) -> float:
    """Monte Carlo chance that two uniform Euler triads agree within ``window/2`` on every angle."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    if not 0 < window_deg <= 360:
        raise ValueError("window must lie in (0, 360]")
    a = rng.uniform(-180.0, 180.0, size=(n_samples, 3))
    b = rng.uniform(-180.0, 180.0, size=(n_samples, 3))
    diff = so3.wrapped_abs_diff_deg(a, b)
    return float(np.mean(np.all(diff <= window_deg / 2.0, axis=1)))


def analytic_anchor_positive_rate(window_deg: float) -> float:
    return (window_deg / 360.0) ** 3
