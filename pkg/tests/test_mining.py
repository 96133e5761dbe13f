import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fullrange_hpe import geo, mining, so3
from fullrange_hpe.mining import LossConfig, TripletSet

seeds = st.integers(0, 2**32 - 1)
CFG = LossConfig()


def unit(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_config_defaults_and_validation():
    assert (CFG.gamma, CFG.m, CFG.t_gd, CFG.v) == (80.0, 0.4, 0.8, 0.1)
    for bad in ({"gamma": 0}, {"m": 1.0}, {"t_gd": 1.0}, {"v": 0}):
        with pytest.raises(ValueError):
            LossConfig(**bad)


def test_threshold_radius():
    assert math.degrees(math.acos(CFG.t_gd)) == pytest.approx(36.87, abs=5e-3)


def test_positive_pair_examples():
    assert mining.find_positive_pairs(np.stack([np.eye(3)] * 2)) == [(0, 1)]
    poses = np.stack([np.eye(3), so3.rot_z(math.radians(30)), so3.rot_z(math.radians(-40))])
    pairs = mining.find_positive_pairs(poses)
    assert (0, 1) in pairs and (0, 2) not in pairs
    with pytest.raises(ValueError):
        mining.find_positive_pairs(np.eye(3)[None])


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_pairs_invariant_under_shared_augmentation(seed):
    rng = np.random.default_rng(seed)
    # cluster poses so some pairs clear the threshold
    centre = so3.random_rotations(rng, 1)[0]
    poses = np.stack([so3.euler_to_rotation(rng.normal(scale=0.4, size=3)) @ centre for _ in range(10)])
    aug = geo.Augmentation("compose", rng.uniform(-math.pi, math.pi), rng.uniform(0, math.pi / 2))
    moved = np.stack([geo.transform_pose(R, aug) for R in poses])
    assert mining.find_positive_pairs(poses) == mining.find_positive_pairs(moved)


def _two_point_emb(d_ap, d_an):
    # anchor at e0; positive and negative at chosen Euclidean distances on the unit circle
    def at(d):
        c = 1 - d * d / 2
        return np.array([c, math.sqrt(1 - c * c)])
    return np.stack([[1.0, 0.0], at(d_ap), at(d_an) * [1, -1]])


def test_margin_examples():
    kept = mining.mine_negative_triplets(_two_point_emb(0.5, 0.55), [(0, 1)], LossConfig(v=0.1))
    assert [0, 1, 2] in kept.triplets.tolist()
    dropped = mining.mine_negative_triplets(_two_point_emb(0.5, 0.7), [(0, 1)], LossConfig(v=0.1))
    assert [0, 1, 2] not in dropped.triplets.tolist()
    everything = mining.mine_negative_triplets(_two_point_emb(0.5, 0.7), [(0, 1)], LossConfig(v=1e9))
    assert [0, 1, 2] in everything.triplets.tolist()
    with pytest.raises(ValueError):
        mining.mine_negative_triplets(_two_point_emb(0.5, 0.7), [], CFG)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_triplet_set_invariants(seed):
    rng = np.random.default_rng(seed)
    n = 10
    emb = unit(rng, n, 8)
    pairs = sorted({tuple(sorted(rng.choice(n, 2, replace=False).tolist())) for _ in range(6)})
    ts = mining.mine_negative_triplets(emb, pairs, CFG)
    pos = {(i, j) for i, j in pairs} | {(j, i) for i, j in pairs}
    d = mining.embedding_distances(emb)
    for a, p, q in ts.triplets.tolist():
        assert 0 <= min(a, p, q) and max(a, p, q) < n
        assert (a, p) in pos and (a, q) not in pos and q != a
        assert d[a, p] - d[a, q] + CFG.v > 0
    # every violating combination is kept
    expected = sum(1 for a, p in pos for q in range(n)
                   if q != a and (a, q) not in pos and d[a, p] - d[a, q] + CFG.v > 0)
    assert len(ts) == expected


@pytest.mark.parametrize("sp,sn,expected", [
    (0.6, 0.4, math.log(2.0)),
    (1.0, -1.0, math.log1p(math.exp(-12.8))),
    (0.8, 0.0, math.log1p(math.exp(-9.6) * math.exp(-12.8))),
])
def test_circle_loss_golden(sp, sn, expected):
    loss, _, _ = mining.circle_loss_terms(np.array([sp]), np.array([sn]), 80.0, 0.4)
    assert loss == pytest.approx(expected, rel=1e-6)


def test_golden_magnitudes():
    assert math.log1p(math.exp(-12.8)) == pytest.approx(2.76e-6, rel=2e-3)
    assert math.log1p(math.exp(-22.4)) == pytest.approx(1.87e-10, rel=2e-3)


def test_loss_stable_at_large_logits():
    loss, gp, gn = mining.circle_loss_terms(np.array([-1.0]), np.array([1.0]), 80.0, 0.4)
    assert np.isfinite(loss) and loss > 100
    assert np.all(np.isfinite(gp)) and np.all(np.isfinite(gn))


def test_circle_loss_gradient_batches():
    # alpha weights are detached, so the oracle holds them fixed at the base point
    rng = np.random.default_rng(0)
    cfg = LossConfig()
    worst = 0.0
    for _ in range(100):
        emb = unit(rng, 8, 16)
        pairs = [(0, 1), (2, 3), (4, 5)]
        ts = mining.mine_negative_triplets(emb, pairs, LossConfig(v=10.0))
        g, num = _fd_check_detached(emb, ts, cfg)
        worst = max(worst, np.max(np.abs(g - num)) / np.max(np.abs(num)))
    assert worst < 1e-4


def _fd_check_detached(emb, ts, cfg, h=1e-5):
    _, g = mining.circle_loss(emb, ts, cfg)
    alphas = {}
    t = ts.triplets
    for a in np.unique(t[:, 0]):
        rows = t[t[:, 0] == a]
        ps, ns = np.unique(rows[:, 1]), np.unique(rows[:, 2])
        alphas[int(a)] = (ps, ns, np.maximum(0, 1 + cfg.m - emb[ps] @ emb[a]), np.maximum(0, emb[ns] @ emb[a] + cfg.m))

    def frozen(x):
        total = 0.0
        for a, (ps, ns, ap, an) in alphas.items():
            lp = -cfg.gamma * ap * (x[ps] @ x[a] - (1 - cfg.m))
            ln = cfg.gamma * an * (x[ns] @ x[a] - cfg.m)
            total += np.logaddexp(0.0, np.logaddexp.reduce(lp) + np.logaddexp.reduce(ln))
        return total / len(alphas)

    num = np.zeros_like(emb)
    for idx in np.ndindex(emb.shape):
        e = np.zeros_like(emb)
        e[idx] = h
        num[idx] = (frozen(emb + e) - frozen(emb - e)) / (2 * h)
    return g, num


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(0, 2), st.floats(1e-3, 0.05))
def test_monotone_in_similarities(seed, which, step):
    rng = np.random.default_rng(seed)
    sp = rng.uniform(-1, 1, 3)
    sn = rng.uniform(-1, 1, 3)
    base, _, _ = mining.circle_loss_terms(sp, sn, 80.0, 0.4)
    # hold the weights fixed, as in the gradient
    ap, an = np.maximum(0, 1.4 - sp), np.maximum(0, sn + 0.4)

    def fixed(sp2, sn2):
        lp = -80 * ap * (sp2 - 0.6)
        ln = 80 * an * (sn2 - 0.4)
        return float(np.logaddexp(0, np.logaddexp.reduce(lp) + np.logaddexp.reduce(ln)))

    up_p = sp.copy()
    up_p[which] += step
    up_n = sn.copy()
    up_n[which] += step
    assert fixed(up_p, sn) <= base + 1e-12
    assert fixed(sp, up_n) >= base - 1e-12


def test_loss_nonnegative_and_vanishes():
    rng = np.random.default_rng(2)
    for _ in range(200):
        loss, _, _ = mining.circle_loss_terms(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 5), 80.0, 0.4)
        assert loss >= 0
    loss, _, _ = mining.circle_loss_terms(np.ones(3), -np.ones(3), 80.0, 0.4)
    assert loss < 1e-4


def test_circle_loss_empty_rejected():
    with pytest.raises(ValueError):
        mining.circle_loss(np.eye(3), TripletSet([], np.zeros((0, 3), dtype=np.int64)))


def test_reduction_is_mean_over_anchors():
    emb = unit(np.random.default_rng(5), 6, 4)
    ts = mining.mine_negative_triplets(emb, [(0, 1), (2, 3)], LossConfig(v=10.0))
    total, _ = mining.circle_loss(emb, ts, CFG)
    per = []
    for a in np.unique(ts.triplets[:, 0]):
        rows = ts.triplets[ts.triplets[:, 0] == a]
        ps, ns = np.unique(rows[:, 1]), np.unique(rows[:, 2])
        per.append(mining.circle_loss_terms(emb[ps] @ emb[a], emb[ns] @ emb[a], CFG.gamma, CFG.m)[0])
    assert total == pytest.approx(np.mean(per), rel=1e-12)
    assert ts.n_pos[0] == 1 and ts.n_neg[0] == 4


def test_scarcity_examples():
    assert mining.estimate_anchor_positive_rate(10_000, 360, np.random.default_rng(0)) == 1.0
    assert mining.analytic_anchor_positive_rate(20) == pytest.approx(1.7147e-4, rel=1e-4)
    with pytest.raises(ValueError):
        mining.estimate_anchor_positive_rate(100, 20, np.random.default_rng(0))
