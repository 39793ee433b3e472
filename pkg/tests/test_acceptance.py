"""Acceptance criteria, each checked at its stated tolerance.

Every test appends one ``PASS/FAIL criterion N: ...`` line to the session
summary before asserting, so a red run still reports what was measured.
"""

import time

import numpy as np
import pytest

import oracles
from sctc import ctd, distill, gradcheck, sta
from sctc import numerics as nx
from sctc.boxes import iou
from sctc.evaluation import average_precision, evaluate
from sctc.fixtures import generate_dataset
from sctc.interaction import spatial_features
from sctc.model import HoiModel, ModelConfig
from sctc.train import MODULE_ARMS, TrainConfig, evaluate_model, run_arm

INSTANCES = 100
SEEDS = (0, 1, 2)
CHAIN = ("mlp-baseline", "+KD", "+KD+STA", "+KD+STA+CTD")


def verdict(criteria, n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    criteria.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(seed=42, num_train=200, num_test=50)


@pytest.fixture(scope="module")
def full_seed0(dataset):
    train, test, vocab = dataset
    cfg = ModelConfig.for_data(vocab, train[0], seed=0, **MODULE_ARMS["+KD+STA+CTD"])
    untrained = evaluate_model(HoiModel(cfg, vocab), test)["full"]
    start = time.perf_counter()
    model, rows, metrics = run_arm(train, test, vocab, MODULE_ARMS["+KD+STA+CTD"], seed=0)
    return untrained, rows, metrics, time.perf_counter() - start


# ---------------------------------------------------------------- criterion 1


def test_gradcheck_all_groups(criteria):
    start = time.perf_counter()
    results = gradcheck.check_model()
    elapsed = time.perf_counter() - start
    worst = max(results, key=lambda r: r.error)
    ok = all(r.error <= gradcheck.TOLERANCE for r in results) and elapsed < 60
    verdict(criteria, 1, ok, f"{len(results)} parameter groups, max relative error "
                             f"{worst.error:.2e} ({worst.group}) <= 1e-4, {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------- criterion 2


def random_box(rng, W, H):
    x1, y1 = rng.uniform(0, W - 10), rng.uniform(0, H - 10)
    return (x1, y1, x1 + rng.uniform(1, W - x1), y1 + rng.uniform(1, H - y1))


def oracle_suite(rng):
    checks = {}

    def run(name, fn):
        checks[name] = 0
        for _ in range(INSTANCES):
            fn()
            checks[name] += 1

    def kd():
        n, d = rng.integers(1, 6), rng.integers(1, 8)
        F, E = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        got = float(distill.kd_loss(nx.Tensor(F), E).data)
        assert got == pytest.approx(oracles.kd_loss(F.tolist(), E.tolist()), rel=1e-12)

    def focal():
        p = rng.uniform(0, 1, size=6)
        p[0] = rng.choice([0.0, 1.0])
        y = rng.integers(0, 2, size=6)
        got = nx.focal_loss(nx.Tensor(p), y.astype(float)).data
        want = [oracles.focal(pi, yi, nx.FOCAL_GAMMA, nx.FOCAL_ALPHA) for pi, yi in zip(p, y)]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)

    def spatial():
        W, H = rng.uniform(50, 400, 2)
        h, o = random_box(rng, W, H), random_box(rng, W, H)
        np.testing.assert_allclose(spatial_features([h], [o], (W, H))[0],
                                   oracles.spatial(h, o, W, H), rtol=1e-12, atol=1e-12)

    def relations():
        K, n = int(rng.integers(1, 9)), 6
        W, H = 200.0, 150.0
        boxes = np.array([random_box(rng, W, H) for _ in range(n)])
        cats = rng.integers(0, 5, n)
        hs, os_ = rng.integers(0, 2, K), rng.integers(2, n, K)
        rel = ctd.build_relations(hs, os_, boxes, cats, 5, (W, H))
        np.testing.assert_array_equal(rel.ins, oracles.instance_relation(hs.tolist(), os_.tolist()))
        np.testing.assert_array_equal(rel.sem, oracles.semantic_relation(cats[os_].tolist(), 5))
        np.testing.assert_allclose(rel.lay, oracles.layout_relation(
            [tuple(b) for b in boxes[hs]], [tuple(b) for b in boxes[os_]], W, H), atol=1e-12)

    def topk():
        scores = rng.integers(0, 5, size=rng.integers(1, 30)).astype(float)
        K = int(rng.integers(1, 40))
        assert sta.select_topk(scores, K).tolist() == oracles.topk(scores.tolist(), K)

    def box_iou():
        a = tuple(int(v) for v in rng.integers(0, 12, 2)) + (0, 0)
        b = tuple(int(v) for v in rng.integers(0, 12, 2)) + (0, 0)
        a = (a[0], a[1], a[0] + int(rng.integers(1, 7)), a[1] + int(rng.integers(1, 7)))
        b = (b[0], b[1], b[0] + int(rng.integers(1, 7)), b[1] + int(rng.integers(1, 7)))
        assert iou(a, b) == pytest.approx(oracles.grid_iou(a, b), abs=1e-12)

    def ap():
        tp = rng.integers(0, 2, size=rng.integers(0, 25)).astype(bool).tolist()
        n = sum(tp) + int(rng.integers(1, 4))
        assert average_precision(tp, n) == pytest.approx(oracles.average_precision(tp, n), abs=1e-12)

    for name, fn in (("kd_loss", kd), ("focal", focal), ("spatial", spatial),
                     ("M_ins/M_sem/M_lay", relations), ("top-K", topk), ("IoU", box_iou),
                     ("AP", ap)):
        run(name, fn)
    return checks


def test_oracle_suite(criteria):
    start = time.perf_counter()
    checks = oracle_suite(np.random.default_rng(2024))
    elapsed = time.perf_counter() - start
    ok = all(v >= INSTANCES for v in checks.values()) and elapsed < 30
    counts = ", ".join(f"{k}={v}" for k, v in checks.items())
    verdict(criteria, 2, ok, f"oracle agreement on {counts} in {elapsed:.1f}s < 30s")


# ---------------------------------------------------------------- criterion 3


def sta_params(rng, d=4):
    p = {}
    for name in ("sta.f_i", "sta.f_h", "sta.f_o"):
        p[f"{name}.W"] = nx.Tensor(rng.normal(size=(d, d)))
        p[f"{name}.b"] = nx.Tensor(rng.normal(size=d))
    return p


def fusion_params(rng):
    p = {}
    width = 0
    for key, fan_in, out in (("ins", 2, ctd.D_INS), ("sem", 5, ctd.D_SEM), ("lay", 8, ctd.D_LAY)):
        p[f"ctd.embed_{key}.W"] = nx.Tensor(rng.normal(size=(fan_in, out)))
        p[f"ctd.embed_{key}.b"] = nx.Tensor(rng.normal(size=out))
        width += out
    p["ctd.fuse.0.W"] = nx.Tensor(rng.normal(size=(width, ctd.FUSE_HIDDEN)) * 0.3)
    p["ctd.fuse.0.b"] = nx.Tensor(rng.normal(size=ctd.FUSE_HIDDEN))
    p["ctd.fuse.1.W"] = nx.Tensor(rng.normal(size=(ctd.FUSE_HIDDEN, 1)) * 3)
    p["ctd.fuse.1.b"] = nx.Tensor(rng.normal(size=1))
    return p


def random_relations(rng, K):
    boxes = np.array([random_box(rng, 200.0, 150.0) for _ in range(8)])
    cats = rng.integers(0, 5, 8)
    hs, os_ = rng.integers(0, 3, K), rng.integers(3, 8, K)
    return ctd.build_relations(hs, os_, boxes, cats, 5, (200.0, 150.0)), hs, os_, boxes, cats


def invariant_suite(rng):
    worst_rowsum = 0.0
    for _ in range(INSTANCES):
        n = int(rng.integers(1, 8))
        p = sta_params(rng)
        nu_h, nu_o, e = (rng.normal(size=(n, 4)) for _ in range(3))

        zeroed = dict(p, **{"sta.f_i.W": nx.Tensor(np.zeros((4, 4))),
                            "sta.f_i.b": nx.Tensor(np.zeros(4))})
        s = sta.sta_forward(nx.Tensor(nu_h), nx.Tensor(nu_o), nx.Tensor(e), zeroed)
        np.testing.assert_array_equal(s.nu_h_hat.data, nu_h)
        np.testing.assert_array_equal(s.nu_o_hat.data, nu_o)

        base = sta.sta_forward(nx.Tensor(nu_h), nx.Tensor(nu_o), nx.Tensor(e), p).nu_hoi.data
        j = int(rng.integers(n))
        others = np.arange(n) != j
        h2, o2, e2 = nu_h.copy(), nu_o.copy(), e.copy()
        for arr in (h2, o2, e2):
            arr[others] = rng.normal(size=arr[others].shape) * 10
        moved = sta.sta_forward(nx.Tensor(h2), nx.Tensor(o2), nx.Tensor(e2), p).nu_hoi.data
        np.testing.assert_array_equal(moved[j], base[j])

        K = int(rng.integers(1, 10))
        rel, hs, os_, boxes, cats = random_relations(rng, K)
        for m in (rel.ins, rel.sem):
            np.testing.assert_array_equal(m, m.transpose(1, 0, 2))

        fp = fusion_params(rng)
        adj = ctd.fuse_adjacency(rel, fp)
        worst_rowsum = max(worst_rowsum, float(np.abs(adj.data.sum(axis=1) - 1).max()))

        perm = rng.permutation(K)
        rel_p = ctd.build_relations(hs[perm], os_[perm], boxes, cats, 5, (200.0, 150.0))
        adj_p = ctd.fuse_adjacency(rel_p, fp)
        np.testing.assert_allclose(adj_p.data, adj.data[np.ix_(perm, perm)], rtol=1e-12, atol=1e-15)
        nu = rng.normal(size=(K, 6))
        a = ctd.ctd_update(nx.Tensor(nu), adj).data
        b = ctd.ctd_update(nx.Tensor(nu[perm]), adj_p).data
        np.testing.assert_allclose(b, a[perm], rtol=1e-12, atol=1e-12)
    assert worst_rowsum <= 1e-9
    return worst_rowsum


def ap_rescaling_instances(rng, dataset):
    from sctc.decoder import HoiPrediction
    _, test, vocab = dataset
    scenes = test[:10]
    transforms = (lambda s: 7 * s + 3, lambda s: s ** 3, np.exp, lambda s: np.log(s + 1e-6),
                  lambda s: np.tanh(4 * s))
    reps = INSTANCES // len(transforms)
    for _ in range(reps):
        preds = {}
        for sc in scenes:
            preds[sc.id] = []
            for g in sc.gt_triplets:
                for a, o in vocab.hois:
                    if o == g.object_category and rng.random() < 0.5:
                        jitter = rng.normal(0, 3, 4)
                        hb = tuple(np.add(g.human_box, jitter))
                        preds[sc.id].append(HoiPrediction(
                            sc.id, 0, hb, g.object_box, o, a, 0.5, 0.5,
                            float(rng.integers(1, 20)) / 20))
        base = evaluate(preds, scenes, vocab)
        for f in transforms:
            scaled = {k: [HoiPrediction(p.scene_id, p.proposal, p.human_box, p.object_box,
                                        p.object_category, p.action, p.action_prob,
                                        p.interactiveness, float(f(p.score))) for p in v]
                      for k, v in preds.items()}
            assert evaluate(scaled, scenes, vocab) == base
    return reps * len(transforms)


def test_invariants(criteria, dataset):
    rng = np.random.default_rng(7)
    worst = invariant_suite(rng)
    rescalings = ap_rescaling_instances(rng, dataset)
    verdict(criteria, 3, True,
            f"STA skip identity, cross-pair independence, M_ins/M_sem symmetry, "
            f"CTD permutation equivariance over {INSTANCES} instances; adjacency row sums "
            f"within {worst:.1e} <= 1e-9; AP unchanged under {rescalings} monotone rescalings")


# ---------------------------------------------------------------- criterion 4


def test_end_to_end(criteria, full_seed0):
    untrained, rows, metrics, elapsed = full_seed0
    ok = (metrics["full"] >= 0.60 and len(rows) <= 10 and elapsed < 600 and untrained < 0.10)
    verdict(criteria, 4, ok, f"full mAP {metrics['full']:.3f} >= 0.60 after {len(rows)} epochs "
                             f"in {elapsed:.0f}s < 600s; untrained {untrained:.3f} < 0.10")


# ---------------------------------------------------------------- criterion 5


def test_ablation_ordering(criteria, dataset, full_seed0):
    train, test, vocab = dataset
    scores = {arm: [] for arm in CHAIN}
    for arm in CHAIN:
        for seed in SEEDS:
            if arm == "+KD+STA+CTD" and seed == 0:
                scores[arm].append(full_seed0[2]["full"])
            else:
                scores[arm].append(run_arm(train, test, vocab, MODULE_ARMS[arm], seed)[2]["full"])
    means = [float(np.mean(scores[a])) for a in CHAIN]
    ok = all(a <= b for a, b in zip(means, means[1:])) and means[-1] >= means[0] + 0.03
    chain = " <= ".join(f"{a} {m:.3f}" for a, m in zip(CHAIN, means))
    verdict(criteria, 5, ok, f"mean full mAP over seeds {SEEDS}: {chain}; "
                             f"gain {means[-1] - means[0]:+.3f} >= +0.03")


# ---------------------------------------------------------------- criterion 6


def test_determinism(criteria, dataset, tmp_path):
    train, test, vocab = dataset
    outs = []
    for k in range(2):
        model, rows, metrics = run_arm(train[:40], test[:20], vocab, {}, seed=11,
                                       train_cfg=TrainConfig(epochs=2))
        model.save(tmp_path / f"run{k}.bin")
        outs.append(((tmp_path / f"run{k}.bin").read_bytes(), rows, metrics))
    ok = outs[0] == outs[1]
    verdict(criteria, 6, ok, f"two runs give byte-identical checkpoints ({len(outs[0][0])} bytes), "
                             f"loss logs and metrics")
