import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sctc import ctd
from sctc import numerics as nx
from sctc.errors import ConfigurationError
from sctc.numerics.gradcheck import analytic_grads, numeric_grad, relative_error

C_O = 5


def fusion_params(seed, relations=ctd.RELATIONS, K=4):
    rng = np.random.default_rng(seed)
    p = {}
    width = 0
    for name, key, fan_in, out in (("IR", "ins", 2, ctd.D_INS), ("SR", "sem", C_O, ctd.D_SEM),
                                   ("LR", "lay", 8, ctd.D_LAY)):
        if name in relations:
            p[f"ctd.embed_{key}.W"] = nx.Parameter(rng.normal(size=(fan_in, out)) * 0.3, f"ctd.embed_{key}.W")
            p[f"ctd.embed_{key}.b"] = nx.Parameter(rng.normal(size=out) * 0.1, f"ctd.embed_{key}.b")
            width += out
    p["ctd.fuse.0.W"] = nx.Parameter(rng.normal(size=(max(width, 1), ctd.FUSE_HIDDEN)) * 0.1, "ctd.fuse.0.W")
    p["ctd.fuse.0.b"] = nx.Parameter(rng.normal(size=ctd.FUSE_HIDDEN) * 0.1, "ctd.fuse.0.b")
    p["ctd.fuse.1.W"] = nx.Parameter(rng.normal(size=(ctd.FUSE_HIDDEN, 1)), "ctd.fuse.1.W")
    p["ctd.fuse.1.b"] = nx.Parameter(rng.normal(size=1), "ctd.fuse.1.b")
    p["ctd.adj_const"] = nx.Parameter(rng.normal(size=(8, 8)), "ctd.adj_const")
    return p


def random_proposals(seed, K, n_det=6, W=200, H=150):
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(0, W - 20, n_det)
    y1 = rng.uniform(0, H - 20, n_det)
    boxes = np.column_stack([x1, y1, x1 + rng.uniform(5, 20, n_det), y1 + rng.uniform(5, 20, n_det)])
    cats = rng.integers(0, C_O, n_det)
    hs = rng.integers(0, 2, K)
    os_ = rng.integers(2, n_det, K)
    return hs, os_, boxes, cats, (W, H)


class TestRelations:
    def test_single_proposal(self):
        np.testing.assert_array_equal(ctd.instance_relation([0], [1]), [[[1, 1]]])

    def test_same_human(self):
        m = ctd.instance_relation([0, 0], [1, 2])
        assert m[0, 1].tolist() == [1, 0] and m[1, 0].tolist() == [1, 0]

    def test_semantic_one_hot(self):
        m = ctd.semantic_relation([3, 3, 1], C_O)
        assert m[0, 1].tolist() == [0, 0, 0, 1, 0]
        assert m[0, 2].tolist() == [0] * C_O
        assert np.all(m.sum(axis=-1) <= 1)

    def test_layout_diagonal(self):
        hs, os_, boxes, cats, size = random_proposals(0, 3)
        lay = ctd.layout_relation(boxes[hs], boxes[os_], size)
        for j in range(3):
            f = lay[j, j]
            assert f[:4].tolist() == [0, 0, 0, 0] and f[6] == pytest.approx(f[7])

    def test_layout_swap(self):
        hs, os_, boxes, cats, size = random_proposals(1, 3)
        lay = ctd.layout_relation(boxes[hs], boxes[os_], size)
        np.testing.assert_allclose(lay[1, 0, :2], -lay[0, 1, :2])
        if lay[0, 1, 2] > 0:
            assert (lay[1, 0, 3] - lay[0, 1, 3]) % (2 * math.pi) == pytest.approx(math.pi)

    def test_layout_hand_case(self):
        # union boxes (0,0,4,4) and (2,2,6,6) on a 10x10 image
        lay = ctd.layout_relation([(0, 0, 2, 2), (2, 2, 3, 3)], [(3, 3, 4, 4), (5, 5, 6, 6)], (10, 10))
        assert lay[0, 1, 6] == pytest.approx(0.04) and lay[0, 1, 7] == pytest.approx(0.28)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_loop_oracles(self, K, seed):
        hs, os_, boxes, cats, (W, H) = random_proposals(seed, K)
        rel = ctd.build_relations(hs, os_, boxes, cats, C_O, (W, H))
        np.testing.assert_array_equal(rel.ins, oracles.instance_relation(list(hs), list(os_)))
        np.testing.assert_array_equal(rel.sem, oracles.semantic_relation([int(c) for c in cats[os_]], C_O))
        np.testing.assert_allclose(
            rel.lay, oracles.layout_relation([tuple(b) for b in boxes[hs]],
                                             [tuple(b) for b in boxes[os_]], W, H), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_symmetry_and_diagonal(self, K, seed):
        hs, os_, boxes, cats, size = random_proposals(seed, K)
        rel = ctd.build_relations(hs, os_, boxes, cats, C_O, size)
        for m in (rel.ins, rel.sem):
            np.testing.assert_array_equal(m, m.transpose(1, 0, 2))
        assert np.all(np.diagonal(rel.ins, axis1=0, axis2=1) == 1)
        assert np.all(np.diagonal(rel.sem, axis1=0, axis2=1).sum(axis=0) == 1)


class TestFusion:
    def test_single_proposal_softmax(self):
        rel = ctd.build_relations([0], [1], [(0, 0, 5, 5), (6, 6, 9, 9)], [0, 2], C_O, (10, 10))
        adj = ctd.fuse_adjacency(rel, fusion_params(0))
        np.testing.assert_array_equal(adj.data, [[1.0]])

    def test_equal_fibers_uniform(self):
        K = 4
        rel = ctd.RelationTensors(np.ones((K, K, 2)), np.zeros((K, K, C_O)), np.zeros((K, K, 8)))
        adj = ctd.fuse_adjacency(rel, fusion_params(1))
        np.testing.assert_allclose(adj.data, 1 / K, rtol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_row_stochastic(self, seed):
        hs, os_, boxes, cats, size = random_proposals(seed, 7)
        adj = ctd.fuse_adjacency(ctd.build_relations(hs, os_, boxes, cats, C_O, size),
                                 fusion_params(seed))
        assert np.all(np.abs(adj.data.sum(axis=1) - 1) <= 1e-9)

    @pytest.mark.parametrize("relations", [("IR",), ("SR",), ("LR",), ("IR", "SR")])
    def test_relation_subsets(self, relations):
        hs, os_, boxes, cats, size = random_proposals(2, 4)
        adj = ctd.fuse_adjacency(ctd.build_relations(hs, os_, boxes, cats, C_O, size),
                                 fusion_params(2, relations), relations)
        assert adj.shape == (4, 4)

    def test_learned_constant(self):
        p = fusion_params(3)
        rel = ctd.RelationTensors(np.zeros((3, 3, 2)), None, None)
        adj = ctd.fuse_adjacency(rel, p, ("LE",), "raw")
        np.testing.assert_array_equal(adj.data, p["ctd.adj_const"].data[:3, :3])

    def test_norm_modes(self):
        hs, os_, boxes, cats, size = random_proposals(4, 3)
        rel = ctd.build_relations(hs, os_, boxes, cats, C_O, size)
        p = fusion_params(4)
        raw = ctd.fuse_adjacency(rel, p, norm="raw").data
        np.testing.assert_allclose(ctd.fuse_adjacency(rel, p, norm="sigmoid").data, 1 / (1 + np.exp(-raw)))
        with pytest.raises(ConfigurationError):
            ctd.fuse_adjacency(rel, p, norm="l2")
        with pytest.raises(ConfigurationError):
            ctd.fuse_adjacency(rel, p, relations=())

    def test_fusion_gradcheck(self):
        hs, os_, boxes, cats, size = random_proposals(5, 3)
        rel = ctd.build_relations(hs, os_, boxes, cats, C_O, size)
        p = fusion_params(5)
        w = np.random.default_rng(0).normal(size=(3, 3))
        fn = lambda: (ctd.fuse_adjacency(rel, p) * w).sum()  # noqa: E731
        names = [k for k in p if k not in ("ctd.adj_const", "ctd.fuse.1.b")]
        grads = analytic_grads(fn, [p[k] for k in names])
        rng = np.random.default_rng(1)
        for k, g in zip(names, grads):
            idx = rng.choice(g.size, min(g.size, 12), replace=False)
            num = numeric_grad(fn, p[k], indices=idx)
            assert relative_error(g.reshape(-1)[idx], num) < 1e-6, k

    def test_output_bias_has_no_gradient_under_softmax(self):
        hs, os_, boxes, cats, size = random_proposals(6, 3)
        rel = ctd.build_relations(hs, os_, boxes, cats, C_O, size)
        p = fusion_params(6)
        w = np.random.default_rng(0).normal(size=(3, 3))
        (g,) = analytic_grads(lambda: (ctd.fuse_adjacency(rel, p) * w).sum(), [p["ctd.fuse.1.b"]])
        assert abs(g[0]) < 1e-12


class TestUpdate:
    def test_zero_adjacency_identity(self):
        nu = nx.Tensor(np.random.default_rng(0).normal(size=(3, 4)))
        np.testing.assert_array_equal(ctd.ctd_update(nu, nx.Tensor(np.zeros((3, 3)))).data, nu.data)

    def test_uniform_hand_case(self):
        nu = nx.Tensor([[1.0, 2.0], [3.0, 6.0]])
        out = ctd.ctd_update(nu, nx.Tensor(np.full((2, 2), 0.5))).data
        np.testing.assert_allclose(out, [[1 + 2, 2 + 4], [3 + 2, 6 + 4]])

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        nu, adj = rng.normal(size=(5, 4)), rng.random((5, 5))
        perm = rng.permutation(5)
        a = ctd.ctd_update(nx.Tensor(nu), nx.Tensor(adj)).data
        b = ctd.ctd_update(nx.Tensor(nu[perm]), nx.Tensor(adj[np.ix_(perm, perm)])).data
        np.testing.assert_allclose(b, a[perm], rtol=1e-14, atol=1e-14)
