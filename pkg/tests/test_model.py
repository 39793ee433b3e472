from dataclasses import replace

import numpy as np
import pytest

from sctc import numerics as nx
from sctc.errors import ConfigurationError, LoadError, NumericalError
from sctc.fixtures import generate_dataset
from sctc.model import HoiModel, ModelConfig, init_params
from sctc.train import (MODULE_ARMS, RELATION_ARMS, TrainConfig, evaluate_model, run_arm,
                        train)

SMALL = dict(d_model=16, heads=2, d_ff=16, layers=1, d_sem=4)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(num_train=6, num_test=3, max_distractors=3, d_text=16)


def config(data, **kw):
    train_s, _, vocab = data
    return ModelConfig.for_data(vocab, train_s[0], **{**SMALL, **kw})


def forward_y(model, scene):
    with nx.no_grad():
        return model.forward(scene, compute_loss=False).y_hat.data


class TestConfig:
    def test_baseline_excludes_modules(self, data):
        with pytest.raises(ConfigurationError):
            config(data, mlp_baseline=True, sta=True, ctd=False)

    @pytest.mark.parametrize("kw", [dict(edge="XY"), dict(relations=("IR", "LE")),
                                    dict(relations=()), dict(adj_norm="l1"), dict(top_k=0),
                                    dict(d_model=18), dict(score_rule="sum")])
    def test_invalid(self, data, kw):
        with pytest.raises(ConfigurationError):
            config(data, **kw)

    def test_dict_round_trip(self, data):
        cfg = config(data, relations=("IR", "SR"))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestParameters:
    def test_disabled_modules_have_no_parameters(self, data):
        names = set(init_params(config(data, **MODULE_ARMS["mlp-baseline"])))
        assert not any(n.startswith(("ctd.", "sta.f_")) for n in names)
        assert "fusion.0.W" in names
        full = set(init_params(config(data)))
        assert "fusion.0.W" not in full and "ctd.fuse.0.W" in full

    def test_initialization_independent_of_other_modules(self, data):
        a = init_params(config(data))
        b = init_params(config(data, **MODULE_ARMS["+KD+STA"]))
        for name in b:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_seed_changes_values(self, data):
        a = init_params(config(data, seed=0))
        b = init_params(config(data, seed=1))
        assert not np.array_equal(a["head.W"].data, b["head.W"].data)


class TestForward:
    def test_shapes_and_losses(self, data):
        scene = data[0][0]
        model = HoiModel(config(data), data[2])
        out = model.forward(scene)
        K = len(out.selected.indices)
        assert K == min(32, len(out.pairs))
        assert out.y_hat.shape == (K, model.cfg.num_actions)
        assert np.all((out.y_hat.data > 0) & (out.y_hat.data < 1))
        assert set(out.losses) == {"kd", "pair", "action", "total"}
        tot = sum(float(out.losses[k].data) for k in ("kd", "pair", "action"))
        assert float(out.losses["total"].data) == pytest.approx(tot, rel=1e-12)

    def test_disabling_ctd_matches_kd_sta_arm(self, data):
        scene = data[0][1]
        full = HoiModel(config(data), data[2])
        toggled = HoiModel(replace(full.cfg, ctd=False), data[2], params=full.params)
        arm = HoiModel(config(data, **MODULE_ARMS["+KD+STA"]), data[2])
        np.testing.assert_array_equal(forward_y(toggled, scene), forward_y(arm, scene))
        assert not np.array_equal(forward_y(full, scene), forward_y(arm, scene))

    def test_learned_adjacency_arm(self, data):
        model = HoiModel(config(data, **RELATION_ARMS["LE"]), data[2])
        out = model.forward(data[0][0])
        K = len(out.selected.indices)
        adj = model.params["ctd.adj_const"].data[:K, :K]
        e = np.exp(adj - adj.max(axis=1, keepdims=True))
        np.testing.assert_allclose(out.relations.adj.data, e / e.sum(axis=1, keepdims=True))

    def test_no_decoder_layers_ignores_feature_map(self, data):
        scene = data[0][0]
        model = HoiModel(config(data, layers=0), data[2])
        a = forward_y(model, scene)
        scene2 = replace(scene, feature_map=scene.feature_map + 5.0)
        np.testing.assert_array_equal(a, forward_y(model, scene2))

    def test_top_k_caps_proposals(self, data):
        model = HoiModel(config(data, top_k=3), data[2])
        out = model.forward(data[0][0])
        assert len(out.selected.indices) == 3

    def test_predictions_only_vocabulary(self, data):
        model = HoiModel(config(data), data[2])
        for p in model.predict(data[1][0]):
            data[2].hoi_index(p.action, p.object_category)
            assert 0 <= p.score <= 1


class TestTraining:
    def test_loss_log_and_decrease(self, data):
        model = HoiModel(config(data), data[2])
        rows = train(model, data[0], TrainConfig(epochs=3, batch_size=2))
        assert [r["epoch"] for r in rows] == [1, 2, 3]
        for r in rows:
            assert r["total"] == pytest.approx(r["L_kd"] + r["L_pair"] + r["L_a"], rel=1e-12)
        assert rows[-1]["total"] < rows[0]["total"]

    def test_no_kd_column_zero(self, data):
        model = HoiModel(config(data, kd=False), data[2])
        rows = train(model, data[0], TrainConfig(epochs=2))
        assert all(r["L_kd"] == 0.0 for r in rows)

    def test_weights_in_total(self, data):
        model = HoiModel(config(data, alpha=0.5, beta=2.0, gamma=0.25), data[2])
        for r in train(model, data[0], TrainConfig(epochs=1)):
            assert r["total"] == pytest.approx(0.5 * r["L_kd"] + 2 * r["L_pair"] + 0.25 * r["L_a"],
                                               rel=1e-12)

    def test_nan_names_component(self, data):
        model = HoiModel(config(data), data[2])
        model.params["head.b"].data[:] = np.nan
        with pytest.raises(NumericalError) as err:
            train(model, data[0], TrainConfig(epochs=1))
        assert err.value.component == "action"

    def test_bad_train_config(self, data):
        with pytest.raises(ConfigurationError):
            train(HoiModel(config(data), data[2]), data[0], TrainConfig(epochs=0))

    def test_determinism(self, data, tmp_path):
        outs = []
        for k in range(2):
            model, rows, metrics = run_arm(data[0], data[1], data[2], {}, seed=3,
                                           train_cfg=TrainConfig(epochs=2), base=SMALL)
            model.save(tmp_path / f"c{k}.bin")
            outs.append(((tmp_path / f"c{k}.bin").read_bytes(), rows, metrics))
        assert outs[0] == outs[1]

    def test_disabled_module_settings_do_not_matter(self, data):
        base = dict(SMALL, ctd=False)
        a = run_arm(data[0], data[1], data[2], {"relations": ("IR",), "adj_norm": "raw"}, 1,
                    TrainConfig(epochs=1), base)[2]
        b = run_arm(data[0], data[1], data[2], {}, 1, TrainConfig(epochs=1), base)[2]
        assert a == b


class TestCheckpoint:
    def test_round_trip(self, data, tmp_path):
        model = HoiModel(config(data, seed=5), data[2])
        model.save(tmp_path / "m.bin")
        back = HoiModel.load(tmp_path / "m.bin", data[2])
        assert back.cfg == model.cfg
        for k, p in model.params.items():
            np.testing.assert_array_equal(back.params[k].data, p.data)
        assert evaluate_model(back, data[1]) == evaluate_model(model, data[1])

    def test_dimension_mismatch(self, data, tmp_path):
        model = HoiModel(config(data), data[2])
        model.save(tmp_path / "m.bin")
        other = generate_dataset(num_train=2, num_test=0, d_app=12, d_text=16)
        expect = ModelConfig.for_data(other[2], other[0][0])
        with pytest.raises(LoadError):
            HoiModel.load(tmp_path / "m.bin", other[2], expect=expect)
        wide = generate_dataset(num_train=1, num_test=0, d_text=8)[2]
        with pytest.raises(LoadError):
            HoiModel.load(tmp_path / "m.bin", wide)
