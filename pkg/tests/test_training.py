"""Optimizer, schedule, losses, and the training loop."""

import numpy as np
import pytest

from qgat.graph import Graph, split_link_prediction, synth_sbm
from qgat.training import (
    AdamWState,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    bce_with_logits,
    build_model,
    cosine_lr,
    cross_entropy_logits,
    link_eval,
    load_checkpoint,
    loss,
    run_training,
    save_checkpoint,
    train,
    write_history_csv,
)
from qgat.autodiff import Tensor


def fixture_graph(seed=0):
    return synth_sbm(30, 2, 0.3, 0.02, 8, 1.0, seed=seed)


def small_cfg(**kw):
    base = dict(model="gat", epochs=12, patience=20, dropout=0.0,
                hidden_dims=[4], heads_per_layer=[2, 2], seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestAdamW:
    def test_zero_grad_zero_decay_leaves_params(self):
        p = {"w": np.array([1.0, -2.0])}
        state = AdamWState()
        adamw_step(p, {"w": np.zeros(2)}, state, lr=0.1)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])
        assert state.step == 1 and "w" in state.m

    def test_single_step_moves_against_gradient(self):
        p = {"w": np.array([1.0])}
        adamw_step(p, {"w": np.array([1.0])}, AdamWState(), lr=0.1, weight_decay=0.0)
        assert p["w"][0] < 1.0

    def test_decoupled_decay_is_multiplicative(self):
        lr, wd = 0.05, 0.2
        p = {"w": np.array([2.0])}
        adamw_step(p, {"w": np.zeros(1)}, AdamWState(), lr=lr, weight_decay=wd)
        assert p["w"][0] == pytest.approx(2.0 * (1 - lr * wd), abs=1e-15)

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(TrainingDivergedError, match="w"):
            adamw_step({"w": np.ones(1)}, {"w": np.array([np.nan])}, AdamWState(), lr=0.1)

    def test_matches_manual_two_steps(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = {"w": np.array([0.5])}
        state = AdamWState()
        grads = [np.array([0.3]), np.array([-0.7])]
        want = 0.5
        m = v = 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g[0]
            v = b2 * v + (1 - b2) * g[0] ** 2
            want -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            adamw_step(p, {"w": g}, state, lr=lr)
        assert p["w"][0] == pytest.approx(want, abs=1e-14)


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1e-2, 1e-4) == pytest.approx(1e-2)
        assert cosine_lr(100, 100, 1e-2, 1e-4) == pytest.approx(1e-4)
        assert cosine_lr(50, 100, 1e-2, 1e-4) == pytest.approx((1e-2 + 1e-4) / 2)

    def test_out_of_range_step(self):
        with pytest.raises(ValueError):
            cosine_lr(101, 100, 1e-2)


class TestLosses:
    def test_confident_correct_prediction_near_zero(self):
        value, _ = loss("node-class", np.array([[10.0, -10.0]]), np.array([0]))
        assert value < 1e-4

    def test_uniform_binary_prediction_is_ln2(self):
        value, _ = loss("multi-label", np.zeros((4, 3)), np.zeros((4, 3)))
        assert value == pytest.approx(np.log(2.0), abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            loss("node-class", np.zeros((2, 3)), np.array([0, 3]))

    def test_bad_binary_targets(self):
        with pytest.raises(ValueError, match="binary"):
            loss("multi-label", np.zeros((1, 2)), np.array([[0.5, 1.0]]))

    @pytest.mark.parametrize("task,labels", [
        ("node-class", np.array([0, 2, 1, 1])),
        ("multi-label", np.random.default_rng(0).integers(0, 2, (4, 3))),
    ])
    def test_gradient_matches_finite_differences(self, task, labels):
        rng = np.random.default_rng(1)
        pred = rng.standard_normal((4, 3))
        _, grad = loss(task, pred, labels)
        step = 1e-6
        for i in range(pred.size):
            orig = pred.ravel()[i]
            pred.ravel()[i] = orig + step
            hi, _ = loss(task, pred, labels)
            pred.ravel()[i] = orig - step
            lo, _ = loss(task, pred, labels)
            pred.ravel()[i] = orig
            fd = (hi - lo) / (2 * step)
            assert grad.ravel()[i] == pytest.approx(fd, abs=1e-6)

    def test_tape_and_op_agree(self):
        rng = np.random.default_rng(2)
        pred = rng.standard_normal((5, 4))
        labels = rng.integers(0, 4, 5)
        via_op, _ = loss("node-class", pred, labels)
        via_tape = cross_entropy_logits(Tensor(pred), labels).item()
        assert via_op == via_tape
        targets = rng.integers(0, 2, (5, 4))
        via_op, _ = loss("multi-label", pred, targets)
        assert via_op == bce_with_logits(Tensor(pred), targets).item()


class TestTrainLoop:
    def test_zero_epochs_returns_initial_evaluation(self):
        g = fixture_graph()
        _, result = run_training(g, small_cfg(epochs=0))
        assert len(result.history) == 1
        assert result.best_epoch == 0

    def test_fixed_seed_reproduces_history_bit_exactly(self):
        g = fixture_graph()
        cfg = small_cfg(model="qgat", epochs=6, dropout=0.5,
                        heads_per_layer=[2, 2], n_qubits=2)
        _, a = run_training(g, cfg)
        _, b = run_training(g, cfg)
        assert len(a.history) == len(b.history)
        for ra, rb in zip(a.history, b.history):
            assert ra.losses == rb.losses
            assert ra.metrics == rb.metrics
            assert ra.lr == rb.lr

    @pytest.mark.parametrize("model", ["qgat", "gat", "gatv2"])
    def test_loss_decreases_over_first_ten_epochs(self, model):
        g = fixture_graph()
        cfg = TrainConfig(model=model, epochs=10, patience=100, seed=0)
        _, result = run_training(g, cfg)
        assert result.history[10].losses["train"] < result.history[0].losses["train"]

    def test_early_stopping_checkpoint_is_validation_argmax(self):
        g = fixture_graph()
        _, result = run_training(g, small_cfg(model="gat", epochs=30, patience=5))
        vals = [r.metrics["val"] for r in result.history]
        assert result.val_metric == max(vals)
        assert vals[result.best_epoch] == max(vals)

    def test_metrics_stay_in_unit_interval(self):
        g = fixture_graph()
        _, result = run_training(g, small_cfg(epochs=8))
        for rec in result.history:
            for value in rec.metrics.values():
                assert 0.0 <= value <= 1.0

    def test_divergence_aborts_with_epoch(self):
        g = fixture_graph()
        cfg = small_cfg(model="gat", epochs=30)
        model = build_model(cfg, g.feature_dim, 2)
        model.layers[0].feat_proj.data[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError, match=r"epoch \d+"):
            train(model, g, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="learning rate"):
            TrainConfig(learning_rate=0.0).validate()
        with pytest.raises(ValueError, match="hidden_dims"):
            TrainConfig(hidden_dims=[8], heads_per_layer=[2, 2, 2]).validate()
        with pytest.raises(ValueError, match="model"):
            TrainConfig(model="gcn").validate()


class TestLinkPrediction:
    def test_memorization_reaches_perfect_hits_at_one(self):
        rng = np.random.default_rng(0)
        g = Graph(rng.standard_normal((10, 4)),
                  [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7],
                   [7, 8], [8, 9], [0, 5], [2, 7], [3, 8]],
                  undirected=True)
        split = split_link_prediction(g, 0.0, 0.0, 1, seed=0)
        cfg = TrainConfig(model="gat", task="link-pred", epochs=300, patience=300,
                          dropout=0.0, learning_rate=0.02, hidden_dims=[8, 8],
                          heads_per_layer=[2, 2], weight_decay=0.0, seed=0)
        model, _ = run_training(split, cfg)
        report = link_eval(model, split, 1)
        assert report["train"]["hits@1"] == 1.0
        assert report["train"]["mrr"] == 1.0

    def test_heldout_eval_reports_both_metrics(self):
        g = fixture_graph()
        split = split_link_prediction(g, 0.1, 0.2, 1, seed=0)
        cfg = TrainConfig(model="gat", task="link-pred", epochs=15, patience=30,
                          dropout=0.0, hidden_dims=[4, 4], heads_per_layer=[2, 2], seed=0)
        model, _ = run_training(split, cfg)
        report = link_eval(model, split, 10)
        for name in ("train", "val", "test"):
            assert set(report[name]) == {"hits@10", "mrr"}
            assert 0.0 <= report[name]["mrr"] <= 1.0


class TestPersistence:
    def test_checkpoint_roundtrip_bit_exact(self, tmp_path):
        g = fixture_graph()
        cfg = small_cfg(model="qgat", epochs=3, heads_per_layer=[2, 2], n_qubits=2)
        model, result = run_training(g, cfg)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, cfg, result.best_state)
        cfg2, state = load_checkpoint(path)
        assert cfg2 == cfg
        for name, arr in result.best_state.items():
            np.testing.assert_array_equal(state[name], arr)
        fresh = build_model(cfg2, g.feature_dim, 2)
        fresh.load_state_dict(state)
        np.testing.assert_array_equal(fresh.forward(g).data, model.forward(g).data)

    def test_history_csv_schema(self, tmp_path):
        g = fixture_graph()
        _, result = run_training(g, small_cfg(epochs=2))
        path = tmp_path / "history.csv"
        write_history_csv(result.history, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,split,loss,metric,lr,seconds"
        assert len(lines) == 1 + 3 * len(result.history)
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] in ("test", "train", "val")


class TestParameterAccounting:
    def test_extra_entangling_layer_adds_three_per_qubit(self):
        g = fixture_graph()
        for n_q in (2, 4):
            cfg_a = small_cfg(model="qgat", n_qubits=n_q, entangling_layers=2)
            cfg_b = small_cfg(model="qgat", n_qubits=n_q, entangling_layers=3)
            a = build_model(cfg_a, g.feature_dim, 2)
            b = build_model(cfg_b, g.feature_dim, 2)
            delta = sum(b.param_counts().values()) - sum(a.param_counts().values())
            assert delta == 3 * n_q * len(cfg_a.heads_per_layer)

    def test_gatv2_exceeds_gat_at_equal_config(self):
        g = fixture_graph()
        gat = build_model(small_cfg(model="gat"), g.feature_dim, 2)
        gatv2 = build_model(small_cfg(model="gatv2"), g.feature_dim, 2)
        assert sum(gatv2.param_counts().values()) > sum(gat.param_counts().values())
