import math

import numpy as np
import pytest

from oracles import finite_difference
from msnilm.data import ApplianceTemplate, Scenario, synth_generate
from msnilm.data import get_activations, sample_negative, sample_positive
from msnilm.data.activations import ActivationSpec
from msnilm.data.shards import pairs_to_arrays
from msnilm.model import ModelConfig, build_model
from msnilm.tensor import ShapeError, Tensor
from msnilm.training import (
    Adam,
    NesterovSGD,
    NumericAbort,
    TrainConfig,
    cross_entropy_loss,
    evaluate_loss,
    mse_loss,
    train,
)

TINY = ModelConfig(channels=4, head_hidden=4, blocks_per_body=[1, 2], dropout=0.1, precision="float64")


def scalar_param(value):
    return Tensor(np.array([value], dtype=np.float64), requires_grad=True)


class TestLosses:
    def test_cross_entropy_ln2(self):
        half = np.full((2, 1, 8), 0.5)
        assert cross_entropy_loss(Tensor(half), half).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_cross_entropy_limit(self):
        loss = cross_entropy_loss(Tensor(np.full(4, 1e-12)), np.zeros(4)).item()
        assert 0 <= loss < 1e-6

    def test_cross_entropy_finite_at_extremes(self):
        loss = cross_entropy_loss(Tensor(np.array([0.0, 1.0])), np.array([1.0, 0.0])).item()
        assert math.isfinite(loss) and loss == pytest.approx(-math.log(1e-7), rel=1e-6)

    def test_cross_entropy_gradient(self, rng):
        p0 = rng.uniform(0.05, 0.95, 10)
        y = rng.uniform(0, 1, 10)
        p = Tensor(p0.copy(), requires_grad=True)
        cross_entropy_loss(p, y).backward()
        closed = (p0 - y) / (p0 * (1 - p0)) / 10
        np.testing.assert_allclose(p.grad, closed, rtol=1e-10)
        num = finite_difference(lambda v: cross_entropy_loss(Tensor(v), y).item(), p0)
        np.testing.assert_allclose(p.grad, num, rtol=1e-6)

    def test_mse(self, rng):
        y = rng.uniform(0, 1, 20)
        assert mse_loss(Tensor(y), y).item() == 0.0
        assert mse_loss(Tensor(y + 0.1), y).item() == pytest.approx(0.01, rel=1e-9)

    def test_mse_gradient(self, rng):
        p0, y = rng.uniform(0, 1, 7), rng.uniform(0, 1, 7)
        p = Tensor(p0.copy(), requires_grad=True)
        mse_loss(p, y).backward()
        np.testing.assert_allclose(p.grad, 2 * (p0 - y) / 7, rtol=1e-12)
        num = finite_difference(lambda v: mse_loss(Tensor(v), y).item(), p0)
        np.testing.assert_allclose(p.grad, num, rtol=1e-6)

    @pytest.mark.parametrize("fn", [cross_entropy_loss, mse_loss])
    def test_shape_mismatch(self, fn):
        with pytest.raises(ShapeError):
            fn(Tensor(np.full(3, 0.5)), np.zeros(4))


class TestAdam:
    def test_zero_gradient(self):
        p = scalar_param(1.5)
        opt = Adam([p])
        p.grad = np.zeros(1)
        opt.step()
        assert p.data[0] == 1.5

    def test_one_step_hand_value(self):
        p = scalar_param(0.0)
        opt = Adam([p], lr=0.001)
        p.grad = np.ones(1)
        opt.step()
        assert p.data[0] == pytest.approx(-0.001 / (1 + 1e-8), abs=1e-15)
        assert opt.step_count == 1

    def test_quadratic_convergence(self):
        p = scalar_param(1.0)
        opt = Adam([p], lr=0.05)
        for _ in range(200):
            opt.zero_grad()
            p.grad = 2 * p.data
            opt.step()
        assert abs(p.data[0]) < 0.1

    def test_shapes_preserved(self, rng):
        model = build_model(TINY, seed=0)
        shapes = [p.shape for p in model.parameters()]
        opt = Adam(model.parameters())
        for p in model.parameters():
            p.grad = rng.standard_normal(p.shape)
        opt.step()
        assert [p.shape for p in model.parameters()] == shapes

    def test_bad_gradient_shape(self):
        p = scalar_param(1.0)
        p.grad = np.ones(2)
        with pytest.raises(ShapeError):
            Adam([p]).step()


class TestNesterov:
    def test_zero_gradient(self):
        p = scalar_param(2.0)
        p.grad = np.zeros(1)
        NesterovSGD([p]).step()
        assert p.data[0] == 2.0

    def test_zero_momentum_is_plain_sgd(self):
        p = scalar_param(2.0)
        p.grad = np.array([0.5])
        NesterovSGD([p], lr=0.1, momentum=0.0).step()
        assert p.data[0] == pytest.approx(1.95)

    @staticmethod
    def steps_to_converge(momentum, lr=0.01):
        p = scalar_param(1.0)
        opt = NesterovSGD([p], lr=lr, momentum=momentum)
        for i in range(1, 20_000):
            p.grad = p.data.copy()  # f = theta^2 / 2
            opt.step()
            if abs(p.data[0]) < 0.01:
                return i
        return math.inf

    def test_momentum_speeds_up_quadratic(self):
        assert self.steps_to_converge(0.9) < self.steps_to_converge(0.0)

    def test_matches_explicit_lookahead(self):
        # run the textbook form with gradients at theta + mu v and compare
        lr, mu = 0.05, 0.9
        theta, v = 1.0, 0.0
        p = scalar_param(1.0)
        opt = NesterovSGD([p], lr=lr, momentum=mu)
        for _ in range(30):
            g = 2 * (theta + mu * v)
            v = mu * v - lr * g
            theta += v
            p.grad = 2 * p.data
            opt.step()
            assert p.data[0] == pytest.approx(theta + mu * v, rel=1e-9, abs=1e-12)


def binary_task(n_windows=96, L=64, seed=0):
    """Single appliance, no noise: normalised targets are exactly 0 or 1."""
    rng = np.random.default_rng(seed)
    sc = Scenario(40_000, [ApplianceTemplate("pulse", 1500.0, (24, 40), (60, 200))])
    res = synth_generate(sc, rng)
    app = res.appliances["pulse"]
    acts = get_activations(app, ActivationSpec(750, 12, 0))
    pairs = []
    for act in acts:
        for p in (sample_positive(res.aggregate, app, act, L, rng), sample_negative(res.aggregate, app, act, L)):
            if p is not None:
                pairs.append(p)
        if len(pairs) >= n_windows:
            break
    x, y, _ = pairs_to_arrays(pairs[:n_windows])
    return x, y


class TestTrain:
    def test_one_batch_reduces_loss(self, rng):
        x, y = binary_task(16)
        model = build_model(TINY, seed=1)
        before = evaluate_loss(model, x, y, "cross_entropy")
        train(model, x, y, TrainConfig(batch_size=16, epochs=1, lr=1e-3, val_fraction=0.0))
        assert evaluate_loss(model, x, y, "cross_entropy") < before

    def test_lr_zero_is_noop(self):
        x, y = binary_task(32)
        model = build_model(TINY, seed=2)
        before = [p.data.copy() for p in model.parameters()]
        for opt in ("adam", "sgd_nesterov"):
            train(model, x, y, TrainConfig(batch_size=8, epochs=2, lr=0.0, optimizer=opt))
            for b, p in zip(before, model.parameters()):
                assert b.tobytes() == p.data.tobytes()

    def test_deterministic_curve(self, tmp_path):
        x, y = binary_task(48)
        cfg = TrainConfig(batch_size=8, epochs=2, seed=5)
        cfg32 = ModelConfig(channels=4, head_hidden=4, blocks_per_body=[1, 2])
        for run in ("a", "b"):
            train(build_model(cfg32, seed=3), x, y, cfg, out_dir=tmp_path / run)
        assert (tmp_path / "a/loss_curve.csv").read_bytes() == (tmp_path / "b/loss_curve.csv").read_bytes()
        assert (tmp_path / "a/checkpoint.bin").read_bytes() == (tmp_path / "b/checkpoint.bin").read_bytes()

    def test_loss_curve_columns(self, tmp_path):
        x, y = binary_task(32)
        res = train(build_model(TINY, seed=0), x, y, TrainConfig(batch_size=8, epochs=2, checkpoint_every=1),
                    out_dir=tmp_path)
        header = (tmp_path / "loss_curve.csv").read_text().splitlines()[0]
        assert header == "step,epoch,train_loss,val_loss"
        assert (tmp_path / "checkpoint_epoch0001.bin").exists()
        assert len(res.curve) == 2 * 4 and res.epochs_run == 2

    def test_nan_abort(self):
        x, y = binary_task(16)
        model = build_model(TINY, seed=0)
        x = x.copy()
        x[3, 5] = np.nan
        with pytest.raises(NumericAbort, match="batch"):
            train(model, x, y, TrainConfig(batch_size=4, epochs=1, val_fraction=0.0))

    def test_empty_and_mismatched(self):
        model = build_model(TINY)
        with pytest.raises(ValueError):
            train(model, np.zeros((0, 8)), np.zeros((0, 8)), TrainConfig())
        with pytest.raises(ShapeError):
            train(model, np.zeros((2, 8)), np.zeros((2, 9)), TrainConfig())

    def test_config_round_trip(self):
        cfg = TrainConfig(batch_size=7, optimizer="sgd_nesterov", lr=0.1)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            TrainConfig(loss="hinge")

    def test_single_appliance_reaches_low_cross_entropy(self):
        x, y = binary_task(96)
        assert set(np.unique(y)) <= {0.0, 1.0}
        cfg = ModelConfig(channels=8, head_hidden=8, blocks_per_body=[1, 2], dropout=0.0)
        model = build_model(cfg, seed=0)
        res = train(model, x, y, TrainConfig(batch_size=16, epochs=50, lr=3e-3, patience=0, val_fraction=0.0))
        assert res.epochs_run <= 50
        assert evaluate_loss(model, x, y, "cross_entropy") < 0.05
