import math

import numpy as np
import pytest

from chanode import autodiff as ad
from chanode.autodiff import Tensor
from chanode.channel import ChannelScenario, ObservationConfig, build_dataset
from chanode.network import init_params, labels_to_sequence
from chanode.training import (AdaMax, TrainConfig, TrainingError, adamax_step, evaluate, fit_arrays,
                              lr_at_epoch, mse_loss, net_config_for, nmse, nmse_db,
                              per_sample_nmse, train)


def complex_batch(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def loop_mse(pred, label):
    B, N, Td = label.shape
    s = 0.0
    for m in range(B):
        for i in range(N):
            for n in range(Td):
                d = label[m, i, n] - pred[m, i, n]
                s += d.real ** 2 + d.imag ** 2
    return s / (B * N * Td)


def loop_nmse(pred, label):
    ratios = []
    for m in range(label.shape[0]):
        num = sum(abs(label[m].flat[j] - pred[m].flat[j]) ** 2 for j in range(label[m].size))
        den = sum(abs(v) ** 2 for v in label[m].flat)
        ratios.append(num / den)
    return sum(ratios) / len(ratios)


class TestMse:
    def test_identical(self, rng):
        H = complex_batch(rng, (2, 3, 4))
        assert mse_loss(H, H) == 0.0

    def test_three_four_five(self):
        assert mse_loss(np.zeros((1, 1, 1), complex), np.full((1, 1, 1), 3 + 4j)) == pytest.approx(25.0)

    def test_loop_oracle(self, rng):
        P, L = complex_batch(rng, (4, 3, 5)), complex_batch(rng, (4, 3, 5))
        assert mse_loss(P, L) == pytest.approx(loop_mse(P, L), rel=1e-12)

    def test_stacked_matches_complex(self, rng):
        P, L = complex_batch(rng, (4, 3, 5)), complex_batch(rng, (4, 3, 5))
        t = mse_loss(Tensor(labels_to_sequence(P)), Tensor(labels_to_sequence(L)))
        assert t.item() == pytest.approx(mse_loss(P, L), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeError):
            mse_loss(np.zeros((1, 2, 3)), np.zeros((1, 3, 2)))


class TestNmse:
    def test_perfect(self, rng):
        H = complex_batch(rng, (3, 4, 2))
        assert nmse(H, H) == 0.0
        assert nmse_db(H, H) == -math.inf

    def test_zero_predictor(self, rng):
        H = complex_batch(rng, (3, 4, 2))
        assert nmse(np.zeros_like(H), H) == pytest.approx(1.0)
        assert nmse_db(np.zeros_like(H), H) == pytest.approx(0.0, abs=1e-12)

    def test_double(self, rng):
        H = complex_batch(rng, (3, 4, 2))
        assert nmse(2 * H, H) == pytest.approx(1.0)

    def test_loop_oracle(self, rng):
        P, L = complex_batch(rng, (5, 3, 4)), complex_batch(rng, (5, 3, 4))
        assert nmse(P, L) == pytest.approx(loop_nmse(P, L), rel=1e-12)

    def test_zero_label_excluded(self, rng):
        L = complex_batch(rng, (3, 2, 2))
        L[1] = 0
        with pytest.warns(RuntimeWarning, match="1 zero-norm"):
            value = nmse(np.zeros_like(L), L)
        assert value == pytest.approx(1.0)
        assert np.isnan(per_sample_nmse(np.zeros_like(L), L)[1])

    def test_bound_against_mse(self, rng):
        for _ in range(20):
            P, L = complex_batch(rng, (6, 3, 4)), complex_batch(rng, (6, 3, 4)) * rng.uniform(0.1, 3)
            min_norm = np.min(np.sum(np.abs(L) ** 2, axis=(1, 2)))
            assert nmse(P, L) <= mse_loss(P, L) * L.size / min_norm + 1e-12


class TestAdaMax:
    def test_first_step_is_sign(self, rng):
        g = rng.standard_normal(10) * 10.0 ** rng.integers(-3, 6, size=10)
        p = Tensor(rng.standard_normal(10), requires_grad=True)
        before = p.data.copy()
        opt = AdaMax([p])
        adamax_step(opt, [g], 0.004)
        np.testing.assert_allclose(p.data - before, -0.004 * np.sign(g), rtol=1e-8)

    def test_zero_gradient_no_move(self, rng):
        p = Tensor(rng.standard_normal(4), requires_grad=True)
        before = p.data.copy()
        opt = AdaMax([p])
        for _ in range(5):
            opt.step(0.01, [np.zeros(4)])
        np.testing.assert_array_equal(p.data, before)

    def test_groups_independent(self, rng):
        a, b = Tensor(np.zeros(3), requires_grad=True), Tensor(np.zeros(2), requires_grad=True)
        opt = AdaMax([a, b])
        ga = rng.standard_normal(3)
        opt.step(0.1, [ga, np.zeros(2)])
        opt.step(0.1, [ga, np.zeros(2)])
        assert not b.data.any()
        solo = Tensor(np.zeros(3), requires_grad=True)
        o2 = AdaMax([solo])
        o2.step(0.1, [ga])
        o2.step(0.1, [ga])
        np.testing.assert_array_equal(a.data, solo.data)

    def test_infinity_norm_state(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        opt = AdaMax([p], 0.9, 0.999)
        opt.step(0.1, [np.array([2.0])])
        opt.step(0.1, [np.array([-1.0])])
        assert opt.u[0][0] == pytest.approx(max(0.999 * 2.0, 1.0))
        assert opt.m[0][0] == pytest.approx(0.9 * 0.2 + 0.1 * -1.0)
        assert opt.t == 2


class TestSchedule:
    @pytest.mark.parametrize("epoch,lr", [(0, 0.004), (49, 0.004), (50, 0.002), (150, 0.0005)])
    def test_halving(self, epoch, lr):
        assert lr_at_epoch(epoch) == pytest.approx(lr, rel=1e-15)

    def test_negative(self):
        with pytest.raises(ValueError):
            lr_at_epoch(-1)


def desk_mini(seed=0, count=120, snr=None):
    s = ChannelScenario(N=4, Tu=4, Td=4)
    return build_dataset(s, ObservationConfig(r=0.5, snr_db=snr), count, seed=seed)


class TestTrain:
    def test_zero_epochs(self):
        ds = desk_mini()
        cfg = net_config_for(ds, L=8)
        params, metrics = train(ds, cfg, TrainConfig(epochs=0, seed=5))
        fresh = init_params(cfg, 5)
        assert len(metrics) == 0
        assert all(np.array_equal(a.data, b.data) for a, b in zip(params.tensors(), fresh.tensors()))

    def test_deterministic(self):
        ds = desk_mini(snr=20.0)
        cfg = net_config_for(ds, L=8)
        tc = TrainConfig(epochs=3, batch_size=16, seed=2)
        p1, m1 = train(ds, cfg, tc)
        p2, m2 = train(ds, cfg, tc)
        assert m1.train_loss == m2.train_loss and m1.val_nmse == m2.val_nmse
        assert all(np.array_equal(a.data, b.data) for a, b in zip(p1.tensors(), p2.tensors()))

    @pytest.mark.slow
    def test_loss_decreases_over_first_epochs(self):
        # desk geometry with default network and optimizer, fewer samples
        wins = 0
        for seed in range(10):
            ds = build_dataset(ChannelScenario(N=16, Tu=16, Td=16),
                               ObservationConfig(r=0.5, snr_db=None), 400, seed=seed)
            _, m = train(ds, net_config_for(ds), TrainConfig(epochs=10, seed=seed))
            wins += all(b < a for a, b in zip(m.train_loss, m.train_loss[1:]))
        assert wins >= 8

    def test_drops_partial_batch(self):
        ds = desk_mini(count=50)  # 40 training samples
        cfg = net_config_for(ds, L=4, substeps=1)
        _, m = train(ds, cfg, TrainConfig(epochs=1, batch_size=30, seed=0))
        assert len(m) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_aborts(self):
        ds = desk_mini()
        cfg = net_config_for(ds, L=4, substeps=1)
        params = init_params(cfg, 0)
        params.nets["phi2"][0].W.data[:] = 1e300
        X = np.ones((10, cfg.Tu, cfg.in_dim))
        Y = np.ones((10, cfg.Td, cfg.out_dim))
        with pytest.raises(TrainingError, match="epoch 0, batch 0"):
            fit_arrays(X, Y, cfg, TrainConfig(epochs=1, batch_size=10), params=params)

    def test_validation_independent_of_training_rng(self):
        ds = desk_mini(snr=10.0)
        cfg = net_config_for(ds, L=8, substeps=1)
        params = init_params(cfg, 0)
        a = evaluate(params, ds.validation).nmse
        np.random.default_rng(99).standard_normal(100)
        _ = train(ds, cfg, TrainConfig(epochs=1, batch_size=16, seed=4))
        assert evaluate(params, ds.validation).nmse == a


class TestEvaluate:
    def test_zero_model(self):
        ds = desk_mini()
        params = init_params(net_config_for(ds, L=4), 0)
        params.nets["phi2"][0].W.data[:] = 0
        rep = evaluate(params, ds.validation)
        assert rep.nmse_db == pytest.approx(0.0, abs=1e-12)
        assert len(rep.per_block) == 4

    def test_loop_oracle(self):
        ds = desk_mini(snr=20.0)
        params = init_params(net_config_for(ds, L=4), 1)
        rep = evaluate(params, ds.validation)
        from chanode.training import predict
        pred = predict(params, ds.validation.H_obs)
        assert rep.nmse == pytest.approx(loop_nmse(pred, ds.validation.labels), rel=1e-12)
        for n in range(4):
            assert rep.per_block[n] == pytest.approx(
                loop_nmse(pred[:, :, n:n + 1], ds.validation.labels[:, :, n:n + 1]), rel=1e-12)

    def test_prefix_length(self):
        ds = desk_mini()
        params = init_params(net_config_for(ds, L=4), 1)
        assert len(evaluate(params, ds.validation, Td=2).per_block) == 2


def test_kl_weight_changes_gradients():
    ds = desk_mini(snr=20.0)
    cfg = net_config_for(ds, L=4, substeps=1)
    p0, _ = train(ds, cfg, TrainConfig(epochs=1, batch_size=16, seed=0))
    p1, _ = train(ds, cfg, TrainConfig(epochs=1, batch_size=16, seed=0, kl_weight=0.5))
    assert not np.array_equal(p0.nets["phi1"][1].W.data, p1.nets["phi1"][1].W.data)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
