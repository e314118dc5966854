import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from chanode.estimator import (LatentODEExtrapolator, RepeatLastBlock, ZeroPredictor,
                               check_channel_array, check_pair)
from chanode.training import nmse


@pytest.fixture(scope="module")
def arrays(tiny_dataset):
    ds = tiny_dataset
    Tu = ds.scenario.Tu
    return ds.H_obs, ds.H[:, :, Tu:], ds.antenna_set


def small_model(**kw):
    base = dict(latent_dim=4, hidden_width=6, substeps=1, epochs=2, batch_size=8, random_state=3)
    base.update(kw)
    return LatentODEExtrapolator(**base)


class TestValidation:
    def test_promotes_single_sample(self):
        assert check_channel_array(np.ones((2, 3))).shape == (1, 2, 3)

    @pytest.mark.parametrize("bad,match", [
        (np.ones((2, 3, 4, 5)), "dimensions"),
        (np.full((1, 2, 2), np.nan), "NaN"),
        (np.ones((0, 2, 2)), "no samples"),
        ([["a"]], "numeric"),
    ])
    def test_rejects(self, bad, match):
        with pytest.raises(ValueError, match=match):
            check_channel_array(bad)

    def test_pair(self):
        with pytest.raises(ValueError, match="samples"):
            check_pair(np.ones((2, 1, 3)), np.ones((3, 2, 2)))
        with pytest.raises(ValueError, match="more observed"):
            check_pair(np.ones((2, 3, 3)), np.ones((2, 2, 2)))


class TestExtrapolator:
    def test_params_and_clone(self):
        est = small_model(latent_dim=7)
        assert est.get_params()["latent_dim"] == 7
        twin = clone(est)
        assert twin.get_params() == est.get_params() and twin is not est
        assert est.set_params(epochs=5).epochs == 5

    def test_not_fitted(self, arrays):
        with pytest.raises(NotFittedError):
            small_model().predict(arrays[0])

    def test_fit_predict(self, arrays):
        X, y, _ = arrays
        est = small_model().fit(X[:32], y[:32], eval_set=(X[32:], y[32:]))
        assert est.net_config_.N == y.shape[1] and est.n_antennas_in_ == X.shape[1]
        assert len(est.history_) == 2 and len(est.history_.val_nmse) == 2
        pred = est.predict(X[32:])
        assert pred.shape == y[32:].shape and np.iscomplexobj(pred)
        assert est.predict(X[32:], n_blocks=5).shape[2] == 5
        assert est.score(X[32:], y[32:]) == pytest.approx(-10 * np.log10(nmse(pred, y[32:])))

    def test_deterministic(self, arrays):
        X, y, _ = arrays
        a = small_model().fit(X, y).predict(X)
        b = small_model().fit(X, y).predict(X)
        assert np.array_equal(a, b)

    def test_wrong_input_shape(self, arrays):
        X, y, _ = arrays
        est = small_model(epochs=0).fit(X, y)
        with pytest.raises(ValueError, match="shape"):
            est.predict(X[:, :1])


class TestBaselines:
    def test_zero_is_zero_db(self, arrays):
        X, y, _ = arrays
        assert ZeroPredictor().fit(X, y).score(X, y) == pytest.approx(0.0)

    def test_repeat_last(self, arrays):
        X, y, idx = arrays
        est = RepeatLastBlock(antenna_set=idx).fit(X, y)
        pred = est.predict(X)
        np.testing.assert_array_equal(pred[:, idx, 2], X[:, :, -1])
        others = np.setdiff1d(np.arange(y.shape[1]), idx)
        assert np.all(pred[:, others] == 0)

    def test_repeat_last_length_check(self, arrays):
        X, y, idx = arrays
        with pytest.raises(ValueError, match="antenna_set"):
            RepeatLastBlock(antenna_set=list(idx) + [0]).fit(X, y)
