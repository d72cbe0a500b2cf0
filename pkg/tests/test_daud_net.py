"""Network forward/backward, loss identities, Adam, and support selection."""

import numpy as np
import pytest

from gfnoma import daud_net as dn
from gfnoma.errors import (ConfigurationError, ContractViolationError,
                           ShapeMismatchError)


def small_net(input_dim=6, width=8, depth=2, out=4, seed=0, dtype=np.float64):
    shape = dn.NetworkShape(input_dim, width, depth, out)
    return dn.init_params(shape, np.random.default_rng(seed), dtype=dtype)


def fixed_masks(rng, batch, width, depth, drop_prob):
    return [(rng.random((batch, width)) >= drop_prob).astype(np.float64)
            for _ in range(depth)]


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

class TestForward:
    def test_zero_weights_give_uniform_softmax(self):
        params = small_net(out=5)
        for name in params.trainable_names():
            params.tensor(name)[...] = 0.0
        probs, _ = dn.forward(params, np.ones((3, 6)))
        assert np.allclose(probs, 0.2, atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        params = small_net(input_dim=8, width=16, depth=2, out=5)
        x = np.random.default_rng(1).standard_normal((32, 8))
        probs, _ = dn.forward(params, x)
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(probs >= 0)

    def test_train_eval_agree_with_frozen_stats_and_no_dropout(self):
        params = small_net()
        x = np.random.default_rng(2).standard_normal((16, 6))
        # momentum 1.0 copies the batch statistics into the running slots
        train_probs, _ = dn.forward(params, x, train=True, dropout_prob=0.0,
                                    bn_momentum=1.0)
        eval_probs, _ = dn.forward(params, x)
        assert np.max(np.abs(train_probs - eval_probs)) < 1e-6

    def test_train_mode_rejects_single_sample(self):
        params = small_net()
        with pytest.raises(ConfigurationError):
            dn.forward(params, np.ones((1, 6)), train=True)

    def test_dimension_mismatch(self):
        params = small_net()
        with pytest.raises(ShapeMismatchError):
            dn.forward(params, np.ones((4, 7)))

    def test_single_layer_reduces_to_direct_residual_form(self):
        # depth=1: the output layer must consume bn(input fc) + block output
        params = small_net(depth=1)
        x = np.random.default_rng(3).standard_normal((8, 6))
        probs, cache = dn.forward(params, x, train=True, dropout_prob=0.0,
                                  update_running=False)
        a0 = x @ params.w_in.T + params.b_in
        mu, var = a0.mean(0), a0.var(0)
        z0 = params.bn_scale[0] * (a0 - mu) / np.sqrt(var + dn.BN_EPS) \
            + params.bn_shift[0]
        pre = z0 @ params.w_hidden[0].T + params.b_hidden[0]
        mu1, var1 = pre.mean(0), pre.var(0)
        z1 = params.bn_scale[1] * (pre - mu1) / np.sqrt(var1 + dn.BN_EPS) \
            + params.bn_shift[1]
        block = np.maximum(z1, 0)
        logits = (z0 + block) @ params.w_out.T + params.b_out
        expected = np.exp(logits - logits.max(1, keepdims=True))
        expected /= expected.sum(1, keepdims=True)
        assert np.allclose(probs, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# Batch norm
# ---------------------------------------------------------------------------

class TestBatchNorm:
    def run(self, z, scale, shift, **kwargs):
        width = z.shape[1]
        mean = np.zeros(width)
        var = np.ones(width)
        out, _ = dn.batch_norm(z, scale, shift, train=True, running_mean=mean,
                               running_var=var, **kwargs)
        return out

    def test_standardizes(self):
        z = np.random.default_rng(4).standard_normal((256, 5)) * 3.0 + 7.0
        out = self.run(z, np.ones(5), np.zeros(5))
        assert np.max(np.abs(out.mean(0))) <= 1e-7
        assert np.max(np.abs(out.var(0) - 1.0)) <= 1e-4

    def test_constant_feature_collapses_to_shift(self):
        z = np.full((32, 3), 2.5)
        out = self.run(z, np.ones(3), np.full(3, 0.7))
        assert np.allclose(out, 0.7, atol=1e-6)

    def test_scale_and_shift_moments(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((4096, 4))
        out = self.run(z, np.full(4, 2.0), np.full(4, 3.0))
        assert np.max(np.abs(out.mean(0) - 3.0)) < 1e-4
        assert np.max(np.abs(out.std(0) - 2.0)) < 1e-3

    def test_running_stats_update_and_eval_path(self):
        z = np.random.default_rng(6).standard_normal((64, 2)) * 2.0 + 1.0
        mean = np.zeros(2)
        var = np.ones(2)
        dn.batch_norm(z, np.ones(2), np.zeros(2), train=True, running_mean=mean,
                      running_var=var, momentum=1.0)
        assert np.allclose(mean, z.mean(0))
        assert np.allclose(var, z.var(0))
        out, cache = dn.batch_norm(z, np.ones(2), np.zeros(2), train=False,
                                   running_mean=mean, running_var=var)
        assert cache is None
        assert np.max(np.abs(out.mean(0))) < 1e-7


# ---------------------------------------------------------------------------
# ReLU / dropout
# ---------------------------------------------------------------------------

class TestActivations:
    def test_relu_values(self):
        assert np.array_equal(dn.relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
        assert np.all(dn.relu(np.array([-5.0, -0.1])) == 0)

    def test_relu_idempotent(self):
        v = np.random.default_rng(7).standard_normal(100)
        assert np.array_equal(dn.relu(dn.relu(v)), dn.relu(v))

    def test_dropout_off_is_identity(self):
        v = np.random.default_rng(8).standard_normal(50)
        out, mask = dn.dropout(v, 0.0, train=True)
        assert np.array_equal(out, v) and np.all(mask == 1)

    def test_specific_units_dropped(self):
        v = np.ones(8)
        mask = np.array([1, 0, 1, 1, 0, 1, 1, 1], dtype=float)
        out, _ = dn.dropout(v, 0.25, train=True, mask=mask)
        assert out[1] == 0 and out[4] == 0
        assert np.allclose(out[mask == 1], 1.0 / 0.75)

    def test_monte_carlo_rate_and_expectation(self):
        rng = np.random.default_rng(9)
        v = np.ones(1_000_000)
        out, mask = dn.dropout(v, 0.1, train=True, rng=rng)
        drop_rate = 1.0 - mask.mean()
        assert abs(drop_rate - 0.1) < 0.001
        assert abs(out.mean() - 1.0) < 0.01

    def test_eval_mode_identity(self):
        v = np.random.default_rng(10).standard_normal(30)
        out, _ = dn.dropout(v, 0.5, train=False)
        assert np.array_equal(out, v)


# ---------------------------------------------------------------------------
# Support selection
# ---------------------------------------------------------------------------

class TestSelectSupport:
    def test_clear_maxima(self):
        probs = np.array([0.1, 0.4, 0.05, 0.4, 0.05])
        assert np.array_equal(dn.select_support(probs, 2), [1, 3])

    def test_uniform_prefers_low_indices(self):
        assert np.array_equal(dn.select_support(np.full(5, 0.2), 2), [0, 1])

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            probs = rng.random(12)
            k = int(rng.integers(1, 13))
            got = set(dn.select_support(probs, k).tolist())
            oracle = set(np.argsort(-probs)[:k].tolist())
            # under ties the sets may differ; compare total captured mass
            assert probs[list(got)].sum() == pytest.approx(
                probs[list(oracle)].sum(), abs=1e-15)

    def test_scale_invariance_through_softmax(self):
        rng = np.random.default_rng(12)
        logits = rng.standard_normal(10)
        a = dn.select_support(dn.softmax(logits), 3)
        b = dn.select_support(dn.softmax(3.7 * logits), 3)
        c = dn.select_support(dn.softmax(logits[None, :] * 0.2), 3)
        assert np.array_equal(a, b) and np.array_equal(a, c.ravel())

    def test_invalid_k(self):
        with pytest.raises(ConfigurationError):
            dn.select_support(np.ones(4), 5)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def kl_divergence(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


class TestLoss:
    def test_ideal_output_reaches_log_k(self):
        probs = np.array([0.0, 0.5, 0.0, 0.5, 0.0])
        loss = dn.cross_entropy_loss(probs, [1, 3])
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_target_distribution_example(self):
        target = dn.target_distribution(np.array([[1, 3]]), 5)
        assert np.array_equal(target[0], [0, 0.5, 0, 0.5, 0])

    def test_kl_identity_over_random_triples(self):
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(3, 30))
            k = int(rng.integers(1, n))
            support = rng.choice(n, size=k, replace=False)
            probs = rng.random(n) + 1e-6
            probs /= probs.sum()
            target = dn.target_distribution(support[None, :], n)[0]
            j = dn.cross_entropy_loss(probs, support)
            worst = max(worst, abs(kl_divergence(target, probs) - (j - np.log(k))))
        assert worst <= 1e-12

    def test_empty_support_rejected(self):
        with pytest.raises(ConfigurationError):
            dn.cross_entropy_loss(np.ones(3) / 3, [])

    def test_clamp_keeps_loss_finite(self):
        probs = np.array([1.0, 0.0, 0.0])
        loss = dn.cross_entropy_loss(probs, [1])
        assert np.isfinite(loss) and loss == pytest.approx(-np.log(dn.LOSS_CLAMP))


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

class TestBackward:
    def loss_fn(self, params, x, supports, masks):
        probs, _ = dn.forward(params, x, train=True, dropout_prob=0.25,
                              dropout_masks=masks, update_running=False)
        return dn.batch_cross_entropy(probs, supports)

    def test_finite_difference_oracle(self):
        """Central finite differences over every trainable tensor."""
        rng = np.random.default_rng(14)
        params = small_net(input_dim=6, width=8, depth=2, out=4,
                           dtype=np.float64)
        x = rng.standard_normal((4, 6))
        supports = np.array([[0, 2], [1, 3], [0, 1], [2, 3]])
        masks = fixed_masks(rng, 4, 8, 2, 0.25)

        probs, cache = dn.forward(params, x, train=True, dropout_prob=0.25,
                                  dropout_masks=masks, update_running=False)
        grads = dn.backward(params, cache, supports)

        h = 1e-5
        worst = 0.0
        for name in params.trainable_names():
            tensor = params.tensor(name)
            numeric = np.zeros_like(tensor)
            it = np.nditer(tensor, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                keep = tensor[idx]
                tensor[idx] = keep + h
                up = self.loss_fn(params, x, supports, masks)
                tensor[idx] = keep - h
                down = self.loss_fn(params, x, supports, masks)
                tensor[idx] = keep
                numeric[idx] = (up - down) / (2 * h)
                it.iternext()
            # Biases feeding batch norm have exactly-zero gradients (mean
            # subtraction removes them); normalize by the larger of the two
            # scales so the comparison stays meaningful there.
            denom = max(np.max(np.abs(numeric)), np.max(np.abs(grads[name])), 1e-6)
            err = np.max(np.abs(grads[name] - numeric)) / denom
            worst = max(worst, err)
        assert worst <= 1e-4

    def test_perfect_prediction_gives_zero_fc_gradients(self):
        params = small_net(out=4)
        x = np.random.default_rng(15).standard_normal((4, 6))
        supports = np.array([[0, 1], [2, 3], [1, 2], [0, 3]])
        _, cache = dn.forward(params, x, train=True, dropout_prob=0.0,
                              update_running=False)
        cache.probs = dn.target_distribution(supports, 4)
        grads = dn.backward(params, cache, supports)
        assert np.max(np.abs(grads["b_out"])) < 1e-10
        assert np.max(np.abs(grads["w_out"])) < 1e-10

    def test_permanently_dropped_unit_has_zero_gradient(self):
        rng = np.random.default_rng(16)
        params = small_net(depth=2)
        x = rng.standard_normal((6, 6))
        supports = np.array([[0, 1]] * 6)
        masks = [np.ones((6, 8)), np.ones((6, 8))]
        masks[1][:, 3] = 0.0  # unit 3 of the last block never fires
        _, cache = dn.forward(params, x, train=True, dropout_prob=0.5,
                              dropout_masks=masks, update_running=False)
        grads = dn.backward(params, cache, supports)
        assert np.max(np.abs(grads["w_hidden2"][3, :])) == 0.0
        assert grads["b_hidden2"][3] == 0.0
        assert grads["bn2_scale"][3] == 0.0
        assert grads["bn2_shift"][3] == 0.0

    def test_backward_requires_training_cache(self):
        params = small_net()
        with pytest.raises(ContractViolationError):
            dn.backward(params, None, np.array([[0]]))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class TestAdam:
    def one_tensor_params(self):
        params = small_net(input_dim=1, width=1, depth=1, out=1)
        return params

    def test_zero_gradient_is_noop(self):
        params = small_net()
        before = {n: params.tensor(n).copy() for n in params.trainable_names()}
        state = dn.AdamState.for_params(params)
        grads = {n: np.zeros_like(params.tensor(n))
                 for n in params.trainable_names()}
        dn.adam_step(params, grads, state, 1, 1e-3)
        for name, value in before.items():
            assert np.array_equal(params.tensor(name), value)

    def test_zero_learning_rate_is_noop(self):
        params = small_net()
        before = {n: params.tensor(n).copy() for n in params.trainable_names()}
        state = dn.AdamState.for_params(params)
        grads = {n: np.ones_like(params.tensor(n))
                 for n in params.trainable_names()}
        dn.adam_step(params, grads, state, 1, 0.0)
        for name, value in before.items():
            assert np.array_equal(params.tensor(name), value)

    def test_constant_gradient_step_magnitude_approaches_lr(self):
        params = self.one_tensor_params()
        state = dn.AdamState.for_params(params)
        lr = 1e-3
        grads = {"w_in": np.array([[0.37]])}
        last = params.w_in.copy()
        for step in range(1, 1001):
            dn.adam_step(params, grads, state, step, lr,
                         eps=1e-8)
            if step == 1000:
                delta = float(np.abs(params.w_in - last)[0, 0])
            last = params.w_in.copy()
        assert abs(delta - lr) / lr < 0.01

    def test_step_must_start_at_one(self):
        params = small_net()
        state = dn.AdamState.for_params(params)
        with pytest.raises(ConfigurationError):
            dn.adam_step(params, {}, state, 0, 1e-3)


# ---------------------------------------------------------------------------
# Ensembling
# ---------------------------------------------------------------------------

class TestEnsemble:
    def test_single_model_identity(self):
        params = small_net()
        x = np.random.default_rng(17).standard_normal((5, 6))
        solo = dn.predict_probabilities(params, x)
        ens, support = dn.ensemble_predict([params], x, 2)
        assert np.allclose(ens, solo, atol=1e-15)
        assert support.shape == (5, 2)

    def test_duplicated_members_match_single(self):
        params = small_net()
        x = np.random.default_rng(18).standard_normal((5, 6))
        solo = dn.predict_probabilities(params, x)
        ens, _ = dn.ensemble_predict([params, params, params], x, 2)
        assert np.max(np.abs(ens - solo)) < 1e-12

    def test_rows_remain_distributions(self):
        a, b = small_net(seed=1), small_net(seed=2)
        x = np.random.default_rng(19).standard_normal((7, 6))
        ens, _ = dn.ensemble_predict([a, b], x, 1)
        assert np.max(np.abs(ens.sum(axis=1) - 1.0)) < 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            dn.ensemble_predict([small_net(), small_net(width=16)],
                                np.ones((1, 6)), 1)
