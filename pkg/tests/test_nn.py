import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casediff.exceptions import ShapeError
from casediff.nn import (
    AdamState,
    HiddenLayer,
    MlpModel,
    NetworkSpec,
    TripletLossParams,
    adam_step,
    check_gradient,
    finite_diff_check,
    hidden_stack,
    load_checkpoint,
    mae,
    mse_loss,
    save_checkpoint,
    triplet_margin_loss,
)
from casediff.nn.gradcheck import numerical_gradient, relative_error


def linear_model(weight, bias=0.0):
    spec = NetworkSpec(len(weight), (), 1)
    return MlpModel(spec, [np.array(weight, dtype=float)[:, None]], [np.array([bias])])


def random_model(sizes, rng, dropout=0.0):
    spec = NetworkSpec(sizes[0], hidden_stack(sizes[1:-1], dropout), sizes[-1])
    model = MlpModel.initialize(spec, rng)
    for b in model.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    return model


# -- spec types ---------------------------------------------------------------


class TestSpec:
    def test_rejects_bad_widths_and_rates(self):
        with pytest.raises(ValueError):
            HiddenLayer(0)
        with pytest.raises(ValueError):
            HiddenLayer(4, dropout_rate=1.0)
        with pytest.raises(ValueError):
            HiddenLayer(4, activation="tanh")
        with pytest.raises(ValueError):
            NetworkSpec(0, (), 1)

    def test_inner_spec_ignores_input_dim(self):
        a = NetworkSpec(8, hidden_stack((16, 4)), 1)
        assert a.inner() == a.with_input_dim(16).inner()
        assert a.inner() != NetworkSpec(8, hidden_stack((16, 5)), 1).inner()

    def test_dict_round_trip(self):
        spec = NetworkSpec(3, hidden_stack((5, 2), 0.3), 2)
        assert NetworkSpec.from_dict(spec.to_dict()) == spec

    def test_parameter_shapes_are_checked(self):
        spec = NetworkSpec(2, hidden_stack((3,)), 1)
        with pytest.raises(ShapeError):
            MlpModel(spec, [np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])


# -- forward ------------------------------------------------------------------


class TestForward:
    def test_zero_model_outputs_zero(self):
        spec = NetworkSpec(5, hidden_stack((7, 3)), 2)
        out = MlpModel.zeros(spec).forward(np.random.default_rng(0).normal(size=5))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_identity_layer(self):
        spec = NetworkSpec(2, (), 2)
        model = MlpModel(spec, [np.eye(2)], [np.zeros(2)])
        np.testing.assert_array_equal(model.forward([1.5, -2.0]), [1.5, -2.0])

    def test_matches_hand_rolled_oracle(self):
        model = MlpModel.initialize(NetworkSpec(2, hidden_stack((16,)), 1), np.random.default_rng(7))
        x = np.random.default_rng(7).normal(size=2)
        W1, b1, W2, b2 = (p.tolist() for p in model.parameters())
        hidden = []
        for j in range(16):
            z = b1[j] + sum(x[i] * W1[i][j] for i in range(2))
            hidden.append(z if z > 0 else 0.0)
        expected = b2[0] + sum(hidden[j] * W2[j][0] for j in range(16))
        assert model.forward(x)[0] == pytest.approx(expected, rel=1e-12, abs=1e-14)

    def test_dimension_mismatch(self):
        model = MlpModel.zeros(NetworkSpec(3, (), 1))
        with pytest.raises(ShapeError):
            model.forward(np.zeros(4))

    def test_train_mode_needs_rng(self):
        model = MlpModel.zeros(NetworkSpec(3, hidden_stack((4,), 0.5), 1)).train()
        with pytest.raises(ValueError):
            model.forward(np.zeros(3))

    def test_eval_forward_is_pure(self):
        rng = np.random.default_rng(1)
        model = random_model([4, 8, 2], rng, dropout=0.5)
        x = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(model.forward(x), model.forward(x))

    def test_dropout_expectation_matches_eval(self):
        rng = np.random.default_rng(3)
        model = random_model([3, 6, 1], rng, dropout=0.2)
        x = rng.normal(size=3)
        expected = model.eval().forward(x)[0]
        model.train()
        samples = model.forward(np.tile(x, (20000, 1)), rng)[:, 0]
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - expected) < 3 * stderr

    def test_dropout_uses_inverted_scaling(self):
        spec = NetworkSpec(1, hidden_stack((1,), 0.5), 1)
        model = MlpModel(spec, [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)]).train()
        outs = set(model.forward(np.ones((200, 1)), np.random.default_rng(0))[:, 0].tolist())
        assert outs == {0.0, 2.0}


# -- backward -----------------------------------------------------------------


class TestBackward:
    def test_linear_case(self):
        model = linear_model([0.3])
        out, cache = model.forward_with_cache(np.array([2.0]))
        grads, dx = model.backward(cache, np.ones(1))
        np.testing.assert_array_equal(grads[0], [[2.0]])
        np.testing.assert_array_equal(grads[1], [1.0])
        np.testing.assert_array_equal(dx, [0.3])

    def test_zero_upstream(self):
        rng = np.random.default_rng(2)
        model = random_model([3, 5, 4, 2], rng)
        _, cache = model.forward_with_cache(rng.normal(size=(4, 3)))
        grads, dx = model.backward(cache, np.zeros((4, 2)))
        assert all(not g.any() for g in grads)
        assert not dx.any()

    def test_requires_matching_forward(self):
        rng = np.random.default_rng(0)
        a, b = random_model([2, 3, 1], rng), random_model([2, 3, 1], rng)
        _, cache = a.forward_with_cache(np.zeros(2))
        with pytest.raises(ValueError):
            b.backward(cache, np.ones(1))
        with pytest.raises(ValueError):
            a.backward("not a cache", np.ones(1))

    def test_stale_cache_rejected_after_update(self):
        model = linear_model([1.0])
        _, cache = model.forward_with_cache(np.array([1.0]))
        grads, _ = model.backward(cache, np.ones(1))
        adam_step(model, grads, AdamState.for_model(model))
        with pytest.raises(ValueError):
            model.backward(cache, np.ones(1))

    def test_random_network_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        model = random_model([4, 8, 1], rng)
        X = rng.uniform(-1, 1, size=(3, 4))
        target = rng.normal(size=(3, 1))
        report = finite_diff_check(model, X, lambda o: mse_loss(o, target), 1e-4, 1e-5)
        assert report.passed, report.per_parameter

    def test_train_mode_with_replayed_mask(self):
        rng = np.random.default_rng(5)
        model = random_model([3, 6, 5, 1], rng, dropout=0.3).train()
        X = rng.uniform(-1, 1, size=(4, 3))
        _, cache = model.forward_with_cache(X, rng)
        target = rng.normal(size=(4, 1))
        report = finite_diff_check(model, X, lambda o: mse_loss(o, target), masks=cache.masks)
        assert report.passed
        with pytest.raises(ValueError):
            finite_diff_check(model, X, lambda o: mse_loss(o, target))

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        widths=st.lists(st.integers(1, 32), min_size=0, max_size=3),
        d_in=st.integers(1, 6),
        d_out=st.integers(1, 3),
    )
    def test_gradient_property(self, seed, widths, d_in, d_out):
        rng = np.random.default_rng(seed)
        model = random_model([d_in, *widths, d_out], rng)
        X = rng.uniform(-1, 1, size=(2, d_in))
        target = rng.normal(size=(2, d_out))
        out, cache = model.forward_with_cache(X)
        grads, _ = model.backward(cache, mse_loss(out, target)[1])
        objective = lambda: mse_loss(model.forward_with_cache(X)[0], target)[0]  # noqa: E731
        for p, g in zip(model.parameters(), grads):
            numeric = numerical_gradient(objective, p)
            # central differences carry ~1e-11 roundoff, which dominates entries just above the floor
            ok = (relative_error(g, numeric) < 1e-4) | (np.abs(g - numeric) < 1e-10)
            assert ok.all()


# -- losses -------------------------------------------------------------------


class TestLosses:
    @pytest.mark.parametrize(
        "p, t, loss", [([3.0], [3.0], 0.0), ([0.0, 0.0], [1.0, 1.0], 1.0), ([2.0], [5.0], 9.0)]
    )
    def test_mse_values(self, p, t, loss):
        assert mse_loss(p, t)[0] == loss

    def test_mse_gradient(self):
        np.testing.assert_array_equal(mse_loss([2.0], [5.0])[1], [-6.0])

    def test_mse_length_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss([1.0, 2.0], [1.0])

    @pytest.mark.parametrize("p, t, err", [([1, 2], [1, 2], 0.0), ([0], [10], 10.0), ([1, 4], [2, 2], 1.5)])
    def test_mae_values(self, p, t, err):
        assert mae(p, t) == err

    def test_mae_rejects_empty(self):
        with pytest.raises(ValueError):
            mae([], [])

    @pytest.mark.parametrize(
        "a, p, n, loss",
        [([0.5, -1.0], [0.5, -1.0], [0.5, -1.0], 1.0), ([0.0], [1.0], [4.0], 0.0), ([0.0], [2.0], [1.0], 2.0)],
    )
    def test_triplet_values(self, a, p, n, loss):
        assert triplet_margin_loss(a, p, n)[0] == loss

    def test_triplet_clamped_has_zero_gradient(self):
        _, grads = triplet_margin_loss([0.0], [1.0], [4.0])
        assert all(not g.any() for g in grads)

    def test_triplet_kink_subgradient_is_zero(self):
        _, (ga, gp, gn) = triplet_margin_loss([1.0, 2.0], [1.0, 2.0], [1.0, 2.0])
        np.testing.assert_array_equal(ga, [0.0, 0.0])
        np.testing.assert_array_equal(gp, [0.0, 0.0])

    def test_triplet_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            triplet_margin_loss([0.0], [0.0, 1.0], [0.0])

    def test_triplet_margin_must_be_positive(self):
        with pytest.raises(ValueError):
            TripletLossParams(margin=0.0)

    def test_triplet_gradient_away_from_kinks(self):
        a = np.array([0.0, 1.0, -2.0])
        p = np.array([0.4, 1.5, -1.3])
        n = np.array([-0.7, 0.5, -2.6])
        params = TripletLossParams(margin=3.0)
        _, grads = triplet_margin_loss(a, p, n, params)
        report = check_gradient(lambda *v: triplet_margin_loss(*v, params)[0], [a, p, n], grads)
        assert report.passed

    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
        st.floats(1e-3, 10.0),
    )
    def test_triplet_non_negative_and_zero_when_separated(self, a, p, n, margin):
        params = TripletLossParams(margin)
        loss, _ = triplet_margin_loss(a, p, n, params)
        assert loss >= 0.0
        d_ap = np.abs(np.subtract(a, p)).sum()
        d_an = np.abs(np.subtract(a, n)).sum()
        if d_an >= d_ap + margin:
            assert loss == 0.0


# -- Adam ---------------------------------------------------------------------


def scalar_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(p)
    return out


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        model = linear_model([1.0, -2.0], 0.5)
        before = [p.copy() for p in model.parameters()]
        state = AdamState.for_model(model)
        adam_step(model, [np.zeros_like(p) for p in before], state)
        assert state.step_count == 1
        for a, b in zip(before, model.parameters()):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("g", [3.0, -0.25, 1e-3])
    def test_first_step_moves_by_learning_rate(self, g):
        model = linear_model([0.0])
        state = AdamState.for_model(model, learning_rate=1e-4)
        adam_step(model, [np.array([[g]]), np.zeros(1)], state)
        step = model.weights[0][0, 0]
        assert step == pytest.approx(-1e-4 * abs(g) / (abs(g) + 1e-8) * math.copysign(1, g), rel=1e-12)

    def test_three_constant_steps(self):
        # lr * g / (g + eps) per step with g = 0.5, lr = 0.1
        model = linear_model([1.0])
        state = AdamState.for_model(model, learning_rate=0.1)
        traj = []
        for _ in range(3):
            adam_step(model, [np.array([[0.5]]), np.zeros(1)], state)
            traj.append(model.weights[0][0, 0])
        assert traj == pytest.approx([0.900000002, 0.800000004, 0.700000006], rel=1e-12)

    def test_matches_scalar_recurrence(self):
        grads = [0.3, -1.2, 0.05, 2.0, -0.7]
        model = linear_model([0.25])
        state = AdamState.for_model(model, learning_rate=0.01)
        traj = []
        for g in grads:
            adam_step(model, [np.array([[g]]), np.zeros(1)], state)
            traj.append(model.weights[0][0, 0])
        assert traj == pytest.approx(scalar_adam(0.25, grads, 0.01), rel=1e-13)

    def test_shape_mismatch(self):
        model = linear_model([1.0, 2.0])
        with pytest.raises(ShapeError):
            adam_step(model, [np.zeros((3, 1)), np.zeros(1)], AdamState.for_model(model))
        with pytest.raises(ShapeError):
            adam_step(model, [np.zeros((2, 1))], AdamState.for_model(model))

    def test_fresh_state_accumulators_are_zero(self):
        state = AdamState.for_model(linear_model([1.0]))
        assert state.step_count == 0
        assert all(not m.any() for m in state.first_moment + state.second_moment)


# -- finite_diff_check --------------------------------------------------------


class TestFiniteDiffCheck:
    def test_linear_quadratic_exact(self):
        model = linear_model([0.5, -1.5], 0.25)
        X = np.array([[1.0, 2.0], [-0.5, 0.25]])
        report = finite_diff_check(model, X, lambda o: mse_loss(o, np.array([[1.0], [0.0]])))
        assert report.max_relative_error < 1e-8

    def test_detects_corrupted_gradient(self):
        rng = np.random.default_rng(4)
        model = random_model([4, 8, 1], rng)
        X = rng.uniform(-1, 1, size=(3, 4))
        target = rng.normal(size=(3, 1))
        loss = lambda o: mse_loss(o, target)
        _, cache = model.forward_with_cache(X)
        grads, _ = model.backward(cache, loss(model.forward(X))[1])
        grads = [g.copy() for g in grads]
        grads[2].flat[np.argmax(np.abs(grads[2]))] *= 2.0
        report = finite_diff_check(model, X, loss, gradients=grads)
        assert not report.passed
        assert report.failing == [2]


# -- checkpoints --------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    model = random_model([5, 7, 3, 2], rng, dropout=0.2)
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, model, seed=123, selected_epoch=17, extra={"feature_dim": 5})
    loaded, meta = load_checkpoint(path)
    assert loaded.spec == model.spec
    assert meta["seed"] == 123 and meta["selected_epoch"] == 17 and meta["extra"] == {"feature_dim": 5}
    X = rng.normal(size=(6, 5))
    assert np.array_equal(loaded.forward(X), model.eval().forward(X))
    for a, b in zip(loaded.parameters(), model.parameters()):
        assert a.dtype == np.float64 and np.array_equal(a, b)
