import numpy as np
import pytest

from codemix.errors import CodemixError, NonFiniteError, ShapeError
from codemix.numerics import (AdamWState, Tensor, adamw_step, add, as_tensor,
                              dropout, exp, finite_diff_grad_check,
                              gather_rows, gelu, layer_norm, linear, log,
                              log_softmax, make_rng, matmul, mul, no_grad,
                              relu, reshape, softmax, take_along_last, tmean,
                              transpose, tsum, xlogy)


def rnd(shape, seed=0, scale=1.0):
    return make_rng(seed).standard_normal(shape) * scale


class TestSoftmax:
    def test_symmetric_pair(self):
        assert np.allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_shift_far_from_zero(self):
        # max-subtraction keeps huge logits stable
        assert np.allclose(softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_uniform_for_any_constant(self):
        for c in (-7.0, 0.0, 3.5, 1e4):
            out = softmax(Tensor([c, c, c])).data
            assert np.allclose(out, [1 / 3] * 3, atol=1e-6)

    def test_shift_invariance(self):
        x = rnd((4, 9), seed=3)
        for c in (-100.0, 0.123, 57.0):
            a = softmax(Tensor(x), axis=-1).data
            b = softmax(Tensor(x + c), axis=-1).data
            assert np.abs(a - b).max() < 1e-6

    def test_rows_sum_to_one(self):
        out = softmax(Tensor(rnd((6, 11), seed=1) * 5), axis=-1).data
        assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-6

    def test_nan_input_rejected(self):
        with pytest.raises(NonFiniteError):
            softmax(Tensor(np.array([1.0, np.nan])))


class TestTensorBasics:
    def test_non_finite_is_hard_error(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.inf]))

    def test_ops_reject_non_finite_results(self):
        a = Tensor(np.array([1e30], dtype=np.float32))
        with pytest.raises(NonFiniteError):
            mul(a, a)  # overflows float32

    def test_matmul_identity_exact_shape(self):
        a = rnd((5, 7), seed=2)
        out = matmul(Tensor(a), Tensor(np.eye(7)))
        assert out.shape == (5, 7)
        assert np.abs(out.data - a).max() < 1e-6

    def test_backward_requires_scalar(self):
        t = Tensor(rnd((3,)), requires_grad=True)
        with pytest.raises(ShapeError):
            add(t, t).backward()

    def test_no_grad_suppresses_tape(self):
        t = Tensor(rnd((3,)), requires_grad=True)
        with no_grad():
            out = mul(t, t)
        assert out._backward is None and not out.requires_grad

    def test_grad_accumulates_over_uses(self):
        t = Tensor(np.array([2.0]), requires_grad=True)
        loss = tsum(add(mul(t, t), t))  # d/dt (t^2 + t) = 2t + 1 = 5
        loss.backward()
        assert np.allclose(t.grad, [5.0])


class TestPrimitiveGradients:
    """Every primitive's tape gradient vs central differences in f64."""

    CASES = {
        "add": (lambda p, c: tsum(mul(add(p["a"], p["b"]), c["m"])),
                {"a": (3, 4), "b": (3, 4)}),
        "add_broadcast": (lambda p, c: tsum(mul(add(p["a"], p["v"]), c["m"])),
                          {"a": (3, 4), "v": (4,)}),
        "mul": (lambda p, c: tsum(mul(mul(p["a"], p["b"]), c["m"])),
                {"a": (3, 4), "b": (3, 4)}),
        "matmul": (lambda p, c: tsum(mul(matmul(p["a"], p["w"]), c["mm"])),
                   {"a": (3, 4), "w": (4, 5)}),
        "matmul_batched": (lambda p, c: tsum(mul(matmul(p["q"], p["k"]), c["mb"])),
                           {"q": (2, 3, 4), "k": (2, 4, 5)}),
        "linear": (lambda p, c: tsum(mul(linear(p["x3"], p["w"], p["bias"]), c["mb"])),
                   {"x3": (2, 3, 4), "w": (4, 5), "bias": (5,)}),
        "linear_t": (lambda p, c: tsum(mul(linear(p["x3"], p["wt"], transpose_w=True), c["mb"])),
                     {"x3": (2, 3, 4), "wt": (5, 4)}),
        "softmax": (lambda p, c: tsum(mul(softmax(p["a"], axis=-1), c["m"])),
                    {"a": (3, 4)}),
        "log_softmax": (lambda p, c: tsum(mul(log_softmax(p["a"], axis=-1), c["m"])),
                        {"a": (3, 4)}),
        "layer_norm": (lambda p, c: tsum(mul(layer_norm(p["a"], p["g"], p["bias4"]), c["m"])),
                       {"a": (3, 4), "g": (4,), "bias4": (4,)}),
        "relu": (lambda p, c: tsum(mul(relu(p["a"]), c["m"])), {"a": (3, 4)}),
        "gelu": (lambda p, c: tsum(mul(gelu(p["a"]), c["m"])), {"a": (3, 4)}),
        "exp": (lambda p, c: tsum(exp(p["a"])), {"a": (3, 4)}),
        "log_sum": (lambda p, c: tsum(log(exp(p["a"]))), {"a": (3, 4)}),
        "gather": (lambda p, c: tsum(mul(gather_rows(p["tab"], c["idx"]), c["g"])),
                   {"tab": (5, 4)}),
        "take_along": (lambda p, c: tsum(take_along_last(p["a"], c["pick"])),
                       {"a": (3, 4)}),
        "transpose": (lambda p, c: tsum(mul(transpose(p["a"], (1, 0)), c["mt"])),
                      {"a": (3, 4)}),
        "reshape": (lambda p, c: tsum(mul(reshape(p["a"], (12,)), c["flat"])),
                    {"a": (3, 4)}),
        "mean": (lambda p, c: tmean(mul(p["a"], p["a"])), {"a": (3, 4)}),
        "xlogy": (lambda p, c: tsum(xlogy(p["a"], exp(p["b"]))),
                  {"a": (3, 4), "b": (3, 4)}),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_gradcheck(self, name):
        fn, shapes = self.CASES[name]
        rng = make_rng(11)
        consts = {
            "m": Tensor(rng.standard_normal((3, 4))),
            "mm": Tensor(rng.standard_normal((3, 5))),
            "mb": Tensor(rng.standard_normal((2, 3, 5))),
            "mt": Tensor(rng.standard_normal((4, 3))),
            "flat": Tensor(rng.standard_normal(12)),
            "g": Tensor(rng.standard_normal((2, 3, 4))),
            "idx": np.array([[0, 4, 2], [2, 1, 3]]),
            "pick": np.array([1, 0, 3]),
        }
        params = {k: Tensor(rng.standard_normal(s), requires_grad=True)
                  for k, s in shapes.items()}
        err = finite_diff_grad_check(lambda p: fn(p, consts), params,
                                     epsilon=1e-6, max_coords_per_tensor=8)
        assert err < 1e-6, f"{name}: rel err {err}"


class TestAdamW:
    def test_single_step_hand_computed(self):
        # w=1, g=1, lr=0.1, wd=0: bias-corrected update is exactly
        # lr * 1 / (1 + eps), so w' is 0.9 within 1e-6.
        params = {"w": np.array([1.0])}
        state = AdamWState(lr=0.1, weight_decay=0.0)
        adamw_step(params, {"w": np.array([1.0])}, state)
        assert abs(params["w"][0] - 0.9) < 1e-6
        assert state.t == 1

    def test_zero_grad_no_decay_keeps_weights(self):
        params = {"w": np.array([0.7, -1.3])}
        state = AdamWState(lr=0.1, weight_decay=0.0)
        for _ in range(3):
            adamw_step(params, {"w": np.zeros(2)}, state)
        assert np.array_equal(params["w"], [0.7, -1.3])

    def test_decoupled_decay_exact(self):
        w0 = np.array([0.5, -2.0])
        params = {"w": w0.copy()}
        state = AdamWState(lr=0.1, weight_decay=0.01)
        adamw_step(params, {"w": np.zeros(2)}, state)
        assert np.allclose(params["w"], w0 - 0.1 * 0.01 * w0, atol=0, rtol=0)

    def test_t_strictly_increases(self):
        params = {"w": np.array([1.0])}
        state = AdamWState()
        for i in range(1, 5):
            adamw_step(params, {"w": np.array([0.1])}, state)
            assert state.t == i

    def test_shape_mismatch_rejected(self):
        state = AdamWState()
        with pytest.raises(ShapeError):
            adamw_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, state)


class TestGradCheckHarness:
    def test_linear_loss(self):
        params = {"w": Tensor(rnd((6,), seed=5), requires_grad=True)}
        err = finite_diff_grad_check(lambda p: tsum(p["w"]), params)
        assert err < 1e-10

    def test_quadratic_at_three(self):
        params = {"w": Tensor(np.full(4, 3.0), requires_grad=True)}
        err = finite_diff_grad_check(lambda p: tsum(mul(p["w"], p["w"])),
                                     params)
        assert err < 1e-9

    def test_nondeterministic_loss_detected(self):
        state = {"n": 0}

        def noisy(params):
            state["n"] += 1
            return mul(tsum(params["w"]), float(state["n"]))

        params = {"w": Tensor(rnd((3,)), requires_grad=True)}
        with pytest.raises(CodemixError):
            finite_diff_grad_check(noisy, params)


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(123).standard_normal(50)
        b = make_rng(123).standard_normal(50)
        assert np.array_equal(a, b)

    def test_spawn_is_deterministic(self):
        a = make_rng(7).spawn(3)[1].integers(0, 1000, 10)
        b = make_rng(7).spawn(3)[1].integers(0, 1000, 10)
        assert np.array_equal(a, b)


class TestDropout:
    def test_zero_probability_is_identity(self):
        t = Tensor(rnd((4, 4)))
        assert dropout(t, 0.0, make_rng(0)) is t

    def test_inverted_scaling_preserves_mean(self):
        t = Tensor(np.ones((200, 200)))
        out = dropout(t, 0.3, make_rng(1)).data
        assert abs(out.mean() - 1.0) < 0.02
