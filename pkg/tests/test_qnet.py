import numpy as np
import pytest

from uavgrid import kernels, qnet
from uavgrid.kernels import reference as ref
from uavgrid.observation import Observation
from uavgrid.qnet import (
    NUM_ACTIONS,
    QNetConfig,
    attention_pool,
    gru_step,
    init_params,
    load_checkpoint,
    lstm_step,
    param_count,
    q_backward,
    q_forward,
    run_recurrent,
    save_checkpoint,
)
from uavgrid.rng import stream
from uavgrid.selfcheck import (
    SMALL_NET,
    conv_reference,
    finite_difference_max_err,
    small_net_fixture,
)

SMALL = QNetConfig(core="lstm", attention=True, **SMALL_NET)


def small_obs(seed=0):
    rng = stream(seed)
    return Observation(
        local_stack=rng.uniform(0, 1, (5, 5, 5)),
        global_stack=rng.uniform(0, 1, (3, 3, 5)),
        battery_frac=0.7,
    )


class TestConv:
    def test_identity_kernel_preserves_nonneg_input(self):
        rng = stream(1)
        x = rng.uniform(0.0, 1.0, size=(1, 6, 6, 3))
        k = np.zeros((3, 3, 3, 3))
        for c in range(3):
            k[1, 1, c, c] = 1.0
        out = kernels.conv2d_forward(x, k, np.zeros(3))
        assert np.allclose(out, x, atol=1e-15)

    def test_zero_input_zero_output(self):
        x = np.zeros((2, 4, 4, 2))
        k = stream(2).standard_normal((3, 3, 2, 5))
        out = kernels.conv2d_forward(x, k, np.zeros(5))
        assert np.all(out == 0.0)

    def test_matches_six_loop_reference(self):
        rng = stream(3)
        x = rng.standard_normal((6, 6, 2))
        k = rng.standard_normal((3, 3, 2, 4))
        b = rng.standard_normal(4)
        fast = kernels.conv2d_forward(x[None], k, b)[0]
        slow = conv_reference(x, k, b)
        assert np.allclose(fast, slow, atol=1e-12, rtol=0)

    def test_backward_matches_finite_differences(self):
        rng = stream(4)
        x = rng.standard_normal((2, 4, 4, 2))
        k = rng.standard_normal((3, 3, 2, 3))
        b = rng.standard_normal(3)
        dout = rng.standard_normal((2, 4, 4, 3))
        dx, dk, db = kernels.conv2d_backward(x, k, dout)
        eps = 1e-6

        def loss(xx, kk, bb):
            return float((kernels.conv2d_forward(xx, kk, bb) * dout).sum())

        for arr, grad in ((x, dx), (k, dk), (b, db)):
            flat, gflat = arr.ravel(), grad.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 17)):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = loss(x, k, b)
                flat[idx] = orig - eps
                down = loss(x, k, b)
                flat[idx] = orig
                assert (up - down) / (2 * eps) == pytest.approx(gflat[idx], rel=1e-6, abs=1e-9)


class TestRecurrentSteps:
    def test_lstm_zero_params_hand_values(self):
        n = 2
        w = np.zeros((3, 4 * n))
        u = np.zeros((n, 4 * n))
        b = np.zeros(4 * n)
        x = np.array([0.3, -1.2, 2.0])
        c_prev = np.array([1.0, -2.0])
        h, c = lstm_step(x, np.zeros(n), c_prev, w, u, b)
        # all gates sigmoid(0) = 0.5, candidate tanh(0) = 0
        assert np.allclose(c, 0.5 * c_prev, atol=1e-15)
        assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)

    def test_lstm_zero_state_zero_output(self):
        n = 3
        h, c = lstm_step(np.zeros(4), np.zeros(n), np.zeros(n),
                         np.zeros((4, 4 * n)), np.zeros((n, 4 * n)), np.zeros(4 * n))
        assert np.all(h == 0.0) and np.all(c == 0.0)

    def test_lstm_gate_saturation_write_open_forget_closed(self):
        # b_i -> +inf, b_f -> -inf: cell becomes the candidate
        n = 1
        w = np.zeros((1, 4))
        w[0, 3] = 1.0  # candidate sees the input
        u = np.zeros((1, 4))
        b = np.array([-40.0, 40.0, 0.0, 0.0])  # [forget, input, output, cand]
        x = np.array([0.8])
        h, c = lstm_step(x, np.zeros(1), np.array([5.0]), w, u, b)
        assert c[0] == pytest.approx(np.tanh(0.8), abs=1e-12)

    def test_gru_zero_params_hand_values(self):
        n = 2
        h_prev = np.array([1.0, -0.5])
        h = gru_step(np.array([2.0, 3.0, -1.0]), h_prev,
                     np.zeros((3, 3 * n)), np.zeros((n, 3 * n)), np.zeros(3 * n))
        # z = r = 0.5, candidate = 0 -> h = 0.5 * h_prev
        assert np.allclose(h, 0.5 * h_prev, atol=1e-15)

    def test_gru_zero_state(self):
        h = gru_step(np.ones(3), np.zeros(2), np.zeros((3, 6)), np.zeros((2, 6)), np.zeros(6))
        assert np.all(h == 0.0)

    def test_gru_update_gate_saturation_copies_state(self):
        n = 1
        b = np.array([-40.0, 0.0, 0.0])  # z ~ 0 -> pure copy
        h_prev = np.array([0.37])
        h = gru_step(np.array([1.0]), h_prev, stream(0).standard_normal((1, 3)),
                     np.zeros((1, 3)), b)
        assert h[0] == pytest.approx(0.37, abs=1e-12)

    def test_gate_ranges_and_finite_states_long_scan(self):
        rng = stream(9)
        n = 4
        xw = rng.standard_normal((1, 1000, 4 * n))
        u = rng.standard_normal((n, 4 * n)) / np.sqrt(n)
        h_seq, c_seq, gates = kernels.lstm_scan_forward(xw, u)
        assert np.isfinite(h_seq).all() and np.isfinite(c_seq).all()
        assert (gates[:, :, : 3 * n] > 0.0).all() and (gates[:, :, : 3 * n] < 1.0).all()
        xw3 = rng.standard_normal((1, 1000, 3 * n))
        u3 = rng.standard_normal((n, 3 * n)) / np.sqrt(n)
        h_seq, gates = kernels.gru_scan_forward(xw3, u3)
        assert np.isfinite(h_seq).all()
        assert (gates[:, :, : 2 * n] > 0.0).all() and (gates[:, :, : 2 * n] < 1.0).all()


class TestRunRecurrent:
    def test_single_token_lstm_equals_one_step(self):
        params = init_params(QNetConfig(core="lstm", **SMALL_NET), 3)
        token = stream(5).standard_normal((1, SMALL_NET["conv_filters"]))
        out = run_recurrent(token, params)
        h, _ = lstm_step(token[0], np.zeros(3), np.zeros(3),
                         params["rnn_w"], params["rnn_u"], params["rnn_b"])
        assert np.allclose(out[0], h, atol=1e-14)

    def test_single_token_gru_equals_one_step(self):
        params = init_params(QNetConfig(core="gru", **SMALL_NET), 3)
        token = stream(5).standard_normal((1, SMALL_NET["conv_filters"]))
        out = run_recurrent(token, params)
        h = gru_step(token[0], np.zeros(3), params["rnn_w"], params["rnn_u"], params["rnn_b"])
        assert np.allclose(out[0], h, atol=1e-14)

    def test_none_core_is_identity(self):
        params = init_params(QNetConfig(core="none", **SMALL_NET), 3)
        tokens = stream(6).standard_normal((7, SMALL_NET["conv_filters"]))
        assert np.array_equal(run_recurrent(tokens, params), tokens)

    def test_bidirectional_width(self):
        for core in ("bilstm", "bigru"):
            params = init_params(QNetConfig(core=core, **SMALL_NET), 3)
            tokens = stream(6).standard_normal((5, SMALL_NET["conv_filters"]))
            out = run_recurrent(tokens, params)
            assert out.shape == (5, 2 * SMALL_NET["rnn_units"])

    def test_palindrome_with_tied_directions_is_reversal_symmetric(self):
        for core in ("bilstm", "bigru"):
            params = init_params(QNetConfig(core=core, **SMALL_NET), 3)
            for name in ("w", "u", "b"):
                params.arrays[f"rnn_bw_{name}"] = params[f"rnn_fw_{name}"].copy()
            half = stream(7).standard_normal((4, SMALL_NET["conv_filters"]))
            tokens = np.concatenate([half, half[::-1]], axis=0)  # palindrome
            out = run_recurrent(tokens, params)
            n = SMALL_NET["rnn_units"]
            swapped = np.concatenate([out[::-1, n:], out[::-1, :n]], axis=1)
            assert np.allclose(out, swapped, atol=1e-12)

    def test_empty_sequence_rejected(self):
        params = init_params(QNetConfig(core="lstm", **SMALL_NET), 3)
        with pytest.raises(qnet.ShapeMismatch):
            run_recurrent(np.zeros((0, SMALL_NET["conv_filters"])), params)


class TestAttention:
    def test_length_one_passes_through(self):
        params = init_params(SMALL, 3)
        h = stream(8).standard_normal((1, 3))
        v = attention_pool(h, params)
        assert np.allclose(v, h[0], atol=1e-14)

    def test_identical_tokens_average_evenly(self):
        params = init_params(SMALL, 3)
        token = stream(9).standard_normal(3)
        v = attention_pool(np.stack([token, token]), params)
        assert np.allclose(v, token, atol=1e-14)

    def test_weights_positive_and_normalized(self):
        params = init_params(SMALL, 3)
        h = stream(10).standard_normal((1, 11, 3))
        _, cache = qnet._attention_forward(h, params)
        a = cache["a"][0]
        assert (a > 0).all()
        assert a.sum() == pytest.approx(1.0, abs=1e-14)

    def test_softmax_shift_invariance(self):
        params = init_params(SMALL, 3)
        h = stream(11).standard_normal((1, 9, 3))
        _, cache = qnet._attention_forward(h, params)
        uk = np.tanh(h @ params["attn_w"] + params["attn_b"])
        scores = uk @ params["attn_ctx"] + 123.456  # constant shift
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        shifted = e / e.sum(axis=1, keepdims=True)
        assert np.allclose(cache["a"], shifted, atol=1e-12)


class TestQForward:
    def test_zero_params_zero_output(self):
        params = init_params(SMALL, 3)
        for _, arr in params.items():
            arr[...] = 0.0
        assert np.array_equal(q_forward(small_obs(), params), np.zeros(NUM_ACTIONS))

    def test_deterministic(self):
        params = init_params(SMALL, 3)
        obs = small_obs()
        assert np.array_equal(q_forward(obs, params), q_forward(obs, params))

    def test_cores_are_actually_wired(self):
        obs = small_obs()
        outputs = {}
        for core in qnet.CORES:
            params = init_params(QNetConfig(core=core, attention=True, **SMALL_NET), 3)
            outputs[core] = q_forward(obs, params)
        for a in qnet.CORES:
            for b in qnet.CORES:
                if a < b:
                    assert not np.allclose(outputs[a], outputs[b]), (a, b)

    def test_attention_flag_changes_output(self):
        obs = small_obs()
        on = q_forward(obs, init_params(QNetConfig(core="lstm", attention=True, **SMALL_NET), 3))
        off = q_forward(obs, init_params(QNetConfig(core="lstm", attention=False, **SMALL_NET), 3))
        assert not np.allclose(on, off)

    def test_shape_mismatch_names_stage(self):
        params = init_params(SMALL, 3)
        bad = Observation(np.zeros((5, 5, 4)), np.zeros((3, 3, 5)), 0.5)
        with pytest.raises(qnet.ShapeMismatch, match="local conv layer 0"):
            q_forward(bad, params)


class TestQBackward:
    def test_zero_output_gradient_gives_zero_grads(self):
        params = init_params(SMALL, 3)
        grads = q_backward(small_obs(), params, np.zeros(NUM_ACTIONS))
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_finite_difference_spot_check_lstm(self):
        _, params, obs, gvec = small_net_fixture("lstm", True)
        assert finite_difference_max_err(params, obs, gvec) < 1e-4

    def test_battery_path_gradient_nonzero(self):
        _, params, obs, gvec = small_net_fixture("lstm", True)
        grads = q_backward(obs, params, gvec)
        battery_row = grads["dense0_w"][-1, :]
        assert np.abs(battery_row).max() > 0.0
        # finite difference on the battery input itself
        eps = 1e-6
        up = Observation(obs.local_stack, obs.global_stack, obs.battery_frac + eps)
        down = Observation(obs.local_stack, obs.global_stack, obs.battery_frac - eps)
        fd = (q_forward(up, params) @ gvec - q_forward(down, params) @ gvec) / (2 * eps)
        assert abs(fd) > 1e-6


class TestParamCount:
    def test_pure_function_of_config(self):
        a = init_params(SMALL, 1).param_count()
        b = init_params(SMALL, 999).param_count()
        assert a == b == param_count(SMALL)

    def test_default_config_count_pinned(self):
        # regression pin: conv 16864 + lstm 2112 + attention 288 + dense 137734
        assert param_count(QNetConfig()) == 156998

    def test_counts_differ_across_cores(self):
        counts = {core: param_count(QNetConfig(core=core, **SMALL_NET)) for core in qnet.CORES}
        assert counts["bilstm"] > counts["lstm"] > counts["gru"] > counts["none"]
        assert counts["bigru"] > counts["gru"]

    def test_forget_gate_bias_initialized_to_one(self):
        params = init_params(QNetConfig(core="lstm", **SMALL_NET), 0)
        n = SMALL_NET["rnn_units"]
        assert np.all(params["rnn_b"][:n] == 1.0)
        assert np.all(params["rnn_b"][n:] == 0.0)


class TestCheckpoint:
    def test_roundtrip_and_byte_stability(self, tmp_path):
        params = init_params(SMALL, 3)
        echo = {"note": "test", "seed": 3}
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(str(p1), params, echo, 3)
        save_checkpoint(str(p2), params, echo, 3)
        assert p1.read_bytes() == p2.read_bytes()
        loaded, echo2, seed2 = load_checkpoint(str(p1))
        assert echo2 == echo and seed2 == 3
        assert loaded.config == params.config
        for name, arr in params.items():
            assert np.array_equal(arr, loaded[name])

    def test_magic_guard(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"NOTACKPT")
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(str(p))


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")
class TestBackendAgreement:
    def test_scans_match_reference(self):
        rng = stream(123)
        xw = rng.standard_normal((4, 9, 16))
        u = rng.standard_normal((4, 16)) * 0.4
        h1, c1, g1 = kernels.lstm_scan_forward(xw, u)
        h2, c2, g2 = ref.lstm_scan_forward(xw, u)
        assert np.allclose(h1, h2, atol=1e-13)
        dh = rng.standard_normal(h1.shape)
        d1 = kernels.lstm_scan_backward(dh, u, h1, c1, g1)
        d2 = ref.lstm_scan_backward(dh, u, h2, c2, g2)
        assert np.allclose(d1[0], d2[0], atol=1e-13)
        assert np.allclose(d1[1], d2[1], atol=1e-13)

        xw3 = rng.standard_normal((4, 9, 12))
        u3 = rng.standard_normal((4, 12)) * 0.4
        h1, g1 = kernels.gru_scan_forward(xw3, u3)
        h2, g2 = ref.gru_scan_forward(xw3, u3)
        assert np.allclose(h1, h2, atol=1e-13)
        d1 = kernels.gru_scan_backward(dh[:, :, :4], u3, h1, g1)
        d2 = ref.gru_scan_backward(dh[:, :, :4], u3, h2, g2)
        assert np.allclose(d1[0], d2[0], atol=1e-13)
        assert np.allclose(d1[1], d2[1], atol=1e-13)

    def test_segment_walk_matches_reference(self):
        rng = stream(321)
        blocked = rng.random((16, 16)) < 0.2
        for _ in range(500):
            x0, y0, x1, y1 = (int(v) for v in rng.integers(0, 16, size=4))
            assert kernels.segment_clear(blocked, x0, y0, x1, y1) == ref.segment_clear(
                blocked, x0, y0, x1, y1
            )
            assert kernels.trace_cells(x0, y0, x1, y1) == ref.trace_cells(x0, y0, x1, y1)
