"""Q-network: twin conv encoders, pluggable recurrent core, attention pooling.

Forward pipeline: each observation stack runs through ``conv_layers``
same-padded ReLU convolutions; the two feature maps are flattened row-major
into a token sequence (local tokens first); the sequence runs through the
configured recurrent core (none / LSTM / Bi-LSTM / GRU / Bi-GRU); attention
pooling (or plain mean pooling when attention is off) reduces it to one
encoding vector; the battery fraction is appended and three ReLU hidden
layers plus a linear head emit the six action values.

Everything is float64 NumPy with hand-written exact reverse-mode gradients;
the convolution and recurrent scans run on the selected kernel backend.
Parameters live in an ordered name->array dict so that checkpointing, soft
target updates and gradient algebra are uniform.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .observation import NUM_CHANNELS, Observation
from .rng import stream

NUM_ACTIONS = 6
CORES = ("none", "lstm", "bilstm", "gru", "bigru")
CHECKPOINT_MAGIC = b"ARDQ1"


class ShapeMismatch(ValueError):
    """Raised when observation or parameter shapes disagree; names the stage."""


@dataclass(frozen=True)
class QNetConfig:
    core: str = "lstm"
    attention: bool = True
    conv_layers: int = 2
    kernel_size: int = 5
    conv_filters: int = 16
    rnn_units: int = 16
    hidden_width: int = 256
    hidden_layers: int = 3

    def validate(self) -> None:
        if self.core not in CORES:
            raise ValueError(f"core must be one of {CORES}, got {self.core!r}")
        if self.conv_layers < 1 or self.conv_filters < 1:
            raise ValueError("need at least one conv layer and one filter")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and positive")
        if self.rnn_units < 1 or self.hidden_width < 1 or self.hidden_layers < 1:
            raise ValueError("rnn_units, hidden_width, hidden_layers must be positive")

    @property
    def token_width(self) -> int:
        """Width of one sequence element after the recurrent core."""
        if self.core == "none":
            return self.conv_filters
        if self.core in ("bilstm", "bigru"):
            return 2 * self.rnn_units
        return self.rnn_units


class QNetworkParams:
    """Ordered named parameter arrays plus the defining config."""

    def __init__(self, config: QNetConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        self.arrays = arrays

    def copy(self) -> "QNetworkParams":
        return QNetworkParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.arrays.items())

    def param_count(self) -> int:
        return sum(int(a.size) for a in self.arrays.values())


def _param_shapes(config: QNetConfig, channels: int = NUM_CHANNELS) -> list[tuple[str, tuple]]:
    k = config.kernel_size
    f = config.conv_filters
    n = config.rnn_units
    shapes: list[tuple[str, tuple]] = []
    for side in ("local", "global"):
        cin = channels
        for i in range(config.conv_layers):
            shapes.append((f"{side}_conv{i}_w", (k, k, cin, f)))
            shapes.append((f"{side}_conv{i}_b", (f,)))
            cin = f
    gate_mult = {"lstm": 4, "bilstm": 4, "gru": 3, "bigru": 3}.get(config.core)
    if config.core in ("lstm", "gru"):
        shapes += [
            ("rnn_w", (f, gate_mult * n)),
            ("rnn_u", (n, gate_mult * n)),
            ("rnn_b", (gate_mult * n,)),
        ]
    elif config.core in ("bilstm", "bigru"):
        for d in ("fw", "bw"):
            shapes += [
                (f"rnn_{d}_w", (f, gate_mult * n)),
                (f"rnn_{d}_u", (n, gate_mult * n)),
                (f"rnn_{d}_b", (gate_mult * n,)),
            ]
    width = config.token_width
    if config.attention:
        shapes += [("attn_w", (width, n)), ("attn_b", (n,)), ("attn_ctx", (n,))]
    zin = width + 1  # battery scalar appended
    for i in range(config.hidden_layers):
        shapes.append((f"dense{i}_w", (zin, config.hidden_width)))
        shapes.append((f"dense{i}_b", (config.hidden_width,)))
        zin = config.hidden_width
    shapes += [("head_w", (zin, NUM_ACTIONS)), ("head_b", (NUM_ACTIONS,))]
    return shapes


def param_count(config: QNetConfig, channels: int = NUM_CHANNELS) -> int:
    """Trainable scalar count; a pure function of the config."""
    return sum(int(np.prod(s)) for _, s in _param_shapes(config, channels))


def init_params(config: QNetConfig, seed: int, channels: int = NUM_CHANNELS) -> QNetworkParams:
    """Uniform fan-in initialization, zero biases, LSTM forget bias +1."""
    config.validate()
    rng = stream(seed)
    arrays: dict[str, np.ndarray] = {}
    n = config.rnn_units
    for name, shape in _param_shapes(config, channels):
        if name.endswith("_b"):
            arr = np.zeros(shape)
            if name.startswith("rnn_") and config.core in ("lstm", "bilstm"):
                arr[:n] = 1.0  # forget gate bias, standard stabilizer
        else:
            if len(shape) == 4:
                fan_in = shape[0] * shape[1] * shape[2]
            elif len(shape) == 2:
                fan_in = shape[0]
            else:
                fan_in = n
            bound = 1.0 / np.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        arrays[name] = arr
    return QNetworkParams(config, arrays)


def zero_grads(params: QNetworkParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def conv_forward(stack: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Single-image convenience wrapper: same-padded conv + ReLU."""
    if stack.ndim != 3 or stack.shape[2] != weight.shape[2]:
        raise ShapeMismatch(
            f"conv input {stack.shape} does not match kernel {weight.shape}"
        )
    pre = kernels.conv2d_forward(stack[None], weight, bias)[0]
    return _relu(pre)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(
    x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
    w: np.ndarray, u: np.ndarray, b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell update (gate order: forget, input, output, candidate)."""
    single = x_t.ndim == 1
    x2 = np.atleast_2d(x_t)
    h2 = np.atleast_2d(h_prev)
    c2 = np.atleast_2d(c_prev)
    n = u.shape[0]
    pre = x2 @ w + b + h2 @ u
    f = _sigmoid(pre[:, :n])
    i = _sigmoid(pre[:, n : 2 * n])
    o = _sigmoid(pre[:, 2 * n : 3 * n])
    g = np.tanh(pre[:, 3 * n :])
    c = f * c2 + i * g
    h = o * np.tanh(c)
    return (h[0], c[0]) if single else (h, c)


def gru_step(
    x_t: np.ndarray, h_prev: np.ndarray, w: np.ndarray, u: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """One GRU cell update (gate order: update, reset, candidate)."""
    single = x_t.ndim == 1
    x2 = np.atleast_2d(x_t)
    h2 = np.atleast_2d(h_prev)
    n = u.shape[0]
    proj = x2 @ w + b
    pre_zr = proj[:, : 2 * n] + h2 @ u[:, : 2 * n]
    z = _sigmoid(pre_zr[:, :n])
    r = _sigmoid(pre_zr[:, n:])
    g = np.tanh(proj[:, 2 * n :] + (r * h2) @ u[:, 2 * n :])
    h = (1.0 - z) * h2 + z * g
    return h[0] if single else h


def run_recurrent(tokens: np.ndarray, params: QNetworkParams) -> np.ndarray:
    """Apply the configured core to a (L, width) token sequence."""
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ShapeMismatch("run_recurrent expects a nonempty (L, width) sequence")
    h_seq, _ = _recurrent_forward(tokens[None], params)
    return h_seq[0]


def attention_pool(h_seq: np.ndarray, params: QNetworkParams) -> np.ndarray:
    """Softmax attention over a (L, width) sequence -> (width,) encoding."""
    if h_seq.ndim != 2 or h_seq.shape[0] == 0:
        raise ShapeMismatch("attention_pool expects a nonempty (L, width) sequence")
    v, _ = _attention_forward(h_seq[None], params)
    return v[0]


# ---------------------------------------------------------------------------
# batched forward/backward


def _conv_stack_forward(x: np.ndarray, params: QNetworkParams, side: str):
    cache = []
    h = x
    for i in range(params.config.conv_layers):
        w = params[f"{side}_conv{i}_w"]
        b = params[f"{side}_conv{i}_b"]
        if h.shape[3] != w.shape[2]:
            raise ShapeMismatch(
                f"{side} conv layer {i}: input channels {h.shape[3]} != kernel {w.shape[2]}"
            )
        pre = kernels.conv2d_forward(np.ascontiguousarray(h), w, b)
        out = _relu(pre)
        cache.append((h, pre))
        h = out
    return h, cache


def _conv_stack_backward(dout, cache, params: QNetworkParams, side: str, grads):
    dh = dout
    for i in range(params.config.conv_layers - 1, -1, -1):
        x, pre = cache[i]
        w = params[f"{side}_conv{i}_w"]
        dpre = np.ascontiguousarray(dh * (pre > 0.0))
        dx, dw, db = kernels.conv2d_backward(np.ascontiguousarray(x), w, dpre)
        grads[f"{side}_conv{i}_w"] += dw
        grads[f"{side}_conv{i}_b"] += db
        dh = dx
    return dh


def _scan_forward(tokens: np.ndarray, w, u, b, kind: str):
    bsz, length, width = tokens.shape
    proj = np.ascontiguousarray(
        (tokens.reshape(-1, width) @ w + b).reshape(bsz, length, -1)
    )
    if kind == "lstm":
        h_seq, c_seq, gates = kernels.lstm_scan_forward(proj, u)
        return h_seq, {"c_seq": c_seq, "gates": gates, "h_seq": h_seq}
    h_seq, gates = kernels.gru_scan_forward(proj, u)
    return h_seq, {"gates": gates, "h_seq": h_seq}


def _scan_backward(dh_seq, tokens, w, u, kind: str, cache):
    dh_seq = np.ascontiguousarray(dh_seq)
    if kind == "lstm":
        dproj, du = kernels.lstm_scan_backward(
            dh_seq, u, cache["h_seq"], cache["c_seq"], cache["gates"]
        )
    else:
        dproj, du = kernels.gru_scan_backward(dh_seq, u, cache["h_seq"], cache["gates"])
    bsz, length, width = tokens.shape
    flat_tokens = tokens.reshape(-1, width)
    flat_dproj = dproj.reshape(bsz * length, -1)
    dw = flat_tokens.T @ flat_dproj
    db = flat_dproj.sum(axis=0)
    dtokens = (flat_dproj @ w.T).reshape(bsz, length, width)
    return dtokens, dw, du, db


def _recurrent_forward(tokens: np.ndarray, params: QNetworkParams):
    core = params.config.core
    if core == "none":
        return tokens, {}
    kind = "lstm" if core in ("lstm", "bilstm") else "gru"
    if core in ("lstm", "gru"):
        h_seq, cache = _scan_forward(tokens, params["rnn_w"], params["rnn_u"], params["rnn_b"], kind)
        return h_seq, {"fw": cache}
    rev = np.ascontiguousarray(tokens[:, ::-1, :])
    h_fw, cache_fw = _scan_forward(tokens, params["rnn_fw_w"], params["rnn_fw_u"], params["rnn_fw_b"], kind)
    h_bw, cache_bw = _scan_forward(rev, params["rnn_bw_w"], params["rnn_bw_u"], params["rnn_bw_b"], kind)
    h_seq = np.concatenate([h_fw, h_bw[:, ::-1, :]], axis=2)
    return h_seq, {"fw": cache_fw, "bw": cache_bw, "rev_tokens": rev}


def _recurrent_backward(dh_seq, tokens, params: QNetworkParams, cache, grads):
    core = params.config.core
    if core == "none":
        return dh_seq
    kind = "lstm" if core in ("lstm", "bilstm") else "gru"
    n = params.config.rnn_units
    if core in ("lstm", "gru"):
        dtokens, dw, du, db = _scan_backward(
            dh_seq, tokens, params["rnn_w"], params["rnn_u"], kind, cache["fw"]
        )
        grads["rnn_w"] += dw
        grads["rnn_u"] += du
        grads["rnn_b"] += db
        return dtokens
    d_fw = dh_seq[:, :, :n]
    d_bw = np.ascontiguousarray(dh_seq[:, ::-1, n:])
    dtok_f, dw, du, db = _scan_backward(
        d_fw, tokens, params["rnn_fw_w"], params["rnn_fw_u"], kind, cache["fw"]
    )
    grads["rnn_fw_w"] += dw
    grads["rnn_fw_u"] += du
    grads["rnn_fw_b"] += db
    dtok_b, dw, du, db = _scan_backward(
        d_bw, cache["rev_tokens"], params["rnn_bw_w"], params["rnn_bw_u"], kind, cache["bw"]
    )
    grads["rnn_bw_w"] += dw
    grads["rnn_bw_u"] += du
    grads["rnn_bw_b"] += db
    return dtok_f + dtok_b[:, ::-1, :]


def _attention_forward(h_seq: np.ndarray, params: QNetworkParams):
    """Softmax-scored pooling: scores via tanh projection against a context vector."""
    w, b, ctx = params["attn_w"], params["attn_b"], params["attn_ctx"]
    uk = np.tanh(h_seq @ w + b)  # (B, L, A)
    scores = uk @ ctx  # (B, L)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    a = e / e.sum(axis=1, keepdims=True)
    v = (a[:, :, None] * h_seq).sum(axis=1)
    return v, {"uk": uk, "a": a}


def _attention_backward(dv, h_seq, params: QNetworkParams, cache, grads):
    w, ctx = params["attn_w"], params["attn_ctx"]
    uk, a = cache["uk"], cache["a"]
    dh_seq = a[:, :, None] * dv[:, None, :]
    da = (h_seq * dv[:, None, :]).sum(axis=2)
    dscores = a * (da - (da * a).sum(axis=1, keepdims=True))
    duk = dscores[:, :, None] * ctx[None, None, :]
    grads["attn_ctx"] += (uk * dscores[:, :, None]).sum(axis=(0, 1))
    dpre = duk * (1.0 - uk * uk)
    bsz, length, width = h_seq.shape
    flat_h = h_seq.reshape(-1, width)
    flat_dpre = dpre.reshape(bsz * length, -1)
    grads["attn_w"] += flat_h.T @ flat_dpre
    grads["attn_b"] += flat_dpre.sum(axis=0)
    dh_seq = dh_seq + (flat_dpre @ w.T).reshape(bsz, length, width)
    return dh_seq


def forward_batch(
    params: QNetworkParams,
    local: np.ndarray,
    global_: np.ndarray,
    battery: np.ndarray,
    need_cache: bool = False,
):
    """Batched Q-values: (B, l, l, C), (B, m, m, C), (B,) -> (B, 6)."""
    if local.ndim != 4 or global_.ndim != 4:
        raise ShapeMismatch("expected batched (B, H, W, C) observation stacks")
    bsz = local.shape[0]
    local_feat, cache_l = _conv_stack_forward(local, params, "local")
    global_feat, cache_g = _conv_stack_forward(global_, params, "global")
    f = params.config.conv_filters
    n_local = local_feat.shape[1] * local_feat.shape[2]
    tokens = np.concatenate(
        [local_feat.reshape(bsz, n_local, f),
         global_feat.reshape(bsz, -1, f)],
        axis=1,
    )
    h_seq, cache_r = _recurrent_forward(tokens, params)
    if params.config.attention:
        v, cache_a = _attention_forward(h_seq, params)
    else:
        v, cache_a = h_seq.mean(axis=1), None
    z = np.concatenate([v, np.asarray(battery, dtype=np.float64).reshape(bsz, 1)], axis=1)
    dense_cache = []
    for i in range(params.config.hidden_layers):
        pre = z @ params[f"dense{i}_w"] + params[f"dense{i}_b"]
        out = _relu(pre)
        dense_cache.append((z, pre))
        z = out
    q = z @ params["head_w"] + params["head_b"]
    if not need_cache:
        return q, None
    cache = {
        "local": local, "global": global_,
        "cache_l": cache_l, "cache_g": cache_g,
        "tokens": tokens, "h_seq": h_seq, "cache_r": cache_r,
        "v": v, "cache_a": cache_a,
        "dense_cache": dense_cache, "z_last": z,
        "n_local": n_local,
        "local_hw": local_feat.shape[1:3], "global_hw": global_feat.shape[1:3],
    }
    return q, cache


def backward_batch(params: QNetworkParams, cache, dq: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every parameter array."""
    grads = zero_grads(params)
    z_last = cache["z_last"]
    grads["head_w"] += z_last.T @ dq
    grads["head_b"] += dq.sum(axis=0)
    dz = dq @ params["head_w"].T
    for i in range(params.config.hidden_layers - 1, -1, -1):
        z_in, pre = cache["dense_cache"][i]
        dpre = dz * (pre > 0.0)
        grads[f"dense{i}_w"] += z_in.T @ dpre
        grads[f"dense{i}_b"] += dpre.sum(axis=0)
        dz = dpre @ params[f"dense{i}_w"].T
    width = params.config.token_width
    dv = dz[:, :width]
    h_seq = cache["h_seq"]
    if params.config.attention:
        dh_seq = _attention_backward(dv, h_seq, params, cache["cache_a"], grads)
    else:
        dh_seq = np.broadcast_to(
            dv[:, None, :] / h_seq.shape[1], h_seq.shape
        ).copy()
    dtokens = _recurrent_backward(dh_seq, cache["tokens"], params, cache["cache_r"], grads)
    n_local = cache["n_local"]
    f = params.config.conv_filters
    bsz = dtokens.shape[0]
    lh, lw = cache["local_hw"]
    gh, gw = cache["global_hw"]
    dlocal_feat = dtokens[:, :n_local, :].reshape(bsz, lh, lw, f)
    dglobal_feat = dtokens[:, n_local:, :].reshape(bsz, gh, gw, f)
    _conv_stack_backward(dlocal_feat, cache["cache_l"], params, "local", grads)
    _conv_stack_backward(dglobal_feat, cache["cache_g"], params, "global", grads)
    return grads


def q_forward(obs: Observation, params: QNetworkParams) -> np.ndarray:
    """Q-values for a single observation."""
    q, _ = forward_batch(
        params,
        obs.local_stack[None],
        obs.global_stack[None],
        np.array([obs.battery_frac]),
    )
    return q[0]


def q_backward(
    obs: Observation, params: QNetworkParams, output_gradient: np.ndarray
) -> dict[str, np.ndarray]:
    """Parameter gradients of output . output_gradient for one observation."""
    _, cache = forward_batch(
        params,
        obs.local_stack[None],
        obs.global_stack[None],
        np.array([obs.battery_frac]),
        need_cache=True,
    )
    return backward_batch(params, cache, np.asarray(output_gradient, dtype=np.float64)[None])


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_checkpoint(path: str, params: QNetworkParams, config_echo: dict, seed: int) -> None:
    """Binary checkpoint: magic, JSON manifest, raw little-endian float64 blobs."""
    manifest = []
    offset = 0
    blobs = []
    for name, arr in params.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "net": asdict(params.config),
        "config": config_echo,
        "seed": int(seed),
        "params": manifest,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str) -> tuple[QNetworkParams, dict, int]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (head_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(head_len).decode())
        blob = fh.read()
    config = QNetConfig(**header["net"])
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        raw = blob[entry["offset"] : entry["offset"] + size]
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    expected = _param_shapes(config)
    if [(n, tuple(a.shape)) for n, a in arrays.items()] != [
        (n, tuple(s)) for n, s in expected
    ]:
        raise ValueError(f"{path}: parameter manifest does not match config {config}")
    return QNetworkParams(config, arrays), header["config"], header["seed"]
