"""Model definitions: recurrent regressors plus ANN and 1-D CNN baselines.

Every model maps one magnitude signal to two scaled outputs (t1_hat,
t2_hat). Parameters live in an insertion-ordered dict of float64 arrays;
that declaration order also defines the checkpoint blob layout.

The recurrent regressor feeds the signal ``chunk_size`` samples per time
step (chunk_size=1 reproduces one-sample-per-step reading of the signal;
larger chunks shorten the unrolled sequence for speed) and regresses from
the final hidden state through a dense head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cells import GATE_NAMES, N_GATES, RnnCellParams, _glorot, init_cell, sigmoid

OUTPUT_DIM = 2

MODEL_KINDS = ("rnn_regressor", "ann", "cnn1d")
CELL_KINDS = ("simple", "lstm", "gru")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_len: int = 1750
    cell_kind: str = "gru"
    hidden_dim: int = 100
    chunk_size: int = 1
    ann_hidden: tuple = (300, 300)
    cnn_channels: tuple = (16, 32, 64, 128)
    cnn_kernel: int = 5
    cnn_stride: int = 2

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_len < 1:
            raise ValueError("input_len must be positive")
        if self.kind == "rnn_regressor":
            if self.cell_kind not in CELL_KINDS:
                raise ValueError(f"unknown cell kind {self.cell_kind!r}")
            if self.input_len % self.chunk_size != 0:
                raise ValueError(
                    f"chunk_size {self.chunk_size} must divide "
                    f"input_len {self.input_len}"
                )
        if self.kind == "cnn1d" and self.conv_lengths()[-1] < 1:
            raise ValueError("input_len too short for the conv stack")
        object.__setattr__(self, "ann_hidden", tuple(self.ann_hidden))
        object.__setattr__(self, "cnn_channels", tuple(self.cnn_channels))

    @property
    def n_steps(self) -> int:
        return self.input_len // self.chunk_size

    def conv_lengths(self) -> list[int]:
        """Sequence lengths after each valid-mode strided convolution."""
        lengths = [self.input_len]
        for _ in self.cnn_channels:
            lengths.append((lengths[-1] - self.cnn_kernel) // self.cnn_stride + 1)
        return lengths

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_len": self.input_len,
            "cell_kind": self.cell_kind,
            "hidden_dim": self.hidden_dim,
            "chunk_size": self.chunk_size,
            "ann_hidden": list(self.ann_hidden),
            "cnn_channels": list(self.cnn_channels),
            "cnn_kernel": self.cnn_kernel,
            "cnn_stride": self.cnn_stride,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            kind=d["kind"],
            input_len=int(d["input_len"]),
            cell_kind=d.get("cell_kind", "gru"),
            hidden_dim=int(d.get("hidden_dim", 100)),
            chunk_size=int(d.get("chunk_size", 1)),
            ann_hidden=tuple(d.get("ann_hidden", (300, 300))),
            cnn_channels=tuple(d.get("cnn_channels", (16, 32, 64, 128))),
            cnn_kernel=int(d.get("cnn_kernel", 5)),
            cnn_stride=int(d.get("cnn_stride", 2)),
        )


def param_count(spec: ModelSpec) -> int:
    """Exact trainable-parameter total, head included (closed form)."""
    if spec.kind == "rnn_regressor":
        h, i = spec.hidden_dim, spec.chunk_size
        gates = N_GATES[spec.cell_kind]
        cell = gates * (h * (i + h) + h)
        return cell + h * OUTPUT_DIM + OUTPUT_DIM
    if spec.kind == "ann":
        total, fan_in = 0, spec.input_len
        for width in spec.ann_hidden:
            total += fan_in * width + width
            fan_in = width
        return total + fan_in * OUTPUT_DIM + OUTPUT_DIM
    if spec.kind == "cnn1d":
        total, c_in = 0, 1
        for c_out in spec.cnn_channels:
            total += c_out * c_in * spec.cnn_kernel + c_out
            c_in = c_out
        return total + c_in * OUTPUT_DIM + OUTPUT_DIM
    raise ValueError(spec.kind)


def init_params(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """Deterministic parameter initialization in declaration order."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if spec.kind == "rnn_regressor":
        cell = init_cell(spec.cell_kind, spec.chunk_size, spec.hidden_dim, rng)
        params["cell.w"] = cell.w
        params["cell.u"] = cell.u
        params["cell.b"] = cell.b
        params["head.w"] = _glorot(rng, spec.hidden_dim, OUTPUT_DIM)
        params["head.b"] = np.zeros(OUTPUT_DIM)
    elif spec.kind == "ann":
        fan_in = spec.input_len
        for idx, width in enumerate(spec.ann_hidden, start=1):
            params[f"fc{idx}.w"] = _glorot(rng, fan_in, width)
            params[f"fc{idx}.b"] = np.zeros(width)
            fan_in = width
        params["head.w"] = _glorot(rng, fan_in, OUTPUT_DIM)
        params["head.b"] = np.zeros(OUTPUT_DIM)
    elif spec.kind == "cnn1d":
        c_in = 1
        for idx, c_out in enumerate(spec.cnn_channels, start=1):
            fan_in = c_in * spec.cnn_kernel
            limit = np.sqrt(6.0 / (fan_in + c_out))
            params[f"conv{idx}.w"] = rng.uniform(
                -limit, limit, size=(c_out, c_in, spec.cnn_kernel))
            params[f"conv{idx}.b"] = np.zeros(c_out)
            c_in = c_out
        params["head.w"] = _glorot(rng, c_in, OUTPUT_DIM)
        params["head.b"] = np.zeros(OUTPUT_DIM)
    else:
        raise ValueError(spec.kind)
    return params


def cell_view(spec: ModelSpec, params: dict[str, np.ndarray]) -> RnnCellParams:
    """The recurrent block of a parameter dict as an RnnCellParams view."""
    return RnnCellParams(spec.cell_kind, spec.chunk_size, spec.hidden_dim,
                         params["cell.w"], params["cell.u"], params["cell.b"])


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every entry of a (B, 2) prediction batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2 or pred.shape[0] < 1:
        raise ValueError(f"expected a nonempty (B, k) batch, got {pred.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def _signals_to_steps(spec: ModelSpec, signals: np.ndarray) -> np.ndarray:
    # (B, input_len) -> (n_steps, B, chunk_size), time-major for the unroll
    b = signals.shape[0]
    steps = signals.reshape(b, spec.n_steps, spec.chunk_size)
    return np.ascontiguousarray(steps.transpose(1, 0, 2))


def forward_batch(spec: ModelSpec, params: dict[str, np.ndarray],
                  signals: np.ndarray):
    """Forward pass on a (B, input_len) batch; returns (preds, cache).

    The cache holds every activation the matching backward pass needs.
    """
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2 or signals.shape[1] != spec.input_len:
        raise ValueError(
            f"signals must be (B, {spec.input_len}), got {signals.shape}")
    if spec.kind == "rnn_regressor":
        return _forward_rnn(spec, params, signals)
    if spec.kind == "ann":
        return _forward_ann(spec, params, signals)
    if spec.kind == "cnn1d":
        return _forward_cnn(spec, params, signals)
    raise ValueError(spec.kind)


def forward_sequence(spec: ModelSpec, params: dict[str, np.ndarray],
                     signal: np.ndarray) -> np.ndarray:
    """Forward one signal of length ``input_len``; returns the (2,) output."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (spec.input_len,):
        raise ValueError(
            f"signal must have length {spec.input_len}, got {signal.shape}")
    preds, _ = forward_batch(spec, params, signal[None, :])
    return preds[0]


def _forward_rnn(spec, params, signals):
    h_dim = spec.hidden_dim
    b = signals.shape[0]
    xs = _signals_to_steps(spec, signals)  # (T, B, chunk)
    n_steps = xs.shape[0]
    w, u, bias = params["cell.w"], params["cell.u"], params["cell.b"]
    # Input projections for all steps in one matmul.
    xp = xs.reshape(n_steps * b, spec.chunk_size) @ w
    xp = xp.reshape(n_steps, b, -1) + bias

    hs = np.zeros((n_steps + 1, b, h_dim))
    cache = {"xs": xs, "hs": hs}
    if spec.cell_kind == "simple":
        for t in range(n_steps):
            hs[t + 1] = np.tanh(xp[t] + hs[t] @ u)
    elif spec.cell_kind == "gru":
        rs = np.empty((n_steps, b, h_dim))
        zs = np.empty((n_steps, b, h_dim))
        cands = np.empty((n_steps, b, h_dim))
        u_gates, u_cand = u[:, :2 * h_dim], u[:, 2 * h_dim:]
        for t in range(n_steps):
            gates = sigmoid(xp[t][:, :2 * h_dim] + hs[t] @ u_gates)
            rs[t] = gates[:, :h_dim]
            zs[t] = gates[:, h_dim:]
            cands[t] = np.tanh(xp[t][:, 2 * h_dim:] + (rs[t] * hs[t]) @ u_cand)
            hs[t + 1] = zs[t] * hs[t] + (1.0 - zs[t]) * cands[t]
        cache.update(rs=rs, zs=zs, cands=cands)
    elif spec.cell_kind == "lstm":
        gi = np.empty((n_steps, b, h_dim))
        gf = np.empty((n_steps, b, h_dim))
        go = np.empty((n_steps, b, h_dim))
        gg = np.empty((n_steps, b, h_dim))
        cs = np.zeros((n_steps + 1, b, h_dim))
        for t in range(n_steps):
            pre = xp[t] + hs[t] @ u
            gi[t] = sigmoid(pre[:, :h_dim])
            gf[t] = sigmoid(pre[:, h_dim:2 * h_dim])
            go[t] = sigmoid(pre[:, 2 * h_dim:3 * h_dim])
            gg[t] = np.tanh(pre[:, 3 * h_dim:])
            cs[t + 1] = gf[t] * cs[t] + gi[t] * gg[t]
            hs[t + 1] = go[t] * np.tanh(cs[t + 1])
        cache.update(gi=gi, gf=gf, go=go, gg=gg, cs=cs)
    else:
        raise ValueError(spec.cell_kind)

    preds = hs[-1] @ params["head.w"] + params["head.b"]
    return preds, cache


def _forward_ann(spec, params, signals):
    acts = [signals]
    pre_relu = []
    a = signals
    for idx in range(1, len(spec.ann_hidden) + 1):
        zpre = a @ params[f"fc{idx}.w"] + params[f"fc{idx}.b"]
        pre_relu.append(zpre)
        a = np.maximum(zpre, 0.0)
        acts.append(a)
    preds = a @ params["head.w"] + params["head.b"]
    return preds, {"acts": acts, "pre_relu": pre_relu}


def _conv_windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (B, C, L) -> (B, C, L_out, kernel) strided view, read-only
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)
    return win[:, :, ::stride]


def _forward_cnn(spec, params, signals):
    x = signals[:, None, :]  # (B, 1, L)
    xs = [x]
    pre_relu = []
    for idx in range(1, len(spec.cnn_channels) + 1):
        win = _conv_windows(xs[-1], spec.cnn_kernel, spec.cnn_stride)
        zpre = np.einsum("bclk,ock->bol", win, params[f"conv{idx}.w"],
                         optimize=True) + params[f"conv{idx}.b"][:, None]
        pre_relu.append(zpre)
        xs.append(np.maximum(zpre, 0.0))
    pooled = xs[-1].mean(axis=2)  # global average pool over time
    preds = pooled @ params["head.w"] + params["head.b"]
    return preds, {"xs": xs, "pre_relu": pre_relu, "pooled": pooled}


def predict_batch(spec: ModelSpec, params: dict[str, np.ndarray],
                  signals: np.ndarray) -> np.ndarray:
    preds, _ = forward_batch(spec, params, signals)
    return preds


def predict_single(spec: ModelSpec, params: dict[str, np.ndarray],
                   signal: np.ndarray) -> np.ndarray:
    """Latency-oriented single-signal forward.

    Identical arithmetic to ``forward_sequence`` for recurrent models but
    with preallocated buffers and no activation caching, which is what the
    per-signal timing benchmark measures.
    """
    if spec.kind != "rnn_regressor":
        return forward_sequence(spec, params, signal)
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (spec.input_len,):
        raise ValueError(
            f"signal must have length {spec.input_len}, got {signal.shape}")
    h_dim = spec.hidden_dim
    w, u, bias = params["cell.w"], params["cell.u"], params["cell.b"]
    xp = signal.reshape(spec.n_steps, spec.chunk_size) @ w
    xp += bias
    h = np.zeros(h_dim)

    if spec.cell_kind == "simple":
        for t in range(spec.n_steps):
            h = np.tanh(xp[t] + h @ u)
    elif spec.cell_kind == "gru":
        u_gates = np.asfortranarray(u[:, :2 * h_dim])
        u_cand = np.asfortranarray(u[:, 2 * h_dim:])
        gates = np.empty(2 * h_dim)
        cand = np.empty(h_dim)
        scratch = np.empty(h_dim)
        for t in range(spec.n_steps):
            np.dot(h, u_gates, out=gates)
            gates += xp[t][:2 * h_dim]
            np.negative(gates, out=gates)
            np.exp(gates, out=gates)
            gates += 1.0
            np.reciprocal(gates, out=gates)
            np.multiply(gates[:h_dim], h, out=scratch)
            np.dot(scratch, u_cand, out=cand)
            cand += xp[t][2 * h_dim:]
            np.tanh(cand, out=cand)
            # h = z*h + (1-z)*cand, rewritten as cand + z*(h - cand)
            h -= cand
            h *= gates[h_dim:]
            h += cand
    else:  # lstm
        uf = np.asfortranarray(u)
        pre = np.empty(4 * h_dim)
        c = np.zeros(h_dim)
        tanh_c = np.empty(h_dim)
        for t in range(spec.n_steps):
            np.dot(h, uf, out=pre)
            pre += xp[t]
            gates = pre[:3 * h_dim]
            np.negative(gates, out=gates)
            np.exp(gates, out=gates)
            gates += 1.0
            np.reciprocal(gates, out=gates)
            g = np.tanh(pre[3 * h_dim:])
            c *= pre[h_dim:2 * h_dim]   # forget
            c += pre[:h_dim] * g        # input * candidate
            np.tanh(c, out=tanh_c)
            h = tanh_c * pre[2 * h_dim:3 * h_dim]
    return h @ params["head.w"] + params["head.b"]
