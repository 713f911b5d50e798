"""Hand-derived backward passes (backpropagation through time included).

``backward`` consumes the cache produced by ``forward_batch`` and the
gradient of the loss w.r.t. the predictions, and returns gradients for every
parameter in declaration order. ``loss_and_grads`` wires forward, MSE and
backward together for the training loop.

The finite-difference tests in the suite are the authority these
derivations are checked against.
"""

from __future__ import annotations

import numpy as np

from .models import ModelSpec, _conv_windows, forward_batch, mse_loss


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mse)/d(pred): 2 * (pred - target) / pred.size."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


def backward(spec: ModelSpec, params: dict[str, np.ndarray], cache: dict,
             d_preds: np.ndarray) -> dict[str, np.ndarray]:
    if not cache:
        raise ValueError("forward activations unavailable; run forward_batch first")
    if spec.kind == "rnn_regressor":
        return _backward_rnn(spec, params, cache, d_preds)
    if spec.kind == "ann":
        return _backward_ann(spec, params, cache, d_preds)
    if spec.kind == "cnn1d":
        return _backward_cnn(spec, params, cache, d_preds)
    raise ValueError(spec.kind)


def loss_and_grads(spec: ModelSpec, params: dict[str, np.ndarray],
                   signals: np.ndarray, targets: np.ndarray):
    preds, cache = forward_batch(spec, params, signals)
    loss = mse_loss(preds, targets)
    grads = backward(spec, params, cache, mse_grad(preds, targets))
    return loss, grads, preds


def _backward_rnn(spec, params, cache, d_preds):
    h_dim = spec.hidden_dim
    xs, hs = cache["xs"], cache["hs"]
    n_steps, b, _ = xs.shape
    u = params["cell.u"]

    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    grads["head.w"] += hs[-1].T @ d_preds
    grads["head.b"] += d_preds.sum(axis=0)
    dh = d_preds @ params["head.w"].T

    dw, du, db = grads["cell.w"], grads["cell.u"], grads["cell.b"]
    if spec.cell_kind == "simple":
        for t in range(n_steps - 1, -1, -1):
            da = dh * (1.0 - hs[t + 1] ** 2)
            dw += xs[t].T @ da
            du += hs[t].T @ da
            db += da.sum(axis=0)
            dh = da @ u.T
    elif spec.cell_kind == "gru":
        rs, zs, cands = cache["rs"], cache["zs"], cache["cands"]
        u_gates, u_cand = u[:, :2 * h_dim], u[:, 2 * h_dim:]
        for t in range(n_steps - 1, -1, -1):
            h_prev = hs[t]
            dz = dh * (h_prev - cands[t]) * zs[t] * (1.0 - zs[t])
            dcand_pre = dh * (1.0 - zs[t]) * (1.0 - cands[t] ** 2)
            ds = dcand_pre @ u_cand.T            # grad w.r.t. r * h_prev
            dr = ds * h_prev * rs[t] * (1.0 - rs[t])
            dgates = np.concatenate([dr, dz], axis=1)
            dw[:, :2 * h_dim] += xs[t].T @ dgates
            dw[:, 2 * h_dim:] += xs[t].T @ dcand_pre
            du[:, :2 * h_dim] += h_prev.T @ dgates
            du[:, 2 * h_dim:] += (rs[t] * h_prev).T @ dcand_pre
            db[:2 * h_dim] += dgates.sum(axis=0)
            db[2 * h_dim:] += dcand_pre.sum(axis=0)
            dh = dh * zs[t] + ds * rs[t] + dgates @ u_gates.T
    elif spec.cell_kind == "lstm":
        gi, gf, go, gg = cache["gi"], cache["gf"], cache["go"], cache["gg"]
        cs = cache["cs"]
        dc = np.zeros((b, h_dim))
        for t in range(n_steps - 1, -1, -1):
            tc = np.tanh(cs[t + 1])
            do = dh * tc * go[t] * (1.0 - go[t])
            dc = dc + dh * go[t] * (1.0 - tc ** 2)
            di = dc * gg[t] * gi[t] * (1.0 - gi[t])
            df = dc * cs[t] * gf[t] * (1.0 - gf[t])
            dg = dc * gi[t] * (1.0 - gg[t] ** 2)
            dpre = np.concatenate([di, df, do, dg], axis=1)
            dw += xs[t].T @ dpre
            du += hs[t].T @ dpre
            db += dpre.sum(axis=0)
            dh = dpre @ u.T
            dc = dc * gf[t]
    else:
        raise ValueError(spec.cell_kind)
    return grads


def _backward_ann(spec, params, cache, d_preds):
    acts, pre_relu = cache["acts"], cache["pre_relu"]
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    grads["head.w"] += acts[-1].T @ d_preds
    grads["head.b"] += d_preds.sum(axis=0)
    da = d_preds @ params["head.w"].T
    for idx in range(len(spec.ann_hidden), 0, -1):
        dz = da * (pre_relu[idx - 1] > 0.0)
        grads[f"fc{idx}.w"] += acts[idx - 1].T @ dz
        grads[f"fc{idx}.b"] += dz.sum(axis=0)
        da = dz @ params[f"fc{idx}.w"].T
    return grads


def _backward_cnn(spec, params, cache, d_preds):
    xs, pre_relu = cache["xs"], cache["pre_relu"]
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    grads["head.w"] += cache["pooled"].T @ d_preds
    grads["head.b"] += d_preds.sum(axis=0)

    n_layers = len(spec.cnn_channels)
    l_out = xs[-1].shape[2]
    dx = (d_preds @ params["head.w"].T)[:, :, None] / l_out
    dx = np.broadcast_to(dx, xs[-1].shape).copy()  # undo global average pool
    k, stride = spec.cnn_kernel, spec.cnn_stride
    for idx in range(n_layers, 0, -1):
        dz = dx * (pre_relu[idx - 1] > 0.0)
        w = params[f"conv{idx}.w"]
        win = _conv_windows(xs[idx - 1], k, stride)
        grads[f"conv{idx}.w"] += np.einsum("bclk,bol->ock", win, dz,
                                           optimize=True)
        grads[f"conv{idx}.b"] += dz.sum(axis=(0, 2))
        dx_prev = np.zeros_like(xs[idx - 1])
        n_win = dz.shape[2]
        for tap in range(k):
            # scatter each kernel tap back onto the input positions it read
            contrib = np.einsum("bol,oc->bcl", dz, w[:, :, tap], optimize=True)
            dx_prev[:, :, tap:tap + stride * n_win:stride] += contrib
        dx = dx_prev
    return grads
