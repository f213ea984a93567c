"""Minimal recurrent-network machinery on numpy, float64 end to end.

Stacked GRU cells with layer normalization on each gate pre-activation, a
dense readout, exact backpropagation through time, Adam, and a central
finite-difference gradient checker.  No autograd framework: the backward
pass mirrors the forward pass by hand, which keeps the whole parameter
space open to the flat-vector view the optimizer and the checker need.

Gate equations (layer norm LN applied per pre-activation block, gate biases
folded into the LN bias):

    z = sigmoid(LN(W_z x + U_z h))
    r = sigmoid(LN(W_r x + U_r h))
    c = tanh(LN(W_c x + U_c (r * h)))
    h' = (1 - z) * c + z * h
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

LN_EPS = 1e-5


def sigmoid(x: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = LN_EPS) -> np.ndarray:
    """Normalize the last axis to zero mean and unit population variance."""
    if x.shape[-1] < 2:
        raise ValueError("layer_norm needs at least 2 features")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gain * (x - mean) / np.sqrt(var + eps) + bias


def _ln_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, tuple]:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv_std
    return gain * xhat + bias, (xhat, inv_std)


def _ln_backward(dy: np.ndarray, gain: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dgain, dbias); batch axes are summed into the param grads."""
    xhat, inv_std = cache
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)


@dataclass
class LnGruLayerParams:
    """Weights of one layer-normalized GRU cell."""

    w_z: np.ndarray
    u_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    g_z: np.ndarray
    b_z: np.ndarray
    g_r: np.ndarray
    b_r: np.ndarray
    g_c: np.ndarray
    b_c: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w_z, self.u_z, self.w_r, self.u_r, self.w_c, self.u_c,
                self.g_z, self.b_z, self.g_r, self.b_r, self.g_c, self.b_c]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LnGruLayerParams":
        h, d = hidden_dim, input_dim
        return cls(np.zeros((h, d)), np.zeros((h, h)),
                   np.zeros((h, d)), np.zeros((h, h)),
                   np.zeros((h, d)), np.zeros((h, h)),
                   np.zeros(h), np.zeros(h), np.zeros(h),
                   np.zeros(h), np.zeros(h), np.zeros(h))


@dataclass
class DenseLayerParams:
    w: np.ndarray
    b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w, self.b]


@dataclass
class NetworkParams:
    """Stacked LN-GRU layers plus a dense head, with a flat-vector view."""

    layers: list[LnGruLayerParams]
    head: DenseLayerParams

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.head.w.shape[0]

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend(layer.arrays())
        out.extend(self.head.arrays())
        return out

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "NetworkParams":
        if flat.shape != (self.size,):
            raise ValueError(f"expected flat vector of size {self.size}, got {flat.shape}")
        out = self.map(lambda a: a)
        pos = 0
        for a in out.arrays():
            a[...] = flat[pos: pos + a.size].reshape(a.shape)
            pos += a.size
        return out

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "NetworkParams":
        layers = [LnGruLayerParams(*(fn(a).copy() for a in l.arrays())) for l in self.layers]
        head = DenseLayerParams(fn(self.head.w).copy(), fn(self.head.b).copy())
        return NetworkParams(layers, head)

    def zeros_like(self) -> "NetworkParams":
        return self.map(np.zeros_like)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": [l.hidden_dim for l in self.layers],
            "output_dim": self.output_dim,
            "flat": self.flatten().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        net = init_network(int(d["input_dim"]), [int(h) for h in d["hidden_dims"]],
                           int(d["output_dim"]), seed=0)
        return net.unflatten(np.asarray(d["flat"], dtype=float))


def init_network(input_dim: int, hidden_dims: Sequence[int], output_dim: int,
                 seed: int) -> NetworkParams:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights; LN gain 1, bias 0."""
    rng = np.random.default_rng(seed)

    def mat(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    layers = []
    d = input_dim
    for h in hidden_dims:
        layers.append(LnGruLayerParams(
            w_z=mat(h, d), u_z=mat(h, h), w_r=mat(h, d), u_r=mat(h, h),
            w_c=mat(h, d), u_c=mat(h, h),
            g_z=np.ones(h), b_z=np.zeros(h), g_r=np.ones(h), b_r=np.zeros(h),
            g_c=np.ones(h), b_c=np.zeros(h)))
        d = h
    head = DenseLayerParams(mat(output_dim, d), np.zeros(output_dim))
    return NetworkParams(layers, head)


def ln_gru_cell_forward(p: LnGruLayerParams, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One cell update h -> h'; x and h may carry a leading batch axis."""
    if x.shape[-1] != p.input_dim or h.shape[-1] != p.hidden_dim:
        raise ValueError(
            f"dimension mismatch: cell is {p.input_dim}->{p.hidden_dim}, "
            f"got x{x.shape} h{h.shape}")
    z = sigmoid(layer_norm(x @ p.w_z.T + h @ p.u_z.T, p.g_z, p.b_z))
    r = sigmoid(layer_norm(x @ p.w_r.T + h @ p.u_r.T, p.g_r, p.b_r))
    c = np.tanh(layer_norm(x @ p.w_c.T + (r * h) @ p.u_c.T, p.g_c, p.b_c))
    return (1.0 - z) * c + z * h


@dataclass
class _LayerCache:
    x: np.ndarray        # (T, ..., D) layer input sequence
    hs: np.ndarray       # (T+1, ..., H) hidden states, hs[0] = h0
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray
    rh: np.ndarray
    xhat_z: np.ndarray
    inv_z: np.ndarray
    xhat_r: np.ndarray
    inv_r: np.ndarray
    xhat_c: np.ndarray
    inv_c: np.ndarray


def sequence_forward(net: NetworkParams, inputs: np.ndarray,
                     h0: list[np.ndarray] | None = None):
    """Run the stack over a (T, ...) input sequence.

    Returns (outputs, caches); caches feed sequence_backward.  A trailing
    batch axis is supported: inputs of shape (T, B, D) give (T, B, out).
    Layers are processed one at a time so the input projections and the
    readout run as single whole-sequence matmuls; only the recurrence itself
    steps through time.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        raise ValueError("inputs must be at least (T, input_dim)")
    t_len = inputs.shape[0]
    if t_len == 0:
        raise ValueError("empty input sequence")
    batch_shape = inputs.shape[1:-1]
    if h0 is None:
        h0 = [np.zeros(batch_shape + (l.hidden_dim,)) for l in net.layers]

    x = inputs
    layer_caches: list[_LayerCache] = []
    for li, p in enumerate(net.layers):
        if x.shape[-1] != p.input_dim:
            raise ValueError(f"layer {li} expects input dim {p.input_dim}, got {x.shape[-1]}")
        xz = x @ p.w_z.T
        xr = x @ p.w_r.T
        xc = x @ p.w_c.T
        shape = (t_len,) + batch_shape + (p.hidden_dim,)
        cache = _LayerCache(
            x=x, hs=np.empty((t_len + 1,) + batch_shape + (p.hidden_dim,)),
            z=np.empty(shape), r=np.empty(shape), c=np.empty(shape), rh=np.empty(shape),
            xhat_z=np.empty(shape), inv_z=np.empty(shape[:-1] + (1,)),
            xhat_r=np.empty(shape), inv_r=np.empty(shape[:-1] + (1,)),
            xhat_c=np.empty(shape), inv_c=np.empty(shape[:-1] + (1,)))
        h = h0[li]
        cache.hs[0] = h
        for t in range(t_len):
            zn, (cache.xhat_z[t], cache.inv_z[t]) = _ln_forward(xz[t] + h @ p.u_z.T, p.g_z, p.b_z)
            z = sigmoid(zn)
            rn, (cache.xhat_r[t], cache.inv_r[t]) = _ln_forward(xr[t] + h @ p.u_r.T, p.g_r, p.b_r)
            r = sigmoid(rn)
            rh = r * h
            cn, (cache.xhat_c[t], cache.inv_c[t]) = _ln_forward(xc[t] + rh @ p.u_c.T, p.g_c, p.b_c)
            c = np.tanh(cn)
            h = (1.0 - z) * c + z * h
            cache.z[t], cache.r[t], cache.c[t], cache.rh[t] = z, r, c, rh
            cache.hs[t + 1] = h
        layer_caches.append(cache)
        x = cache.hs[1:]
    outputs = x @ net.head.w.T + net.head.b
    return outputs, (layer_caches, x)


def _ln_dx(dy: np.ndarray, gain: np.ndarray, xhat: np.ndarray,
           inv_std: np.ndarray) -> np.ndarray:
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv_std * (dxhat - m1 - xhat * m2)


def sequence_backward(net: NetworkParams, caches, output_grads: np.ndarray) -> NetworkParams:
    """Exact BPTT: gradients of sum_t loss_t given d loss / d output_t."""
    layer_caches, h_top = caches
    output_grads = np.asarray(output_grads, dtype=float)
    t_len = len(layer_caches[0].z) if layer_caches else output_grads.shape[0]
    if output_grads.shape[0] != t_len:
        raise ValueError(f"got {output_grads.shape[0]} output grads for {t_len} cached steps")
    if output_grads.shape[-1] != net.output_dim:
        raise ValueError(f"output grad width {output_grads.shape[-1]} != {net.output_dim}")

    grads = net.zeros_like()
    batch_shape = output_grads.shape[1:-1]
    seq_axes = tuple(range(output_grads.ndim - 1))  # time plus batch axes

    grads.head.w += np.tensordot(output_grads, h_top, axes=(seq_axes, seq_axes))
    grads.head.b += output_grads.sum(axis=seq_axes)
    dx_seq = output_grads @ net.head.w

    for li in reversed(range(len(net.layers))):
        p = net.layers[li]
        g = grads.layers[li]
        cc = layer_caches[li]
        shape = (t_len,) + batch_shape + (p.hidden_dim,)
        dzn_seq = np.empty(shape)
        drn_seq = np.empty(shape)
        dcn_seq = np.empty(shape)
        dh_next = np.zeros(batch_shape + (p.hidden_dim,))
        for t in reversed(range(t_len)):
            dh = dx_seq[t] + dh_next
            h_prev, z, r, c = cc.hs[t], cc.z[t], cc.r[t], cc.c[t]
            dz = dh * (h_prev - c)
            dc = dh * (1.0 - z)
            dh_prev = dh * z

            dcn = dc * (1.0 - c * c)
            da_c = _ln_dx(dcn, p.g_c, cc.xhat_c[t], cc.inv_c[t])
            drh = da_c @ p.u_c
            dr = drh * h_prev
            dh_prev += drh * r

            drn = dr * r * (1.0 - r)
            da_r = _ln_dx(drn, p.g_r, cc.xhat_r[t], cc.inv_r[t])
            dh_prev += da_r @ p.u_r

            dzn = dz * z * (1.0 - z)
            da_z = _ln_dx(dzn, p.g_z, cc.xhat_z[t], cc.inv_z[t])
            dh_prev += da_z @ p.u_z

            dzn_seq[t], drn_seq[t], dcn_seq[t] = dzn, drn, dcn
            dh_next = dh_prev

        # whole-sequence weight gradients (the costly products, batched)
        da_z_seq = _ln_dx(dzn_seq, p.g_z, cc.xhat_z, cc.inv_z)
        da_r_seq = _ln_dx(drn_seq, p.g_r, cc.xhat_r, cc.inv_r)
        da_c_seq = _ln_dx(dcn_seq, p.g_c, cc.xhat_c, cc.inv_c)
        g.g_z += (dzn_seq * cc.xhat_z).sum(axis=seq_axes)
        g.b_z += dzn_seq.sum(axis=seq_axes)
        g.g_r += (drn_seq * cc.xhat_r).sum(axis=seq_axes)
        g.b_r += drn_seq.sum(axis=seq_axes)
        g.g_c += (dcn_seq * cc.xhat_c).sum(axis=seq_axes)
        g.b_c += dcn_seq.sum(axis=seq_axes)
        h_prev_seq = cc.hs[:-1]
        g.w_z += np.tensordot(da_z_seq, cc.x, axes=(seq_axes, seq_axes))
        g.u_z += np.tensordot(da_z_seq, h_prev_seq, axes=(seq_axes, seq_axes))
        g.w_r += np.tensordot(da_r_seq, cc.x, axes=(seq_axes, seq_axes))
        g.u_r += np.tensordot(da_r_seq, h_prev_seq, axes=(seq_axes, seq_axes))
        g.w_c += np.tensordot(da_c_seq, cc.x, axes=(seq_axes, seq_axes))
        g.u_c += np.tensordot(da_c_seq, cc.rh, axes=(seq_axes, seq_axes))
        if li > 0:
            dx_seq = da_z_seq @ p.w_z + da_r_seq @ p.w_r + da_c_seq @ p.w_c
    return grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_size(cls, size: int, lr: float = 1e-3) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), lr=lr)


def adam_step(flat_params: np.ndarray, flat_grads: np.ndarray,
              state: AdamState) -> np.ndarray:
    """Bias-corrected Adam update in place on the state; returns new params."""
    if flat_params.shape != flat_grads.shape or flat_params.shape != state.m.shape:
        raise ValueError("parameter / gradient / state size mismatch")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * flat_grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * flat_grads ** 2
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return flat_params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: int
    passed: bool
    probes: int


def finite_difference_check(net: NetworkParams, loss_fn: Callable[[np.ndarray], float],
                            analytic_grad: np.ndarray, probe_count: int = 25,
                            eps: float = 1e-5, threshold: float = 1e-4,
                            seed: int = 0) -> GradCheckReport:
    """Central differences on randomly probed parameters vs the analytic gradient.

    Relative error per probe is |a - n| / max(|a|, |n|, 1e-8).
    """
    flat = net.flatten()
    rng = np.random.default_rng(seed)
    if probe_count <= 0:
        return GradCheckReport(0.0, -1, True, 0)
    idx = rng.choice(flat.size, size=min(probe_count, flat.size), replace=False)
    worst, worst_i = 0.0, int(idx[0])
    for i in idx:
        bumped = flat.copy()
        bumped[i] = flat[i] + eps
        up = loss_fn(bumped)
        bumped[i] = flat[i] - eps
        down = loss_fn(bumped)
        numeric = (up - down) / (2.0 * eps)
        rel = abs(analytic_grad[i] - numeric) / max(abs(analytic_grad[i]), abs(numeric), 1e-8)
        if rel > worst:
            worst, worst_i = rel, int(i)
    return GradCheckReport(float(worst), worst_i, bool(worst < threshold), len(idx))


def save_checkpoint(net: NetworkParams, path: str | Path, meta: dict | None = None) -> None:
    doc = net.to_dict()
    doc["meta"] = meta or {}
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[NetworkParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return NetworkParams.from_dict(doc), doc.get("meta", {})
