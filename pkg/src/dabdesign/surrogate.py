"""Physics-informed surrogate pair for the converter.

Two recurrent networks split the modeling job by level:

- the switch network (ModNet) advances the bridge voltages one sample at a
  time, absorbing switching non-idealities such as post-edge ringing;
- the circuit network (CirNet) advances the inductor current conditioned on
  the switch network's voltages.

The circuit network trains against two losses: the one-step data error and
the mean squared residual of the discretized inductor law
L di/dt = -R i + v_p - n v_s (forward difference, left-endpoint drive).
On grid-aligned ideal waveforms that residual is exactly zero, which is what
makes the physics term a usable prior when only a handful of waveforms are
available.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .neural import (
    AdamState,
    NetworkParams,
    adam_step,
    init_network,
    ln_gru_cell_forward,
    sequence_backward,
    sequence_forward,
)
from .physics import (
    ConverterParams,
    ModulationParams,
    RingingParams,
    SamplingGrid,
    Waveform,
    apply_ringing,
    snap_to_grid,
    solve_steady_state,
    synthesize_bridge_voltages,
    waveform_from_csv,
    waveform_to_csv,
)

MODNET_HIDDEN = (32, 32)
CIRNET_HIDDEN = (32, 32)
VOLTAGE_BAND = (0.8, 1.2)   # allowed v_in / v_out excursion around nominal


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class RolloutDivergedError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"rollout produced a non-finite value at step {step}")
        self.step = step


@dataclass(frozen=True)
class OperatingPoint:
    mp: ModulationParams
    v_in: float
    v_out: float

    def to_dict(self) -> dict:
        return {"mp": self.mp.to_dict(), "v_in": self.v_in, "v_out": self.v_out}

    @classmethod
    def from_dict(cls, d: dict) -> "OperatingPoint":
        return cls(ModulationParams.from_dict(d["mp"]), float(d["v_in"]), float(d["v_out"]))


@dataclass
class TrainingSet:
    items: list[tuple[OperatingPoint, Waveform]]
    grid: SamplingGrid
    provenance: str = "ideal"

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("training set must not be empty")
        for _, w in self.items:
            if w.grid.samples_per_period != self.grid.samples_per_period:
                raise ValueError("all waveforms must share the training grid")


@dataclass
class TrainingConfig:
    epochs: int = 240
    learning_rate: float = 0.02
    lambda_phys: float = 1.0
    seed: int = 0
    patience: int = 80
    input_noise: float = 0.05        # sigma on the switch net's autoregressive inputs
    collocation_span: float = 1.25   # half-width of the law-collocation state box

    def __post_init__(self) -> None:
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.lambda_phys < 0:
            raise ValueError("lambda_phys must be nonnegative")


@dataclass
class SurrogatePair:
    modnet: NetworkParams
    cirnet: NetworkParams
    v_scale: float
    i_scale: float
    v_ref: float
    delta_scale: float   # amperes per unit of the circuit net's increment output
    grid: SamplingGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.v_scale <= 0 or self.i_scale <= 0 or self.v_ref <= 0:
            raise ValueError("normalization constants must be positive")
        if self.delta_scale <= 0:
            raise ValueError("delta_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "modnet": self.modnet.to_dict(),
            "cirnet": self.cirnet.to_dict(),
            "v_scale": self.v_scale,
            "i_scale": self.i_scale,
            "v_ref": self.v_ref,
            "delta_scale": self.delta_scale,
            "grid": self.grid.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogatePair":
        return cls(NetworkParams.from_dict(d["modnet"]), NetworkParams.from_dict(d["cirnet"]),
                   float(d["v_scale"]), float(d["i_scale"]), float(d["v_ref"]),
                   float(d["delta_scale"]), SamplingGrid.from_dict(d["grid"]),
                   dict(d.get("meta", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SurrogatePair":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class EvalReport:
    mae_i_l: float
    mae_v: float
    physics_rms: float
    per_point: list[dict]

    def to_dict(self) -> dict:
        return {"mae_i_l": self.mae_i_l, "mae_v": self.mae_v,
                "physics_rms": self.physics_rms, "per_point": self.per_point}


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def _check_in_range(cp: ConverterParams, op: OperatingPoint) -> None:
    lo, hi = VOLTAGE_BAND
    if not lo * cp.v_in <= op.v_in <= hi * cp.v_in:
        raise ValueError(f"v_in = {op.v_in} outside allowed band "
                         f"[{lo * cp.v_in}, {hi * cp.v_in}]")
    if not lo * cp.v_out <= op.v_out <= hi * cp.v_out:
        raise ValueError(f"v_out = {op.v_out} outside allowed band "
                         f"[{lo * cp.v_out}, {hi * cp.v_out}]")
    if not -0.5 <= op.mp.d0 <= 0.5:
        raise ValueError(f"d0 = {op.mp.d0} outside training range [-0.5, 0.5]")


def operating_converter(cp: ConverterParams, op: OperatingPoint) -> ConverterParams:
    return replace(cp, v_in=op.v_in, v_out=op.v_out)


def generate_dataset(cp: ConverterParams, points: list[OperatingPoint],
                     grid: SamplingGrid, rp: RingingParams, seed: int) -> TrainingSet:
    """Solve the oracle at each point; ratios are snapped to the grid so the
    discretized inductor law holds exactly on the generated data."""
    if not points:
        raise ValueError("at least one operating point is required")
    items = []
    for k, op in enumerate(points):
        _check_in_range(cp, op)
        op = replace(op, mp=snap_to_grid(op.mp, grid))
        w = solve_steady_state(operating_converter(cp, op), op.mp, grid)
        if rp.enabled:
            w = apply_ringing(w, rp, seed=seed * 1_000_003 + k)
        items.append((op, w))
    return TrainingSet(items, grid, provenance="ringing" if rp.enabled else "ideal")


def sample_operating_points(cp: ConverterParams, count: int, seed: int,
                            grid: SamplingGrid, strategy_pool: tuple[str, ...] = ("SPS",),
                            d0_range: tuple[float, float] = (0.05, 0.45)) -> list[OperatingPoint]:
    """Evenly spread shifts over d0_range (grid-aligned), nominal voltages."""
    n_half = grid.samples_per_period // 2
    shifts = np.linspace(d0_range[0], d0_range[1], count)
    rng = np.random.default_rng(seed)
    points = []
    for k, d0 in enumerate(shifts):
        d0 = round(float(d0) * n_half) / n_half
        strat = strategy_pool[int(rng.integers(len(strategy_pool)))]
        if strat == "SPS":
            mp = ModulationParams("SPS", d0)
        else:
            duty = lambda: int(rng.integers(n_half // 2, n_half + 1)) / n_half
            mp = snap_to_grid(ModulationParams("TPS", d0, duty(), duty()), grid)
        points.append(OperatingPoint(mp, cp.v_in, cp.v_out))
    return points


# ---------------------------------------------------------------------------
# feature layout
# ---------------------------------------------------------------------------
# ModNet input : [v_p(k-1), v_s(k-1)] / v_scale (autoregressive),
#                commanded ideal levels [v_p*(k), v_s*(k)] / v_scale,
#                sin/cos of the target phase,
#                d0, d1, d2, v_in / v_ref, v_out / v_ref         (11 features)
# ModNet output: deviation from the command: v(k) = v*(k) + out * v_scale
# CirNet input : i(k) / i_scale, [v_p(k), v_s(k)] / v_scale      (3 features)
# CirNet output: one increment unit: i(k+1) = i(k) + out * delta_scale,
#                delta_scale = v_scale * dt / L (the natural step size)
#
# Both nets predict a correction on top of a structurally known baseline:
# the switch net the deviation of the real bridge voltage from its command
# (edge shape, ringing), the circuit net the current increment.  A recurrent
# cell behind layer norm is a poor identity approximator, so asking either
# net to reproduce its own input would leave a small per-step gain error
# that compounds over the hundreds of closed-loop steps in a period.  The
# circuit net deliberately sees only the electrical state: the inductor law
# does not depend on the modulation setting, and withholding it is what
# lets one net generalize across strategies.

MODNET_CMD_SLICE = slice(2, 4)   # where the commanded levels sit in the input

MODNET_INPUT_DIM = 11
CIRNET_INPUT_DIM = 3


def _conditioning(op: OperatingPoint, v_ref: float) -> np.ndarray:
    return np.array([op.mp.d0, op.mp.d1, op.mp.d2,
                     op.v_in / v_ref, op.v_out / v_ref])


def _phase_features(n: int) -> np.ndarray:
    ph = 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.sin(ph), np.cos(ph)], axis=-1)


def _commanded_levels(op: OperatingPoint, grid: SamplingGrid, v_scale: float) -> np.ndarray:
    """Ideal (N, 2) bridge voltages for the operating point, normalized."""
    from .physics import _level_at, modulation_breakpoints
    bp, lp, ls = modulation_breakpoints(op.mp)
    f = np.arange(grid.samples_per_period) / grid.samples_per_period
    return np.stack([_level_at(bp, lp, f) * op.v_in,
                     _level_at(bp, ls, f) * op.v_out], axis=-1) / v_scale


def _modnet_sequences(set_: TrainingSet, v_scale: float, v_ref: float,
                      noise_rng: np.random.Generator | None = None,
                      noise_sigma: float = 0.05):
    """Teacher-forced (inputs, targets) of shape (T, B, .) over the whole set.

    Training adds seeded Gaussian noise to the autoregressive features so the
    net cannot lean on copying them, which would be unstable in closed loop.
    """
    n = set_.grid.samples_per_period
    phase = _phase_features(n)
    ins, tgts = [], []
    for op, w in set_.items:
        v = np.stack([w.v_p, w.v_s], axis=-1) / v_scale
        prev = np.roll(v, 1, axis=0)
        if noise_rng is not None:
            prev = prev + noise_rng.normal(0.0, noise_sigma, size=prev.shape)
        cmd = _commanded_levels(op, set_.grid, v_scale)
        cond = np.broadcast_to(_conditioning(op, v_ref), (n, 5))
        ins.append(np.concatenate([prev, cmd, phase, cond], axis=-1))
        tgts.append(v)
    return np.stack(ins, axis=1), np.stack(tgts, axis=1)


def _modnet_predict_teacher_forced(modnet: NetworkParams, set_: TrainingSet,
                                   v_scale: float, v_ref: float) -> np.ndarray:
    inputs, _ = _modnet_sequences(set_, v_scale, v_ref)
    outputs, _ = sequence_forward(modnet, inputs)
    return inputs[..., MODNET_CMD_SLICE] + outputs  # (T, B, 2), normalized


def _cirnet_sequences(set_: TrainingSet, v_norm: np.ndarray, i_scale: float):
    """(inputs, targets, i_now) for the circuit net, teacher forced.

    v_norm are the (T, B, 2) normalized voltages the current net conditions
    on (the switch net's predictions during training).
    """
    i_true = np.stack([w.i_l for _, w in set_.items], axis=1) / i_scale  # (T, B)
    target = np.roll(i_true, -1, axis=0)
    inputs = np.concatenate([i_true[..., None], v_norm], axis=-1)
    return inputs, target[..., None], i_true


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _fit(net: NetworkParams, inputs: np.ndarray, cfg: TrainingConfig,
         grad_fn) -> tuple[NetworkParams, list[float]]:
    """Adam loop over full-batch BPTT; grad_fn(outputs) -> (loss, output_grads).

    Learning rate steps down 5x for the last 30% of the budget; the returned
    parameters are the best-loss snapshot.
    """
    flat = net.flatten()
    state = AdamState.for_size(flat.size, lr=cfg.learning_rate)
    decay_at = int(0.7 * cfg.epochs)
    history: list[float] = []
    best_loss, best_flat, since_best = math.inf, flat.copy(), 0
    for epoch in range(cfg.epochs):
        state.lr = cfg.learning_rate * (0.2 if epoch >= decay_at else 1.0)
        current = net.unflatten(flat)
        outputs, caches = sequence_forward(current, inputs)
        loss, output_grads = grad_fn(outputs)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch)
        history.append(loss)
        if loss < best_loss:
            best_loss, best_flat, since_best = loss, flat.copy(), 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break
        grads = sequence_backward(current, caches, output_grads)
        flat = adam_step(flat, grads.flatten(), state)
    return net.unflatten(best_flat), history


def voltage_scale(set_: TrainingSet) -> float:
    return max(float(np.max(np.abs(w.v_p))) for _, w in set_.items) or 1.0


def current_scale(set_: TrainingSet) -> float:
    return max(max(float(np.max(np.abs(w.i_l))) for _, w in set_.items), 1e-9)


def train_modnet(set_: TrainingSet, cfg: TrainingConfig,
                 v_ref: float | None = None) -> tuple[NetworkParams, list[float]]:
    """One-step voltage predictor, minimizing the normalized MSE."""
    v_scale = voltage_scale(set_)
    v_ref = v_ref or v_scale
    inputs, targets = _modnet_sequences(set_, v_scale, v_ref,
                                        noise_rng=np.random.default_rng(cfg.seed + 7),
                                        noise_sigma=cfg.input_noise)
    net = init_network(MODNET_INPUT_DIM, MODNET_HIDDEN, 2, seed=cfg.seed)
    deviation_targets = targets - inputs[..., MODNET_CMD_SLICE]

    def grad_fn(outputs):
        diff = outputs - deviation_targets
        return float(np.mean(diff ** 2)), 2.0 * diff / diff.size

    return _fit(net, inputs, cfg, grad_fn)


def train_cirnet(set_: TrainingSet, modnet: NetworkParams, cp: ConverterParams,
                 cfg: TrainingConfig, v_ref: float | None = None
                 ) -> tuple[NetworkParams, list[float]]:
    """One-step current predictor trained on data + physics-residual losses.

    The data loss supervises one-step predictions on the measured
    trajectories.  The physics loss enforces the discretized inductor law on
    collocation states: the same sequences with current and voltages
    displaced off the trajectory, where no data exists but the law still
    fixes the increment.  That is what lets a 10-waveform training set
    constrain the closed-loop behavior.  With lambda_phys = 0 the
    collocation half is dropped and the loss is exactly the data-driven MSE
    baseline.
    """
    v_scale = voltage_scale(set_)
    i_scale = current_scale(set_)
    v_ref = v_ref or v_scale
    v_pred = _modnet_predict_teacher_forced(modnet, set_, v_scale, v_ref)
    inputs, targets, i_now = _cirnet_sequences(set_, v_pred, i_scale)

    dt = set_.grid.dt
    delta_scale = v_scale * dt / cp.l_lk          # amperes per output unit
    dsn = delta_scale / i_scale                   # normalized increment unit
    n_data = inputs.shape[1]

    if cfg.lambda_phys > 0.0:
        # collocation half: states drawn uniformly over the whole operating
        # box (currents and voltages alike), not just around the recorded
        # trajectories.  The inductor law fixes the increment at every one of
        # these states - supervision the ten measured waveforms cannot give,
        # and exactly what an unseen modulation pattern will visit.
        rng = np.random.default_rng(cfg.seed + 13)
        span = cfg.collocation_span
        colloc = rng.uniform(-span, span, size=inputs.shape)
        i_colloc_amp = colloc[..., 0] * i_scale
        drive_colloc = (colloc[..., 1] - cp.n * colloc[..., 2]) * v_scale
        # the law written for the increment output: residual in volts is
        # v_scale * out + R i - u, so d(residual)/d(out) is O(v_scale)
        law_target = (drive_colloc - cp.r_l * i_colloc_amp) / v_scale
        inputs = np.concatenate([inputs, colloc], axis=1)

    # both losses are expressed per increment unit so lambda_phys = 1 weighs
    # a data mismatch and a law violation of the same size equally
    target_increments = (targets[..., 0] - i_now) / dsn

    def grad_fn(outputs):
        diff = outputs[:, :n_data, 0] - target_increments
        data_loss = float(np.mean(diff ** 2))
        grads = np.zeros_like(outputs)
        grads[:, :n_data, 0] = 2.0 * diff / diff.size
        if cfg.lambda_phys == 0.0:
            return data_loss, grads
        residual = (outputs[:, n_data:, 0] - law_target) * (v_scale / v_ref)
        phys_loss = float(np.mean(residual ** 2))
        grads[:, n_data:, 0] = (cfg.lambda_phys * 2.0 * residual / residual.size
                                * (v_scale / v_ref))
        return data_loss + cfg.lambda_phys * phys_loss, grads

    net = init_network(CIRNET_INPUT_DIM, CIRNET_HIDDEN, 1, seed=cfg.seed + 1)
    return _fit(net, inputs, cfg, grad_fn)


def train_pair(set_: TrainingSet, cp: ConverterParams, cfg: TrainingConfig) -> SurrogatePair:
    v_scale = voltage_scale(set_)
    i_scale = current_scale(set_)
    modnet, mod_hist = train_modnet(set_, cfg, v_ref=v_scale)
    cirnet, cir_hist = train_cirnet(set_, modnet, cp, cfg, v_ref=v_scale)
    return SurrogatePair(
        modnet=modnet, cirnet=cirnet, v_scale=v_scale, i_scale=i_scale,
        v_ref=v_scale, delta_scale=v_scale * set_.grid.dt / cp.l_lk,
        grid=set_.grid,
        meta={"epochs": cfg.epochs, "learning_rate": cfg.learning_rate,
              "lambda_phys": cfg.lambda_phys, "seed": cfg.seed,
              "provenance": set_.provenance, "data_size": len(set_.items),
              "final_modnet_loss": mod_hist[-1], "final_cirnet_loss": cir_hist[-1]})


# ---------------------------------------------------------------------------
# physics residual (public contract)
# ---------------------------------------------------------------------------

def physics_residual(cp: ConverterParams, i_seq: np.ndarray, v_p_seq: np.ndarray,
                     v_s_seq: np.ndarray, dt: float) -> np.ndarray:
    """r_k = L (i_{k+1} - i_k)/dt + R i_k - v_p(k) + n v_s(k), k = 0..N-2."""
    i_seq = np.asarray(i_seq, dtype=float)
    v_p_seq = np.asarray(v_p_seq, dtype=float)
    v_s_seq = np.asarray(v_s_seq, dtype=float)
    if not (len(i_seq) == len(v_p_seq) == len(v_s_seq)):
        raise ValueError("i, v_p and v_s must have equal lengths")
    if len(i_seq) < 2:
        raise ValueError("need at least two samples")
    di = np.diff(i_seq)
    return (cp.l_lk * di / dt + cp.r_l * i_seq[:-1]
            - v_p_seq[:-1] + cp.n * v_s_seq[:-1])


# ---------------------------------------------------------------------------
# closed-loop rollout
# ---------------------------------------------------------------------------

@dataclass
class RolloutResult:
    v_p: np.ndarray
    v_s: np.ndarray
    i_l: np.ndarray
    grid: SamplingGrid

    @property
    def waveform(self) -> Waveform:
        return Waveform(self.v_p, self.v_s, self.i_l, self.grid)


def _gru_stack_step(net: NetworkParams, x: np.ndarray, hs: list[np.ndarray]) -> np.ndarray:
    for li, layer in enumerate(net.layers):
        hs[li] = ln_gru_cell_forward(layer, x, hs[li])
        x = hs[li]
    return x @ net.head.w.T + net.head.b


class _FastStack:
    """Rollout-time GRU stack with the z and r gate projections fused.

    Matches ln_gru_cell_forward exactly (same dot products, same per-gate
    normalization statistics); it only cuts the per-step call count, which
    dominates closed-loop generation cost.
    """

    def __init__(self, net: NetworkParams):
        self.net = net
        self.prep = []
        for p in net.layers:
            self.prep.append({
                "w_zr": np.vstack([p.w_z, p.w_r]),
                "u_zr": np.vstack([p.u_z, p.u_r]),
                "g_zr": np.stack([p.g_z, p.g_r]),
                "b_zr": np.stack([p.b_z, p.b_r]),
                "w_c": p.w_c, "u_c": p.u_c, "g_c": p.g_c, "b_c": p.b_c,
                "hidden": p.hidden_dim,
            })

    def step(self, x: np.ndarray, hs: list[np.ndarray]) -> np.ndarray:
        from .neural import LN_EPS, sigmoid
        for li, p in enumerate(self.prep):
            h = hs[li]
            a = (x @ p["w_zr"].T + h @ p["u_zr"].T).reshape(len(x), 2, p["hidden"])
            centered = a - a.mean(axis=-1, keepdims=True)
            var = (centered * centered).mean(axis=-1, keepdims=True)
            zr = sigmoid(p["g_zr"] * centered / np.sqrt(var + LN_EPS) + p["b_zr"])
            z, r = zr[:, 0], zr[:, 1]
            ac = x @ p["w_c"].T + (r * h) @ p["u_c"].T
            centered = ac - ac.mean(axis=-1, keepdims=True)
            var = (centered * centered).mean(axis=-1, keepdims=True)
            c = np.tanh(p["g_c"] * centered / np.sqrt(var + LN_EPS) + p["b_c"])
            hs[li] = (1.0 - z) * c + z * h
            x = hs[li]
        return x @ self.net.head.w.T + self.net.head.b


def rollout_batch(pair: SurrogatePair, ops: list[OperatingPoint], cp: ConverterParams,
                  steps: int | None = None,
                  init: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
                  ) -> list[RolloutResult]:
    """Closed-loop generation for a batch of operating points.

    Default init starts each trajectory at the ideal t = 0 voltages with zero
    current, runs one warm-up period, keeps the next full period and recenters
    it to zero mean (the steady state's mean is zero for any r_l).  With an
    explicit ``init`` the trajectory starts there, no warm-up, no recentering.
    """
    n = pair.grid.samples_per_period
    b = len(ops)
    warmup = 0
    if init is None:
        warmup = n
        steps = n if steps is None else steps
        v0 = np.empty((b, 2))
        for j, op in enumerate(ops):
            w0 = synthesize_bridge_voltages(
                operating_converter(cp, op), snap_to_grid(op.mp, pair.grid), pair.grid)
            v0[j] = (w0.v_p[0], w0.v_s[0])
        i0 = np.zeros(b)
    else:
        if steps is None:
            raise ValueError("steps is required when init is given")
        v0 = np.stack([np.asarray(init[0], dtype=float), np.asarray(init[1], dtype=float)],
                      axis=-1).reshape(b, 2)
        i0 = np.asarray(init[2], dtype=float).reshape(b)

    cond = np.stack([_conditioning(op, pair.v_ref) for op in ops])  # (b, 5)
    phase = _phase_features(n)
    cmd = np.stack([_commanded_levels(op, pair.grid, pair.v_scale) for op in ops],
                   axis=1)  # (n, b, 2)

    v = v0 / pair.v_scale          # (b, 2) normalized
    i = i0 / pair.i_scale          # (b,)
    mod_h = [np.zeros((b, l.hidden_dim)) for l in pair.modnet.layers]
    cir_h = [np.zeros((b, l.hidden_dim)) for l in pair.cirnet.layers]

    dsn = pair.delta_scale / pair.i_scale
    total = warmup + steps
    v_traj = np.empty((total, b, 2))
    i_traj = np.empty((total, b))
    fast_cir = _FastStack(pair.cirnet)
    fast_mod = _FastStack(pair.modnet)
    cir_in = np.empty((b, 3))
    mod_in = np.empty((b, MODNET_INPUT_DIM))
    mod_in[:, 6:] = cond
    for g in range(total):
        # current advances off the present voltages, then voltages advance
        cir_in[:, 0] = i
        cir_in[:, 1:] = v
        i = i + fast_cir.step(cir_in, cir_h)[:, 0] * dsn
        k_next = (g + 1) % n
        mod_in[:, 0:2] = v
        mod_in[:, 2:4] = cmd[k_next]
        mod_in[:, 4:6] = phase[k_next]
        v = cmd[k_next] + fast_mod.step(mod_in, mod_h)
        v_traj[g] = v
        i_traj[g] = i

    if not np.all(np.isfinite(i_traj)) or not np.all(np.isfinite(v_traj)):
        bad = np.flatnonzero(~np.isfinite(i_traj).all(axis=(1,)) |
                             ~np.isfinite(v_traj).all(axis=(1, 2)))
        raise RolloutDivergedError(int(bad[0]))

    v_keep = v_traj[warmup:] * pair.v_scale
    i_keep = i_traj[warmup:] * pair.i_scale
    if init is None:
        i_keep = i_keep - i_keep.mean(axis=0, keepdims=True)
        # the retained period starts one sample into the second period; shift
        # so index 0 lines up with phase 0
        v_keep = np.roll(v_keep, 1, axis=0)
        i_keep = np.roll(i_keep, 1, axis=0)

    return [RolloutResult(v_keep[:, j, 0], v_keep[:, j, 1], i_keep[:, j], pair.grid)
            for j in range(b)]


def rollout(pair: SurrogatePair, op: OperatingPoint, cp: ConverterParams,
            steps: int | None = None,
            init: tuple[float, float, float] | None = None) -> RolloutResult:
    packed = None
    if init is not None:
        packed = (np.array([init[0]]), np.array([init[1]]), np.array([init[2]]))
    return rollout_batch(pair, [op], cp, steps=steps, init=packed)[0]


def evaluate(pair: SurrogatePair, cp: ConverterParams, holdout: TrainingSet) -> EvalReport:
    """Rollout accuracy against oracle waveforms, averaged over the holdout."""
    if not holdout.items:
        raise ValueError("holdout must not be empty")
    rolls = rollout_batch(pair, [op for op, _ in holdout.items], cp)
    per_point = []
    for (op, w), r in zip(holdout.items, rolls):
        res = physics_residual(cp, r.i_l, r.v_p, r.v_s, pair.grid.dt)
        per_point.append({
            "op": op.to_dict(),
            "mae_i_l": float(np.mean(np.abs(r.i_l - w.i_l))),
            "mae_v": float(0.5 * (np.mean(np.abs(r.v_p - w.v_p))
                                  + np.mean(np.abs(r.v_s - w.v_s)))),
            "physics_rms": float(np.sqrt(np.mean(res ** 2))),
            "i_pp_rollout": float(np.max(r.i_l) - np.min(r.i_l)),
            "i_pp_oracle": float(np.max(w.i_l) - np.min(w.i_l)),
        })
    return EvalReport(
        mae_i_l=float(np.mean([p["mae_i_l"] for p in per_point])),
        mae_v=float(np.mean([p["mae_v"] for p in per_point])),
        physics_rms=float(np.mean([p["physics_rms"] for p in per_point])),
        per_point=per_point)


# ---------------------------------------------------------------------------
# training-set directory format: waveform CSVs plus a JSON manifest
# ---------------------------------------------------------------------------

def save_training_set(set_: TrainingSet, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"provenance": set_.provenance, "grid": set_.grid.to_dict(), "points": []}
    for k, (op, w) in enumerate(set_.items):
        name = f"waveform_{k:03d}.csv"
        waveform_to_csv(w, directory / name)
        manifest["points"].append({"csv": name, "op": op.to_dict()})
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2),
                                             encoding="utf-8")


def load_training_set(directory: str | Path) -> TrainingSet:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    grid = SamplingGrid.from_dict(manifest["grid"])
    items = [(OperatingPoint.from_dict(p["op"]), waveform_from_csv(directory / p["csv"]))
             for p in manifest["points"]]
    return TrainingSet(items, grid, provenance=manifest.get("provenance", "external"))
