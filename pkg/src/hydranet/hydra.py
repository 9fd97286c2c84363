"""Per-player self-momentum model.

One game is processed at a time: the carried implicit momentum row is
prepended to the game's points, projected into (z, x, B, C, dt), run through
the windowed state-space kernel, fused by cross-attention, normalized, and
projected back to the feature width. The last output row seeds the next
game's implicit momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .optim import ModelParameters, ParamView
from .tensor import ContractError, ShapeError, Tensor

CROSS_GAME = "cross-game"
CROSS_SET = "cross-set"
MATCH_START = "match-start"


@dataclass(frozen=True)
class HydraConfig:
    d: int = 16
    heads: int = 4
    head_dim: int = 8
    window: int = 2
    eps: float = 1e-6
    dropout: float = 0.1
    # test-mode switches; defaults are the model proper
    stride: int = 1
    fusion: str = "attention"
    gate: bool = True
    residual: bool = True

    @property
    def d_inner(self) -> int:
        return self.heads * self.head_dim

    @property
    def d_state(self) -> int:
        return self.d

    @property
    def d_in_proj(self) -> int:
        return 2 * self.d_inner + 2 * self.d_state + self.heads


def init_hydra_params(
    params: ModelParameters, prefix: str, cfg: HydraConfig, rng: np.random.Generator
) -> None:
    d, di, h = cfg.d, cfg.d_inner, cfg.heads

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    # the gate columns start constant (silu(1) everywhere) so the gate opens
    # uniformly and is learned from there; a random gate scrambles the signal
    w_in = uniform((d, cfg.d_in_proj), d)
    w_in[:, :di] = 0.0
    b_in = np.zeros(cfg.d_in_proj)
    b_in[:di] = 1.0
    params[f"{prefix}.in_proj.weight"] = w_in
    params[f"{prefix}.in_proj.bias"] = b_in
    params[f"{prefix}.A_log"] = np.log(rng.uniform(1.0, 16.0, size=h))
    dt = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=h))
    params[f"{prefix}.dt_bias"] = dt + np.log(-np.expm1(-dt))
    params[f"{prefix}.D"] = np.ones(h)
    params[f"{prefix}.norm.weight"] = np.ones(di)
    params[f"{prefix}.out_proj.weight"] = uniform((di, d), di)
    params[f"{prefix}.out_proj.bias"] = np.zeros(d)
    for stream in ("diag", "off"):
        for role in ("q", "k", "v"):
            params[f"{prefix}.fuse.{role}_{stream}"] = uniform((di, di), di)
    params[f"{prefix}.W_g"] = np.eye(d)
    params[f"{prefix}.b_g"] = np.zeros(d)
    params[f"{prefix}.W_set"] = np.eye(d)
    params[f"{prefix}.b_set"] = np.zeros(d)


# ---------------------------------------------------------- implicit momentum


@dataclass
class ImplicitMomentum:
    vector: Tensor
    provenance: str = MATCH_START


def init_implicit_momentum(d: int = 16) -> tuple[ImplicitMomentum, ImplicitMomentum]:
    return ImplicitMomentum(Tensor(np.zeros(d))), ImplicitMomentum(Tensor(np.zeros(d)))


def update_implicit_momentum(y_last: Tensor, transition: str, p: ParamView) -> ImplicitMomentum:
    """Carry the last output row of a game into the next game."""
    if transition == CROSS_GAME:
        W, b = p["W_g"], p["b_g"]
    elif transition == CROSS_SET:
        W, b = p["W_set"], p["b_set"]
    else:
        raise ContractError(f"unknown transition {transition!r}")
    vec = T.matmul(W, y_last.reshape(-1, 1)).reshape(-1) + b
    return ImplicitMomentum(vec, transition)


def build_game_input(momentum: Tensor, points: Tensor) -> Tensor:
    points = T.as_tensor(points)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ShapeError(f"a game needs at least one point, got shape {points.shape}")
    return T.concat([T.as_tensor(momentum).reshape(1, -1), points], axis=0)


# ------------------------------------------------------------ core parameters


class CoreParameters(NamedTuple):
    z: Tensor  # (T, d_inner)
    x: Tensor  # (T, H, P)
    B: Tensor  # (T, 1, d_state)
    C: Tensor  # (T, 1, d_state)
    dt: Tensor  # (T, H)


def project_core_parameters(G: Tensor, p: ParamView, cfg: HydraConfig) -> CoreParameters:
    if G.shape[-1] != cfg.d:
        raise ShapeError(f"game input has width {G.shape[-1]}, expected {cfg.d}")
    n = G.shape[0]
    di, ds, h = cfg.d_inner, cfg.d_state, cfg.heads
    proj = T.linear(G, p["in_proj.weight"], p["in_proj.bias"])
    z = proj[:, :di]
    x = proj[:, di : 2 * di].reshape(n, h, cfg.head_dim)
    B = proj[:, 2 * di : 2 * di + ds].reshape(n, 1, ds)
    C = proj[:, 2 * di + ds : 2 * di + 2 * ds].reshape(n, 1, ds)
    dt = proj[:, 2 * di + 2 * ds :]
    return CoreParameters(z, x, B, C, dt)


def compute_decay_A(dt: Tensor, p: ParamView) -> Tensor:
    """``-exp(A_log) * softplus(dt + dt_bias)``; strictly negative."""
    return -T.exp(p["A_log"]) * T.softplus(dt + p["dt_bias"])


# ------------------------------------------------------------------- kernel


class WindowedTensors(NamedTuple):
    x: Tensor  # (N, S, H, P)
    A: Tensor  # (H, N, S)
    B: Tensor  # (N, S, 1, d_state)
    C: Tensor  # (N, S, 1, d_state)


def window_index(length: int, window: int = 2, stride: int = 1) -> np.ndarray:
    if length < window:
        raise ShapeError(f"sequence of length {length} is shorter than the window {window}")
    if stride == 1:
        starts = np.arange(length - window + 1)
    elif stride == window:
        if length % window:
            raise ShapeError(f"length {length} is not a multiple of the window {window}")
        starts = np.arange(0, length, window)
    else:
        raise ShapeError(f"stride must be 1 or the window size, got {stride}")
    return starts[:, None] + np.arange(window)[None, :]


def unfold_windows(x: Tensor, A: Tensor, B: Tensor, C: Tensor, window: int = 2, stride: int = 1) -> WindowedTensors:
    idx = window_index(x.shape[0], window, stride)
    return WindowedTensors(
        x=x[idx],
        A=A[idx].transpose(2, 0, 1),
        B=B[idx],
        C=C[idx],
    )


def intra_window_output(w: WindowedTensors) -> Tensor:
    L = T.segsum_exp(w.A)  # (H, N, S, S)
    return T.einsum("nlgd,nsgd,hnls,nshp->nlhp", w.C, w.B, L, w.x)


def window_states(w: WindowedTensors) -> tuple[Tensor, Tensor]:
    A_cumsum = T.cumsum(w.A, axis=-1)
    decay = T.exp(A_cumsum[:, :, -1:] - A_cumsum)
    states = T.einsum("nsgd,hns,nshp->nhpd", w.B, decay, w.x)
    return A_cumsum, states


def inter_window_states(A_cumsum: Tensor, states: Tensor) -> Tensor:
    """State entering each window, propagated from all earlier windows."""
    n_windows = states.shape[0]
    chunk_decay = T.segsum_exp(T.pad_front(A_cumsum[:, :, -1], axis=-1))  # (H, N+1, N+1)
    initial = Tensor(np.zeros((1,) + states.shape[1:]))
    augmented = T.concat([initial, states], axis=0)
    propagated = T.einsum("hzc,chpd->zhpd", chunk_decay, augmented)
    return propagated[:n_windows]


def off_diagonal_output(C: Tensor, carried: Tensor, A_cumsum: Tensor) -> Tensor:
    return T.einsum("nlgd,nhpd,hnl->nlhp", C, carried, T.exp(A_cumsum))


def fold_windows(Y: Tensor, stride: int = 1) -> Tensor:
    """Windowed ``(N, S, H, P)`` back to a sequence.

    With stride 1 the first window contributes all its slots and every later
    window contributes only its final slot, where it holds the newest point.
    """
    n, s = Y.shape[0], Y.shape[1]
    if stride == s:
        return Y.reshape((n * s,) + Y.shape[2:])
    return T.concat([Y[0], Y[1:, s - 1]], axis=0)


def mssd(x: Tensor, A: Tensor, B: Tensor, C: Tensor, window: int = 2, stride: int = 1) -> tuple[Tensor, Tensor]:
    """Windowed state-space kernel; returns ``(Y_diag, Y_off)`` in sequence form."""
    w = unfold_windows(x, A, B, C, window, stride)
    y_diag = intra_window_output(w)
    A_cumsum, states = window_states(w)
    carried = inter_window_states(A_cumsum, states)
    y_off = off_diagonal_output(w.C, carried, A_cumsum)
    return fold_windows(y_diag, stride), fold_windows(y_off, stride)


# -------------------------------------------------------------- fusion, norm


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def fuse_cross_attention(y_diag: Tensor, y_off: Tensor, p: ParamView, cfg: HydraConfig) -> Tensor:
    n = y_diag.shape[0]
    shape = y_diag.shape
    if cfg.fusion == "sum":
        return y_diag + y_off
    yd = y_diag.reshape(n, -1)
    yo = y_off.reshape(n, -1)
    inv = 1.0 / math.sqrt(yd.shape[1])
    mask = causal_mask(n)
    s1 = T.scale(T.matmul(yd @ p["fuse.q_diag"], (yo @ p["fuse.k_off"]).T), inv)
    s2 = T.scale(T.matmul(yo @ p["fuse.q_off"], (yd @ p["fuse.k_diag"]).T), inv)
    a = T.softmax_masked(s1, -1, mask) @ (yo @ p["fuse.v_off"])
    b = T.softmax_masked(s2, -1, mask) @ (yd @ p["fuse.v_diag"])
    return (a + b).reshape(shape)


def finalize_output(Y: Tensor, x: Tensor, z: Tensor, p: ParamView, cfg: HydraConfig) -> Tensor:
    n = Y.shape[0]
    if cfg.residual:
        Y = Y + x * p["D"].reshape(-1, 1)
    y2 = Y.reshape(n, cfg.d_inner)
    rms = T.sqrt(T.mean(y2 * y2, axis=-1, keepdims=True) + cfg.eps)
    num = y2 * T.silu(z) if cfg.gate else y2
    y3 = num / rms * p["norm.weight"]
    return T.linear(y3, p["out_proj.weight"], p["out_proj.bias"])


# -------------------------------------------------------------------- game


class GameOutput(NamedTuple):
    full: Tensor  # (1 + L, d)
    points: Tensor  # (L, d)

    @property
    def last(self) -> Tensor:
        return self.full[-1]


def forward_game(
    points: Tensor,
    momentum: Tensor,
    p: ParamView,
    cfg: HydraConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> GameOutput:
    G = build_game_input(momentum, points)
    core = project_core_parameters(G, p, cfg)
    A = compute_decay_A(core.dt, p)
    y_diag, y_off = mssd(core.x, A, core.B, core.C, cfg.window, cfg.stride)
    Y = fuse_cross_attention(y_diag, y_off, p, cfg)
    Y = T.dropout(Y, cfg.dropout, rng, training)
    out = finalize_output(Y, core.x, core.z, p, cfg)
    return GameOutput(out, out[1:])


def sequential_scan(x: np.ndarray, A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Plain recurrence ``h_t = exp(a_t) h_{t-1} + B_t x_t``, ``y_t = C_t h_t``.

    Shapes as in :func:`mssd`: x (T,H,P), A (T,H), B/C (T,1,N). Used to check
    the chunked algebra in non-overlapping mode.
    """
    t_len, h, pdim = x.shape
    n = B.shape[-1]
    state = np.zeros((h, pdim, n))
    ys = np.zeros_like(x)
    for t in range(t_len):
        state = np.exp(A[t])[:, None, None] * state + x[t][:, :, None] * B[t, 0][None, None, :]
        ys[t] = state @ C[t, 0]
    return ys
