"""Self-check suites shared by the CLI and the test-suite.

* oracle: vectorized game forward vs the loop-by-loop reference;
* duality: non-overlapping windowed kernel vs the plain recurrence;
* gradients: finite differences for every differentiable operation and the
  full per-match loss.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .hydra import HydraConfig, forward_game, init_hydra_params, mssd, sequential_scan
from .interaction import caam_attention, init_interaction_params, versus_loss
from .model import HydraNet
from .multigran import classification_loss
from .optim import ModelParameters
from .pipeline.features import GameSpan, MatchSequence, SetSpan
from .reference import naive_mssd_reference
from .tensor import Tensor

GRAD_TOL = 1e-4


def random_hydra_case(rng: np.random.Generator, length: int, heads: int, head_dim: int, d: int = 16,
                      jitter: float = 0.05):
    """Init-scale parameters nudged off their structured starting values."""
    cfg = HydraConfig(d=d, heads=heads, head_dim=head_dim)
    params = ModelParameters()
    init_hydra_params(params, "h", cfg, rng)
    for _, t in params.items():
        t.data = t.data + jitter * rng.standard_normal(t.shape)
    points = rng.standard_normal((length, d))
    momentum = rng.standard_normal(d)
    return points, momentum, params, cfg


def oracle_suite(cases: int = 100, seed: int = 0) -> float:
    """Max |fast - reference| over random games with L in 1..16."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    with T.no_grad():
        for _ in range(cases):
            L = int(rng.integers(1, 17))
            H = int(rng.choice([1, 2, 4]))
            P = int(rng.choice([2, 8]))
            points, momentum, params, cfg = random_hydra_case(rng, L, H, P)
            fast = forward_game(Tensor(points), Tensor(momentum), params.scope("h"), cfg).full.data
            plain = {k[2:]: v.data for k, v in params.items()}
            ref = naive_mssd_reference(points, momentum, plain, cfg)
            worst = max(worst, float(np.max(np.abs(fast - ref))))
    return worst


def _identity_game_case(rng: np.random.Generator) -> float:
    """Whole-layer test mode: x, B and C copy the game input, gate and residual off,
    summed streams, non-overlapping windows, identity output map."""
    heads = int(rng.choice([1, 2, 4]))
    cfg = HydraConfig(heads=heads, head_dim=16 // heads, stride=2, fusion="sum", gate=False,
                      residual=False, dropout=0.0)
    d, di = cfg.d, cfg.d_inner
    eye = np.eye(d)
    w_dt = 0.5 * rng.standard_normal((d, heads))
    params = ModelParameters({
        "h.in_proj.weight": np.hstack([np.zeros((d, di)), eye, eye, eye, w_dt]),
        "h.in_proj.bias": np.zeros(cfg.d_in_proj),
        "h.A_log": rng.uniform(-1.0, 0.5, heads),
        "h.dt_bias": rng.uniform(-1.0, 1.0, heads),
        "h.D": np.zeros(heads),
        "h.norm.weight": np.ones(di),
        "h.out_proj.weight": eye,
        "h.out_proj.bias": np.zeros(d),
    })
    n_points = 2 * int(rng.integers(1, 9)) - 1  # the momentum row makes the length even
    points, momentum = rng.standard_normal((n_points, d)), rng.standard_normal(d)
    out = forward_game(Tensor(points), Tensor(momentum), params.scope("h"), cfg).full.data

    G = np.vstack([momentum, points])
    p = {k[2:]: v.data for k, v in params.items()}
    A = -np.exp(p["A_log"]) * np.logaddexp(0.0, G @ w_dt + p["dt_bias"])
    y = sequential_scan(G.reshape(-1, heads, d // heads), A, G[:, None, :], G[:, None, :]).reshape(-1, di)
    ref = y / np.sqrt(np.mean(y * y, axis=-1, keepdims=True) + cfg.eps)
    return float(np.max(np.abs(out - ref)))


def duality_suite(cases: int = 50, seed: int = 0) -> float:
    """Max |chunked - recurrent| with non-overlapping windows and summed streams.

    Each case checks the bare kernel on random ``x, A, B, C`` and a whole game
    layer in test mode against the recurrence followed by the same RMS scaling.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    with T.no_grad():
        for _ in range(cases):
            n = 2 * int(rng.integers(1, 9))
            H = int(rng.choice([1, 2, 4]))
            P = int(rng.choice([1, 2, 8]))
            N = int(rng.choice([1, 4, 16]))
            x = rng.standard_normal((n, H, P))
            A = -rng.uniform(0.01, 2.0, size=(n, H))
            B = rng.standard_normal((n, 1, N))
            C = rng.standard_normal((n, 1, N))
            yd, yo = mssd(Tensor(x), Tensor(A), Tensor(B), Tensor(C), window=2, stride=2)
            ref = sequential_scan(x, A, B, C)
            worst = max(worst, float(np.max(np.abs((yd + yo).data - ref))), _identity_game_case(rng))
    return worst


# -------------------------------------------------------------- gradients


def tiny_match(rng: np.random.Generator, game_lengths=(3, 4), sets=None) -> MatchSequence:
    """A small well-formed match with random features and consistent labels."""
    n = sum(game_lengths)
    victors = rng.integers(1, 3, size=n)
    games, start = [], 0
    set_of = sets or [0] * len(game_lengths)
    for k, length in enumerate(game_lengths):
        games.append(GameSpan(start, start + length, set_of[k], int(victors[start + length - 1])))
        start += length
    set_spans = []
    for s in sorted(set(set_of)):
        members = [k for k, v in enumerate(set_of) if v == s]
        set_spans.append(SetSpan(members[0], members[-1] + 1, games[members[-1]].winner))
    return MatchSequence(
        match_id="tiny",
        p1=rng.standard_normal((n, 16)),
        p2=rng.standard_normal((n, 16)),
        y_point=(victors == 1).astype(int),
        games=games,
        sets=set_spans,
        y_match=int(set_spans[-1].winner == 1),
        victors=victors,
    )


def _operation_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[Tensor]]]:
    def r(*shape, lo=None):
        a = rng.standard_normal(shape)
        return Tensor(np.abs(a) + lo if lo is not None else a)

    w = rng.standard_normal((3, 4))
    w_pad = rng.standard_normal((3, 5))
    w_seg = rng.standard_normal((3, 4, 4))
    w_att = rng.standard_normal((4, 4))
    mask = np.tril(np.ones((4, 4), dtype=bool))

    def drop(x):
        return T.tsum(T.dropout(x, 0.3, np.random.default_rng(5), training=True) * w)

    cases: dict[str, tuple[Callable, list[Tensor]]] = {
        "add": (lambda a, b: T.tsum((a + b) * w), [r(3, 4), r(4)]),
        "sub": (lambda a, b: T.tsum((a - b) * w), [r(3, 4), r(3, 1)]),
        "mul": (lambda a, b: T.tsum(a * b * w), [r(3, 4), r(3, 4)]),
        "div": (lambda a, b: T.tsum(a / b * w), [r(3, 4), r(3, 4, lo=0.5)]),
        "neg": (lambda a: T.tsum(-a * w), [r(3, 4)]),
        "power": (lambda a: T.tsum(T.power(a, 3.0) * w), [r(3, 4)]),
        "sqrt": (lambda a: T.tsum(T.sqrt(a) * w), [r(3, 4, lo=0.5)]),
        "exp": (lambda a: T.tsum(T.exp(a) * w), [r(3, 4)]),
        "log": (lambda a: T.tsum(T.log(a) * w), [r(3, 4, lo=0.5)]),
        "sigmoid": (lambda a: T.tsum(T.sigmoid(a) * w), [r(3, 4)]),
        "softplus": (lambda a: T.tsum(T.softplus(a) * w), [r(3, 4)]),
        "silu": (lambda a: T.tsum(T.silu(a) * w), [r(3, 4)]),
        "relu": (lambda a: T.tsum(T.relu(a) * w), [Tensor(np.sign(w) * (np.abs(w) + 0.1))]),
        "clip": (lambda a: T.tsum(T.clip(a, -0.5, 0.5) * w), [Tensor(np.tile([-1.2, -0.3, 0.2, 0.9], (3, 1)) + 0.01 * rng.standard_normal((3, 4)))]),
        "matmul": (lambda a, b: T.tsum(T.matmul(a, b)), [r(2, 3, 4), r(4, 5)]),
        "linear": (lambda a, b, c: T.tsum(T.linear(a, b, c) ** 2), [r(3, 4), r(4, 2), r(2)]),
        "sum_mean": (lambda a: T.tsum(T.tsum(a, axis=0) * w[0]) + T.mean(a * a), [r(4, 4)]),
        "reshape_transpose": (lambda a: T.tsum(a.reshape(4, 3).transpose(1, 0) * w), [r(3, 4)]),
        "getitem": (lambda a: T.tsum(a[np.array([0, 2, 2])] * w[:, :4]), [r(3, 4)]),
        "concat_stack": (lambda a, b: T.tsum(T.concat([a, b], 0)[:3] * w) + T.tsum(T.stack([a, a], 0)), [r(2, 4), r(1, 4)]),
        "pad_front": (lambda a: T.tsum(T.pad_front(a, axis=-1) * w_pad), [r(3, 4)]),
        "einsum": (lambda a, b, c: T.tsum(T.einsum("ij,jk,kl->il", a, b, c) ** 2), [r(2, 3), r(3, 4), r(4, 2)]),
        "cumsum": (lambda a: T.tsum(T.cumsum(a, axis=-1) * w), [r(3, 4)]),
        "segsum_exp": (lambda a: T.tsum(T.segsum_exp(a) * w_seg), [Tensor(-np.abs(rng.standard_normal((3, 4))))]),
        "softmax_masked": (lambda a: T.tsum(T.softmax_masked(a, -1, mask) * w_att), [r(4, 4)]),
        "dropout": (drop, [r(3, 4)]),
        "versus_loss": (lambda a, b: versus_loss(a, b, 0.5), [r(5, 16), r(5, 16)]),
        "classification_loss": (lambda s: classification_loss(T.sigmoid(s), np.array([1, 0, 1, 1])), [r(4)]),
    }
    return cases


def operation_gradients(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    out = {}
    for name, (fn, inputs) in _operation_cases(rng).items():
        out[name] = T.grad_check(fn, inputs)
    return out


def caam_gradient(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    params = ModelParameters()
    init_interaction_params(params, rng)
    F1 = Tensor(rng.standard_normal((3, 4, 32)))
    F2 = Tensor(rng.standard_normal((3, 4, 32)))
    wts = rng.standard_normal((3, 16))
    p = params.scope("caam")

    def f(a, b, *_):
        out = caam_attention(a, b, p)
        return T.tsum(out.z1 * wts) + T.tsum(out.z2 * wts**2)

    caam = [params[n] for n in params.names() if n.startswith("caam.")]
    return T.grad_check(f, [F1, F2] + caam, max_entries=12, rng=rng)


def hydra_gradient(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    points, momentum, params, cfg = random_hydra_case(rng, 5, 2, 4)
    wts = rng.standard_normal((6, 16))

    def f(pts, mom, *_):
        return T.tsum(forward_game(pts, mom, params.scope("h"), cfg).full * wts)

    tensors = [params[n] for n in params.names()]
    return T.grad_check(f, [Tensor(points), Tensor(momentum)] + tensors, max_entries=8, rng=rng)


def match_loss_gradient(seed: int = 0, entries: int = 4) -> float:
    """End-to-end per-match loss on a one-match, two-game fixture."""
    rng = np.random.default_rng(seed)
    model = HydraNet(TrainConfig(seed=seed, dropout=0.0))
    for _, t in model.params.items():
        t.data = t.data + 0.05 * rng.standard_normal(t.shape)
    match = tiny_match(rng)
    tensors = [model.params[n] for n in model.params.names()]

    def f(*_):
        return model.match_loss(match).total

    return T.grad_check(f, tensors, max_entries=entries, rng=rng)


def gradient_suite(seed: int = 0) -> dict[str, float]:
    out = operation_gradients(seed)
    out["caam_attention"] = caam_gradient(seed)
    out["hydra_forward_game"] = hydra_gradient(seed)
    out["total_loss"] = match_loss_gradient(seed)
    return out
