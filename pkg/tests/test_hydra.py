import math

import numpy as np
import pytest

from hydranet import hydra as H
from hydranet import tensor as T
from hydranet.checks import random_hydra_case
from hydranet.optim import ModelParameters
from hydranet.reference import naive_mssd_reference
from hydranet.tensor import ContractError, ShapeError, Tensor


def scalar_windows(x, a, B=1.0, C=1.0):
    """One window, one head, P = D_state = 1."""
    n = len(x)
    return H.WindowedTensors(
        x=Tensor(np.array(x, dtype=float).reshape(1, n, 1, 1)),
        A=Tensor(np.array(a, dtype=float).reshape(1, 1, n)),
        B=Tensor(np.full((1, n, 1, 1), B)),
        C=Tensor(np.full((1, n, 1, 1), C)),
    )


@pytest.fixture
def case(rng):
    return random_hydra_case(rng, 5, 2, 4)


# ------------------------------------------------------- implicit momentum


def test_initial_momentum_is_zero():
    m1, m2 = H.init_implicit_momentum()
    assert m1.vector.shape == (16,) and not m1.vector.data.any()
    assert m1.provenance == H.MATCH_START
    assert m1.vector is not m2.vector


def test_momentum_update(rng):
    p = ModelParameters()
    p["W_g"] = np.eye(4)
    p["b_g"] = np.zeros(4)
    p["W_set"] = 2 * np.eye(4)
    p["b_set"] = np.ones(4)
    y = Tensor(rng.normal(size=4))
    v = p.scope("")
    view = ModelParameters({"h.W_g": p["W_g"], "h.b_g": p["b_g"], "h.W_set": p["W_set"], "h.b_set": p["b_set"]}).scope("h")
    assert np.array_equal(H.update_implicit_momentum(y, H.CROSS_GAME, view).vector.data, y.data)
    assert np.array_equal(H.update_implicit_momentum(Tensor(np.zeros(4)), H.CROSS_SET, view).vector.data, np.ones(4))
    assert not np.allclose(H.update_implicit_momentum(y, H.CROSS_SET, view).vector.data, y.data)
    with pytest.raises(ContractError):
        H.update_implicit_momentum(y, "sideways", view)
    del v


def test_build_game_input(rng):
    m = rng.normal(size=16)
    pts = rng.normal(size=(3, 16))
    G = H.build_game_input(Tensor(m), Tensor(pts)).data
    assert G.shape == (4, 16)
    assert np.array_equal(G[0], m) and np.array_equal(G[1:], pts)
    with pytest.raises(ShapeError):
        H.build_game_input(Tensor(m), Tensor(np.zeros((0, 16))))


# --------------------------------------------------------- core parameters


def test_projection_widths(case):
    points, momentum, params, cfg = case
    assert H.HydraConfig().d_in_proj == 100
    core = H.project_core_parameters(H.build_game_input(Tensor(momentum), Tensor(points)), params.scope("h"), cfg)
    assert core.z.shape == (6, 8) and core.x.shape == (6, 2, 4)
    assert core.B.shape == (6, 1, 16) and core.C.shape == (6, 1, 16) and core.dt.shape == (6, 2)
    with pytest.raises(ShapeError):
        H.project_core_parameters(Tensor(np.zeros((3, 15))), params.scope("h"), cfg)


def test_projection_zero_weights():
    cfg = H.HydraConfig()
    p = ModelParameters({"h.in_proj.weight": np.zeros((16, 100)), "h.in_proj.bias": np.zeros(100)})
    core = H.project_core_parameters(Tensor(np.ones((3, 16))), p.scope("h"), cfg)
    assert all(not t.data.any() for t in core)


def test_decay_examples():
    p = ModelParameters({"h.A_log": np.zeros(2), "h.dt_bias": np.zeros(2)}).scope("h")
    A = H.compute_decay_A(Tensor([[0.0, 20.0]]), p).data
    assert A[0, 0] == pytest.approx(-math.log(2), abs=1e-6)
    assert A[0, 1] == pytest.approx(-20.0, abs=1e-6)
    wild = H.compute_decay_A(Tensor(np.random.default_rng(0).normal(0, 30, size=(50, 2))), p).data
    assert np.all(wild < 0)


# ------------------------------------------------------------------ kernel


def test_window_layout():
    seq = Tensor(np.arange(4.0).reshape(4, 1, 1))
    A = Tensor(-np.ones((4, 1)))
    BC = Tensor(np.zeros((4, 1, 1)))
    w = H.unfold_windows(seq, A, BC, BC)
    assert w.x.data.reshape(3, 2).tolist() == [[0, 1], [1, 2], [2, 3]]
    assert np.array_equal(w.x.data[1:, 0], w.x.data[:-1, 1])
    assert H.window_index(2).tolist() == [[0, 1]]
    with pytest.raises(ShapeError):
        H.window_index(1)


def test_intra_window_scalar_cases():
    y = H.intra_window_output(scalar_windows([2.0, 3.0], [0.0, 0.0])).data.reshape(-1)
    assert y.tolist() == [2.0, 5.0]
    y = H.intra_window_output(scalar_windows([2.0, 3.0], [0.0, -math.log(2)])).data.reshape(-1)
    np.testing.assert_allclose(y, [2.0, 4.0], atol=1e-14)
    assert not H.intra_window_output(scalar_windows([2.0, 3.0], [0.0, 0.0], B=0.0)).data.any()


def test_window_state_scalar_cases():
    _, s = H.window_states(scalar_windows([2.0, 3.0], [0.0, 0.0]))
    assert s.data.reshape(-1).tolist() == [5.0]
    _, s = H.window_states(scalar_windows([2.0, 3.0], [0.0, -math.log(2)]))
    assert s.data.reshape(-1)[0] == pytest.approx(4.0)
    _, s = H.window_states(scalar_windows([0.0, 0.0], [-1.0, -1.0]))
    assert not s.data.any()


def test_inter_window_recurrence():
    s1, s2 = -0.4, -1.1
    A_cumsum = Tensor(np.array([[[-0.1, s1], [-0.5, s2], [-0.2, -0.3]]]))  # (H=1, N=3, S=2)
    W = np.array([1.5, -2.0, 0.7]).reshape(3, 1, 1, 1)
    carried = H.inter_window_states(A_cumsum, Tensor(W)).data.reshape(-1)
    assert carried[0] == 0.0
    assert carried[1] == pytest.approx(1.5)
    assert carried[2] == pytest.approx(math.exp(s2) * 1.5 - 2.0)


def test_inter_window_no_decay_sums():
    W = np.random.default_rng(0).normal(size=(4, 1, 1, 1))
    carried = H.inter_window_states(Tensor(np.zeros((1, 4, 2))), Tensor(W)).data.reshape(-1)
    np.testing.assert_allclose(carried, np.r_[0.0, np.cumsum(W.reshape(-1))[:-1]], atol=1e-14)


def test_off_diagonal_scalar_case():
    a0, a1, h = -0.3, -0.8, 2.5
    A_cumsum = Tensor(np.array([[[a0, a0 + a1]]]))
    C = Tensor(np.ones((1, 2, 1, 1)))
    y = H.off_diagonal_output(C, Tensor(np.full((1, 1, 1, 1), h)), A_cumsum).data.reshape(-1)
    np.testing.assert_allclose(y, [h * math.exp(a0), h * math.exp(a0 + a1)])
    y0 = H.off_diagonal_output(C, Tensor(np.full((1, 1, 1, 1), h)), Tensor(np.zeros((1, 1, 2)))).data.reshape(-1)
    assert y0.tolist() == [h, h]


def test_fold_back_positions():
    Y = Tensor(np.arange(6.0).reshape(3, 2, 1, 1))
    assert H.fold_windows(Y).data.reshape(-1).tolist() == [0.0, 1.0, 3.0, 5.0]
    assert H.fold_windows(Y, stride=2).data.reshape(-1).tolist() == [0, 1, 2, 3, 4, 5]


# ------------------------------------------------------- fusion and output


def _identity_fusion(di):
    names = {f"h.fuse.{r}_{s}": np.eye(di) for r in "qkv" for s in ("diag", "off")}
    return ModelParameters(names).scope("h")


def test_fusion_single_position_is_sum(rng):
    cfg = H.HydraConfig(heads=2, head_dim=4)
    yd, yo = Tensor(rng.normal(size=(1, 2, 4))), Tensor(rng.normal(size=(1, 2, 4)))
    out = H.fuse_cross_attention(yd, yo, _identity_fusion(8), cfg).data
    np.testing.assert_allclose(out, yd.data + yo.data, atol=1e-14)


def test_fusion_equal_keys_average_values(rng):
    cfg = H.HydraConfig(heads=2, head_dim=4)
    row = rng.normal(size=(2, 4))
    yd = Tensor(np.stack([row] * 3))
    yo = Tensor(rng.normal(size=(3, 2, 4)))
    p = ModelParameters({**{f"h.fuse.{r}_{s}": np.eye(8) for r in "qkv" for s in ("diag", "off")},
                         "h.fuse.k_off": np.zeros((8, 8))}).scope("h")
    out = H.fuse_cross_attention(yd, yo, p, cfg).data.reshape(3, 8)
    # stream 1: keys from y_off are all zero -> causal uniform average of y_off
    ref1 = np.cumsum(yo.data.reshape(3, 8), 0) / np.arange(1, 4)[:, None]
    ref2 = yd.data.reshape(3, 8)  # all diag values identical
    np.testing.assert_allclose(out, ref1 + ref2, atol=1e-12)


def test_fusion_is_causal(case, rng):
    _, _, params, cfg = case
    yd, yo = rng.normal(size=(5, 2, 4)), rng.normal(size=(5, 2, 4))
    base = H.fuse_cross_attention(Tensor(yd), Tensor(yo), params.scope("h"), cfg).data
    yd[3:] += 5.0
    yo[4] -= 3.0
    after = H.fuse_cross_attention(Tensor(yd), Tensor(yo), params.scope("h"), cfg).data
    assert np.array_equal(base[:3], after[:3])


def _finalize_params(di, d, D=1.0):
    return ModelParameters({
        "h.D": np.full(2, D),
        "h.norm.weight": np.ones(di),
        "h.out_proj.weight": np.random.default_rng(0).normal(size=(di, d)),
        "h.out_proj.bias": np.arange(d, dtype=float),
    }).scope("h")


def test_finalize_zero_gate_leaves_bias(rng):
    cfg = H.HydraConfig(d=3, heads=2, head_dim=4)
    Y, x = Tensor(rng.normal(size=(2, 2, 4))), Tensor(rng.normal(size=(2, 2, 4)))
    out = H.finalize_output(Y, x, Tensor(np.zeros((2, 8))), _finalize_params(8, 3), cfg).data
    np.testing.assert_allclose(out, np.tile([0.0, 1.0, 2.0], (2, 1)))


def test_finalize_constant_row_normalizes_to_gate():
    cfg = H.HydraConfig(d=8, heads=2, head_dim=4, eps=1e-6)
    c = -3.0
    Y = Tensor(np.full((1, 2, 4), c))
    z = Tensor(np.full((1, 8), 2.0))
    p = ModelParameters({"h.D": np.zeros(2), "h.norm.weight": np.ones(8), "h.out_proj.weight": np.eye(8),
                         "h.out_proj.bias": np.zeros(8)}).scope("h")
    out = H.finalize_output(Y, Tensor(np.zeros((1, 2, 4))), z, p, cfg).data
    gate = 2.0 / (1 + math.exp(-2.0))
    np.testing.assert_allclose(out, -gate / math.sqrt(1 + 1e-6 / 9), rtol=1e-12)


def test_finalize_residual_toggle(rng):
    cfg = H.HydraConfig(d=3, heads=2, head_dim=4)
    Y, x, z = (Tensor(rng.normal(size=s)) for s in ((2, 2, 4), (2, 2, 4), (2, 8)))
    off = H.finalize_output(Y, x, z, _finalize_params(8, 3, D=0.0), cfg).data
    no_res = H.finalize_output(Y, x, z, _finalize_params(8, 3), H.HydraConfig(d=3, heads=2, head_dim=4, residual=False)).data
    np.testing.assert_allclose(off, no_res, atol=1e-14)


# ------------------------------------------------------------ whole game


def test_forward_game_shape_and_determinism(case):
    points, momentum, params, cfg = case
    a = H.forward_game(Tensor(points), Tensor(momentum), params.scope("h"), cfg)
    b = H.forward_game(Tensor(points), Tensor(momentum), params.scope("h"), cfg)
    assert a.full.shape == (6, 16) and a.points.shape == (5, 16)
    assert np.array_equal(a.full.data, b.full.data)
    assert np.array_equal(a.last.data, a.full.data[-1])


@pytest.mark.parametrize("L", [1, 2, 7])
def test_forward_game_matches_reference(rng, L):
    points, momentum, params, cfg = random_hydra_case(rng, L, 4, 8)
    fast = H.forward_game(Tensor(points), Tensor(momentum), params.scope("h"), cfg).full.data
    ref = naive_mssd_reference(points, momentum, {k[2:]: v.data for k, v in params.items()}, cfg)
    assert np.max(np.abs(fast - ref)) < 1e-9


def test_zero_inputs_give_bias_path(rng):
    _, _, params, cfg = random_hydra_case(rng, 3, 2, 4)
    params["h.in_proj.bias"] = np.zeros(cfg.d_in_proj)
    out = H.forward_game(Tensor(np.zeros((3, 16))), Tensor(np.zeros(16)), params.scope("h"), cfg).full.data
    np.testing.assert_allclose(out, np.tile(params["h.out_proj.bias"].data, (4, 1)), atol=1e-15)


def test_forward_game_gradients(case):
    points, momentum, params, cfg = case
    w = np.random.default_rng(2).normal(size=(6, 16))

    def f(pts, mom, *_):
        return T.tsum(H.forward_game(pts, mom, params.scope("h"), cfg).full * w)

    for name in params.names():
        err = T.grad_check(f, [Tensor(points), Tensor(momentum), params[name]], max_entries=6, rng=np.random.default_rng(0))
        assert err <= 1e-4, name


def test_decay_weights_in_unit_interval(case):
    points, momentum, params, cfg = case
    core = H.project_core_parameters(H.build_game_input(Tensor(momentum), Tensor(points)), params.scope("h"), cfg)
    A = H.compute_decay_A(core.dt, params.scope("h"))
    w = H.unfold_windows(core.x, A, core.B, core.C)
    A_cumsum, _ = H.window_states(w)
    for arr in (np.exp(A_cumsum.data), np.exp(A_cumsum.data[:, :, -1:] - A_cumsum.data)):
        assert np.all((arr > 0) & (arr <= 1))
