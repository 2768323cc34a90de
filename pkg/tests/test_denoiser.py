import numpy as np
import pytest

from acdr.denoiser import (
    STREAMS,
    DenoiserParams,
    denoiser_backward,
    denoiser_forward,
    init_params,
    timestep_features,
)
from acdr.errors import ConfigError, ShapeError
from _gradcheck import fd_grad, rel_error

# (C=4, width=16, depth=2), counted by hand from the layer list:
# three input projections 3*(8*16+16), cond 4*16+16, temb 16*16+16,
# enc1/enc2 2*(3*16*16+16), dec1 3*16*16+16, out 16*4+4
N_PARAMS_4_16_2 = 3204


def _random_params(seed, C=3, width=8, depth=2, t_max=50):
    p = init_params(seed, C, width, depth, t_max=t_max)
    rng = np.random.default_rng(seed + 1000)
    for k, v in p.tensors.items():
        p.tensors[k] = 0.4 * rng.standard_normal(v.shape)
    return p


def test_param_count_oracle():
    assert init_params(0, 4, 16, 2).n_params() == N_PARAMS_4_16_2


def test_init_is_seeded_with_zero_head():
    a, b = init_params(5, 4, 16, 2), init_params(5, 4, 16, 2)
    assert a.tensors.keys() == b.tensors.keys()
    for k in a.tensors:
        np.testing.assert_array_equal(a.tensors[k], b.tensors[k])
    assert not np.any(a.tensors["out.W"]) and not np.any(a.tensors["out.b"])
    rng = np.random.default_rng(0)
    x, c, f = rng.standard_normal((3, 8, 4))
    for s in STREAMS:
        np.testing.assert_array_equal(denoiser_forward(x, c, f if s == "v" else None, 3, a, s), 0.0)


def test_init_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        init_params(0, 4, 0, 2)
    with pytest.raises(ConfigError):
        init_params(0, 4, 8, 0)


def test_zero_params_give_zero_output():
    p = init_params(0, 4, 16, 2)
    for k in p.tensors:
        p.tensors[k] = np.zeros_like(p.tensors[k])
    x = np.ones((8, 4))
    np.testing.assert_array_equal(denoiser_forward(x, x, x, 10, p), 0.0)


@pytest.mark.parametrize("T", [1, 2, 5, 8, 13])
def test_shapes_and_determinism(T):
    p = _random_params(1, C=4, width=16)
    rng = np.random.default_rng(T)
    x, c, f = rng.standard_normal((3, T, 4))
    for s in STREAMS:
        fp = f if s == "v" else None
        y1 = denoiser_forward(x, c, fp, 7, p, s)
        y2 = denoiser_forward(x, c, fp, 7, p, s)
        assert y1.shape == (T, 4)
        np.testing.assert_array_equal(y1, y2)


def test_forward_errors():
    p = _random_params(2)
    x = np.zeros((5, 3))
    with pytest.raises(ShapeError):
        denoiser_forward(x, np.zeros((4, 3)), None, 1, p)
    with pytest.raises(ShapeError):
        denoiser_forward(x, x, np.zeros((5, 2)), 1, p)
    with pytest.raises(ShapeError):
        denoiser_forward(np.zeros((5, 4)), np.zeros((5, 4)), None, 1, p)
    with pytest.raises(ValueError):
        denoiser_forward(x, x, None, 0, p)
    with pytest.raises(ValueError):
        denoiser_forward(x, x, None, 51, p)
    with pytest.raises(ValueError):
        denoiser_forward(x, x, None, 1, p, stream="z")
    with pytest.raises(ValueError):
        denoiser_backward(None, x)


def test_timestep_features_distinct():
    feats = np.stack([timestep_features(t, 16) for t in range(1, 101)])
    assert len(np.unique(feats.round(12), axis=0)) == 100
    assert timestep_features(3, 7).shape == (7,)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    T = 6 if seed % 2 == 0 else 7
    stream = STREAMS[seed % 3]
    depth = 1 + seed % 3
    p = _random_params(seed, C=3, width=8, depth=depth)
    x, c, f = rng.standard_normal((3, T, 3))
    f = f if stream == "v" else None
    w = rng.standard_normal((T, 3))
    t = int(rng.integers(1, 51))

    def loss():
        return float(np.sum(w * denoiser_forward(x, c, f, t, p, stream)))

    _, state = denoiser_forward(x, c, f, t, p, stream, cache=True)
    G, ig = denoiser_backward(state, w)
    for k, v in p.tensors.items():
        assert rel_error(G[k], fd_grad(loss, v)) < 1e-4, k
    assert rel_error(ig["noisy"], fd_grad(loss, x)) < 1e-4
    assert rel_error(ig["clean"], fd_grad(loss, c)) < 1e-4
    if f is not None:
        assert rel_error(ig["f_phi"], fd_grad(loss, f)) < 1e-4
    else:
        assert ig["f_phi"] is None


def test_zero_upstream_and_detach():
    p = _random_params(3)
    rng = np.random.default_rng(3)
    x, c, f = rng.standard_normal((3, 6, 3))
    _, state = denoiser_forward(x, c, f, 4, p, cache=True)
    G, _ = denoiser_backward(state, np.zeros((6, 3)))
    assert all(not np.any(g) for g in G.values())
    _, ig = denoiser_backward(state, rng.standard_normal((6, 3)), detach=("clean", "f_phi"))
    assert not np.any(ig["clean"]) and not np.any(ig["f_phi"]) and np.any(ig["noisy"])


def test_accumulate_adds_into_existing_grads():
    p = _random_params(4)
    rng = np.random.default_rng(4)
    x, c = rng.standard_normal((2, 6, 3))
    w = rng.standard_normal((6, 3))
    _, state = denoiser_forward(x, c, None, 9, p, "tc", cache=True)
    once, _ = denoiser_backward(state, w)
    acc = {k: g.copy() for k, g in once.items()}
    denoiser_backward(state, w, accumulate=acc)
    for k in acc:
        np.testing.assert_allclose(acc[k], 2 * once[k], rtol=1e-15, atol=0)


def test_translation_consistency_in_interior():
    p = _random_params(5, C=3, width=8, depth=2)
    rng = np.random.default_rng(5)
    T, shift, margin = 24, 2, 8
    x, c, f = rng.standard_normal((3, T, 3))
    full = denoiser_forward(x, c, f, 11, p)
    moved = denoiser_forward(x[shift:], c[shift:], f[shift:], 11, p)
    np.testing.assert_allclose(full[shift + margin : T - margin], moved[margin : T - shift - margin],
                               rtol=1e-12, atol=1e-12)


def test_copy_is_deep():
    p = _random_params(6)
    q = p.copy()
    q.tensors["out.b"][0] += 1.0
    assert isinstance(q, DenoiserParams) and p.tensors["out.b"][0] != q.tensors["out.b"][0]
