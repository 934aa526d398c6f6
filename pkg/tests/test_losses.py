import numpy as np
import pytest
from hypothesis import given, strategies as st

from swag import losses as L
from swag import netzoo as nz
from swag import tensor as T
from swag.diagnostics import normalized_entropy
from swag.errors import ConfigurationError, UsageError

from . import gradcheck, oracles


def two_stage_net(seed=0):
    """A small residual net with two tapped stages, for gradient checks."""
    layers = (
        nz.LayerSpec("conv", channels_out=6, kernel=3, padding=1),
        nz.LayerSpec("bn"),
        nz.LayerSpec("relu", tap="s1"),
        nz.LayerSpec("maxpool", kernel=2, stride=2),
        nz.LayerSpec("block-begin", channels_out=8, residual=True, skip_projection=True, stride=2),
        nz.LayerSpec("conv", channels_out=8, kernel=3, stride=2, padding=1),
        nz.LayerSpec("bn"),
        nz.LayerSpec("relu"),
        nz.LayerSpec("conv", channels_out=8, kernel=1),
        nz.LayerSpec("bn"),
        nz.LayerSpec("block-end", channels_out=8, tap="s2"),
    )
    spec = nz.ArchSpec("two_stage", layers, ("s1", "s2"), "s2", width_scale=1.0)
    return nz.init_random(spec, seed)


def feature(rng, d=3, h=4, w=5):
    return T.Tensor(rng.normal(size=(1, d, h, w)))


# ---------------------------------------------------------------- gram


def test_gram_ones():
    g = L.gram(T.Tensor(np.ones((1, 1, 2, 2))))
    np.testing.assert_array_equal(g.data, [[4.0]])


def test_gram_zero():
    assert not L.gram(T.Tensor(np.zeros((1, 3, 2, 2)))).data.any()


def test_gram_small_oracle():
    np.testing.assert_array_equal(L.gram(T.Tensor([[1.0, 2.0], [3.0, 4.0]])).data,
                                  [[5, 11], [11, 25]])


@given(d=st.integers(1, 6), m=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_gram_double_loop_oracle(d, m, seed):
    f = np.random.default_rng(seed).normal(size=(d, m))
    before = T.precision_name()
    T.set_precision("f64")
    try:
        g = L.gram(T.Tensor(f)).data
    finally:
        T.set_precision(before)
    np.testing.assert_allclose(g, oracles.gram_loops(f), atol=1e-6, rtol=0)


@given(d=st.integers(1, 8), m=st.integers(1, 20), seed=st.integers(0, 2**16))
def test_gram_symmetric_psd(d, m, seed):
    r = np.random.default_rng(seed)
    g = L.gram(T.Tensor(r.normal(size=(1, d, 1, m)) * 10)).data.astype(np.float64)
    assert np.array_equal(g, g.T)
    for _ in range(5):
        v = r.normal(size=d)
        assert v @ g @ v >= -1e-6 * (v @ v) * max(1.0, np.abs(g).max())


def test_gram_matrix_record(rng):
    F = feature(rng)
    gm = L.GramMatrix.of(F, "conv1_1")
    assert (gm.d, gm.m, gm.layer) == (3, 20, "conv1_1")
    assert np.array_equal(gm.values, gm.values.T)


# ---------------------------------------------------------------- content


def test_content_identical_is_zero(rng):
    F = feature(rng)
    assert L.content_loss(F, F).item() == 0.0


def test_content_constant_offset(f64, rng):
    F = feature(rng)
    assert L.content_loss(T.add(F, T.Tensor(np.ones(F.shape))), F).item() == pytest.approx(F.size / 2)


def test_content_summation_oracle(f64, rng):
    a, b = rng.normal(size=(1, 4, 3, 3)), rng.normal(size=(1, 4, 3, 3))
    expected = 0.5 * sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel()))
    assert L.content_loss(T.Tensor(a), T.Tensor(b)).item() == pytest.approx(expected, rel=1e-12)


def test_content_shape_mismatch(rng):
    with pytest.raises(UsageError):
        L.content_loss(feature(rng, 2), feature(rng, 3))


# ---------------------------------------------------------------- style


def _cfg(taps, **kw):
    return L.LossConfig(style_layer_weights={t: 1 for t in taps}, **kw)


def test_style_identical_is_zero(rng):
    taps = {"a": feature(rng), "b": feature(rng, 4)}
    assert L.style_loss(taps, taps, _cfg(taps)).item() == 0.0


def test_style_uniform_gram_difference_closed_form(f64):
    # Fx has Gram c * ones + Gs; choose Fs = 0 and Fx with G = c everywhere
    d, m, c = 3, 4, 2.0
    col = np.sqrt(c / m) * np.ones((d, m))
    loss = L.style_loss({"a": T.Tensor(col)}, {"a": T.Tensor(np.zeros((d, m)))}, _cfg(["a"])).item()
    assert loss == pytest.approx(c * c / (4 * m * m))


def test_style_two_tap_composition_oracle(f64, rng):
    fx = {"a": rng.normal(size=(3, 10)), "b": rng.normal(size=(5, 4))}
    fs = {"a": rng.normal(size=(3, 10)), "b": rng.normal(size=(5, 4))}
    got = L.style_loss({k: T.Tensor(v) for k, v in fx.items()},
                       {k: T.Tensor(v) for k, v in fs.items()}, _cfg(["a", "b"])).item()
    expected = oracles.style_term(fx["a"], fs["a"]) + oracles.style_term(fx["b"], fs["b"])
    assert got == pytest.approx(expected, rel=1e-10)


def test_style_weights_select_taps(f64, rng):
    fx = {"a": feature(rng), "b": feature(rng)}
    fs = {"a": feature(rng), "b": feature(rng)}
    cfg = L.LossConfig(style_layer_weights={"a": 1, "b": 0})
    only_a = L.style_loss({"a": fx["a"]}, {"a": fs["a"]}, _cfg(["a"])).item()
    assert L.style_loss(fx, fs, cfg).item() == pytest.approx(only_a)


def test_style_missing_tap(rng):
    with pytest.raises(ConfigurationError):
        L.style_loss({"a": feature(rng)}, {"b": feature(rng)}, _cfg(["a"]))


def test_style_needs_an_active_tap(rng):
    with pytest.raises(ConfigurationError):
        L.style_loss({"a": feature(rng)}, {"a": feature(rng)},
                     L.LossConfig(style_layer_weights={"a": 0}))


def test_style_weights_must_be_binary():
    with pytest.raises(ConfigurationError):
        L.LossConfig(style_layer_weights={"a": 0.5})


def test_spatial_permutation_leaves_style_unchanged(f64, rng):
    fx, fs = rng.normal(size=(4, 12)), rng.normal(size=(4, 12))
    perm = rng.permutation(12)
    cfg = _cfg(["a"])
    a = L.style_loss({"a": T.Tensor(fx)}, {"a": T.Tensor(fs)}, cfg).item()
    b = L.style_loss({"a": T.Tensor(fx[:, perm])}, {"a": T.Tensor(fs[:, perm])}, cfg).item()
    assert a == pytest.approx(b, rel=1e-12)


@given(seed=st.integers(0, 2**16), swag=st.booleans())
def test_style_losses_non_negative(seed, swag):
    r = np.random.default_rng(seed)
    fx = {"a": T.Tensor(r.normal(size=(1, 3, 4, 4)) * 5)}
    fs = {"a": T.Tensor(r.normal(size=(1, 3, 4, 4)) * 5)}
    assert L.style_loss(fx, fs, _cfg(["a"], swag=swag)).item() >= 0
    assert L.style_loss(fx, fx, _cfg(["a"], swag=swag)).item() == 0


# ---------------------------------------------------------------- smoothing


def test_smooth_constant_is_uniform():
    p = L.smooth(T.Tensor(np.full((1, 2, 3, 3), 7.0))).data
    np.testing.assert_allclose(p, 1 / 18, rtol=1e-6)


def test_smooth_two_values(f64):
    np.testing.assert_allclose(L.smooth(T.Tensor([0.0, np.log(2.0)])).data, [1 / 3, 2 / 3])


@given(seed=st.integers(0, 2**16), shift=st.floats(-1e3, 1e3), temp=st.floats(0.1, 10))
def test_smooth_is_shift_invariant_distribution(seed, shift, temp):
    r = np.random.default_rng(seed)
    x = r.normal(size=(1, 2, 3, 3)) * 3
    before = T.precision_name()
    T.set_precision("f64")
    try:
        p = L.smooth(T.Tensor(x), temp).data
        q = L.smooth(T.Tensor(x + shift), temp).data
    finally:
        T.set_precision(before)
    assert p.min() > 0
    assert abs(p.sum() - 1) < 1e-6
    np.testing.assert_allclose(p, q, rtol=1e-9, atol=1e-15)


def test_smooth_matches_direct_softmax(f64, rng):
    x = rng.normal(size=(1, 3, 4, 4))
    np.testing.assert_allclose(L.smooth(T.Tensor(x), 2.0).data, oracles.softmax_global(x / 2.0))


def test_smooth_gradient(f64, rng):
    probe = rng.normal(size=(1, 2, 3, 3))
    err = gradcheck.check(lambda x: T.sum(T.mul(L.smooth(x, 1.3), T.Tensor(probe))),
                          rng.normal(size=(1, 2, 3, 3)))
    assert err <= 1e-5


@given(seed=st.integers(0, 2**16), margin=st.floats(5, 60), n=st.integers(8, 200))
def test_double_softmax_flattens_peaky_maps(seed, margin, n):
    r = np.random.default_rng(seed)
    x = r.normal(size=n)
    x[r.integers(n)] = x.max() + margin
    raw = normalized_entropy(x)
    smoothed = normalized_entropy(oracles.softmax_global(x))
    assert smoothed > raw


# ---------------------------------------------------------------- SWAG


def test_swag_identical_inputs_zero(rng):
    F = feature(rng)
    assert L.swag_content_loss(F, F).item() == 0
    assert L.swag_style_loss({"a": F}, {"a": F}, _cfg(["a"])).item() == 0


def test_swag_high_temperature_vanishes(rng):
    fx = {"a": feature(rng) * 20}
    fs = {"a": feature(rng) * 20}
    assert L.swag_style_loss(fx, fs, _cfg(["a"], temperature=1e6)).item() <= 1e-10


def test_swag_style_composition_oracle(f64, rng):
    fx, fs = rng.normal(size=(1, 3, 4, 4)), rng.normal(size=(1, 3, 4, 4))
    got = L.swag_style_loss({"a": T.Tensor(fx)}, {"a": T.Tensor(fs)}, _cfg(["a"])).item()
    sx = oracles.softmax_global(fx).reshape(3, 16)
    ss = oracles.softmax_global(fs).reshape(3, 16)
    assert got == pytest.approx(oracles.style_term(sx, ss), rel=1e-10)


def test_swag_content_composition_oracle(f64, rng):
    fx, fc = rng.normal(size=(1, 3, 4, 4)), rng.normal(size=(1, 3, 4, 4))
    expected = 0.5 * ((oracles.softmax_global(fx) - oracles.softmax_global(fc)) ** 2).sum()
    assert L.swag_content_loss(T.Tensor(fx), T.Tensor(fc)).item() == pytest.approx(expected, rel=1e-10)


# ---------------------------------------------------------------- objective


def test_objective_recomposition(f64, rng):
    net = two_stage_net()
    x, c, s = (T.Tensor(rng.normal(size=(1, 3, 32, 32))) for _ in range(3))
    cfg = L.LossConfig.for_arch(net.spec, beta=4e10)
    value = L.total_objective(nz.forward_taps(net, x), nz.forward_taps(net, c),
                              nz.forward_taps(net, s), cfg)
    total, content, style = value.values()
    assert cfg.alpha == 1.0 and cfg.beta == 4e10
    assert total == pytest.approx(content + 4e10 * style, rel=1e-12)


def test_default_betas():
    assert L.LossConfig.for_arch(nz.preset("vgg19")).beta == 4e10
    for name in ("resnet50", "wrn", "noresnet"):
        assert L.LossConfig.for_arch(nz.preset(name)).beta == 1e17


def test_objective_alpha_zero_is_pure_style(f64, rng):
    net = two_stage_net()
    x, s = T.Tensor(rng.normal(size=(1, 3, 32, 32))), T.Tensor(rng.normal(size=(1, 3, 32, 32)))
    cfg = L.LossConfig.for_arch(net.spec, alpha=0.0, beta=1.0)
    value = L.Objective(cfg, None, nz.forward_taps(net, s))(nz.forward_taps(net, x))
    assert value.content is None
    assert value.total.item() == pytest.approx(value.style.item())


def test_objective_beta_zero_at_content(rng):
    net = two_stage_net()
    c = T.Tensor(rng.normal(size=(1, 3, 32, 32)))
    cfg = L.LossConfig.for_arch(net.spec, beta=0.0)
    taps = nz.forward_taps(net, c)
    assert L.Objective(cfg, taps, None)(taps).total.item() == 0.0


def test_temperature_must_be_positive():
    with pytest.raises(ConfigurationError):
        L.LossConfig(temperature=0)


@pytest.mark.parametrize("precision", ["f32", "f64"])
@pytest.mark.parametrize("swag", [False, True])
def test_full_objective_gradient_through_network(precision, swag):
    before = T.precision_name()
    T.set_precision(precision)
    try:
        r = np.random.default_rng(3)
        net = two_stage_net(1)
        c, s = (T.Tensor(r.normal(size=(1, 3, 32, 32))) for _ in range(2))
        cfg = L.LossConfig.for_arch(net.spec, beta=1e3 if not swag else 1e9, swag=swag)
        obj = L.Objective(cfg, nz.forward_taps(net, c), nz.forward_taps(net, s))
        err = gradcheck.check(lambda x: obj(nz.forward_taps(net, x)).total,
                              r.normal(size=(1, 3, 32, 32)), n_coords=20, seed=5)
    finally:
        T.set_precision(before)
    assert err <= gradcheck.TOL[precision]
