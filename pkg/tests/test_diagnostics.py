import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from swag import diagnostics as dg
from swag import netzoo as nz
from swag import tensor as T
from swag.errors import ConfigurationError, NumericFault
from swag.imageio import ImageBuffer, load, normalize
from swag import assets

from . import oracles


def _taps(**arrays):
    return {k: T.Tensor(np.asarray(v, dtype=np.float64)) for k, v in arrays.items()}


# ---------------------------------------------------------------- entropy


def test_constant_tap_entropy_is_one():
    rep = dg.activation_stats(_taps(a=np.full((1, 4, 3, 3), 2.5)))
    assert rep["a"].activation_entropy == pytest.approx(1.0, abs=1e-12)
    assert rep["a"].max_activation == 2.5


def test_single_spike_entropy_vanishes():
    f = np.zeros(64)
    f[17] = 100.0
    assert dg.normalized_entropy(f) < 1e-6


def test_constant_gram_entropy_is_one():
    assert dg.normalized_entropy(np.full((5, 5), 3.0)) == pytest.approx(1.0, abs=1e-12)


def test_identity_dominant_gram_matches_direct_formula():
    g = np.diag(np.full(8, 50.0))
    h = dg.normalized_entropy(g)
    assert h < 0.6
    assert h == pytest.approx(oracles.entropy_direct(g), abs=1e-12)


@given(hnp.arrays(np.float64, st.integers(2, 60), elements=st.floats(-30, 30)))
def test_entropy_matches_oracle_and_is_bounded(z):
    h = dg.normalized_entropy(z)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(oracles.entropy_direct(z), abs=1e-6)


def test_entropy_strictly_decreasing_in_margin():
    for n in (4, 64, 1000):
        hs = []
        for margin in np.linspace(0.0, 25.0, 60):
            f = np.zeros(n)
            f[0] = margin
            hs.append(dg.normalized_entropy(f))
        assert hs[0] == pytest.approx(1.0)
        assert all(b < a for a, b in zip(hs, hs[1:]))


def test_gram_stats_match_normalized_gram(f64, rng):
    f = rng.normal(size=(1, 6, 5, 4))
    rep = dg.gram_stats(_taps(a=f))
    g = oracles.gram_loops(f.reshape(6, 20)) / (6 * 20)
    assert rep["a"].gram_max == pytest.approx(g.max(), rel=1e-12)
    assert rep["a"].gram_entropy == pytest.approx(oracles.entropy_direct(g), abs=1e-9)
    assert rep["a"].max_activation is None


def test_raw_gram_normalization(rng):
    f = rng.normal(size=(1, 3, 4, 4))
    rep = dg.gram_stats(_taps(a=f), gram_normalization="none")
    assert rep["a"].gram_max == pytest.approx(oracles.gram_loops(f.reshape(3, 16)).max())
    with pytest.raises(ConfigurationError):
        dg.gram_stats(_taps(a=f), gram_normalization="trace")


def test_gram_stats_invariant_under_spatial_permutation(rng):
    f = rng.normal(size=(1, 5, 6, 6))
    perm = rng.permutation(36)
    g = f.reshape(1, 5, 36)[:, :, perm].reshape(1, 5, 6, 6)
    a, b = dg.gram_stats(_taps(a=f))["a"], dg.gram_stats(_taps(a=g))["a"]
    assert a.gram_max == pytest.approx(b.gram_max, rel=1e-12)
    assert a.gram_entropy == pytest.approx(b.gram_entropy, abs=1e-12)


def test_smoothed_entropy_dominates_low_raw_entropy(rng):
    checked = 0
    for scale in (5.0, 20.0, 80.0):
        f = rng.exponential(size=(1, 8, 6, 6)) ** 3 * scale
        raw = dg.activation_stats(_taps(a=f))["a"].activation_entropy
        smooth = dg.activation_stats(_taps(a=f), smoothed=True)["a"].activation_entropy
        if raw < 0.5:
            checked += 1
            assert smooth > raw
    assert checked > 0


def test_stats_reject_non_finite():
    with pytest.raises(NumericFault) as info:
        dg.tap_stats(_taps(ok=np.ones((1, 2, 2, 2)), bad=np.full((1, 2, 2, 2), np.inf)))
    assert info.value.tap == "bad"
    with pytest.raises(ConfigurationError):
        dg.tap_stats({})


def test_report_rows_and_aggregate(rng):
    reps = [dg.tap_stats(_taps(a=rng.normal(size=(1, 2, 3, 3)), b=rng.normal(size=(1, 2, 2, 2))),
                         arch="x", seed=s, image="i") for s in range(3)]
    rows = reps[0].rows()
    assert [r["tap"] for r in rows] == ["a", "b"]
    assert rows[1]["depth_index"] == 1 and rows[0]["smoothed"] is False
    agg = dg.aggregate(reps)
    values = [r["a"].gram_entropy for r in reps]
    assert agg["a"]["gram_entropy"] == pytest.approx((np.mean(values), np.std(values)))


# ---------------------------------------------------------------- tracks


@given(st.integers(0, 200), st.integers(1, 64))
def test_map_position_identity_at_equal_resolution(u, size):
    u = min(u, size - 1)
    assert dg.map_position(u, size, size) == u


@given(st.integers(-10, 300), st.integers(1, 128), st.integers(1, 128))
def test_map_position_clamps(u, src, dst):
    assert 0 <= dg.map_position(u, src, dst) < dst


def test_map_position_scales():
    assert dg.map_position(100, 128, 4) == 3
    assert dg.map_position(127, 128, 4) == 3
    assert dg.map_position(0, 128, 4) == 0


def _constant_net():
    layers = (nz.LayerSpec("conv", channels_out=4, kernel=3, padding=1),
              nz.LayerSpec("relu", tap="a"),
              nz.LayerSpec("maxpool"),
              nz.LayerSpec("conv", channels_out=4, kernel=3, padding=1),
              nz.LayerSpec("relu", tap="b"))
    spec = nz.ArchSpec("const", layers, ("a", "b"), "b", width_scale=1.0)
    net = nz.init_random(spec, 0)
    for name, arr in net.parameters.items():
        if name.endswith(".weight"):
            arr[...] = 0.0
        elif name.endswith(".bias"):
            arr[...] = 0.5
    return net


def test_degenerate_net_gives_equal_tracks(rng):
    net = _constant_net()
    x = T.Tensor(rng.normal(size=(1, 3, 32, 32)))
    tr = dg.activation_tracks(net, x, 10, seed=1)
    assert tr.values.shape == (10, 2)
    assert np.all(tr.values == tr.values[0])


def test_tracks_use_channel_max():
    f = np.zeros((1, 3, 2, 2))
    f[0, :, 1, 0] = [1.0, 7.0, 2.0]
    tr = dg.tracks_from_taps(_taps(a=f), (4, 4), np.array([[0, 3], [3, 0]]))
    assert tr.values[:, 0].tolist() == [7.0, 0.0]
    assert tr.rule == "nearest/channel-max"


def test_tracks_random_channel_rule(rng):
    net = nz.init_random(nz.preset("resnet50"), 0)
    x = T.Tensor(rng.normal(size=(1, 3, 64, 64)))
    tr = dg.activation_tracks(net, x, 4, seed=2, channel="random")
    assert tr.rule == "nearest/random-channel"
    assert set(tr.channels) == set(tr.taps)
    with pytest.raises(ConfigurationError):
        dg.activation_tracks(net, x, 4, seed=2, channel="mean")


def test_track_rows_schema(rng):
    net = nz.init_random(nz.preset("vgg19"), 0)
    tr = dg.activation_tracks(net, T.Tensor(rng.normal(size=(1, 3, 64, 64))), 10, seed=1)
    rows = tr.rows()
    assert len(rows) == 10 * len(net.spec.style_taps)
    assert list(rows[0]) == ["position_id", "u", "v", "tap", "value"]
    assert all(0 <= r["u"] < 64 and 0 <= r["v"] < 64 for r in rows)


def test_tracks_need_a_position(rng):
    net = _constant_net()
    with pytest.raises(ConfigurationError):
        dg.activation_tracks(net, T.Tensor(np.zeros((1, 3, 8, 8))), 0, seed=0)


def test_resnet_deep_track_maxima_exceed_shallow():
    net_spec = nz.preset("resnet50")
    image = normalize(load(assets.path("content", 0)))
    wins = 0
    for seed in range(10):
        tr = dg.activation_tracks(nz.init_random(net_spec, seed), image, 10, seed=seed)
        col = {t: j for j, t in enumerate(tr.taps)}
        wins += tr.values[:, col["conv5_3"]].max() > tr.values[:, col["conv1_2"]].max()
    assert wins >= 8


# ---------------------------------------------------------------- psnr


def test_psnr_identical_is_infinite(rng):
    a = rng.random((8, 8, 3))
    assert dg.psnr(a, a) == math.inf


def test_psnr_uniform_offset_is_20db(rng):
    a = rng.random((8, 8, 3)) * 0.8
    assert dg.psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_matches_mse_oracle(rng):
    a, b = rng.random((5, 7, 3)), rng.random((5, 7, 3))
    mse = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert dg.psnr(a, b) == pytest.approx(10 * math.log10(1 / mse), rel=1e-12)


def test_psnr_accepts_buffers(rng):
    a = ImageBuffer(rng.integers(0, 256, (4, 4, 3), dtype=np.uint8))
    assert dg.psnr(a, a.rgb / 255.0) == math.inf


def test_psnr_shape_mismatch():
    with pytest.raises(ConfigurationError):
        dg.psnr(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


# ---------------------------------------------------------------- reference style loss


def test_reference_style_loss_of_style_is_zero():
    ref = nz.init_random(nz.preset("vgg19"), 1234)
    s = normalize(load(assets.path("style", 0)))
    assert dg.reference_style_loss(s, s, ref) == 0.0
    c = normalize(load(assets.path("content", 0)))
    assert dg.reference_style_loss(c, s, ref) > 0.0


def test_reference_net_needs_five_taps():
    net = _constant_net()
    x = T.Tensor(np.zeros((1, 3, 16, 16)))
    with pytest.raises(ConfigurationError):
        dg.reference_style_loss(x, x, net)
