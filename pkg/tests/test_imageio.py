import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from swag import assets
from swag import imageio as io
from swag.errors import ImageFormatError

pixels = hnp.arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3)))


def test_red_pixel_decodes():
    buf = io.decode_ppm(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
    assert buf.rgb.tolist() == [[[255, 0, 0]]]
    assert (buf.width, buf.height) == (1, 1)


def test_header_with_comments():
    buf = io.decode_ppm(b"P6 # made by hand\n2 1 # size\n255\n" + bytes(range(6)))
    assert buf.rgb.reshape(-1).tolist() == list(range(6))


@given(pixels)
def test_ppm_round_trip_bit_exact(rgb):
    buf = io.ImageBuffer(rgb)
    data = io.encode_ppm(buf)
    assert io.decode_ppm(data).rgb.tobytes() == rgb.tobytes()
    assert io.encode_ppm(io.decode_ppm(data)) == data


def test_save_load_file(tmp_path, rng):
    buf = io.ImageBuffer(rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
    io.save(buf, tmp_path / "a.ppm")
    assert io.load(tmp_path / "a.ppm").rgb.tobytes() == buf.rgb.tobytes()


def test_png_round_trip(tmp_path, rng):
    pytest.importorskip("PIL")
    buf = io.ImageBuffer(rng.integers(0, 256, (4, 6, 3), dtype=np.uint8))
    io.save(buf, tmp_path / "a.png")
    assert io.load(tmp_path / "a.png").rgb.tobytes() == buf.rgb.tobytes()


def test_truncated_payload_reports_offset():
    data = b"P6\n2 2\n255\n" + bytes(5)
    with pytest.raises(ImageFormatError) as info:
        io.decode_ppm(data)
    assert info.value.offset == len(data)
    assert "byte" in str(info.value)


@pytest.mark.parametrize("data,offset", [
    (b"P3\n1 1\n255\n", 0),
    (b"P6\nx 1\n255\n", 2),
    (b"P6\n1 1\n65535\n" + bytes(6), 12),
    (b"P6\n1 1", 6),
])
def test_malformed_headers(data, offset):
    with pytest.raises(ImageFormatError) as info:
        io.decode_ppm(data)
    assert info.value.offset == offset


def test_save_rejects_normalized_buffer(tmp_path):
    buf = io.ImageBuffer(np.zeros((2, 2, 3), np.float32), io.NORMALIZED)
    with pytest.raises(ImageFormatError):
        io.save(buf, tmp_path / "x.ppm")


def test_buffer_validation():
    with pytest.raises(ImageFormatError):
        io.ImageBuffer(np.zeros((2, 2, 3), np.int32))
    with pytest.raises(ImageFormatError):
        io.ImageBuffer(np.full((1, 1, 3), np.nan, np.float32), io.NORMALIZED)


# ---------------------------------------------------------------- normalization


def test_mean_pixel_normalizes_to_zero():
    x = io.normalize(io.ImageBuffer(np.array([[[124, 116, 104]]], np.uint8))).data
    assert np.abs(x).max() < 0.01


def test_white_pixel_formula():
    x = io.normalize(io.ImageBuffer(np.full((1, 1, 3), 255, np.uint8))).data.ravel()
    np.testing.assert_allclose(x, [2.2489, 2.4286, 2.6400], atol=1e-3)


def test_normalized_layout():
    x = io.normalize(io.ImageBuffer(np.zeros((4, 6, 3), np.uint8)))
    assert x.shape == (1, 3, 4, 6)


@given(pixels)
def test_denormalize_inverts_within_quantization(rgb):
    back = io.denormalize(io.normalize(io.ImageBuffer(rgb))).rgb
    assert np.abs(back.astype(int) - rgb.astype(int)).max() <= 1


def test_denormalize_clamps():
    lo, hi = io.pixel_bounds()
    x = np.concatenate([lo - 5, hi + 5], axis=3)
    out = io.denormalize(x).rgb
    assert out[0, 0].tolist() == [0, 0, 0] and out[0, 1].tolist() == [255, 255, 255]


def test_pixel_bounds_map_to_extremes():
    lo, hi = io.pixel_bounds()
    assert io.denormalize(lo).rgb.ravel().tolist() == [0, 0, 0]
    assert io.denormalize(hi).rgb.ravel().tolist() == [255, 255, 255]


# ---------------------------------------------------------------- resize


def test_resize_same_size_is_identity(rng):
    buf = io.ImageBuffer(rng.integers(0, 256, (5, 4, 3), dtype=np.uint8))
    assert io.resize(buf, 4, 5).rgb.tobytes() == buf.rgb.tobytes()


def test_nearest_checkerboard_upscale():
    board = np.array([[0, 255], [255, 0]], np.uint8)
    buf = io.ImageBuffer(np.repeat(board[:, :, None], 3, axis=2))
    out = io.resize(buf, 4, 4, mode="nearest").rgb[:, :, 0]
    expected = np.kron(board, np.ones((2, 2), np.uint8))
    np.testing.assert_array_equal(out, expected)


def test_nearest_integer_ratio_is_subsampling(rng):
    buf = io.ImageBuffer(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    out = io.resize(buf, 4, 4, mode="nearest").rgb
    np.testing.assert_array_equal(out, buf.rgb[1::2, 1::2])


def test_bilinear_midpoint_rounds_half_up():
    buf = io.ImageBuffer(np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8))
    out = io.resize(buf, 1, 1).rgb
    assert out.ravel().tolist() == [128, 128, 128]


@given(pixels, st.integers(1, 12), st.integers(1, 12), st.sampled_from(["nearest", "bilinear"]))
def test_resize_preserves_value_range(rgb, w, h, mode):
    out = io.resize(io.ImageBuffer(rgb), w, h, mode).rgb
    assert out.shape == (h, w, 3)
    assert out.min() >= rgb.min() and out.max() <= rgb.max()


# ---------------------------------------------------------------- bundled assets


@pytest.mark.parametrize("kind", assets.KINDS)
def test_bundled_assets(kind):
    paths = assets.paths(kind)
    assert len(paths) == 10
    for p in paths:
        buf = io.load(p)
        assert (buf.width, buf.height) == (128, 128)


def test_asset_lookup():
    assert assets.resolve("bundled:content/03") == assets.path("content", 3)
    assert assets.resolve("bundled:style/swirls").name == "00_swirls.ppm"
    with pytest.raises(KeyError):
        assets.resolve("bundled:style/nothing")
