import math

import numpy as np
import pytest

from mipp.ehd_features import (
    EDGE_TYPES,
    EhdConfig,
    FEATURE_DIMS,
    ImageTooSmallError,
    extract_ehd,
    read_ehd,
    square_feature,
    write_ehd,
)


def vertical_stripes(m, n, phase=0):
    cols = (np.arange(n) + phase) % 2
    return np.broadcast_to(cols * 255, (m, n)).astype(np.uint8)


def filter_bank_oracle(block):
    """Direct evaluation of the five filters on one 2x2 block."""
    a00, a01, a10, a11 = block
    s2 = math.sqrt(2)
    return [
        abs(a00 - a01 + a10 - a11),
        abs(a00 + a01 - a10 - a11),
        abs(s2 * a00 - s2 * a11),
        abs(s2 * a01 - s2 * a10),
        abs(2 * a00 - 2 * a01 - 2 * a10 + 2 * a11),
    ]


def test_constant_image_has_empty_histogram():
    img = np.full((32, 32), 77, dtype=np.uint8)
    assert np.array_equal(extract_ehd(img), np.zeros(FEATURE_DIMS, dtype=np.int64))


def test_vertical_stripes_fill_only_vertical_bins():
    # one macro-block of the stripe image is [[0,255],[0,255]]; the oracle
    # says the vertical filter wins there, and the image tiles that block
    responses = filter_bank_oracle([0, 255, 0, 255])
    assert responses.index(max(responses)) == EDGE_TYPES.index("vertical")
    assert max(responses) > 11

    f = extract_ehd(vertical_stripes(32, 32))
    f = f.reshape(16, 5)
    assert np.all(f[:, 0] == 255)  # every sub-image: all blocks vertical
    assert np.all(f[:, 1:] == 0)


def test_output_length_is_80():
    rng = np.random.default_rng(3)
    for _ in range(5):
        img = rng.integers(0, 256, size=(rng.integers(8, 64), rng.integers(8, 64)), dtype=np.uint8)
        assert extract_ehd(img).shape == (80,)


def test_too_small_image_rejected():
    img = np.zeros((7, 12), dtype=np.uint8)
    with pytest.raises(ImageTooSmallError):
        extract_ehd(img)


def test_translation_by_one_period_is_invariant():
    a = vertical_stripes(40, 40, phase=0)
    b = vertical_stripes(40, 40, phase=2)
    assert np.array_equal(a, b)  # full-period shift reproduces the texture
    assert np.array_equal(extract_ehd(a), extract_ehd(b))


def test_determinism():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(48, 48), dtype=np.uint8)
    assert np.array_equal(extract_ehd(img), extract_ehd(img.copy()))


def test_quantization_bounds():
    rng = np.random.default_rng(6)
    for _ in range(20):
        img = rng.integers(0, 256, size=(33, 47), dtype=np.uint8)
        f = extract_ehd(img)
        assert f.min() >= 0 and f.max() <= 255
        assert f.sum() <= 80 * 255
        assert int(square_feature(f).sum()) <= 80 * 255 * 255


def test_remainder_pixels_go_to_last_subimage():
    # 10 rows: sub-heights 2,2,2,4; the tall last band still gets blocks
    img = vertical_stripes(10, 10)
    f = extract_ehd(img).reshape(16, 5)
    assert np.all(f[:, 0] == 255)


def test_nondirectional_checker_pattern():
    block = [0, 255, 255, 0]
    responses = filter_bank_oracle(block)
    assert responses.index(max(responses)) == EDGE_TYPES.index("nondirectional")
    tile = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    img = np.tile(tile, (16, 16))
    f = extract_ehd(img).reshape(16, 5)
    assert np.all(f[:, 4] == 255)
    assert np.all(f[:, :4] == 0)


def test_threshold_suppresses_weak_edges():
    img = np.zeros((16, 16), dtype=np.uint8)
    img[:, 1::2] = 5  # vertical response 10, just under the default 11
    assert extract_ehd(img).sum() == 0
    strong = extract_ehd(img, EhdConfig(edge_threshold=9.0))
    assert strong.reshape(16, 5)[:, 0].min() == 255


def test_square_feature_values():
    assert np.array_equal(square_feature([0, 0, 0]), [0, 0, 0])
    assert np.array_equal(square_feature([2, 3, 4]), [4, 9, 16])
    assert np.array_equal(square_feature([255] * 3), [65025] * 3)


def test_ehd_file_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    feats = [rng.integers(0, 256, size=80).astype(np.int64) for _ in range(3)]
    path = tmp_path / "corpus.ehd"
    write_ehd(path, feats)
    text = path.read_text()
    assert text.splitlines()[0] == "MIPP-EHD-1 l=80"
    back = read_ehd(path)
    assert len(back) == 3
    for a, b in zip(feats, back):
        assert np.array_equal(a, b)


def test_ehd_file_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.ehd"
    path.write_text("WRONG l=80\n1,2,3\n")
    with pytest.raises(ValueError):
        read_ehd(path)
