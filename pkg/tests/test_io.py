import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from diffinpaint import DataError, ShapeError
from diffinpaint.io import (load_image, load_mask, load_tensor, parse_tensor, quantize, save_image, save_mask,
                            save_tensor, tensor_bytes)


def test_black_and_white(tmp_path):
    Image.fromarray(np.zeros((4, 5, 3), np.uint8)).save(tmp_path / "b.png")
    Image.fromarray(np.full((4, 5), 255, np.uint8)).save(tmp_path / "w.png")
    b, w = load_image(tmp_path / "b.png"), load_image(tmp_path / "w.png")
    assert b.shape == (3, 4, 5) and np.all(b == -1.0)
    assert w.shape == (1, 4, 5) and np.all(w == 1.0)


@pytest.mark.parametrize("channels", [1, 3])
def test_roundtrip_bit_identical(tmp_path, channels):
    raw = np.random.default_rng(channels).integers(0, 256, (9, 7, 3) if channels == 3 else (9, 7), dtype=np.uint8)
    Image.fromarray(raw).save(tmp_path / "a.png")
    x = load_image(tmp_path / "a.png")
    save_image(x, tmp_path / "b.png")
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "b.png")), raw)


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=50))
def test_quantization_error(values):
    x = np.array(values)
    back = quantize(x) / 127.5 - 1.0
    assert np.all(np.abs(back - np.clip(x, -1, 1)) <= 1 / 255 + 1e-12)


def test_round_half_even():
    # these inputs land exactly on 32.5 and 35.5 before rounding
    x = np.array([32.5, 35.5]) / 127.5 - 1.0
    assert ((x + 1.0) * 127.5).tolist() == [32.5, 35.5]
    assert quantize(x).tolist() == [32, 36]


def test_unsupported(tmp_path):
    Image.fromarray(np.zeros((4, 4), np.uint16)).save(tmp_path / "i.png")
    with pytest.raises(DataError):
        load_image(tmp_path / "i.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(DataError):
        load_image(tmp_path / "junk.png")
    with pytest.raises(ShapeError):
        save_image(np.zeros((2, 4, 4)), tmp_path / "x.png")


def test_mask_polarity(tmp_path):
    raw = np.zeros((4, 4), np.uint8)
    raw[1:3, 1:3] = 255
    Image.fromarray(raw).save(tmp_path / "m.png")
    m = load_mask(tmp_path / "m.png")
    assert m[1, 1] == 0 and m[0, 0] == 1
    save_mask(m, tmp_path / "m2.png")
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "m2.png")), raw)


class TestTensor:
    def test_roundtrip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((2, 3, 4)).astype(np.float32)
        save_tensor(x, tmp_path / "x.tnsr")
        y = load_tensor(tmp_path / "x.tnsr")
        assert y.dtype == np.float32
        np.testing.assert_array_equal(x, y)

    def test_layout(self):
        blob = tensor_bytes(np.array([[1.0, 2.0]], np.float32))
        assert blob[:5] == b"TNSR\x01"
        assert blob[5:9] == (2).to_bytes(4, "little")
        assert blob[9:17] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert len(blob) == 17 + 8

    @pytest.mark.parametrize("blob", [b"XNSR\x01\x01\x00\x00\x00", b"TNSR\x01\x01\x00\x00\x00\x02\x00\x00\x00",
                                      b"TNSR\x01\x00\x00\x00\x00", b"TNSR\x02\x01\x00\x00\x00\x01\x00\x00\x00"
                                      b"\x00\x00\x80\x3f", b"TNS"])
    def test_rejects(self, blob):
        with pytest.raises(DataError):
            parse_tensor(blob)

    def test_rejects_scalar(self):
        with pytest.raises(ShapeError):
            tensor_bytes(np.float32(1.0))
