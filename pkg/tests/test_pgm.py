import numpy as np
import pytest

from tgvd.pgm import PGMFormatError, encode_pgm, load_image, parse_pgm, quantize, save_image


def test_ascii_with_comments():
    data = b"P2\n# made by hand\n3 2 # width height\n10\n0 5 10\n10 5 0\n"
    pix, maxval = parse_pgm(data)
    assert maxval == 10
    np.testing.assert_array_equal(pix, [[0, 5, 10], [10, 5, 0]])


def test_binary_roundtrip(tmp_path, rng):
    u = rng.random((7, 5))
    path = tmp_path / "a.pgm"
    save_image(u, path)
    back = load_image(path)
    assert back.shape == (7, 5)
    np.testing.assert_allclose(back, quantize(u) / 255.0)
    assert np.abs(back - u).max() <= 0.5 / 255 + 1e-12


def test_sixteen_bit_big_endian():
    data = b"P5 2 2 65535\n" + np.array([0, 1, 256, 65535], ">u2").tobytes()
    pix, maxval = parse_pgm(data)
    np.testing.assert_array_equal(pix.ravel(), [0, 1, 256, 65535])
    u = np.array([[0.0, 1.0], [0.5, 0.25]])
    pix, _ = parse_pgm(encode_pgm(u, maxval=65535))
    np.testing.assert_array_equal(pix, quantize(u, 65535))


def test_quantize_rounds_half_up_and_clips():
    np.testing.assert_array_equal(quantize(np.array([-1.0, 0.5 / 255, 2.0])), [0, 1, 255])


@pytest.mark.parametrize("data", [
    b"P6\n2 2\n255\n" + bytes(12),       # color
    b"P5\n2 2\n255\n" + bytes(3),        # truncated
    b"P5\n2 2\n0\n" + bytes(4),          # bad maxval
    b"P2\n2 2\n9\n1 2 3 99\n",           # value above maxval
    b"P2\n2 x\n9\n",                     # corrupt header
    b"P2\n1 4\n9\n1 2 3 4\n",            # too small
])
def test_malformed(data):
    with pytest.raises(PGMFormatError):
        parse_pgm(data)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        save_image(np.zeros((2, 2)), tmp_path / "missing" / "x.pgm")
