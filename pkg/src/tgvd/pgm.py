"""Portable graymap (PGM, P2/P5) reading and writing.

Images are returned as float fields ``value / maxval`` in ``[0, 1]``;
writing clamps to ``[0, 1]`` and quantizes round-half-up to 8 bits.
"""

import numpy as np


class PGMFormatError(ValueError):
    pass


def _tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMFormatError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        out.append(data[start:pos])
    return out, pos


def parse_pgm(data):
    """Decode PGM bytes into ``(integer array, maxval)``."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMFormatError(f"not a PGM file (magic {magic!r})")
    try:
        (w, h, maxval), pos = _tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PGMFormatError(f"corrupt header: {exc}") from None
    if not 0 < maxval < 65536:
        raise PGMFormatError(f"maxval {maxval} out of range")
    if w < 2 or h < 2:
        raise PGMFormatError(f"image {w}x{h} is smaller than 2x2")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + w * h * dtype.itemsize]
        if len(raw) != w * h * dtype.itemsize:
            raise PGMFormatError("truncated pixel data")
        pixels = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        try:
            pixels = np.array([int(t) for t in data[pos:].split()[:w * h]], dtype=np.int64)
        except ValueError as exc:
            raise PGMFormatError(f"bad ASCII pixel: {exc}") from None
        if pixels.size != w * h:
            raise PGMFormatError("truncated pixel data")
    if pixels.max(initial=0) > maxval:
        raise PGMFormatError("pixel value exceeds maxval")
    return pixels.reshape(h, w), maxval


def load_image(path):
    """Read a PGM file as a float field with values ``value / maxval``."""
    with open(path, "rb") as fh:
        data = fh.read()
    pixels, maxval = parse_pgm(data)
    return pixels / float(maxval)


def quantize(u, maxval=255):
    """Clamp to ``[0, 1]`` and round half up to integers in ``[0, maxval]``."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return np.floor(u * maxval + 0.5).astype(np.int64)


def encode_pgm(u, maxval=255):
    q = quantize(u, maxval)
    h, w = q.shape
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()


def save_image(u, path, maxval=255):
    """Write ``u`` as a binary (P5) PGM."""
    data = encode_pgm(u, maxval)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
