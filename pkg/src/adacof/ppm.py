"""Binary PPM (P6) and PGM (P5) readers/writers, maxval 255.

Values map linearly between [0, 1] and [0, 255] with round-half-up, so any
value already on the 1/255 grid round-trips bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .core import Frame


def _quantize(values):
    # round half up, as floor(x*255 + 0.5)
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _read_header(data, magic):
    if not data.startswith(magic):
        raise ValueError(f"not a {magic.decode()} file")
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens = []
    pos = len(magic)
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    return width, height, pos


def write_ppm(path, frame):
    """Write a 3-channel Frame (or 1-channel, replicated) as binary P6."""
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    if px.ndim == 2:
        px = px[None]
    if px.shape[0] == 1:
        px = np.repeat(px, 3, axis=0)
    c, h, w = px.shape
    raw = _quantize(px).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(raw)


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    width, height, pos = _read_header(data, b"P6")
    raw = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos)
    px = raw.reshape(height, width, 3).transpose(2, 0, 1).astype(np.float64) / 255.0
    return Frame(px)


def write_pgm(path, values):
    """Write a single-channel map (H, W) in [0, 1] as binary P5."""
    values = np.asarray(values)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(_quantize(values).tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    width, height, pos = _read_header(data, b"P5")
    raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raw.reshape(height, width).astype(np.float64) / 255.0
