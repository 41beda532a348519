from __future__ import annotations

from pathlib import Path

import numpy as np


def to_uint8(img):
    return (np.clip(np.asarray(img, dtype=np.float64), 0, 1) * 255 + 0.5).astype(np.uint8)


def write_ppm(path, img):
    """Binary P6, 8 bits per channel, no gamma handling."""
    data = to_uint8(img)
    h, w = data.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos)
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValueError(f"{path}: only 8-bit P6 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw, np.uint8, count=w * h * 3, offset=pos + 1)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_png(path, img):
    from PIL import Image

    Image.fromarray(to_uint8(img)).save(path)


def write_image(path, img):
    path = Path(path)
    if path.suffix.lower() == ".png":
        write_png(path, img)
    else:
        write_ppm(path, img)
