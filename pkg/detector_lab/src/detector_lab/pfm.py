"""Grayscale PFM reader/writer for confidence-map interchange.

Same wire format as the simulator's exporter: "Pf" header, dimensions, scale
line (negative = little-endian), float32 samples bottom-up.
"""

from __future__ import annotations

import numpy as np


class PfmError(IOError):
    pass


def write_pfm(path, image):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2:
        raise PfmError(f"expected a 2-D grayscale image, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(image).astype("<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise PfmError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise PfmError(f"{path}: malformed dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        buf = f.read(w * h * 4)
        if len(buf) != w * h * 4:
            raise PfmError(f"{path}: truncated pixel data")
    img = np.frombuffer(buf, dtype=dtype).reshape(h, w)
    return np.flipud(img).astype(np.float32)
