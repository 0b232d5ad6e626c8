#!/usr/bin/env python3
"""Writes golden fixtures for the image-op tests from a NumPy reference.

Each output is a fixture buffer (16-byte little-endian header H, W, C,
label, then pixels). Regenerate with:

    python3 tools/make_golden.py tests/golden
"""
import math
import pathlib
import struct
import sys

import numpy as np

FILL = 128


def save(path, img, label=0):
    h, w, c = img.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4I", h, w, c, label))
        f.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def resample(img, src_of):
    """Nearest-neighbour pull: src_of(x, y) -> real source coordinates."""
    h, w, c = img.shape
    out = np.full_like(img, FILL)
    for y in range(h):
        for x in range(w):
            sx, sy = src_of(x, y)
            ix, iy = math.floor(sx + 0.5), math.floor(sy + 0.5)
            if 0 <= ix < w and 0 <= iy < h:
                out[y, x] = img[iy, ix]
    return out


def shear_x(img, s):
    cy = (img.shape[0] - 1) / 2
    return resample(img, lambda x, y: (x - s * (y - cy), y))


def shear_y(img, s):
    cx = (img.shape[1] - 1) / 2
    return resample(img, lambda x, y: (x, y - s * (x - cx)))


def translate(img, dx, dy):
    return resample(img, lambda x, y: (x - dx, y - dy))


def rotate(img, deg):
    # Counter-clockwise as displayed with y pointing down: the source of a
    # destination pixel is the destination rotated clockwise about the centre.
    h, w, _ = img.shape
    cx, cy = (w - 1) / 2, (h - 1) / 2
    t = math.radians(deg)

    def src(x, y):
        u, v = x - cx, y - cy
        return (cx + math.cos(t) * u - math.sin(t) * v, cy + math.sin(t) * u + math.cos(t) * v)

    return resample(img, src)


def posterize(img, bits):
    return img & np.uint8((0xFF << (8 - bits)) & 0xFF)


def solarize(img, threshold):
    return np.where(img >= threshold, 255 - img, img).astype(np.uint8)


def equalize(img):
    out = img.copy()
    n = img.shape[0] * img.shape[1]
    for c in range(img.shape[2]):
        ch = img[:, :, c].ravel()
        hist = np.bincount(ch, minlength=256)
        cdf = np.cumsum(hist)
        cdf_min = hist[hist > 0][0]
        if cdf_min == n:
            continue
        lut = np.floor((cdf - cdf_min) * 255.0 / (n - cdf_min) + 0.5)
        out[:, :, c] = np.clip(lut, 0, 255).astype(np.uint8)[img[:, :, c]]
    return out


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/golden")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20190501)

    rgb = rng.integers(0, 256, size=(8, 10, 3), dtype=np.uint8)
    gray = rng.integers(0, 256, size=(8, 8, 1), dtype=np.uint8)
    save(out / "rgb_input.bin", rgb, 3)
    save(out / "gray_input.bin", gray, 1)

    # magnitude 1.0 and 0.2 endpoints of each geometric op
    for lam in (0.2, 1.0):
        tag = f"{int(lam * 10):02d}"
        s = (2 * lam - 1) * 0.3
        save(out / f"shearx_{tag}.bin", shear_x(rgb, s), 3)
        save(out / f"sheary_{tag}.bin", shear_y(rgb, s), 3)
        f = (2 * lam - 1) * 0.3125
        save(out / f"translatex_{tag}.bin", translate(rgb, f * rgb.shape[1], 0), 3)
        save(out / f"translatey_{tag}.bin", translate(rgb, 0, f * rgb.shape[0]), 3)
        save(out / f"rotate_{tag}.bin", rotate(rgb, (2 * lam - 1) * 30), 3)

    for lam in (0.25, 0.5, 1.0):
        tag = f"{int(lam * 100):03d}"
        save(out / f"posterize_{tag}.bin", posterize(gray, min(8, max(4, round(8 - 4 * lam)))), 1)
        save(out / f"solarize_{tag}.bin", solarize(gray, round(256 * (1 - lam))), 1)

    save(out / "equalize_gray.bin", equalize(gray), 1)
    save(out / "equalize_rgb.bin", equalize(rgb), 3)


if __name__ == "__main__":
    main()
