"""Diagnostic raster output: PGM for real fields, PPM for complex or overlays.

Images are 8-bit and max-normalized.  Real values map linearly from
[-max|u|, max|u|] onto [0, 255]; complex values use hue for phase and
brightness for magnitude.  Structure overlays stamp sign-colored dots on
the located maxima (red positive, blue negative).
"""

from __future__ import annotations

import numpy as np


def _to_image_axes(values: np.ndarray) -> np.ndarray:
    # axis 0 is x; image rows run top to bottom, so flip the y axis
    return values.T[::-1]


def render_pgm(values: np.ndarray) -> bytes:
    v = _to_image_axes(np.real(values))
    peak = float(np.max(np.abs(v))) or 1.0
    pix = np.round((v / peak + 1.0) * 127.5).astype(np.uint8)
    h, w = pix.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pix.tobytes()


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return r, g, b


def render_ppm(values: np.ndarray) -> bytes:
    v = _to_image_axes(values)
    mag = np.abs(v)
    peak = float(mag.max()) or 1.0
    if np.iscomplexobj(v):
        hue = (np.angle(v) / (2.0 * np.pi)) % 1.0
        r, g, b = _hsv_to_rgb(hue, np.ones_like(mag), mag / peak)
    else:
        gray = (np.real(v) / peak + 1.0) * 0.5
        r = g = b = gray
    rgb = np.stack([r, g, b], axis=-1)
    pix = np.round(255.0 * np.clip(rgb, 0.0, 1.0)).astype(np.uint8)
    h, w = pix.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pix.tobytes()


def render_overlay(values: np.ndarray, points: list) -> bytes:
    """Grayscale base with sign-colored dots at structure-map maxima."""
    v = _to_image_axes(np.real(values) if not np.iscomplexobj(values) else np.abs(values))
    peak = float(np.max(np.abs(v))) or 1.0
    gray = np.clip((v / peak + 1.0) * 0.5, 0.0, 1.0)
    rgb = np.stack([gray, gray, gray], axis=-1)
    n1 = values.shape[0]
    n2 = values.shape[1]
    for pt in points:
        i, j = pt["index"]
        row = n2 - 1 - j
        col = i
        color = (1.0, 0.15, 0.15) if pt.get("sign", 1) >= 0 else (0.15, 0.15, 1.0)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                r = (row + dr) % n2
                c = (col + dc) % n1
                rgb[r, c] = color
    pix = np.round(255.0 * rgb).astype(np.uint8)
    h, w = pix.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pix.tobytes()
