"""Procedural test images with exact ground-truth label maps.

These stand in for the experiment figures: a six-phase disc composition,
a four-phase quadrant image under strong variable illumination, and a
two-phase pyramid-against-sky scene. Geometry and palettes are fixed
here so accuracy numbers are reproducible without any image corpus.
"""

from __future__ import annotations

import numpy as np

from .image import Image, LabelMap


def _grid(height: int, width: int):
    return np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")


def make_six_phase(height: int = 100, width: int = 100):
    """Five overlapping discs on a white background; 6 phases total.

    Disc centres sit on a ring of radius 0.18*min(H,W) around the image
    centre (first centre at the top, then every 72 degrees); each disc has
    radius 0.27*min(H,W) and is painted over its predecessors. Colors:
    red, green, blue, yellow, magenta on white.
    """
    yy, xx = _grid(height, width)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    scale = min(height, width)
    ring, radius = 0.18 * scale, 0.27 * scale
    colors = [
        (1.0, 1.0, 1.0),  # background
        (0.9, 0.1, 0.1),
        (0.1, 0.8, 0.15),
        (0.15, 0.25, 0.9),
        (0.95, 0.85, 0.1),
        (0.85, 0.15, 0.85),
    ]
    labels = np.ones((height, width), dtype=np.int32)
    for k in range(5):
        theta = -np.pi / 2.0 + k * 2.0 * np.pi / 5.0
        oy, ox = cy + ring * np.sin(theta), cx + ring * np.cos(theta)
        inside = (yy - oy) ** 2 + (xx - ox) ** 2 <= radius**2
        labels[inside] = k + 2
    data = np.zeros((3, height, width))
    for k, rgb in enumerate(colors, start=1):
        sel = labels == k
        for c in range(3):
            data[c][sel] = rgb[c]
    return Image(data), LabelMap(labels, 6)


def make_four_phase(height: int = 256, width: int = 256):
    """Four moderately saturated quadrants under a radial illumination dip.

    The multiplicative illumination falls from 1.0 at the centre to 0.52
    at the farthest corner, so every quadrant sweeps the full lightness
    range. The quadrant hues (tan / sage / slate-blue / mauve) are close
    enough in RGB that plain RGB clustering latches onto brightness
    instead of hue, while the opponent chroma channels still separate
    them cleanly - the point of the dimension-lifting stage.
    """
    yy, xx = _grid(height, width)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    illum = 1.0 - 0.48 * r / r.max()
    colors = [
        (0.75, 0.55, 0.45),
        (0.55, 0.72, 0.50),
        (0.50, 0.60, 0.78),
        (0.74, 0.54, 0.70),
    ]
    labels = np.ones((height, width), dtype=np.int32)
    labels[: height // 2, width // 2 :] = 2
    labels[height // 2 :, : width // 2] = 3
    labels[height // 2 :, width // 2 :] = 4
    data = np.zeros((3, height, width))
    for k, rgb in enumerate(colors, start=1):
        sel = labels == k
        for c in range(3):
            data[c][sel] = rgb[c] * illum[sel]
    return Image(data), LabelMap(labels, 4)


def make_pyramid(height: int = 321, width: int = 481):
    """Two-phase desert scene: sky above, a sand pyramid on sand below.

    The horizon sits at 0.62*H; the pyramid apex at (0.18*H, 0.45*W) with
    base half-width 0.38*W. Sky and sand are both low-chroma so that no
    single RGB channel separates them cleanly once their own lightness
    gradients are applied; the red-green opponent axis does.
    """
    yy, xx = _grid(height, width)
    horizon = 0.62 * height
    apex_y, apex_x = 0.18 * height, 0.45 * width
    half_base = 0.38 * width
    slope = (horizon - apex_y) / half_base
    in_pyramid = (yy >= apex_y) & (yy <= horizon) & (np.abs(xx - apex_x) <= (yy - apex_y) / slope)
    sand = in_pyramid | (yy > horizon)

    sky_rgb = np.array([0.60, 0.71, 0.78])
    sand_rgb = np.array([0.78, 0.63, 0.55])
    sky_illum = 0.70 + 0.34 * (1.0 - yy / max(height - 1, 1))
    sand_illum = 0.72 + 0.30 * (xx / max(width - 1, 1))
    # darken the pyramid's left face slightly, as a lit solid would be
    sand_illum = np.where(in_pyramid & (xx < apex_x), sand_illum * 0.88, sand_illum)

    data = np.zeros((3, height, width))
    for c in range(3):
        chan = np.where(sand, sand_rgb[c] * sand_illum, sky_rgb[c] * sky_illum)
        data[c] = np.clip(chan, 0.0, 1.0)
    labels = np.where(sand, 2, 1).astype(np.int32)
    return Image(data), LabelMap(labels, 2)


_GENERATORS = {
    "six-phase": make_six_phase,
    "four-phase": make_four_phase,
    "pyramid": make_pyramid,
}


def make(name: str, **kwargs):
    """Look up a generator by name ("six-phase", "four-phase", "pyramid")."""
    try:
        gen = _GENERATORS[name]
    except KeyError:
        raise KeyError(f"unknown synthetic image {name!r}; have {sorted(_GENERATORS)}") from None
    return gen(**kwargs)
