"""Stage 2: lift the smoothed RGB image into a 6-channel feature stack.

The smoothed image is converted to CIE L*a*b* (D65 white point), each
Lab channel is min-max rescaled onto [0, 1], and the result is stacked
under the original three channels. Lab is the default second space
because its a/b axes approximate red-green and yellow-blue opponency,
which keeps color contrast that lightness-dominated RGB clustering
loses; HSV is available behind the same interface.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .image import Image, rescale_to_unit

# sRGB linear -> XYZ (D65). Rows are rescaled so that (1,1,1) maps to
# the white point *exactly*, not just to 7 printed digits.
_WHITE = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_RGB_TO_XYZ *= (_WHITE / _RGB_TO_XYZ.sum(axis=1))[:, None]

_DELTA = 6.0 / 29.0


def _check_unit_rgb(img: Image, who: str) -> None:
    if img.channels != 3:
        raise ValidationError(f"{who} needs a 3-channel image, got {img.channels}")
    lo, hi = float(img.data.min()), float(img.data.max())
    if lo < 0.0 or hi > 1.0:
        raise ValidationError(f"{who} input outside [0, 1] (range [{lo:.4g}, {hi:.4g}])")


def _h(t: np.ndarray) -> np.ndarray:
    # cube root with the standard linear toe below (6/29)^3
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA * _DELTA) + 4.0 / 29.0)


def srgb_to_lab(img: Image) -> Image:
    """sRGB in [0,1] -> (L*, a*, b*); L* in [0, 100], a*/b* signed.

    Per pixel: inverse sRGB gamma (c <= 0.04045 -> c/12.92, else
    ((c + 0.055)/1.055)^2.4), the D65 matrix to XYZ, then
    L* = 116 h(Y/Yn) - 16, a* = 500 (h(X/Xn) - h(Y/Yn)),
    b* = 200 (h(Y/Yn) - h(Z/Zn)).
    """
    _check_unit_rgb(img, "srgb_to_lab")
    c = img.data
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = np.einsum("ij,jhw->ihw", _RGB_TO_XYZ, linear)
    hx, hy, hz = (_h(xyz[i] / _WHITE[i]) for i in range(3))
    lab = np.stack([116.0 * hy - 16.0, 500.0 * (hx - hy), 200.0 * (hy - hz)])
    return Image(lab)


def rgb_to_hsv(img: Image) -> Image:
    """RGB in [0,1] -> (H, S, V), all in [0,1] (hue wraps at 1)."""
    _check_unit_rgb(img, "rgb_to_hsv")
    r, g, b = img.data
    v = img.data.max(axis=0)
    spread = v - img.data.min(axis=0)
    h = np.zeros_like(v)
    nz = spread > 0.0
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h[rmax] = ((g - b)[rmax] / spread[rmax]) % 6.0
    h[gmax] = (b - r)[gmax] / spread[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / spread[bmax] + 4.0
    s = np.divide(spread, v, out=np.zeros_like(v), where=v > 0)
    return Image(np.stack([h / 6.0, s, v]))


COLOR_TRANSFORMS = {"lab": srgb_to_lab, "hsv": rgb_to_hsv}


def lift(img: Image, space: str = "lab") -> Image:
    """Stack img with its rescaled color-space transform: 3 -> 6 channels.

    Channels 1-3 are img untouched; channels 4-6 are the transform of
    img with each channel min-max rescaled onto [0, 1] (a constant
    channel rescales to zero).
    """
    try:
        transform = COLOR_TRANSFORMS[space]
    except KeyError:
        raise ValidationError(f"unknown color space {space!r}; have {sorted(COLOR_TRANSFORMS)}") from None
    _check_unit_rgb(img, "lift")
    extra = rescale_to_unit(transform(img))
    return Image(np.concatenate([img.data, extra.data]))
