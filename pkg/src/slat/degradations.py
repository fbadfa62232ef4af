"""Generators for the test corruptions: noise, pixel loss and blur.

All generators are pure given (input, parameters, seed). The composite
degrade() applies blur, then noise, then loss, matching a forward model
where the blur sits inside the acquisition and missing pixels are the
last thing that happens to the recorded values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .image import Image, Mask
from .linops import LinearOperator, vertical_box_blur
from .seeds import substream


@dataclass(frozen=True)
class DegradationSpec:
    """One corruption recipe: optional blur, one noise kind, optional loss."""

    noise: str = "none"  # none | gaussian | poisson
    noise_mean: float = 0.0
    noise_var: float = 0.0
    poisson_peak: float = 255.0
    loss_fraction: float = 0.0
    loss_per_channel: bool = False
    blur: Optional[str] = None  # None | "vbox<length>"
    seed: int = 0

    def __post_init__(self):
        if self.noise not in ("none", "gaussian", "poisson"):
            raise ValidationError(f"unknown noise kind {self.noise!r}")
        if self.noise_var < 0:
            raise ValidationError("gaussian variance must be >= 0")
        if self.poisson_peak <= 0:
            raise ValidationError("poisson peak must be > 0")
        if not 0.0 <= self.loss_fraction < 1.0:
            raise ValidationError("loss fraction must lie in [0, 1)")
        if self.blur is not None and not self.blur.startswith("vbox"):
            raise ValidationError(f"unknown blur spec {self.blur!r}")

    def blur_operator(self) -> Optional[LinearOperator]:
        if self.blur is None:
            return None
        return vertical_box_blur(int(self.blur[4:] or 10))

    def describe(self) -> str:
        parts = []
        if self.blur:
            parts.append(self.blur)
        if self.noise == "gaussian":
            parts.append(f"gauss(var={self.noise_var:g})")
        elif self.noise == "poisson":
            parts.append(f"poisson(peak={self.poisson_peak:g})")
        if self.loss_fraction > 0:
            parts.append(f"loss({self.loss_fraction:g})")
        return "+".join(parts) if parts else "none"

    def to_kv(self) -> dict:
        kv = {"noise": self.noise, "seed": str(self.seed)}
        if self.noise == "gaussian":
            kv["noise_mean"] = repr(self.noise_mean)
            kv["noise_var"] = repr(self.noise_var)
        if self.noise == "poisson":
            kv["poisson_peak"] = repr(self.poisson_peak)
        if self.loss_fraction:
            kv["loss_fraction"] = repr(self.loss_fraction)
            kv["loss_per_channel"] = str(self.loss_per_channel).lower()
        if self.blur:
            kv["blur"] = self.blur
        return kv

    @staticmethod
    def from_kv(kv: dict) -> "DegradationSpec":
        return DegradationSpec(
            noise=kv.get("noise", "none"),
            noise_mean=float(kv.get("noise_mean", 0.0)),
            noise_var=float(kv.get("noise_var", 0.0)),
            poisson_peak=float(kv.get("poisson_peak", 255.0)),
            loss_fraction=float(kv.get("loss_fraction", 0.0)),
            loss_per_channel=kv.get("loss_per_channel", "false") == "true",
            blur=kv.get("blur") or None,
            seed=int(kv.get("seed", 0)),
        )


def add_gaussian(img: Image, mean: float, variance: float, seed: int) -> Image:
    """img + N(mean, variance) i.i.d. per sample, clamped to [0, 1]."""
    if variance < 0:
        raise ValidationError("gaussian variance must be >= 0")
    if variance == 0:
        return Image(img.data + mean if mean else img.data.copy())
    rng = substream(seed, "noise")
    noisy = img.data + rng.normal(mean, np.sqrt(variance), size=img.shape)
    return Image(np.clip(noisy, 0.0, 1.0))


def _poisson_counts(img: Image, peak: float, rng: np.random.Generator) -> np.ndarray:
    # Stretch [0,1] intensities onto [1, peak] and use them as Poisson rates.
    rates = 1.0 + img.data * (peak - 1.0)
    return rng.poisson(rates).astype(np.float64)


def add_poisson(img: Image, peak: float = 255.0, seed: int = 0) -> Image:
    """Poisson counts at rates 1 + v*(peak-1), min-max stretched back to [0, 1]."""
    if peak <= 0:
        raise ValidationError("poisson peak must be > 0")
    counts = _poisson_counts(img, peak, substream(seed, "noise"))
    lo, hi = counts.min(), counts.max()
    if hi == lo:
        return Image(np.zeros_like(counts))
    return Image((counts - lo) / (hi - lo))


def random_loss(img: Image, fraction: float, per_channel: bool = False, seed: int = 0):
    """Clear exactly round(fraction * H * W) pixel sites; returns (image, mask).

    With per_channel=False (the default) the same sites are cleared in every
    channel; otherwise each channel loses its own independently drawn sites.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValidationError("loss fraction must lie in [0, 1)")
    h, w, c = img.height, img.width, img.channels
    n_clear = int(round(fraction * h * w))
    bits = np.ones((c, h, w), dtype=bool)
    out = img.data.copy()
    if n_clear:
        if per_channel:
            for i in range(c):
                sites = substream(seed, "loss", i).permutation(h * w)[:n_clear]
                flat = bits[i].reshape(-1)
                flat[sites] = False
        else:
            sites = substream(seed, "loss").permutation(h * w)[:n_clear]
            flat = bits.reshape(c, -1)
            flat[:, sites] = False
        out[~bits] = 0.0
    return Image(out), Mask(bits)


def degrade(img: Image, spec: DegradationSpec):
    """Apply blur, then noise, then loss; returns (degraded image, mask)."""
    out = img
    op = spec.blur_operator()
    if op is not None:
        out = Image(np.stack([op.apply(out.data[i]) for i in range(out.channels)]))
    if spec.noise == "gaussian":
        out = add_gaussian(out, spec.noise_mean, spec.noise_var, spec.seed)
    elif spec.noise == "poisson":
        out = add_poisson(out, spec.poisson_peak, spec.seed)
    if spec.loss_fraction > 0:
        return random_loss(out, spec.loss_fraction, spec.loss_per_channel, spec.seed)
    return out, Mask.full(img.height, img.width, img.channels)
