"""Discrete gradient/divergence, blur operators and matrix-free solvers.

Conventions used throughout the package:

* grad uses backward differences with Neumann boundary handling, so the
  first column of gx and the first row of gy are identically zero.
* div is minus the transpose of grad: <grad u, p> = -<u, div p> for every
  u and p (p entries in the structurally-zero positions are ignored).
* Convolution operators extend the image symmetrically (edge sample
  repeated, numpy's "symmetric" padding) and their adjoint is the exact
  transpose of that padded linear map, so <A u, v> = <u, A^T v> holds to
  rounding error. The kernel anchor fixes which output pixel a tap
  window is charged to; an even-length kernel has no centre, so the
  anchor must be given explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NumericalError, ValidationError


class GradientField(NamedTuple):
    gx: np.ndarray
    gy: np.ndarray


def grad(u: np.ndarray) -> GradientField:
    """Backward-difference gradient; zero on the leading column/row."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, 1:] = u[:, 1:] - u[:, :-1]
    gy[1:, :] = u[1:, :] - u[:-1, :]
    return GradientField(gx, gy)


def _div_1d(g: np.ndarray, axis: int) -> np.ndarray:
    # One component of -grad^T. The leading slice of g along `axis` is
    # structurally zero in grad output and must be ignored for arbitrary g.
    g = np.swapaxes(g, 0, axis).copy()
    g[0] = 0.0
    out = -g
    out[:-1] += g[1:]
    return np.swapaxes(out, 0, axis)


def div(p: GradientField) -> np.ndarray:
    """Discrete divergence satisfying <grad u, p> = -<u, div p>."""
    return _div_1d(p.gx, 1) + _div_1d(p.gy, 0)


def laplacian(u: np.ndarray) -> np.ndarray:
    """grad^T grad u, the 5-point Neumann Laplacian (positive semidefinite)."""
    return -div(grad(u))


def tv_norm(p: GradientField) -> float:
    """Isotropic total variation: sum_j sqrt(gx_j^2 + gy_j^2)."""
    return float(np.sqrt(p.gx * p.gx + p.gy * p.gy).sum())


def field_norm_sq(p: GradientField) -> float:
    """Squared Frobenius norm of the gradient field."""
    return float((p.gx * p.gx + p.gy * p.gy).sum())


def _sym_pad(u: np.ndarray, before: tuple, after: tuple) -> np.ndarray:
    return np.pad(u, (before[0], after[0]), mode="symmetric") if u.ndim == 1 else np.pad(
        u, ((before[0], after[0]), (before[1], after[1])), mode="symmetric"
    )


def _fold_sym_axis(q: np.ndarray, before: int, after: int, axis: int) -> np.ndarray:
    # Transpose of symmetric padding along one axis: padded samples are
    # added back onto the source pixels they were copied from.
    q = np.swapaxes(q, 0, axis)
    n = q.shape[0] - before - after
    out = q[before : before + n].copy()
    for j in range(before):
        out[j] += q[before - 1 - j]
    for j in range(after):
        out[n - 1 - j] += q[before + n + j]
    return np.swapaxes(out, 0, axis)


@dataclass(frozen=True)
class LinearOperator:
    """Identity or a small-kernel convolution with symmetric extension.

    kernel has shape (m, n); anchor (ay, ax) means that output pixel
    (i, j) gathers input pixels (i + ay - s, j + ax - t) weighted by
    kernel[s, t] (convolution convention).
    """

    kind: str
    kernel: Optional[np.ndarray] = None
    anchor: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "identity":
            return
        if self.kind != "convolution":
            raise ValidationError(f"unknown operator kind {self.kind!r}")
        k = np.atleast_2d(np.asarray(self.kernel, dtype=np.float64))
        if abs(float(k.sum()) - 1.0) > 1e-12:
            raise ValidationError("blur kernel taps must sum to 1")
        anchor = self.anchor
        if anchor is None:
            if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ValidationError("even-sized kernel needs an explicit anchor")
            anchor = (k.shape[0] // 2, k.shape[1] // 2)
        ay, ax = anchor
        if not (0 <= ay < k.shape[0] and 0 <= ax < k.shape[1]):
            raise ValidationError(f"anchor {anchor} outside kernel of shape {k.shape}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "anchor", (int(ay), int(ax)))

    def _pads(self, shape):
        m, n = self.kernel.shape
        ay, ax = self.anchor
        by, bx = m - 1 - ay, n - 1 - ax
        h, w = shape
        if max(by, ay) > h or max(bx, ax) > w:
            raise ValidationError(f"kernel {self.kernel.shape} larger than image {shape}")
        return (by, bx), (ay, ax)

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return u.copy()
        before, after = self._pads(u.shape)
        p = _sym_pad(u, before, after)
        kr = self.kernel[::-1, ::-1]
        m, n = kr.shape
        h, w = u.shape
        out = np.zeros_like(u)
        for s in range(m):
            for t in range(n):
                if kr[s, t] != 0.0:
                    out += kr[s, t] * p[s : s + h, t : t + w]
        return out

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return v.copy()
        before, after = self._pads(v.shape)
        kr = self.kernel[::-1, ::-1]
        m, n = kr.shape
        h, w = v.shape
        q = np.zeros((h + m - 1, w + n - 1), dtype=np.float64)
        for s in range(m):
            for t in range(n):
                if kr[s, t] != 0.0:
                    q[s : s + h, t : t + w] += kr[s, t] * v
        q = _fold_sym_axis(q, before[0], after[0], 0)
        return _fold_sym_axis(q, before[1], after[1], 1)


def identity_operator() -> LinearOperator:
    return LinearOperator("identity")


def vertical_box_blur(length: int = 10) -> LinearOperator:
    """Vertical motion blur: output row k averages input rows
    k - ceil(L/2) ... k + floor(L/2) - 1 (for L = 10: rows k-5 ... k+4)."""
    if length < 1:
        raise ValidationError("blur length must be >= 1")
    taps = np.full((length, 1), 1.0 / length)
    return LinearOperator("convolution", taps, anchor=(length // 2 - 1 if length % 2 == 0 else length // 2, 0))


def masked_apply(op: LinearOperator, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(w . A) u: blur then keep only the pixels the mask marks as known."""
    if w.shape != u.shape:
        raise ValidationError(f"mask shape {w.shape} != image shape {u.shape}")
    if not np.any(w):
        raise ValidationError("all-zero mask channel makes the problem degenerate")
    return w * op.apply(u)


def masked_adjoint(op: LinearOperator, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Adjoint of masked_apply; the mask is diagonal, so it commutes inside."""
    return op.adjoint(w * v)


def conjugate_gradient(
    apply_fn: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> tuple:
    """Solve the SPD system apply_fn(x) = b; returns (x, iterations).

    Stops when the residual norm falls below tol * ||b||.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_fn(x)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    d = r.copy()
    rs = float((r * r).sum())
    for it in range(max_iter):
        if np.sqrt(rs) <= tol * bnorm:
            return x, it
        ad = apply_fn(d)
        denom = float((d * ad).sum())
        if denom <= 0.0 or not np.isfinite(denom):
            raise NumericalError("conjugate gradient hit a non-SPD direction")
        alpha = rs / denom
        x += alpha * d
        r -= alpha * ad
        rs_new = float((r * r).sum())
        d = r + (rs_new / rs) * d
        rs = rs_new
    return x, max_iter


def operator_norm_sq(op: LinearOperator, shape: tuple, iters: int = 20) -> float:
    """Estimate ||A||^2 by power iteration on A^T A (exact for identity)."""
    if op.kind == "identity":
        return 1.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = op.adjoint(op.apply(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam
