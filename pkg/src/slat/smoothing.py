"""Stage 1: convex edge-preserving smoothing, one solve per channel.

Per channel the model minimizes

    E(g) = lam/2 * Psi(f, g) + mu/2 * ||grad g||_F^2 + ||grad g||_{2,1}

with Psi the masked squared residual sum((w * (f - A g))^2) for the
Gaussian/impulse case, or the masked Kullback-Leibler-type sum
sum(w * (A g - f log A g)) for photon-count data. A is identity or a
blur; w is the 0/1 known-pixel field. The energy is strictly convex on
the affine classes fixed by the mask, so the minimizer is unique and
any convergent scheme must land on the same point.

Two solvers are provided: alternating split-Bregman for the quadratic
fidelity and a primal-dual (Chambolle-Pock type) scheme for the
count-data fidelity, where only the dual step of the fidelity has a
closed form.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import counters
from .errors import NumericalError, ValidationError
from .image import Image, Mask, rescale_to_unit
from .linops import (
    GradientField,
    LinearOperator,
    conjugate_gradient,
    div,
    field_norm_sq,
    grad,
    identity_operator,
    laplacian,
    masked_adjoint,
    masked_apply,
    operator_norm_sq,
    tv_norm,
)

FIDELITIES = ("l2", "poisson")

# below this, A g counts as a log-domain violation rather than a value
_DOMAIN_FLOOR = 1e-12


@dataclass(frozen=True)
class SmoothingProblem:
    """One channel's data term: observed f, 0/1 weights w, operator A."""

    f: np.ndarray
    weights: np.ndarray
    op: LinearOperator
    fidelity: str = "l2"
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        f = np.ascontiguousarray(self.f, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if f.ndim != 2:
            raise ValidationError(f"channel data must be 2-D, got shape {f.shape}")
        if w.shape != f.shape:
            raise ValidationError(f"weights shape {w.shape} != data shape {f.shape}")
        if not np.all((w == 0.0) | (w == 1.0)):
            raise ValidationError("weights must be a 0/1 field")
        if not np.any(w):
            raise ValidationError("weights have no known pixels")
        if self.fidelity not in FIDELITIES:
            raise ValidationError(f"fidelity must be one of {FIDELITIES}, got {self.fidelity!r}")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise ValidationError(f"mu must be > 0, got {self.mu}")
        if self.fidelity == "poisson" and np.any(f[w == 1.0] < 0):
            raise ValidationError("count-data fidelity needs f >= 0 on the known pixels")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple:
        return self.f.shape


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by both solvers.

    rho is the split-Bregman penalty (defaults to lambda); tau/sigma are
    the primal-dual steps (default 1/sqrt(8 + ||A||^2), which saturates
    tau*sigma*||K||^2 = 1 for the stacked operator K = (grad; wA));
    inner_* control the conjugate-gradient subproblem solves.
    """

    tol: float = 1e-4
    max_iter: int = 200
    rho: Optional[float] = None
    tau: Optional[float] = None
    sigma: Optional[float] = None
    inner_tol: float = 1e-6
    inner_max: int = 100

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValidationError("tol must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.rho is not None and not (self.rho > 0):
            raise ValidationError("rho must be > 0")
        if self.tau is not None and not (self.tau > 0):
            raise ValidationError("tau must be > 0")
        if self.sigma is not None and not (self.sigma > 0):
            raise ValidationError("sigma must be > 0")
        if not (self.inner_tol > 0):
            raise ValidationError("inner_tol must be > 0")
        if self.inner_max < 1:
            raise ValidationError("inner_max must be >= 1")


class SolveResult(NamedTuple):
    g: np.ndarray
    iters: int
    trace: np.ndarray  # energy after each outer iteration (inf if out of domain)
    rel_change: np.ndarray


def energy(p: SmoothingProblem, g: np.ndarray) -> float:
    """Evaluate E(g); raises NumericalError on a log-domain violation."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != p.shape:
        raise ValidationError(f"iterate shape {g.shape} != problem shape {p.shape}")
    known = p.weights == 1.0
    ag = p.op.apply(g)[known]
    if p.fidelity == "l2":
        r = p.f[known] - ag
        psi = float((r * r).sum())
    else:
        fk = p.f[known]
        logged = fk > 0.0  # where f = 0 the term is plain A g, no logarithm
        if np.any(ag[logged] < _DOMAIN_FLOOR):
            raise NumericalError("A g is not positive under a logarithm (domain violation)")
        psi = float(ag.sum() - (fk[logged] * np.log(ag[logged])).sum())
    dg = grad(g)
    return 0.5 * p.lam * psi + 0.5 * p.mu * field_norm_sq(dg) + tv_norm(dg)


def _energy_or_inf(p: SmoothingProblem, g: np.ndarray) -> float:
    try:
        return energy(p, g)
    except NumericalError:
        return np.inf


def _check_solvable(p: SmoothingProblem) -> None:
    # the energy restricted to constants must still see the data term,
    # i.e. w * (A 1) must not vanish identically
    if float(np.abs(masked_apply(p.op, p.weights, np.ones(p.shape))).max()) == 0.0:
        raise NumericalError("mask annihilates the operator on constants; minimizer not unique")


def _rel_change(g_new: np.ndarray, g_old: np.ndarray) -> float:
    denom = float(np.linalg.norm(g_new))
    diff = float(np.linalg.norm(g_new - g_old))
    return diff / denom if denom > 0 else diff


def _guard(trace: list, it: int) -> None:
    if not np.all(np.isfinite(trace[-1:])):
        return  # out-of-domain trace entries are handled by the caller
    if it >= 10 and np.isfinite(trace[-11]) and trace[-1] > 10.0 * trace[-11] + 1e-8:
        raise NumericalError(f"energy grew more than 10x over 10 iterations (at iteration {it + 1})")


def _shrink(s: GradientField, thresh: float) -> GradientField:
    mag = np.sqrt(s.gx * s.gx + s.gy * s.gy)
    scale = np.zeros_like(mag)
    nz = mag > 0.0
    scale[nz] = np.maximum(mag[nz] - thresh, 0.0) / mag[nz]
    return GradientField(scale * s.gx, scale * s.gy)


def solve_l2(p: SmoothingProblem, cfg: SolverConfig = SolverConfig(), g0: Optional[np.ndarray] = None) -> SolveResult:
    """Split-Bregman minimization for the quadratic fidelity.

    Splitting d = grad g with Bregman variable b. Each sweep:
      1. g-step: (lam A^T w A + (mu + rho) grad^T grad) g
                   = lam A^T (w f) + rho grad^T (d - b), solved by CG
                   warm-started at the previous g;
      2. d-step: isotropic soft-shrinkage of grad g + b at 1/rho;
      3. b update: b += grad g - d.
    Stops when ||g_k - g_{k+1}|| / ||g_{k+1}|| < tol or at max_iter.
    """
    if p.fidelity != "l2":
        raise ValidationError(f"solve_l2 needs l2 fidelity, got {p.fidelity!r}")
    _check_solvable(p)
    rho = p.lam if cfg.rho is None else cfg.rho
    w, f = p.weights, p.f
    g = (w * f) if g0 is None else np.array(g0, dtype=np.float64)
    if g.shape != p.shape:
        raise ValidationError(f"g0 shape {g.shape} != problem shape {p.shape}")
    zeros = np.zeros(p.shape)
    d = GradientField(zeros.copy(), zeros.copy())
    b = GradientField(zeros.copy(), zeros.copy())
    base_rhs = p.lam * masked_adjoint(p.op, w, f)
    mu_rho = p.mu + rho

    def system(x):
        return p.lam * masked_adjoint(p.op, w, p.op.apply(x)) + mu_rho * laplacian(x)

    trace, rels = [], []
    for it in range(cfg.max_iter):
        rhs = base_rhs - rho * div(GradientField(d.gx - b.gx, d.gy - b.gy))
        g_new, cg_iters = conjugate_gradient(system, rhs, x0=g, tol=cfg.inner_tol, max_iter=cfg.inner_max)
        if not np.all(np.isfinite(g_new)):
            raise NumericalError(f"iterate became non-finite at iteration {it + 1}")
        counters.bump("stage1_iterations")
        counters.bump("cg_iterations", cg_iters)
        dg = grad(g_new)
        s = GradientField(dg.gx + b.gx, dg.gy + b.gy)
        d = _shrink(s, 1.0 / rho)
        b = GradientField(s.gx - d.gx, s.gy - d.gy)
        rel = _rel_change(g_new, g)
        g = g_new
        trace.append(energy(p, g))
        rels.append(rel)
        _guard(trace, it)
        if rel < cfg.tol:
            break
    return SolveResult(g, len(trace), np.asarray(trace), np.asarray(rels))


def kl_resolvent(x: np.ndarray, w: float, f: np.ndarray) -> np.ndarray:
    """argmin_t w*(t - f log t) + (t - x)^2 / 2, elementwise.

    Roots of t^2 + (w - x) t - w f = 0; the positive branch
    (x - w + sqrt((x - w)^2 + 4 w f)) / 2 is the unique minimizer on
    t > 0 (and the correct limit t = max(x - w, 0) where f = 0).
    """
    xm = x - w
    return 0.5 * (xm + np.sqrt(xm * xm + 4.0 * w * f))


def solve_poisson(
    p: SmoothingProblem, cfg: SolverConfig = SolverConfig(), g0: Optional[np.ndarray] = None
) -> SolveResult:
    """Primal-dual minimization for the count-data fidelity.

    Dualizes both nonsmooth pieces over the stacked operator
    K = (grad; wA): the TV dual p is projected onto the pointwise unit
    ball, the fidelity dual q is updated through the Moreau identity
    with the closed-form resolvent of t -> (lam/2)(t - f log t), and the
    quadratic mu/2 ||grad g||^2 stays in the primal proximal step, a CG
    solve of (I + tau mu grad^T grad) g = v. Over-relaxation theta = 1.
    """
    if p.fidelity != "poisson":
        raise ValidationError(f"solve_poisson needs poisson fidelity, got {p.fidelity!r}")
    _check_solvable(p)
    w, f = p.weights, p.f
    known = w == 1.0
    a2 = operator_norm_sq(p.op, p.shape)
    k2 = 8.0 + a2
    tau = (1.0 / np.sqrt(k2)) if cfg.tau is None else cfg.tau
    sigma = (1.0 / np.sqrt(k2)) if cfg.sigma is None else cfg.sigma
    if tau * sigma * k2 > 1.0 + 1e-9:
        raise ValidationError(f"tau*sigma*||K||^2 = {tau * sigma * k2:.4g} exceeds 1; reduce the steps")

    g = (w * f) if g0 is None else np.array(g0, dtype=np.float64)
    if g.shape != p.shape:
        raise ValidationError(f"g0 shape {g.shape} != problem shape {p.shape}")
    g_bar = g.copy()
    pdual = GradientField(np.zeros(p.shape), np.zeros(p.shape))
    q = np.zeros(p.shape)
    half_lam = 0.5 * p.lam

    def prox_system(x):
        return x + tau * p.mu * laplacian(x)

    trace, rels = [], []
    for it in range(cfg.max_iter):
        # TV dual ascent + unit-ball projection
        dg = grad(g_bar)
        px, py = pdual.gx + sigma * dg.gx, pdual.gy + sigma * dg.gy
        mag = np.maximum(1.0, np.sqrt(px * px + py * py))
        pdual = GradientField(px / mag, py / mag)
        # fidelity dual ascent via Moreau: prox of sigma*Psi* from the prox of Psi/sigma
        y = q + sigma * masked_apply(p.op, w, g_bar)
        t = kl_resolvent(y / sigma, half_lam / sigma, f)
        q = np.where(known, y - sigma * t, 0.0)
        # primal proximal step through the mu-quadratic
        v = g - tau * (-div(pdual) + masked_adjoint(p.op, w, q))
        g_new, cg_iters = conjugate_gradient(prox_system, v, x0=g, tol=cfg.inner_tol, max_iter=cfg.inner_max)
        if not np.all(np.isfinite(g_new)):
            raise NumericalError(f"iterate became non-finite at iteration {it + 1}")
        counters.bump("stage1_iterations")
        counters.bump("cg_iterations", cg_iters)
        g_bar = 2.0 * g_new - g  # theta = 1
        rel = _rel_change(g_new, g)
        g = g_new
        trace.append(_energy_or_inf(p, g))
        rels.append(rel)
        _guard(trace, it)
        if rel < cfg.tol:
            break
    return SolveResult(g, len(trace), np.asarray(trace), np.asarray(rels))


def solve(p: SmoothingProblem, cfg: SolverConfig = SolverConfig(), g0: Optional[np.ndarray] = None) -> SolveResult:
    """Dispatch to the solver matching the problem's fidelity."""
    return (solve_l2 if p.fidelity == "l2" else solve_poisson)(p, cfg, g0=g0)


class ChannelResult(NamedTuple):
    g: np.ndarray
    iters: int
    trace: np.ndarray
    rel_change: np.ndarray


def smooth_channels(
    img: Image,
    mask: Optional[Mask] = None,
    op: Optional[LinearOperator] = None,
    fidelity: str = "l2",
    lam: float = 1.0,
    mu: float = 1.0,
    cfg: SolverConfig = SolverConfig(),
    workers: Optional[int] = None,
) -> list:
    """Run the per-channel solves; returns one ChannelResult per channel.

    Channels are independent, so workers > 1 fans them out over a thread
    pool; results are identical either way.
    """
    if mask is None:
        mask = Mask.full(img.height, img.width)
    if not mask.matches(img):
        raise ValidationError(f"mask of shape {mask.bits.shape} does not fit image {img.shape}")
    if op is None:
        op = identity_operator()

    def run(i: int) -> ChannelResult:
        try:
            problem = SmoothingProblem(img.channel(i), mask.channel(i), op, fidelity, lam, mu)
            res = solve(problem, cfg)
        except (ValidationError, NumericalError) as exc:
            raise type(exc)(f"channel {i}: {exc}") from exc
        counters.bump("stage1_channels")
        return ChannelResult(*res)

    if workers is not None and workers > 1 and img.channels > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(img.channels)))
    return [run(i) for i in range(img.channels)]


def smooth_all(
    img: Image,
    mask: Optional[Mask] = None,
    op: Optional[LinearOperator] = None,
    fidelity: str = "l2",
    lam: float = 1.0,
    mu: float = 1.0,
    cfg: SolverConfig = SolverConfig(),
    workers: Optional[int] = None,
) -> Image:
    """Stage 1 on every channel, then per-channel rescale onto [0, 1]."""
    results = smooth_channels(img, mask, op, fidelity, lam, mu, cfg, workers)
    return rescale_to_unit(Image(np.stack([r.g for r in results])))
