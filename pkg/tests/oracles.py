"""Independent reference implementations used by the tests.

Everything here is deliberately written from scratch with plain loops or
textbook first-order iterations, without importing the package under
test, so agreement between the two codebases is meaningful evidence.
Slow is fine; these run on tiny instances.
"""

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# 1-D discrete calculus (backward differences, zero on the leading sample)


def dgrad1(g):
    d = np.zeros_like(g)
    d[1:] = g[1:] - g[:-1]
    return d


def dgrad1_t(p):
    q = p.copy()
    q[0] = 0.0
    out = q.copy()
    out[:-1] -= q[1:]
    return out


def tv_prox_1d(v, weight, p0, inner=60):
    """prox of weight*TV at v, by projected gradient on the dual.

    Returns the prox point and the dual variable (warm-startable).
    """
    p = p0
    if weight <= 0:
        return v.copy(), p
    step = 1.0 / (4.0 * weight)
    for _ in range(inner):
        u = v - weight * dgrad1_t(p)
        p = np.clip(p + step * dgrad1(u), -1.0, 1.0)
        p[0] = 0.0
    return v - weight * dgrad1_t(p), p


def energy_1d(f, w, g, lam, mu, fidelity):
    """Term-by-term loop evaluation of the smoothing energy on a 1-D signal."""
    total = 0.0
    for i in range(len(g)):
        if w[i] == 1.0:
            if fidelity == "l2":
                total += 0.5 * lam * (f[i] - g[i]) ** 2
            else:
                term = g[i]
                if f[i] > 0.0:
                    term -= f[i] * math.log(g[i])
                total += 0.5 * lam * term
        if i >= 1:
            d = g[i] - g[i - 1]
            total += 0.5 * mu * d * d + abs(d)
    return total


def minimize_1d(f, w, lam, mu, fidelity, iters=3000):
    """Proximal-gradient minimizer of the same energy (identity operator).

    L2 uses a fixed safe step; the Poisson branch backtracks because its
    smooth part has no global Lipschitz constant. The Poisson instance must
    have f > 0 everywhere so the floor projection is inactive at the optimum.
    """
    g = w * f if fidelity == "l2" else np.maximum(w * f, 0.05)
    p = np.zeros_like(g)
    if fidelity == "l2":
        t = 1.0 / (lam + 4.0 * mu)
        for _ in range(iters):
            grad_s = -lam * w * (f - g) + mu * dgrad1_t(dgrad1(g))
            g, p = tv_prox_1d(g - t * grad_s, t, p)
        return g
    floor = 1e-9

    def smooth_part(x):
        logs = np.where(f > 0, f * np.log(np.maximum(x, floor)), 0.0)
        d = dgrad1(x)
        return 0.5 * lam * float(np.sum(w * (x - logs))) + 0.5 * mu * float(np.sum(d * d))

    t = 1.0 / lam
    for _ in range(iters):
        grad_s = 0.5 * lam * w * (1.0 - np.where(g > 0, f / np.maximum(g, floor), 0.0))
        grad_s += mu * dgrad1_t(dgrad1(g))
        s_old = smooth_part(g)
        while True:
            cand, pc = tv_prox_1d(g - t * grad_s, t, p)
            cand = np.maximum(cand, floor)
            diff = cand - g
            bound = s_old + float(np.sum(grad_s * diff)) + float(np.sum(diff * diff)) / (2 * t)
            if smooth_part(cand) <= bound + 1e-14:
                break
            t *= 0.5
        g, p = cand, pc
        t *= 1.1
    return g


# ---------------------------------------------------------------------------
# 2-D loop oracles


def loop_grad(u):
    h, wd = u.shape
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    for i in range(h):
        for j in range(wd):
            if j >= 1:
                gx[i, j] = u[i, j] - u[i, j - 1]
            if i >= 1:
                gy[i, j] = u[i, j] - u[i - 1, j]
    return gx, gy


def loop_tv(gx, gy):
    total = 0.0
    for i in range(gx.shape[0]):
        for j in range(gx.shape[1]):
            total += math.sqrt(gx[i, j] ** 2 + gy[i, j] ** 2)
    return total


def loop_energy(f, w, ag, g, lam, mu, fidelity):
    """Loop evaluation of the full 2-D energy; ag is A applied to g."""
    gx, gy = loop_grad(g)
    total = 0.0
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            if w[i, j] == 1.0:
                if fidelity == "l2":
                    total += 0.5 * lam * (f[i, j] - ag[i, j]) ** 2
                else:
                    term = ag[i, j]
                    if f[i, j] > 0.0:
                        term -= f[i, j] * math.log(ag[i, j])
                    total += 0.5 * lam * term
            d2 = gx[i, j] ** 2 + gy[i, j] ** 2
            total += 0.5 * mu * d2 + math.sqrt(d2)
    return total


def _reflect(idx, n):
    # numpy "symmetric" reflection: -1 -> 0, -2 -> 1, n -> n-1, ...
    while idx < 0 or idx >= n:
        if idx < 0:
            idx = -idx - 1
        else:
            idx = 2 * n - 1 - idx
    return idx


def loop_conv(u, kernel, anchor):
    """Direct convolution with symmetric extension, matching the stated
    convention: out(i,j) = sum_{s,t} k(s,t) * u(i+ay-s, j+ax-t)."""
    kernel = np.atleast_2d(np.asarray(kernel, dtype=np.float64))
    ay, ax = anchor
    h, wd = u.shape
    out = np.zeros_like(u)
    for i in range(h):
        for j in range(wd):
            acc = 0.0
            for s in range(kernel.shape[0]):
                for t in range(kernel.shape[1]):
                    ii = _reflect(i + ay - s, h)
                    jj = _reflect(j + ax - t, wd)
                    acc += kernel[s, t] * u[ii, jj]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------------------
# clustering / labelling oracles


def exhaustive_kmeans(points, k):
    """Global optimum of the k-means objective by enumerating assignments."""
    n = len(points)
    best = math.inf
    for assign in itertools.product(range(k), repeat=n):
        total = 0.0
        for c in range(k):
            members = [points[i] for i in range(n) if assign[i] == c]
            if not members:
                continue
            centre = np.mean(members, axis=0)
            for m in members:
                total += float(np.sum((m - centre) ** 2))
        if total < best:
            best = total
    return best


def loop_nearest(points, centroids):
    """Per-point nearest centroid, ties to the lowest index, labels 1-based."""
    labels = np.zeros(len(points), dtype=np.int64)
    for i, x in enumerate(points):
        best, arg = math.inf, 0
        for c, centre in enumerate(centroids):
            d = float(np.sum((x - centre) ** 2))
            if d < best:
                best, arg = d, c
        labels[i] = arg + 1
    return labels


def loop_phase_means(labels, img):
    """Mean colour per label over a (H, W, 3) image, by accumulation."""
    sums, counts = {}, {}
    h, wd = labels.shape
    for i in range(h):
        for j in range(wd):
            key = int(labels[i, j])
            sums.setdefault(key, np.zeros(img.shape[2]))
            sums[key] += img[i, j]
            counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def brute_accuracy(pred, truth):
    """Best label-matching accuracy by trying every permutation."""
    k = int(max(pred.max(), truth.max()))
    n = pred.size
    counts = [[0] * (k + 1) for _ in range(k + 1)]
    for a, b in zip(pred.ravel(), truth.ravel()):
        counts[int(a)][int(b)] += 1
    best = 0
    for perm in itertools.permutations(range(1, k + 1)):
        hits = sum(counts[a][perm[a - 1]] for a in range(1, k + 1))
        best = max(best, hits)
    return best / n


def loop_mse(a, b):
    total = 0.0
    flat_a, flat_b = a.ravel(), b.ravel()
    for x, y in zip(flat_a, flat_b):
        total += (x - y) ** 2
    return total / flat_a.size


# ---------------------------------------------------------------------------
# colour reference (scalar, one pixel at a time)

_XYZ_ROWS = (
    (0.4124, 0.3576, 0.1805),
    (0.2126, 0.7152, 0.0722),
    (0.0193, 0.1192, 0.9505),
)
_WHITE = (0.95047, 1.0, 1.08883)


def lab_ref(r, g, b):
    """Scalar sRGB -> CIELAB (D65), rows normalised so white maps exactly."""

    def linearise(c):
        if c <= 0.04045:
            return c / 12.92
        return ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = linearise(r), linearise(g), linearise(b)
    xyz = []
    for row, wp in zip(_XYZ_ROWS, _WHITE):
        scale = wp / (row[0] + row[1] + row[2])
        xyz.append(scale * (row[0] * rl + row[1] * gl + row[2] * bl))
    delta = 6.0 / 29.0

    def h(t):
        if t > delta**3:
            return t ** (1.0 / 3.0)
        return t / (3.0 * delta * delta) + 4.0 / 29.0

    hx, hy, hz = (h(v / wp) for v, wp in zip(xyz, _WHITE))
    return 116.0 * hy - 16.0, 500.0 * (hx - hy), 200.0 * (hy - hz)


def otsu_score(values):
    """Best two-class between/total variance ratio over quantile thresholds."""
    vals = np.sort(np.asarray(values, dtype=np.float64).ravel())
    total_var = vals.var()
    if total_var == 0:
        return 0.0
    best = 0.0
    for q in np.linspace(0.02, 0.98, 97):
        thr = vals[int(q * (len(vals) - 1))]
        lo, hi = vals[vals <= thr], vals[vals > thr]
        if len(lo) == 0 or len(hi) == 0:
            continue
        wl, wh = len(lo) / len(vals), len(hi) / len(vals)
        between = wl * wh * (lo.mean() - hi.mean()) ** 2
        best = max(best, between / total_var)
    return best
