"""Hot loops, each in two flavours.

``*_loop`` functions are plain-Python loops compiled with numba when it is
enabled; ``*_numpy`` functions are vectorized equivalents. The public names
(without suffix) point at whichever path ``_accel.USE_NUMBA`` selects. Both
flavours receive the same random inputs, so they return identical results up
to floating-point summation order.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# Gauss-Kronrod 15-point nodes and weights on [-1, 1] (QUADPACK qk15).
GK_X = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
GK_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
# Gauss 7-point weights, attached to GK_X[1], GK_X[3], GK_X[5], GK_X[7].
GK_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

# full 15-node layout: x = -GK_X[0..6], 0, +GK_X[6..0]
GK15_NODES = np.concatenate([-GK_X[:7], [0.0], GK_X[6::-1]])
GK15_WK = np.concatenate([GK_WK[:7], [GK_WK[7]], GK_WK[6::-1]])
GK15_WG = np.zeros(15)
for _j, _k in enumerate((1, 3, 5)):
    GK15_WG[_k] = GK_WG[_j]
    GK15_WG[14 - _k] = GK_WG[_j]
GK15_WG[7] = GK_WG[3]


# ---------------------------------------------------------------------------
# recursive-halving enumeration of strict local minima

@njit
def enumerate_minima_loop(v, max_count):
    n = v.shape[0] - 1
    out = np.empty(max(min(max_count, n), 0), dtype=np.int64)
    count = 0
    if n < 2 or max_count < 1:
        return out[:0]
    taken = np.zeros(n + 1, dtype=np.bool_)
    k = 0
    while count < max_count:
        parts = 1 << k
        for j in range(parts):
            lo = -((-j * n) // parts)          # ceil(j n / 2^k)
            hi = -((-(j + 1) * n) // parts)
            if lo < 1:
                lo = 1
            if hi > n:
                hi = n
            if lo >= hi:
                continue
            occupied = False
            for i in range(lo, hi):
                if taken[i]:
                    occupied = True
                    break
            if occupied:
                continue
            best = lo
            for i in range(lo + 1, hi):
                if v[i] < v[best]:
                    best = i
            if v[best - 1] > v[best] and v[best + 1] > v[best]:
                taken[best] = True
                out[count] = best
                count += 1
                if count >= max_count:
                    break
        if parts >= n:
            break
        k += 1
    return out[:count]


def enumerate_minima_numpy(v, max_count):
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0] - 1
    if n < 2 or max_count < 1:
        return np.empty(0, dtype=np.int64)
    strict = np.zeros(n + 1, dtype=bool)
    strict[1:n] = (v[:-2] > v[1:-1]) & (v[2:] > v[1:-1])
    taken = np.zeros(n + 1, dtype=bool)
    out = []
    k = 0
    while len(out) < max_count:
        parts = 1 << k
        j = np.arange(parts + 1, dtype=np.int64)
        cuts = -((-j * n) // parts)
        lo = np.clip(cuts[:-1], 1, n)
        hi = np.clip(cuts[1:], 1, n)
        keep = lo < hi
        lo, hi = lo[keep], hi[keep]
        # the nonempty intervals tile [1, n) contiguously
        mins = np.minimum.reduceat(v[1:n], lo - 1)
        occ = np.concatenate([[0], np.cumsum(taken[1:n])])
        free = (occ[hi - 1] - occ[lo - 1]) == 0
        seg_min = np.repeat(mins, hi - lo)
        hits = np.flatnonzero(v[1:n] == seg_min) + 1
        first = hits[np.searchsorted(hits, lo)]
        cand = first[free & strict[first]]
        room = max_count - len(out)
        cand = cand[:room]
        taken[cand] = True
        out.extend(cand.tolist())
        if parts >= n:
            break
        k += 1
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# conditioned-bridge proposals: bridge a -> b over N cells of length h

@njit
def bridge_accept_loop(a, b, h, normals, uniforms):
    m, ncell = normals.shape
    accepted = np.zeros(m, dtype=np.bool_)
    mid = np.full(m, np.nan)
    sh = math.sqrt(h)
    x = np.empty(ncell + 1)
    for r in range(m):
        w = 0.0
        x[0] = 0.0
        for i in range(ncell):
            w += sh * normals[r, i]
            x[i + 1] = w
        wn = x[ncell]
        ok = True
        for i in range(ncell + 1):
            frac = i / ncell
            x[i] = a + x[i] - frac * wn + frac * (b - a)
            if 0 < i < ncell and x[i] <= 0.0:
                ok = False
        x[0] = a
        x[ncell] = b
        if not ok:
            continue
        prod = 1.0
        for i in range(ncell):
            prod *= -math.expm1(-2.0 * x[i] * x[i + 1] / h)
        if uniforms[r] < prod:
            accepted[r] = True
            mid[r] = x[ncell // 2]
    return accepted, mid


def bridge_accept_numpy(a, b, h, normals, uniforms):
    m, ncell = normals.shape
    w = np.zeros((m, ncell + 1))
    np.cumsum(math.sqrt(h) * normals, axis=1, out=w[:, 1:])
    frac = np.arange(ncell + 1) / ncell
    x = a + w - frac * w[:, -1:] + frac * (b - a)
    x[:, 0] = a
    x[:, -1] = b
    ok = np.all(x[:, 1:-1] > 0.0, axis=1)
    with np.errstate(over="ignore"):
        prod = np.prod(-np.expm1(-2.0 * x[:, :-1] * x[:, 1:] / h), axis=1)
    accepted = ok & (uniforms < prod)
    mid = np.where(accepted, x[:, ncell // 2], np.nan)
    return accepted, mid


# ---------------------------------------------------------------------------
# conditional density at a minimum and its signed square-wave integral

@njit
def _density_scalar(x, a, b, eps, log_norm):
    if x <= 0.0:
        return 0.0
    u = -math.expm1(-2.0 * a * x / eps)
    v = -math.expm1(-2.0 * b * x / eps)
    d = x - 0.5 * (a + b)
    return u * v * math.exp(log_norm - d * d / eps)


def density_log_norm(a, b, eps):
    """log of 1 / ((1 - e^{-ab/eps}) sqrt(pi eps))."""
    return -math.log(-math.expm1(-a * b / eps)) - 0.5 * math.log(math.pi * eps)


def _density_vec(x, a, b, eps, log_norm):
    x = np.asarray(x, dtype=np.float64)
    xp = np.maximum(x, 0.0)
    u = -np.expm1(-2.0 * a * xp / eps)
    v = -np.expm1(-2.0 * b * xp / eps)
    d = xp - 0.5 * (a + b)
    return np.where(x > 0.0, u * v * np.exp(log_norm - d * d / eps), 0.0)


@njit
def _square(y):
    return 1.0 if y - math.floor(y) < 0.5 else -1.0


@njit
def _wave_breaks(lam, delta, lower, upper):
    # discontinuities of sigma(lam (x + delta)) inside (lower, upper)
    if lam <= 0.0:
        return np.empty(0)
    k0 = math.floor(2.0 * lam * (lower + delta)) + 1
    k1 = math.ceil(2.0 * lam * (upper + delta)) - 1
    if k1 < k0:
        return np.empty(0)
    ks = np.arange(k0, k1 + 1)
    xs = ks / (2.0 * lam) - delta
    return xs[(xs > lower) & (xs < upper)]


@njit
def square_wave_integral_loop(a, b, eps, lam_f, del_f, lam_g, del_g, lower, upper, max_width):
    """(int h p, int p, error) over (lower, upper) with h = sigma_f * sigma_g."""
    log_norm = -math.log(-math.expm1(-a * b / eps)) - 0.5 * math.log(math.pi * eps)
    nuni = int(math.ceil((upper - lower) / max_width))
    uni = lower + np.arange(1, nuni) * ((upper - lower) / nuni)
    bf = _wave_breaks(lam_f, del_f, lower, upper)
    bg = _wave_breaks(lam_g, del_g, lower, upper)
    pts = np.empty(uni.shape[0] + bf.shape[0] + bg.shape[0] + 2)
    pts[0] = lower
    pts[1:1 + uni.shape[0]] = uni
    o = 1 + uni.shape[0]
    pts[o:o + bf.shape[0]] = bf
    o += bf.shape[0]
    pts[o:o + bg.shape[0]] = bg
    pts[-1] = upper
    pts.sort()
    num = 0.0
    den = 0.0
    err = 0.0
    for i in range(pts.shape[0] - 1):
        x0 = pts[i]
        x1 = pts[i + 1]
        if x1 <= x0:
            continue
        c = 0.5 * (x0 + x1)
        hw = 0.5 * (x1 - x0)
        hsign = _square(lam_f * (c + del_f)) * _square(lam_g * (c + del_g))
        k = 0.0
        g = 0.0
        for j in range(15):
            pv = _density_scalar(c + hw * GK15_NODES[j], a, b, eps, log_norm)
            k += GK15_WK[j] * pv
            g += GK15_WG[j] * pv
        k *= hw
        g *= hw
        num += hsign * k
        den += k
        err += abs(k - g)
    return num, den, err


def _wave_breaks_numpy(lam, delta, lower, upper):
    if lam <= 0.0:
        return np.empty(0)
    k0 = math.floor(2.0 * lam * (lower + delta)) + 1
    k1 = math.ceil(2.0 * lam * (upper + delta)) - 1
    if k1 < k0:
        return np.empty(0)
    xs = np.arange(k0, k1 + 1) / (2.0 * lam) - delta
    return xs[(xs > lower) & (xs < upper)]


def _square_numpy(y):
    return np.where(y - np.floor(y) < 0.5, 1.0, -1.0)


def square_wave_integral_numpy(a, b, eps, lam_f, del_f, lam_g, del_g, lower, upper, max_width):
    log_norm = density_log_norm(a, b, eps)
    nuni = int(math.ceil((upper - lower) / max_width))
    pts = np.concatenate([
        [lower], lower + np.arange(1, nuni) * ((upper - lower) / nuni),
        _wave_breaks_numpy(lam_f, del_f, lower, upper), _wave_breaks_numpy(lam_g, del_g, lower, upper), [upper],
    ])
    pts.sort()
    x0, x1 = pts[:-1], pts[1:]
    keep = x1 > x0
    x0, x1 = x0[keep], x1[keep]
    c = 0.5 * (x0 + x1)
    hw = 0.5 * (x1 - x0)
    hsign = _square_numpy(lam_f * (c + del_f)) * _square_numpy(lam_g * (c + del_g))
    pv = _density_vec(c[:, None] + hw[:, None] * GK15_NODES, a, b, eps, log_norm)
    k = (pv @ GK15_WK) * hw
    g = (pv @ GK15_WG) * hw
    return float(np.sum(hsign * k)), float(np.sum(k)), float(np.sum(np.abs(k - g)))


if USE_NUMBA:
    enumerate_minima = enumerate_minima_loop
    bridge_accept = bridge_accept_loop
    square_wave_integral = square_wave_integral_loop
else:
    enumerate_minima = enumerate_minima_numpy
    bridge_accept = bridge_accept_numpy
    square_wave_integral = square_wave_integral_numpy
