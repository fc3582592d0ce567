"""Hot numeric kernels, compiled with numba when available.

Each kernel exists twice: a ``*_numba`` variant built from explicit loops
and JIT-compiled, and a ``*_numpy`` variant written against plain numpy.
The module-level names (``sparse_convolve_core`` etc.) point at whichever
variant is active.  Set ``FFORGE_DISABLE_NUMBA=1`` to force the numpy
path; the numpy path is also selected automatically when numba cannot be
imported.

``benchmarks/bench_kernels.py`` times both variants side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np

_NEG_INF = -np.inf


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


NUMBA_DISABLED = _env_flag("FFORGE_DISABLE_NUMBA")

if not NUMBA_DISABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
else:
    njit = None

NUMBA_ACTIVE = njit is not None


# ---------------------------------------------------------------------------
# Sparse tap convolution: y[n] = sum_k amp[k] * x[n - delay[k]]
# ---------------------------------------------------------------------------

def _sparse_convolve_loops(x, delays, amps, out):
    for k in range(delays.shape[0]):
        d = delays[k]
        a = amps[k]
        for n in range(x.shape[0]):
            out[d + n] += a * x[n]
    return out


def sparse_convolve_numpy(x, delays, amps):
    n = x.shape[0]
    max_delay = int(delays.max()) if delays.shape[0] else 0
    out = np.zeros(n + max_delay, dtype=np.float64)
    # per-tap slice adds keep the accumulation order identical to the
    # loop variant (taps outermost), so both paths agree bit for bit
    for k in range(delays.shape[0]):
        d = int(delays[k])
        out[d:d + n] += amps[k] * x
    return out


# ---------------------------------------------------------------------------
# Image lattice: cross product of per-axis mirror candidates, filtered by
# total reflection count.  Candidates arrive as (coordinate, count) arrays.
# Rows of the result are (distance, count, x, y, z).
# ---------------------------------------------------------------------------

def _image_lattice_loops(cx, gx, cy, gy, cz, gz, mic, max_order, out):
    n = 0
    for i in range(cx.shape[0]):
        for j in range(cy.shape[0]):
            gij = gx[i] + gy[j]
            if gij > max_order:
                continue
            for k in range(cz.shape[0]):
                g = gij + gz[k]
                if g > max_order:
                    continue
                dx = cx[i] - mic[0]
                dy = cy[j] - mic[1]
                dz = cz[k] - mic[2]
                out[n, 0] = math.sqrt(dx * dx + dy * dy + dz * dz)
                out[n, 1] = g
                out[n, 2] = cx[i]
                out[n, 3] = cy[j]
                out[n, 4] = cz[k]
                n += 1
    return n


def image_lattice_numpy(cx, gx, cy, gy, cz, gz, mic, max_order):
    g = gx[:, None, None] + gy[None, :, None] + gz[None, None, :]
    keep = g <= max_order
    ix, iy, iz = np.nonzero(keep)
    px = cx[ix]
    py = cy[iy]
    pz = cz[iz]
    d = np.sqrt((px - mic[0]) ** 2 + (py - mic[1]) ** 2 + (pz - mic[2]) ** 2)
    return np.column_stack((d, g[keep].astype(np.float64), px, py, pz))


# ---------------------------------------------------------------------------
# Expected monotonic attention.  Division-free arrival recurrence:
#   q[l, 0] = alpha[l-1, 0]
#   q[l, m] = (1 - p[l, m-1]) * q[l, m-1] + alpha[l-1, m]
#   alpha[l, m] = p[l, m] * q[l, m]
# with alpha[-1, :] one-hot at frame 0.
# ---------------------------------------------------------------------------

def _expected_attention_loops(p, alpha):
    L, T = p.shape
    for l in range(L):
        q = 1.0 if l == 0 else alpha[l - 1, 0]
        alpha[l, 0] = p[l, 0] * q
        for m in range(1, T):
            arrive = 0.0 if l == 0 else alpha[l - 1, m]
            q = (1.0 - p[l, m - 1]) * q + arrive
            alpha[l, m] = p[l, m] * q
    return alpha


def expected_attention_numpy(p):
    L, T = p.shape
    alpha = np.zeros((L, T), dtype=np.float64)
    a_prev = np.zeros(T, dtype=np.float64)
    a_prev[0] = 1.0
    for l in range(L):
        q = a_prev[0]
        alpha[l, 0] = p[l, 0] * q
        for m in range(1, T):
            q = (1.0 - p[l, m - 1]) * q + a_prev[m]
            alpha[l, m] = p[l, m] * q
        a_prev = alpha[l]
    return alpha


# ---------------------------------------------------------------------------
# CTC forward DP over the blank-extended label sequence, in log space.
# ---------------------------------------------------------------------------

def _log_add(a, b):
    if a == _NEG_INF:
        return b
    if b == _NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _ctc_forward_loops(log_probs, ext, skip_ok):
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full(S, _NEG_INF)
    nxt = np.full(S, _NEG_INF)
    alpha[0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = alpha[s]
            if s >= 1:
                acc = _log_add(acc, alpha[s - 1])
            if s >= 2 and skip_ok[s]:
                acc = _log_add(acc, alpha[s - 2])
            nxt[s] = acc + log_probs[t, ext[s]]
        alpha, nxt = nxt, alpha
    total = alpha[S - 1]
    if S > 1:
        total = _log_add(total, alpha[S - 2])
    return -total


def ctc_forward_numpy(log_probs, ext, skip_ok):
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full(S, _NEG_INF)
    alpha[0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[1] = log_probs[0, ext[1]]
    for t in range(1, T):
        move = np.concatenate(([_NEG_INF], alpha[:-1]))
        skip = np.concatenate(([_NEG_INF, _NEG_INF], alpha[:-2]))
        skip = np.where(skip_ok, skip, _NEG_INF)
        alpha = np.logaddexp(np.logaddexp(alpha, move), skip) + log_probs[t, ext]
    total = alpha[S - 1] if S == 1 else np.logaddexp(alpha[S - 1], alpha[S - 2])
    return -float(total)


# ---------------------------------------------------------------------------
# Variant selection
# ---------------------------------------------------------------------------

if NUMBA_ACTIVE:
    _sparse_convolve_jit = njit(cache=True)(_sparse_convolve_loops)
    _image_lattice_jit = njit(cache=True)(_image_lattice_loops)
    _expected_attention_jit = njit(cache=True)(_expected_attention_loops)
    _log_add_jit = njit(cache=True)(_log_add)

    @njit(cache=True)
    def _ctc_forward_jit(log_probs, ext, skip_ok):
        T = log_probs.shape[0]
        S = ext.shape[0]
        alpha = np.full(S, _NEG_INF)
        nxt = np.full(S, _NEG_INF)
        alpha[0] = log_probs[0, ext[0]]
        if S > 1:
            alpha[1] = log_probs[0, ext[1]]
        for t in range(1, T):
            for s in range(S):
                acc = alpha[s]
                if s >= 1:
                    acc = _log_add_jit(acc, alpha[s - 1])
                if s >= 2 and skip_ok[s]:
                    acc = _log_add_jit(acc, alpha[s - 2])
                nxt[s] = acc + log_probs[t, ext[s]]
            tmp = alpha
            alpha = nxt
            nxt = tmp
        total = alpha[S - 1]
        if S > 1:
            total = _log_add_jit(total, alpha[S - 2])
        return -total

    def sparse_convolve_numba(x, delays, amps):
        n = x.shape[0]
        max_delay = int(delays.max()) if delays.shape[0] else 0
        out = np.zeros(n + max_delay, dtype=np.float64)
        return _sparse_convolve_jit(x, delays, amps, out)

    def image_lattice_numba(cx, gx, cy, gy, cz, gz, mic, max_order):
        cap = cx.shape[0] * cy.shape[0] * cz.shape[0]
        out = np.empty((cap, 5), dtype=np.float64)
        n = _image_lattice_jit(cx, gx, cy, gy, cz, gz, mic, max_order, out)
        return out[:n]

    def expected_attention_numba(p):
        alpha = np.zeros_like(p)
        return _expected_attention_jit(p, alpha)

    def ctc_forward_numba(log_probs, ext, skip_ok):
        return float(_ctc_forward_jit(log_probs, ext, skip_ok))

    sparse_convolve_core = sparse_convolve_numba
    image_lattice_core = image_lattice_numba
    expected_attention_core = expected_attention_numba
    ctc_forward_core = ctc_forward_numba
else:
    sparse_convolve_numba = None
    image_lattice_numba = None
    expected_attention_numba = None
    ctc_forward_numba = None

    sparse_convolve_core = sparse_convolve_numpy
    image_lattice_core = image_lattice_numpy
    expected_attention_core = expected_attention_numpy
    ctc_forward_core = ctc_forward_numpy
