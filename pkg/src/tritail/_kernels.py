"""Hot loops: bitset graph primitives, the Glauber batch kernel, Gray-code enumeration.

Every function here is compiled with numba when available. Setting the
environment variable ``TRITAIL_DISABLE_JIT=1`` before import selects the
pure-Python/numpy path instead; both paths consume identical pre-drawn random
inputs, so trajectories agree bit for bit.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("TRITAIL_DISABLE_JIT", "0") in ("", "0")

if JIT_ENABLED:
    _jit = numba.njit(cache=True, nogil=True)
else:
    def _jit(f):
        return f

BACKEND = "numba" if JIT_ENABLED else "python"

# accumulator layout, one float64 vector per batch
ACC_K = 0
ACC_HITS = 1
ACC_SUM_E = 2
ACC_SUM_E2 = 3
ACC_SUM_T = 4
ACC_SUM_T2 = 5
ACC_MAX_E = 6
ACC_MAX_T = 7
ACC_MIN_E = 8
ACC_MIN_T = 9
# log-sum-exp streams: [max, sum w, sum w^2, sum 1_W w, sum 1_W w^2], scaled by exp(-max)
ACC_SRC = 10
ACC_REF = 15
ACC_SIZE = 20


def new_accumulator():
    acc = np.zeros(ACC_SIZE)
    acc[ACC_MIN_E] = np.inf
    acc[ACC_MIN_T] = np.inf
    acc[ACC_MAX_E] = -np.inf
    acc[ACC_MAX_T] = -np.inf
    acc[ACC_SRC] = -np.inf
    acc[ACC_REF] = -np.inf
    return acc


if JIT_ENABLED:
    @_jit
    def popcount(x):
        x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
        x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
        x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        x = x + (x >> np.uint64(8))
        x = x + (x >> np.uint64(16))
        x = x + (x >> np.uint64(32))
        return np.int64(x & np.uint64(0x7F))
else:
    def popcount(x):
        return int(x).bit_count()


@_jit
def common_neighbors(rows, i, j):
    total = 0
    for w in range(rows.shape[1]):
        total += popcount(rows[i, w] & rows[j, w])
    return total


@_jit
def has_edge(rows, i, j):
    return (rows[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1) == np.uint64(1)


@_jit
def toggle(rows, i, j):
    rows[i, j >> 6] ^= np.uint64(1) << np.uint64(j & 63)
    rows[j, i >> 6] ^= np.uint64(1) << np.uint64(i & 63)


@_jit
def count_edges_triangles(rows):
    n = rows.shape[0]
    E = 0
    three_t = 0
    for i in range(n):
        for j in range(i + 1, n):
            if has_edge(rows, i, j):
                E += 1
                three_t += common_neighbors(rows, i, j)
    return E, three_t // 3


@_jit
def _push(acc, o, x, c, hit):
    m = acc[o]
    if x > m:
        if m > -np.inf:
            d = math.exp(m - x)
            d2 = d * d
            acc[o + 1] *= d
            acc[o + 2] *= d2
            acc[o + 3] *= d
            acc[o + 4] *= d2
        acc[o] = x
        e = 1.0
    else:
        e = math.exp(x - m)
    acc[o + 1] += c * e
    acc[o + 2] += c * e * e
    if hit:
        acc[o + 3] += c * e
        acc[o + 4] += c * e * e


@_jit
def _flush(acc, hist, E, T, c, thr, tpow, aE, aT, bE, bT):
    hit = T >= thr
    cf = float(c)
    acc[ACC_K] += cf
    acc[ACC_SUM_E] += cf * E
    acc[ACC_SUM_E2] += cf * E * E
    acc[ACC_SUM_T] += cf * T
    acc[ACC_SUM_T2] += cf * T * T
    if E > acc[ACC_MAX_E]:
        acc[ACC_MAX_E] = E
    if T > acc[ACC_MAX_T]:
        acc[ACC_MAX_T] = T
    if E < acc[ACC_MIN_E]:
        acc[ACC_MIN_E] = E
    if T < acc[ACC_MIN_T]:
        acc[ACC_MIN_T] = T
    if hit:
        acc[ACC_HITS] += cf
        hist[E] += c
    tp = tpow[T]
    _push(acc, ACC_SRC, aE * E + aT * tp, cf, hit)
    _push(acc, ACC_REF, bE * E + bT * tp, cf, hit)


@_jit
def logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@_jit
def glauber_batch(rows, state, pair_i, pair_j, picks, uniforms, h, coef, tpow,
                  constrained, eps_cap, tau_lo, tau_hi,
                  observe, thr, aE, aT, bE, bT, acc, hist, trace_E, trace_T):
    """Run ``len(picks)`` heat-bath steps in place.

    ``state`` holds ``[E, T, steps, rejected]``. When ``observe`` is true every
    post-step state is folded into ``acc``/``hist`` (run-length compressed);
    non-empty ``trace_E``/``trace_T`` additionally receive the raw trajectory.
    Returns nothing; all outputs are written through the array arguments.
    """
    n = rows.shape[0]
    nn = n * n
    nnn = nn * n
    E = state[0]
    T = state[1]
    rejected = state[3]
    tracing = trace_E.shape[0] > 0
    run = 0
    for s in range(picks.shape[0]):
        k = picks[s]
        i = pair_i[k]
        j = pair_j[k]
        L = common_neighbors(rows, i, j)
        x = has_edge(rows, i, j)
        M = T - L if x else T
        phi = logistic(h + coef * (tpow[M + L] - tpow[M]))
        newx = uniforms[s] < phi
        if newx != x:
            if newx:
                E2 = E + 1
                T2 = T + L
            else:
                E2 = E - 1
                T2 = T - L
            ok = True
            if constrained:
                eps = 2.0 * E2 / nn
                tau = 6.0 * T2 / nnn
                if eps > eps_cap or tau < tau_lo or tau > tau_hi:
                    ok = False
            if ok:
                if observe and run > 0:
                    _flush(acc, hist, E, T, run, thr, tpow, aE, aT, bE, bT)
                    run = 0
                toggle(rows, i, j)
                E = E2
                T = T2
            else:
                rejected += 1
        if observe:
            run += 1
        if tracing:
            trace_E[s] = E
            trace_T[s] = T
    if observe and run > 0:
        _flush(acc, hist, E, T, run, thr, tpow, aE, aT, bE, bT)
    state[0] = E
    state[1] = T
    state[2] += picks.shape[0]
    state[3] = rejected


@_jit
def gray_code_histogram(n, pair_i, pair_j, hist):
    """Visit every labeled graph on ``n`` vertices once, one edge flip apart."""
    words = (n + 63) // 64
    rows = np.zeros((n, words), dtype=np.uint64)
    m = pair_i.shape[0]
    E = 0
    T = 0
    hist[0, 0] += 1
    total = 1 << m
    for k in range(1, total):
        b = 0
        while (k >> b) & 1 == 0:
            b += 1
        i = pair_i[b]
        j = pair_j[b]
        L = common_neighbors(rows, i, j)
        if has_edge(rows, i, j):
            E -= 1
            T -= L
        else:
            E += 1
            T += L
        toggle(rows, i, j)
        hist[E, T] += 1


@_jit
def er_counts(n, pair_i, pair_j, uniforms, p, out_E, out_T):
    """Edge and triangle counts of i.i.d. G(n, p) draws, one row of uniforms each."""
    words = (n + 63) // 64
    rows = np.zeros((n, words), dtype=np.uint64)
    m = pair_i.shape[0]
    for s in range(uniforms.shape[0]):
        rows[:, :] = 0
        for k in range(m):
            if uniforms[s, k] < p:
                toggle(rows, pair_i[k], pair_j[k])
        E, T = count_edges_triangles(rows)
        out_E[s] = E
        out_T[s] = T
