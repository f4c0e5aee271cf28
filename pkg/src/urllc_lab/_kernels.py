"""Hot inner loops.

Each kernel exists twice: a numba-compiled loop and a numpy implementation.
The public names dispatch on ``_accel.USE_NUMBA``.  Both paths consume the
same inputs (random numbers are always drawn by numpy outside the kernels),
so integer-valued outputs are identical across backends and floating
outputs agree to rounding.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

LOG2 = math.log(2.0)

# ---------------------------------------------------------------------------
# tail recursion


@njit(cache=True)
def _ccdf_recursion_jit(a, b, k_max):
    out = np.zeros(k_max + 1)
    na = a.shape[0]
    nb = b.shape[0]
    for k in range(k_max + 1):
        acc = a[k] if k < na else 0.0
        top = k if k < nb - 1 else nb - 1
        for u in range(1, top + 1):
            acc -= b[u] * out[k - u]
        out[k] = acc / b[0]
    return out


def _ccdf_recursion_np(a, b, k_max):
    out = np.zeros(k_max + 1)
    a_pad = np.zeros(k_max + 1)
    m = min(a.size, k_max + 1)
    a_pad[:m] = a[:m]
    tail_b = b[1:]
    for k in range(k_max + 1):
        top = min(k, tail_b.size)
        acc = a_pad[k]
        if top:
            acc -= np.dot(tail_b[:top], out[k - 1 :: -1][:top])
        out[k] = acc / b[0]
    return out


def ccdf_recursion(a, b, k_max):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if USE_NUMBA:
        return _ccdf_recursion_jit(a, b, int(k_max))
    return _ccdf_recursion_np(a, b, int(k_max))


# ---------------------------------------------------------------------------
# Lindley recursion: delay_m = max(0, delay_{m-1} - gap_m) + service_m


@njit(cache=True)
def _lindley_jit(gaps, services, prev_delay):
    n = gaps.shape[0]
    out = np.empty(n, dtype=np.int64)
    d = prev_delay
    for m in range(n):
        w = d - gaps[m]
        if w < 0:
            w = 0
        d = w + services[m]
        out[m] = d
    return out


def _lindley_np(gaps, services, prev_delay):
    # waiting time W_m = max(0, W_{m-1} + S_{m-1} - G_m) with W_0 + S_0 = prev_delay
    shifted = np.empty_like(services)
    shifted[0] = prev_delay
    shifted[1:] = services[:-1]
    c = np.cumsum(shifted - gaps)
    low = np.minimum.accumulate(np.minimum(c, 0))
    return c - low + services


def lindley_delays(gaps, services, prev_delay=0):
    gaps = np.ascontiguousarray(gaps, dtype=np.int64)
    services = np.ascontiguousarray(services, dtype=np.int64)
    if gaps.size == 0:
        return np.zeros(0, dtype=np.int64)
    if USE_NUMBA:
        return _lindley_jit(gaps, services, np.int64(prev_delay))
    return _lindley_np(gaps, services, int(prev_delay))


# ---------------------------------------------------------------------------
# bi-AWGN information density summed over consecutive groups of symbols.
# With v = x*y the per-symbol term is log2 - softplus(-2 a v), and
#   softplus(-2 a v) = 2 a max(-v, 0) + log(1 + exp(-2 a |v|)),
# so a group sum needs one exp per symbol and a single log (of a running
# product, flushed every PROD_FLUSH factors to stay far from overflow).
# When every alpha is an integer multiple of the smallest one, a single exp
# per symbol serves all of them through repeated multiplication.

PROD_FLUSH = 256


def alpha_multiples(alphas):
    """Integer multipliers ``m`` with ``alphas == m * alphas.min()``, or None."""
    base = alphas.min()
    m = np.rint(alphas / base)
    if np.all(m >= 1) and m.max() <= 64 and np.allclose(m * base, alphas, rtol=0, atol=1e-12):
        return base, m.astype(np.int64)
    return None


@njit(cache=True)
def _density_jit(v, alphas, group):
    m, length = v.shape
    g = length // group
    na = alphas.shape[0]
    out = np.empty((na, m, g))
    prod = np.empty(na)
    logs = np.empty(na)
    for i in range(m):
        for j in range(g):
            neg = 0.0
            for a in range(na):
                prod[a] = 1.0
                logs[a] = 0.0
            cnt = 0
            for k in range(j * group, (j + 1) * group):
                x = v[i, k]
                if x < 0.0:
                    neg -= x
                ax = abs(x)
                for a in range(na):
                    prod[a] *= 1.0 + math.exp(-2.0 * alphas[a] * ax)
                cnt += 1
                if cnt == PROD_FLUSH:
                    for a in range(na):
                        logs[a] += math.log(prod[a])
                        prod[a] = 1.0
                    cnt = 0
            for a in range(na):
                out[a, i, j] = group * LOG2 - 2.0 * alphas[a] * neg - (logs[a] + math.log(prod[a]))
    return out


@njit(cache=True)
def _density_mult_jit(v, alphas, base, mult, group):
    m, length = v.shape
    g = length // group
    na = alphas.shape[0]
    top = 0
    for a in range(na):
        if mult[a] > top:
            top = mult[a]
    out = np.empty((na, m, g))
    prod = np.empty(na)
    logs = np.empty(na)
    for i in range(m):
        for j in range(g):
            neg = 0.0
            for a in range(na):
                prod[a] = 1.0
                logs[a] = 0.0
            cnt = 0
            for k in range(j * group, (j + 1) * group):
                x = v[i, k]
                if x < 0.0:
                    neg -= x
                e1 = math.exp(-2.0 * base * abs(x))
                e = e1
                p = 1
                for a in range(na):
                    while p < mult[a]:
                        e *= e1
                        p += 1
                    prod[a] *= 1.0 + e
                cnt += 1
                if cnt == PROD_FLUSH:
                    for a in range(na):
                        logs[a] += math.log(prod[a])
                        prod[a] = 1.0
                    cnt = 0
            for a in range(na):
                out[a, i, j] = group * LOG2 - 2.0 * alphas[a] * neg - (logs[a] + math.log(prod[a]))
    return out


def _density_np(v, alphas, group):
    m, length = v.shape
    g = length // group
    out = np.empty((alphas.size, m, g))
    vg = v[:, : g * group].reshape(m, g, group)
    neg = np.maximum(-vg, 0.0).sum(axis=2)
    av = np.abs(vg)
    for a, alpha in enumerate(alphas):
        out[a] = group * LOG2 - 2.0 * alpha * neg - np.log1p(np.exp(-2.0 * alpha * av)).sum(axis=2)
    return out


def grouped_info_density(xy, alphas, group):
    """Information-density sums of ``xy`` (products of input and output),
    shape ``(len(alphas), rows, cols // group)``."""
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    alphas = np.ascontiguousarray(np.atleast_1d(alphas), dtype=np.float64)
    group = int(group)
    if not USE_NUMBA:
        return _density_np(xy, alphas, group)
    # sorted multipliers let the power chain run forward once per symbol
    mult = alpha_multiples(alphas) if alphas.size > 1 else None
    if mult is not None and np.all(np.diff(mult[1]) >= 0):
        return _density_mult_jit(xy, alphas, mult[0], mult[1], group)
    return _density_jit(xy, alphas, group)


# ---------------------------------------------------------------------------
# peak-age policies, one frame per step
#
# state vector (int64):
#   0 frame index t          1 busy (packet in service)   2 service stamp
#   3 frames served so far   4 waiting packet present      5 waiting stamp
#   6 last delivered stamp (-1 if none)
#   7 admitted  8 delivered  9 discarded  10 preempted
#   11 recorded peaks  12 overflow peaks  13 blocked (offered but not admitted)
# policy codes: 0 DWT, 1 KTN, 2 KTL, 3 LCFS_S

N_STATE = 14


@njit(cache=True)
def _age_step(policy, arrive, ack, state, hist, record):
    # Arrivals during frame t see the system as it was during frame t; an
    # ACK issued at the end of frame t then frees the server.
    t = state[0]
    busy = state[1] == 1
    if not busy:
        if arrive:
            state[1] = 1
            state[2] = t
            state[3] = 0
            state[7] += 1
        state[0] = t + 1
        return
    stamp = state[2]
    if arrive:
        if policy == 0:
            state[13] += 1
        elif policy == 3:
            state[7] += 1
            if not ack:
                state[10] += 1
        elif state[4] == 0:
            state[4] = 1
            state[5] = t
            state[7] += 1
        elif policy == 2:
            state[5] = t
            state[7] += 1
            state[9] += 1
        else:
            state[13] += 1
    if ack:
        state[8] += 1
        if state[6] >= 0 and record:
            peak = t - state[6]
            if peak < hist.shape[0]:
                hist[peak] += 1
            else:
                state[12] += 1
            state[11] += 1
        state[6] = stamp
    if policy == 3 and arrive:
        state[2] = t
        state[3] = 0
    elif ack:
        if state[4] == 1:
            state[2] = state[5]
            state[3] = 0
            state[4] = 0
        else:
            state[1] = 0
    else:
        state[3] += 1
    state[0] = t + 1


@njit(cache=True)
def _age_chunk_jit(policy, u_arrive, u_ack, p_arrive, hazard, state, hist, record_from, record_until):
    nh = hazard.shape[0]
    for i in range(u_arrive.shape[0]):
        if state[8] >= record_until:
            break
        age = state[3]
        h = hazard[age] if age < nh else hazard[nh - 1]
        arrive = u_arrive[i] < p_arrive
        ack = u_ack[i] < h
        _age_step(policy, arrive, ack, state, hist, state[8] >= record_from)


def _age_chunk_py(policy, u_arrive, u_ack, p_arrive, hazard, state, hist, record_from, record_until):
    nh = hazard.shape[0]
    arrive_all = u_arrive < p_arrive
    step = _age_step.py_func if hasattr(_age_step, "py_func") else _age_step
    for i in range(u_arrive.shape[0]):
        if state[8] >= record_until:
            break
        age = state[3]
        h = hazard[age] if age < nh else hazard[nh - 1]
        step(policy, bool(arrive_all[i]), bool(u_ack[i] < h), state, hist, state[8] >= record_from)


def age_chunk(policy, u_arrive, u_ack, p_arrive, hazard, state, hist, record_from, record_until):
    """Advance the policy state machine over ``len(u_arrive)`` frames, or
    until ``record_until`` deliveries have happened.  Peaks are recorded for
    deliveries numbered ``record_from`` onwards."""
    if USE_NUMBA:
        _age_chunk_jit(
            np.int64(policy), u_arrive, u_ack, float(p_arrive), hazard, state, hist,
            np.int64(record_from), np.int64(record_until),
        )
    else:
        _age_chunk_py(
            policy, u_arrive, u_ack, float(p_arrive), hazard, state, hist, int(record_from), int(record_until)
        )
