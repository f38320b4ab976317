"""Numba kernels for the walk samplers.

Everything here runs on a self-contained PCG32 generator so that a
(state, increment) pair fully determines the byte stream, independent of
numpy Generator internals. Walks far from every recording set are advanced
in exact multi-step blocks: a K-step displacement of the d-dimensional
walk is Multinomial(K; 1/d) over axes (sampled as sequential binomials)
with each axis displacement 2*Binomial(m, 1/2) - m. A block of K steps
moves every coordinate by at most K in l-infinity, so with K chosen one
less than the distance to the recording set no recorded visit can be
skipped. Kill radii are tested at block granularity, which only lets a
walk survive longer than literal stepping would; the declared truncation
bias of the literal model stays an upper bound.

Status codes returned by flight kernels: 0 done, 1 output buffer full,
2 iteration budget exceeded, 3 rejection budget exhausted.
"""
import math

import numpy as np
from numba import njit

PCG_MULT = np.uint64(6364136223846793005)
INV32 = 2.3283064365386963e-10
LIM6 = np.uint64((2**32 // 6) * 6)
M1 = np.uint64(0x5555555555555555)
M2 = np.uint64(0x3333333333333333)
M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
H01 = np.uint64(0x0101010101010101)
ONE = np.uint64(1)
ZERO = np.uint64(0)


@njit(cache=True, error_model="numpy", inline="always")
def _pcg32(state, inc):
    new = state * PCG_MULT + inc
    xorshifted = np.uint32(((state >> np.uint64(18)) ^ state) >> np.uint64(27))
    rot = np.uint32(state >> np.uint64(59))
    out = np.uint32((xorshifted >> rot) | (xorshifted << ((np.uint32(0) - rot) & np.uint32(31))))
    return new, out


@njit(cache=True, error_model="numpy", inline="always")
def _u01(state, inc):
    state, r = _pcg32(state, inc)
    return state, np.float64(r) * INV32


@njit(cache=True, error_model="numpy", inline="always")
def _popcount64(x):
    x = x - ((x >> ONE) & M1)
    x = (x & M2) + ((x >> np.uint64(2)) & M2)
    x = (x + (x >> np.uint64(4))) & M4
    return np.int64((x * H01) >> np.uint64(56))


@njit(cache=True, error_model="numpy", inline="always")
def _setbit(arr, idx):
    # returns True when the bit was previously clear
    w = idx >> 6
    b = np.uint64(idx & 63)
    old = arr[w]
    arr[w] = old | (ONE << b)
    return (old >> b) & ONE == ZERO


@njit(cache=True, error_model="numpy", inline="always")
def _testbit(arr, idx):
    return (arr[idx >> 6] >> np.uint64(idx & 63)) & ONE == ONE


@njit(cache=True, error_model="numpy")
def _binom_btrs(state, inc, n, q):
    # Hormann's transformed rejection, valid for n*q >= 10, q <= 1/2
    nf = np.float64(n)
    spq = np.sqrt(nf * q * (1.0 - q))
    b = 1.15 + 2.53 * spq
    a = -0.0873 + 0.0248 * b + 0.01 * q
    c = nf * q + 0.5
    vr = 0.92 - 4.2 / b
    r = q / (1.0 - q)
    alpha = (2.83 + 5.1 / b) * spq
    m = np.int64(np.floor((nf + 1.0) * q))
    h = math.lgamma(m + 1.0) + math.lgamma(n - m + 1.0)
    lr = np.log(r)
    for _ in range(10000):
        state, u = _u01(state, inc)
        state, v = _u01(state, inc)
        u -= 0.5
        us = 0.5 - np.abs(u)
        if us <= 0.0:
            continue
        k = np.int64(np.floor((2.0 * a / us + b) * u + c))
        if k < 0 or k > n:
            continue
        if us >= 0.07 and v <= vr:
            return state, k
        if v <= 0.0:
            return state, k
        v = np.log(v * alpha / (a / (us * us) + b))
        if v <= h - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0) + (k - m) * lr:
            return state, k
    return state, np.int64(-1)


@njit(cache=True, error_model="numpy")
def _binom_half(state, inc, n):
    # popcount of fair random words; BTRS above the word-count crossover
    if n <= 0:
        return state, np.int64(0)
    if n > 2048:
        return _binom_btrs(state, inc, n, 0.5)
    k = np.int64(0)
    full = n >> 5
    rem = n & 31
    for _ in range(full):
        state, w = _pcg32(state, inc)
        k += _popcount64(np.uint64(w))
    if rem > 0:
        state, w = _pcg32(state, inc)
        mask = (ONE << np.uint64(rem)) - ONE
        k += _popcount64(np.uint64(w) & mask)
    return state, k


@njit(cache=True, error_model="numpy")
def _binom(state, inc, n, p):
    if n <= 0:
        return state, np.int64(0)
    if p <= 0.0:
        return state, np.int64(0)
    if p >= 1.0:
        return state, np.int64(n)
    q = p if p <= 0.5 else 1.0 - p
    if np.float64(n) * q < 10.0:
        # pmf-recursion inversion
        state, u = _u01(state, inc)
        ratio = q / (1.0 - q)
        pmf = (1.0 - q) ** n
        cdf = pmf
        k = np.int64(0)
        while u > cdf and k < n:
            pmf *= ratio * np.float64(n - k) / np.float64(k + 1)
            cdf += pmf
            k += 1
        kk = k
    else:
        state, kk = _binom_btrs(state, inc, n, q)
    if p > 0.5:
        kk = n - kk
    return state, kk


@njit(cache=True, error_model="numpy", inline="always")
def _step_dir(state, inc, twod, lim):
    state, r = _pcg32(state, inc)
    r64 = np.uint64(r)
    while r64 >= lim:
        state, r = _pcg32(state, inc)
        r64 = np.uint64(r)
    dmod = np.int64(r64 % np.uint64(twod))
    return state, dmod >> 1, 1 - 2 * (dmod & 1)


@njit(cache=True, error_model="numpy")
def _flight3(state, inc, x, y, z, N, rkill, kmin, occ, edges, want_edges,
             rec, visits, nvis, max_iter):
    # free walk recording visits/edges inside the box B(0,N), killed at rkill
    side = 2 * N + 1
    r = max(abs(x), abs(y), abs(z))
    inw = r <= N
    if inw:
        widx = ((x + N) * side + (y + N)) * side + (z + N)
        if _setbit(occ, widx) and rec == 1:
            if nvis >= visits.shape[0]:
                return state, nvis, np.int64(1)
            visits[nvis, 0] = x
            visits[nvis, 1] = y
            visits[nvis, 2] = z
            nvis += 1
    it = np.int64(0)
    while True:
        it += 1
        if it > max_iter:
            return state, nvis, np.int64(2)
        if r > N:
            K = r - N - 1
            if K >= kmin:
                state, m1 = _binom(state, inc, K, 1.0 / 3.0)
                state, m2 = _binom_half(state, inc, K - m1)
                m3 = K - m1 - m2
                state, h1 = _binom_half(state, inc, m1)
                state, h2 = _binom_half(state, inc, m2)
                state, h3 = _binom_half(state, inc, m3)
                x += 2 * h1 - m1
                y += 2 * h2 - m2
                z += 2 * h3 - m3
                r = max(abs(x), abs(y), abs(z))
                if r >= rkill:
                    return state, nvis, np.int64(0)
                continue
        state, axis, sgn = _step_dir(state, inc, 6, LIM6)
        ox = x
        oy = y
        oz = z
        if axis == 0:
            x += sgn
        elif axis == 1:
            y += sgn
        else:
            z += sgn
        r = max(abs(x), abs(y), abs(z))
        if r <= N:
            widx = ((x + N) * side + (y + N)) * side + (z + N)
            if _setbit(occ, widx) and rec == 1:
                if nvis >= visits.shape[0]:
                    return state, nvis, np.int64(1)
                visits[nvis, 0] = x
                visits[nvis, 1] = y
                visits[nvis, 2] = z
                nvis += 1
            if want_edges == 1 and inw:
                if sgn > 0:
                    eidx = 3 * (((ox + N) * side + (oy + N)) * side + (oz + N)) + axis
                else:
                    eidx = 3 * widx + axis
                _setbit(edges, eidx)
            inw = True
        else:
            inw = False
            if r >= rkill:
                return state, nvis, np.int64(0)


@njit(cache=True, error_model="numpy")
def _occupancy_bank3(states, incs, starts, offs, N, rkill, kmin,
                     occ_mat, edge_mat, want_edges, max_iter):
    # one row of occ_mat (and edge_mat when requested) per sample;
    # returns -1 on success, else the index of the failing sample
    dummy = np.empty((1, 3), dtype=np.int64)
    nsamp = offs.shape[0] - 1
    for i in range(nsamp):
        st = states[i]
        ic = incs[i]
        occ = occ_mat[i]
        edg = edge_mat[i] if want_edges == 1 else edge_mat[0]
        for t in range(offs[i], offs[i + 1]):
            st, _, status = _flight3(st, ic, starts[t, 0], starts[t, 1], starts[t, 2],
                                     N, rkill, kmin, occ, edg, want_edges,
                                     0, dummy, 0, max_iter)
            if status != 0:
                return np.int64(i)
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _backward_accept3(state, inc, x0, y0, z0, N, rkill, kmin, budget, max_iter):
    # rejection sampler for the side conditioned never to return to B(0,N):
    # propose free walks from the start, accept the first that leaves
    # B(0,rkill) without touching the box after time zero
    for prop in range(budget):
        x = x0
        y = y0
        z = z0
        it = np.int64(0)
        rejected = False
        while not rejected:
            it += 1
            if it > max_iter:
                return state, np.int64(prop + 1), np.int64(2)
            r = max(abs(x), abs(y), abs(z))
            if r > N:
                K = r - N - 1
                if K >= kmin:
                    state, m1 = _binom(state, inc, K, 1.0 / 3.0)
                    state, m2 = _binom_half(state, inc, K - m1)
                    m3 = K - m1 - m2
                    state, h1 = _binom_half(state, inc, m1)
                    state, h2 = _binom_half(state, inc, m2)
                    state, h3 = _binom_half(state, inc, m3)
                    x += 2 * h1 - m1
                    y += 2 * h2 - m2
                    z += 2 * h3 - m3
                    if max(abs(x), abs(y), abs(z)) >= rkill:
                        return state, np.int64(prop + 1), np.int64(0)
                    continue
            state, axis, sgn = _step_dir(state, inc, 6, LIM6)
            if axis == 0:
                x += sgn
            elif axis == 1:
                y += sgn
            else:
                z += sgn
            r = max(abs(x), abs(y), abs(z))
            if r <= N:
                rejected = True
            elif r >= rkill:
                return state, np.int64(prop + 1), np.int64(0)
    return state, np.int64(budget), np.int64(3)


@njit(cache=True, error_model="numpy")
def _annulus_walk3(state, inc, x, y, z, M, rkill, kmin, stamp, tid, check, max_iter):
    # mark pass (check=0): stamp shell sites |.|_inf = M with tid
    # check pass (check=1): return 1 on first shell site already stamped tid
    side = 2 * M + 1
    marked = np.int64(0)
    it = np.int64(0)
    while True:
        it += 1
        if it > max_iter:
            return state, np.int64(-1)
        r = max(abs(x), abs(y), abs(z))
        if r != M:
            K = (r - M - 1) if r > M else (M - r - 1)
            if K >= kmin:
                state, m1 = _binom(state, inc, K, 1.0 / 3.0)
                state, m2 = _binom_half(state, inc, K - m1)
                m3 = K - m1 - m2
                state, h1 = _binom_half(state, inc, m1)
                state, h2 = _binom_half(state, inc, m2)
                state, h3 = _binom_half(state, inc, m3)
                x += 2 * h1 - m1
                y += 2 * h2 - m2
                z += 2 * h3 - m3
                if max(abs(x), abs(y), abs(z)) >= rkill:
                    return state, marked
                continue
        state, axis, sgn = _step_dir(state, inc, 6, LIM6)
        if axis == 0:
            x += sgn
        elif axis == 1:
            y += sgn
        else:
            z += sgn
        r = max(abs(x), abs(y), abs(z))
        if r == M:
            idx = ((x + M) * side + (y + M)) * side + (z + M)
            if check == 1:
                if stamp[idx] == tid:
                    return state, np.int64(1)
            else:
                stamp[idx] = tid
                marked += 1
        elif r >= rkill:
            return state, marked


@njit(cache=True, error_model="numpy")
def _annulus_batch(statesA, incsA, statesB, incsB, startsA, startsB,
                   M, rkill, kmin, stamp, hits, max_iter):
    n = statesA.shape[0]
    for t in range(n):
        tid = np.uint32(t + 1)
        stA, marked = _annulus_walk3(statesA[t], incsA[t],
                                     startsA[t, 0], startsA[t, 1], startsA[t, 2],
                                     M, rkill, kmin, stamp, tid, 0, max_iter)
        if marked < 0:
            return np.int64(t)
        hit = np.int64(0)
        if marked > 0:
            stB, hit = _annulus_walk3(statesB[t], incsB[t],
                                      startsB[t, 0], startsB[t, 1], startsB[t, 2],
                                      M, rkill, kmin, stamp, tid, 1, max_iter)
            if hit < 0:
                return np.int64(t)
        hits[t] = hit
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _qdisc_batch(states, incs, starts, M2, counts, max_iter):
    # occupation count of the quarter square {0<=x,y<=M2, z=0} strictly
    # before the first exit of B(0,M2)
    n = states.shape[0]
    for t in range(n):
        st = states[t]
        ic = incs[t]
        x = starts[t, 0]
        y = starts[t, 1]
        z = starts[t, 2]
        c = np.int64(0)
        it = np.int64(0)
        while True:
            if z == 0 and 0 <= x <= M2 and 0 <= y <= M2:
                c += 1
            it += 1
            if it > max_iter:
                return np.int64(t)
            st, axis, sgn = _step_dir(st, ic, 6, LIM6)
            if axis == 0:
                x += sgn
            elif axis == 1:
                y += sgn
            else:
                z += sgn
            if max(abs(x), abs(y), abs(z)) > M2:
                break
        counts[t] = c
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _disc_sum_batch(states, incs, M, gq, rkill, kmin, sums, max_iter):
    # D = sum of G(0, X_i) over visits to the quarter square of halfwidth M,
    # walk from the origin killed on leaving B(0,rkill)
    n = states.shape[0]
    for t in range(n):
        st = states[t]
        ic = incs[t]
        x = np.int64(0)
        y = np.int64(0)
        z = np.int64(0)
        s = 0.0
        it = np.int64(0)
        while True:
            if z == 0 and 0 <= x <= M and 0 <= y <= M:
                s += gq[x * (M + 1) + y]
            it += 1
            if it > max_iter:
                return np.int64(t)
            ddx = -x if x < 0 else (x - M if x > M else np.int64(0))
            ddy = -y if y < 0 else (y - M if y > M else np.int64(0))
            dist = max(ddx, ddy, abs(z))
            K = dist - 1
            if K >= kmin:
                st, m1 = _binom(st, ic, K, 1.0 / 3.0)
                st, m2 = _binom_half(st, ic, K - m1)
                m3 = K - m1 - m2
                st, h1 = _binom_half(st, ic, m1)
                st, h2 = _binom_half(st, ic, m2)
                st, h3 = _binom_half(st, ic, m3)
                x += 2 * h1 - m1
                y += 2 * h2 - m2
                z += 2 * h3 - m3
            else:
                st, axis, sgn = _step_dir(st, ic, 6, LIM6)
                if axis == 0:
                    x += sgn
                elif axis == 1:
                    y += sgn
                else:
                    z += sgn
            if max(abs(x), abs(y), abs(z)) > rkill:
                break
        sums[t] = s
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _escape_batch(d, states, incs, rkill, kmin, capC, out_w, max_iter):
    # walk from the origin; 0.0 on return to {0,1}^d, else the last-exit
    # corrected weight 1 - capC/|y - center|_2 at the kill-sphere exit y
    twod = 2 * d
    lim = np.uint64((2**32 // twod) * twod)
    pos = np.empty(d, dtype=np.int64)
    n = states.shape[0]
    for t in range(n):
        st = states[t]
        ic = incs[t]
        for j in range(d):
            pos[j] = 0
        it = np.int64(0)
        done = False
        while not done:
            it += 1
            if it > max_iter:
                return np.int64(t)
            dist = np.int64(0)
            for j in range(d):
                c = pos[j]
                dj = -c if c < 0 else (c - 1 if c > 1 else np.int64(0))
                if dj > dist:
                    dist = dj
            if dist - 1 >= kmin:
                K = dist - 1
                rem = K
                for j in range(d - 1):
                    st, m = _binom(st, ic, rem, 1.0 / np.float64(d - j))
                    st, h = _binom_half(st, ic, m)
                    pos[j] += 2 * h - m
                    rem -= m
                st, h = _binom_half(st, ic, rem)
                pos[d - 1] += 2 * h - rem
            else:
                st, axis, sgn = _step_dir(st, ic, twod, lim)
                pos[axis] += sgn
                incube = True
                for j in range(d):
                    if pos[j] != 0 and pos[j] != 1:
                        incube = False
                        break
                if incube:
                    out_w[t] = 0.0
                    done = True
                    continue
            r = np.int64(0)
            for j in range(d):
                a = abs(pos[j])
                if a > r:
                    r = a
            if r >= rkill:
                s2 = 0.0
                for j in range(d):
                    e = np.float64(pos[j]) - 0.5
                    s2 += e * e
                out_w[t] = 1.0 - capC / np.sqrt(s2)
                done = True
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _origin_visits_batch(states, incs, rkill, kmin, counts, max_iter):
    # visits to the origin (time 0 included) of a d=3 walk killed at rkill
    n = states.shape[0]
    for t in range(n):
        st = states[t]
        ic = incs[t]
        x = np.int64(0)
        y = np.int64(0)
        z = np.int64(0)
        c = np.int64(1)
        it = np.int64(0)
        while True:
            it += 1
            if it > max_iter:
                return np.int64(t)
            r = max(abs(x), abs(y), abs(z))
            K = r - 1
            if K >= kmin:
                st, m1 = _binom(st, ic, K, 1.0 / 3.0)
                st, m2 = _binom_half(st, ic, K - m1)
                m3 = K - m1 - m2
                st, h1 = _binom_half(st, ic, m1)
                st, h2 = _binom_half(st, ic, m2)
                st, h3 = _binom_half(st, ic, m3)
                x += 2 * h1 - m1
                y += 2 * h2 - m2
                z += 2 * h3 - m3
            else:
                st, axis, sgn = _step_dir(st, ic, 6, LIM6)
                if axis == 0:
                    x += sgn
                elif axis == 1:
                    y += sgn
                else:
                    z += sgn
                if x == 0 and y == 0 and z == 0:
                    c += 1
            if max(abs(x), abs(y), abs(z)) >= rkill:
                break
        counts[t] = c
    return np.int64(-1)


@njit(cache=True, error_model="numpy")
def _record_walk(state, inc, start, exit_mode, R, budget, path, max_iter):
    # literal stepping with the full path recorded; generic dimension
    d = start.shape[0]
    twod = 2 * d
    lim = np.uint64((2**32 // twod) * twod)
    cap = path.shape[0]
    for j in range(d):
        path[0, j] = start[j]
    n = np.int64(1)
    it = np.int64(0)
    if exit_mode == 1:
        while True:
            r = np.int64(0)
            for j in range(d):
                a = abs(path[n - 1, j])
                if a > r:
                    r = a
            if r > R:
                return state, n, np.int64(0)
            it += 1
            if it > max_iter:
                return state, n, np.int64(2)
            if n >= cap:
                return state, n, np.int64(1)
            state, axis, sgn = _step_dir(state, inc, twod, lim)
            for j in range(d):
                path[n, j] = path[n - 1, j]
            path[n, axis] += sgn
            n += 1
    else:
        for _ in range(budget):
            state, axis, sgn = _step_dir(state, inc, twod, lim)
            for j in range(d):
                path[n, j] = path[n - 1, j]
            path[n, axis] += sgn
            n += 1
        return state, n, np.int64(0)


@njit(cache=True, error_model="numpy")
def _flight_gen(state, inc, start, N, rkill, kmin, occ, max_iter):
    # generic-d occupancy-only flight: record visited bits of B(0,N)
    # row-major, die on leaving B(0,rkill); blocks as in _flight3
    d = start.shape[0]
    twod = 2 * d
    lim = np.uint64((2**32 // twod) * twod)
    side = 2 * N + 1
    pos = np.empty(d, dtype=np.int64)
    for j in range(d):
        pos[j] = start[j]
    it = np.int64(0)
    while True:
        r = np.int64(0)
        for j in range(d):
            a = abs(pos[j])
            if a > r:
                r = a
        if r <= N:
            idx = np.int64(0)
            for j in range(d):
                idx = idx * side + (pos[j] + N)
            _setbit(occ, idx)
        elif r >= rkill:
            return state, np.int64(0)
        it += 1
        if it > max_iter:
            return state, np.int64(2)
        K = r - N - 1
        if K >= kmin:
            rem = K
            for j in range(d - 1):
                state, m = _binom(state, inc, rem, 1.0 / np.float64(d - j))
                state, h = _binom_half(state, inc, m)
                pos[j] += 2 * h - m
                rem -= m
            state, h = _binom_half(state, inc, rem)
            pos[d - 1] += 2 * h - rem
        else:
            state, axis, sgn = _step_dir(state, inc, twod, lim)
            pos[axis] += sgn


@njit(cache=True, error_model="numpy")
def _occupancy_bank_gen(d, states, incs, starts, offs, N, rkill, kmin,
                        occ_mat, max_iter):
    # generic-d analogue of _occupancy_bank3, occupancy only
    nsamp = offs.shape[0] - 1
    start = np.empty(d, dtype=np.int64)
    for i in range(nsamp):
        st = states[i]
        ic = incs[i]
        occ = occ_mat[i]
        for t in range(offs[i], offs[i + 1]):
            for j in range(d):
                start[j] = starts[t, j]
            st, status = _flight_gen(st, ic, start, N, rkill, kmin, occ, max_iter)
            if status != 0:
                return np.int64(i)
    return np.int64(-1)
