"""Compiled path kernels and the counter-based generator they draw from.

Every path owns its random numbers: block ``b`` of lane ``l`` for path ``i``
is ``philox4x64_10(counter=(b, i, l, 0), key=(seed, tag))``. Lane 0 feeds
Gaussian increments, lane 1 the bridge uniforms, lane 2 the initial state.
Results therefore do not depend on how paths are distributed over threads.
"""
import numpy as np
from numba import njit

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_PM0 = np.uint64(0xD2E7470EE14C6C93)
_PM1 = np.uint64(0xCA5A826395121157)
_PW0 = np.uint64(0x9E3779B97F4A7C15)
_PW1 = np.uint64(0xBB67AE8584CAA73B)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi

RNG_NAME = "philox4x64-10"


@njit(inline="always")
def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    t = a_hi * b_lo + ((a_lo * b_lo) >> _S32)
    w = (t & _M32) + a_lo * b_hi
    hi = a_hi * b_hi + (t >> _S32) + (w >> _S32)
    return hi, lo


@njit
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64 with ten rounds; returns the four output words."""
    for r in range(10):
        hi0, lo0 = _mulhilo(_PM0, c0)
        hi1, lo1 = _mulhilo(_PM1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if r < 9:
            k0 = k0 + _PW0
            k1 = k1 + _PW1
    return c0, c1, c2, c3


@njit(inline="always")
def _unit_open(w):
    """Uniform on (0, 1] from a 64-bit word."""
    return (float(w >> _S11) + 1.0) * _TWO_M53


@njit(inline="always")
def _fill_normals(buf, block, path, k0, k1):
    w0, w1, w2, w3 = philox4x64(np.uint64(block), np.uint64(path), np.uint64(0), np.uint64(0), k0, k1)
    r = np.sqrt(-2.0 * np.log(_unit_open(w0)))
    th = _TWO_PI * _unit_open(w1)
    buf[0] = r * np.cos(th)
    buf[1] = r * np.sin(th)
    r = np.sqrt(-2.0 * np.log(_unit_open(w2)))
    th = _TWO_PI * _unit_open(w3)
    buf[2] = r * np.cos(th)
    buf[3] = r * np.sin(th)


@njit(inline="always")
def _fill_uniforms(buf, block, path, lane, k0, k1):
    w0, w1, w2, w3 = philox4x64(np.uint64(block), np.uint64(path), np.uint64(lane), np.uint64(0), k0, k1)
    buf[0] = _unit_open(w0)
    buf[1] = _unit_open(w1)
    buf[2] = _unit_open(w2)
    buf[3] = _unit_open(w3)


@njit
def uniform_stream(path, lane, n, k0, k1):
    """First ``n`` uniforms of a lane (for tests and diagnostics)."""
    out = np.empty(n)
    buf = np.empty(4)
    for b in range((n + 3) // 4):
        _fill_uniforms(buf, b, path, lane, k0, k1)
        for j in range(4):
            if 4 * b + j < n:
                out[4 * b + j] = buf[j]
    return out


@njit
def normal_stream(path, n, k0, k1):
    out = np.empty(n)
    buf = np.empty(4)
    for b in range((n + 3) // 4):
        _fill_normals(buf, b, path, k0, k1)
        for j in range(4):
            if 4 * b + j < n:
                out[4 * b + j] = buf[j]
    return out


@njit(inline="always")
def _alpha(powers, coefs, x):
    acc = 0.0
    for j in range(powers.size):
        p = powers[j]
        if p == -1:
            acc += coefs[j] / x
        else:
            v = 1.0
            for _ in range(p):
                v *= x
            acc += coefs[j] * v
    return acc


@njit(inline="always")
def _grid_coord(x):
    return np.log(x) if x < 1.0 else x - 1.0


def bucket_table(faces, per_cell=4):
    """Lookup table for :func:`_cell`: buckets equispaced in the grid coordinate.

    ``start[k]`` is the cell holding the left end of bucket k, so a lookup
    only scans forward over the few faces inside one bucket.
    """
    faces = np.asarray(faces, dtype=float)
    s = np.where(faces < 1.0, np.log(faces), faces - 1.0)
    m = per_cell * (faces.size - 1)
    s0 = s[0]
    inv = m / (s[-1] - s0)
    left = s0 + np.arange(m + 1) / inv
    start = np.clip(np.searchsorted(s, left, side="right") - 1, 0, faces.size - 2)
    return float(s0), float(inv), start.astype(np.int64)


@njit(inline="always")
def _cell(faces, s0, inv, start, x):
    n = faces.size - 1
    if x <= faces[0]:
        return 0
    if x >= faces[n]:
        return n - 1
    k = int((_grid_coord(x) - s0) * inv)
    if k < 0:
        k = 0
    elif k >= start.size:
        k = start.size - 1
    j = start[k]
    while j > 0 and faces[j] > x:
        j -= 1
    while faces[j + 1] <= x:
        j += 1
    return j


@njit(nogil=True, cache=True)
def run_killed_paths(powers, coefs, k0, k1, p_lo, p_hi, x0, init_nodes, init_cdf,
                     dt, theta, thr, bridge, ev_times, ev_report, ev_horizon, faces,
                     s0, inv, start, absorb, states, occ, occ_surv):
    """Simulate paths ``p_lo .. p_hi-1`` of the killed Euler scheme.

    ``ev_times`` are the sorted event times; ``ev_report[e]`` is the column
    of ``states`` to fill at event e (or -1) and ``ev_horizon[e]`` the row of
    ``occ`` to which a surviving path adds its occupation so far (or -1).
    """
    ncell = faces.size - 1
    n_ev = ev_times.size
    track = occ.shape[0] > 0
    buf = np.zeros(ncell)
    nbuf = np.empty(4)
    ubuf = np.empty(4)
    h_floor = dt / 1024.0
    for path in range(p_lo, p_hi):
        if init_nodes.size > 0:
            _fill_uniforms(ubuf, 0, path, 2, k0, k1)
            j = np.searchsorted(init_cdf, ubuf[0] * init_cdf[-1])
            x = init_nodes[min(j, init_nodes.size - 1)]
        else:
            x = x0
        if track:
            buf[:] = 0.0
        n_blk, n_pos = 0, 4
        u_blk, u_pos = 0, 4
        t = 0.0
        alive = True
        t_death = np.inf
        for e in range(n_ev):
            t_ev = ev_times[e]
            while t < t_ev:
                h = dt
                if x < thr:
                    h = max(dt * (x / thr) ** 2, h_floor)
                last = False
                if h >= t_ev - t:
                    h = t_ev - t
                    last = True
                if n_pos == 4:
                    _fill_normals(nbuf, n_blk, path, k0, k1)
                    n_blk += 1
                    n_pos = 0
                z = nbuf[n_pos]
                n_pos += 1
                if track:
                    buf[_cell(faces, s0, inv, start, x)] += h
                xn = x + np.sqrt(h) * z - _alpha(powers, coefs, x) * h
                if xn <= theta:
                    alive = False
                else:
                    # probability that the bridge from x to xn dipped below theta;
                    # the uniform is drawn whenever it could matter, bridge on or off,
                    # so both variants follow identical paths until the first bridge kill
                    arg = 2.0 * (x - theta) * (xn - theta) / h
                    if arg < 40.0:
                        if u_pos == 4:
                            _fill_uniforms(ubuf, u_blk, path, 1, k0, k1)
                            u_blk += 1
                            u_pos = 0
                        u = ubuf[u_pos]
                        u_pos += 1
                        if bridge and u < np.exp(-arg):
                            alive = False
                if not alive:
                    t_death = t + h
                    break
                x = xn
                t = t_ev if last else t + h
            if not alive:
                break
            r = ev_report[e]
            if r >= 0:
                states[path, r] = x
            hz = ev_horizon[e]
            if hz >= 0:
                for c in range(ncell):
                    occ[hz, c] += buf[c]
                occ_surv[hz] += 1
        absorb[path] = t_death


@njit(nogil=True, cache=True)
def run_hitting_paths(powers, coefs, k0, k1, p_lo, p_hi, x0, a, b, dt, bridge, max_steps, hit_low):
    """Exit side of (a, b) for each path: 1 = a first, 0 = b first, -1 = undecided."""
    nbuf = np.empty(4)
    ubuf = np.empty(4)
    for path in range(p_lo, p_hi):
        x = x0
        if x <= a:
            hit_low[path] = 1
            continue
        if x >= b:
            hit_low[path] = 0
            continue
        n_blk, n_pos = 0, 4
        u_blk, u_pos = 0, 4
        res = -1
        sq = np.sqrt(dt)
        for _ in range(max_steps):
            if n_pos == 4:
                _fill_normals(nbuf, n_blk, path, k0, k1)
                n_blk += 1
                n_pos = 0
            z = nbuf[n_pos]
            n_pos += 1
            if u_pos == 4:
                _fill_uniforms(ubuf, u_blk, path, 1, k0, k1)
                u_blk += 1
                u_pos = 0
            u = ubuf[u_pos]
            u_pos += 1
            xn = x + sq * z - _alpha(powers, coefs, x) * dt
            if xn <= a:
                res = 1
                break
            if xn >= b:
                res = 0
                break
            if bridge:
                pa = np.exp(-2.0 * (x - a) * (xn - a) / dt)
                pb = np.exp(-2.0 * (b - x) * (b - xn) / dt)
                if u < pa:
                    res = 1
                    break
                if u < pa + pb:
                    res = 0
                    break
            x = xn
        hit_low[path] = res
