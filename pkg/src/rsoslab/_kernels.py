"""Numba inner loops shared by the surface and dual modules.

All kernels take flat site indices (row-major over the box) and a
neighbor table with -1 marking a neighbor cut off by a free boundary.
They are deliberately allocation-light: callers pass preallocated
output arrays where results scale with the event count.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def evolve_scan(ev_sites, nbr, heights, lateral_cost, use_max):
    """Apply the local growth rule at every event, in order.

    min rule: h[x] <- min(h[x] + 1, lateral_cost + min over neighbors)
    max rule: h[x] <- max(h[x] + 1, 1 + max over neighbors)

    Mutates `heights`. Returns (accepted event indices, accepted new heights).
    """
    n = len(ev_sites)
    acc_idx = np.empty(n, np.int64)
    acc_h = np.empty(n, np.int64)
    n_acc = 0
    for i in range(n):
        x = ev_sites[i]
        h = heights[x]
        new = h + 1
        if use_max:
            for j in range(nbr.shape[1]):
                nb = nbr[x, j]
                if nb >= 0:
                    v = 1 + heights[nb]
                    if v > new:
                        new = v
        else:
            for j in range(nbr.shape[1]):
                nb = nbr[x, j]
                if nb >= 0:
                    v = lateral_cost + heights[nb]
                    if v < new:
                        new = v
        if new != h:
            heights[x] = new
            acc_idx[n_acc] = i
            acc_h[n_acc] = new
            n_acc += 1
    return acc_idx[:n_acc], acc_h[:n_acc]


@njit(cache=True)
def pair_evolve_scan(ev_sites, in_a, in_b, nbr, ha, hb, lateral_cost):
    """Evolve two min-rule surfaces through one merged event stream.

    Event i is applied to surface A iff in_a[i], to B iff in_b[i].
    Tracks the range of hb - ha over every site after every event.
    Returns (diff_min, diff_max) over all checked instants, including
    the initial state.
    """
    dmin = np.int64(2 ** 60)
    dmax = np.int64(-(2 ** 60))
    for x in range(len(ha)):
        d = hb[x] - ha[x]
        if d < dmin:
            dmin = d
        if d > dmax:
            dmax = d
    for i in range(len(ev_sites)):
        x = ev_sites[i]
        if in_a[i]:
            h = ha[x]
            new = h + 1
            for j in range(nbr.shape[1]):
                nb = nbr[x, j]
                if nb >= 0:
                    v = lateral_cost + ha[nb]
                    if v < new:
                        new = v
            ha[x] = new
        if in_b[i]:
            h = hb[x]
            new = h + 1
            for j in range(nbr.shape[1]):
                nb = nbr[x, j]
                if nb >= 0:
                    v = lateral_cost + hb[nb]
                    if v < new:
                        new = v
            hb[x] = new
        # only the updated site's difference can have changed
        d = hb[x] - ha[x]
        if d < dmin:
            dmin = d
        if d > dmax:
            dmax = d
    return dmin, dmax


@njit(cache=True)
def dual_scan_d1(times, xs, L, until):
    """Track the well-started d=1 surface: minimum, interface, arrivals.

    xs are site coordinates in [-L, L]. An arrival is a ring whose site
    lies in the active zone (the interface widened by one site on each
    side; just the origin while the interface is empty); equivalently a
    ring whose site is in the interface right after the ring.

    Returns per-arrival arrays (time, interface l, r, width, width of the
    waiting zone that the arrival ended), per-minimum-jump arrays (time,
    arrival count, prefix sums of zone width powers -1, -2, -3), counts,
    the exactness flag, and the final height array.
    """
    w = 2 * L + 1
    f = np.empty(w, np.int64)
    for i in range(w):
        f[i] = abs(i - L)
    n = len(times)
    tau = np.empty(n, np.float64)
    arr_l = np.empty(n, np.int64)
    arr_r = np.empty(n, np.int64)
    arr_width = np.empty(n, np.int64)
    arr_zone = np.empty(n, np.int64)
    mj_t = np.empty(n, np.float64)
    mj_arr = np.empty(n, np.int64)
    mj_s1 = np.empty(n, np.float64)
    mj_s2 = np.empty(n, np.float64)
    mj_s3 = np.empty(n, np.float64)
    n_arr = 0
    n_mj = 0
    l = 1
    r = -1  # l > r encodes the empty interface
    M = 0
    cnt = 1  # zone is {0}
    cur_zone = 1
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    exact = True
    for i in range(n):
        t = times[i]
        if t > until:
            break
        x = xs[i]
        if l > r:
            in_zone = x == 0
        else:
            in_zone = (x >= l - 1) and (x <= r + 1)
        if not in_zone:
            continue
        zf = float(cur_zone)
        s1 += 1.0 / zf
        s2 += 1.0 / (zf * zf)
        s3 += 1.0 / (zf * zf * zf)
        xi = x + L
        h = f[xi]
        new = h + 1
        if xi > 0 and 1 + f[xi - 1] < new:
            new = 1 + f[xi - 1]
        if xi < w - 1 and 1 + f[xi + 1] < new:
            new = 1 + f[xi + 1]
        accepted = new != h
        f[xi] = new
        if l > r:
            l = 0
            r = 0
        elif x == l - 1:
            l = x
        elif x == r + 1:
            r = x
        if l == -L or r == L:
            exact = False
        if accepted and h == M:
            cnt -= 1
            if cnt == 0:
                M += 1
                lo = l - 1
                if lo < -L:
                    lo = -L
                hi = r + 1
                if hi > L:
                    hi = L
                c = 0
                for y in range(lo + L, hi + L + 1):
                    if f[y] == M:
                        c += 1
                cnt = c
                mj_t[n_mj] = t
                mj_arr[n_mj] = n_arr + 1
                mj_s1[n_mj] = s1
                mj_s2[n_mj] = s2
                mj_s3[n_mj] = s3
                n_mj += 1
        tau[n_arr] = t
        arr_l[n_arr] = l
        arr_r[n_arr] = r
        arr_width[n_arr] = r - l + 1
        arr_zone[n_arr] = cur_zone
        n_arr += 1
        lo = l - 1
        if lo < -L:
            lo = -L
        hi = r + 1
        if hi > L:
            hi = L
        cur_zone = hi - lo + 1
    return (tau[:n_arr], arr_l[:n_arr], arr_r[:n_arr], arr_width[:n_arr],
            arr_zone[:n_arr], mj_t[:n_mj], mj_arr[:n_mj], mj_s1[:n_mj],
            mj_s2[:n_mj], mj_s3[:n_mj], exact, f)


@njit(cache=True)
def coupled_restart_scan(times, xs, L, u, v, until):
    """Run the coupled pair: A from the well at the origin; at A's passage
    of level u (time T_u, ring site x0) start B from u + |x0 - z| and run
    both on the same rings.

    Returns (T_u, x0, T_star_abs, T_uv, exact, b_dominates) with -1.0 for
    unobserved times. b_dominates reports the pointwise check B >= A at
    every ring from T_u on.
    """
    w = 2 * L + 1
    fa = np.empty(w, np.int64)
    for i in range(w):
        fa[i] = abs(i - L)
    fb = np.empty(w, np.int64)
    la = 1
    ra = -1
    Ma = 0
    cnta = 1
    exact = True
    T_u = -1.0
    x0 = 0
    T_star_abs = -1.0
    T_uv = -1.0
    Mb = 0
    cntb = 0
    lb = 1
    rb = -1
    b_dominates = True
    for i in range(len(times)):
        t = times[i]
        if t > until:
            break
        x = xs[i]
        xi = x + L
        # A step
        if la > ra:
            in_zone = x == 0
        else:
            in_zone = (x >= la - 1) and (x <= ra + 1)
        if in_zone:
            h = fa[xi]
            new = h + 1
            if xi > 0 and 1 + fa[xi - 1] < new:
                new = 1 + fa[xi - 1]
            if xi < w - 1 and 1 + fa[xi + 1] < new:
                new = 1 + fa[xi + 1]
            accepted = new != h
            fa[xi] = new
            if la > ra:
                la = 0
                ra = 0
            elif x == la - 1:
                la = x
            elif x == ra + 1:
                ra = x
            if la == -L or ra == L:
                exact = False
            if accepted and h == Ma:
                cnta -= 1
                if cnta == 0:
                    Ma += 1
                    lo = la - 1
                    if lo < -L:
                        lo = -L
                    hi = ra + 1
                    if hi > L:
                        hi = L
                    c = 0
                    for y in range(lo + L, hi + L + 1):
                        if fa[y] == Ma:
                            c += 1
                    cnta = c
                    if Ma == u and T_u < 0.0:
                        T_u = t
                        x0 = x
                        # B restarts from the lifted well centered at x0
                        for z in range(w):
                            fb[z] = u + abs(z - L - x0)
                        Mb = u
                        cntb = 1
                        lb = 1
                        rb = -1
                    if Ma >= u + v and T_uv < 0.0:
                        T_uv = t
        # B step, once B is live
        if T_u >= 0.0 and t > T_u:
            h = fb[xi]
            new = h + 1
            if xi > 0 and 1 + fb[xi - 1] < new:
                new = 1 + fb[xi - 1]
            if xi < w - 1 and 1 + fb[xi + 1] < new:
                new = 1 + fb[xi + 1]
            accepted = new != h
            fb[xi] = new
            if fb[xi] < fa[xi]:
                b_dominates = False
            if accepted:
                if x == -L or x == L:
                    exact = False
                if lb > rb:
                    if fb[xi] > u + abs(x - x0):
                        lb = x
                        rb = x
                elif x == lb - 1:
                    lb = x
                elif x == rb + 1:
                    rb = x
                if h == Mb:
                    cntb -= 1
                    if cntb == 0:
                        Mb += 1
                        c = 0
                        for y in range(w):
                            if fb[y] == Mb:
                                c += 1
                        cntb = c
                        if Mb >= u + v and T_star_abs < 0.0:
                            T_star_abs = t
        if T_uv >= 0.0 and T_star_abs >= 0.0:
            break
    return T_u, x0, T_star_abs, T_uv, exact, b_dominates
