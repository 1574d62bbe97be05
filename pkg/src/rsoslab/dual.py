"""Well-started growth tracked through its minimum and its spread.

Runs the lateral-bound surface from the centered well max(|x1|, ..) sum
form ||x||_1 and reports the quantities that make the reversed picture
useful: the running minimum M_t, the set of sites that have accepted an
update (an interval [l, r] in dimension 1), the stream of rings landing
on that set or its immediate border (arrivals), and the passage times
T(u) = inf{t : M_t >= u}.

Between consecutive arrivals the border-widened set is frozen, so the
waiting time is the minimum of (width) unit-rate exponentials.  The
per-arrival zone widths recorded here therefore give the exact
conditional law of T(u) as a sum of independent exponentials; the
interface widths (without the border) are recorded alongside for
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import LatticeBox
from .surface import neighbor_table

__all__ = [
    "DualTrajectory",
    "run_dual",
    "hitting_time",
    "coupled_restart",
    "interface_stats",
    "berry_esseen_stats",
    "resample_hitting_time",
    "auto_radius",
    "write_trajectory_csv",
    "write_hitting_csv",
]


def auto_radius(until):
    """Box radius with comfortable slack for a run to time `until`.

    The accepted set spreads at edge speed 1, so `until` plus a
    six-sigma allowance keeps boundary effects out of every run that
    matters at desk scale.
    """
    if until < 0:
        raise ValueError("until must be nonnegative")
    return max(1, int(math.ceil(until + 6.0 * math.sqrt(until))))


@dataclass
class DualTrajectory:
    """Recorded state of one well-started run.

    Per-arrival arrays are aligned: entry j describes the j-th arrival
    (0-based).  `zone_widths[j]` is the width of the frozen zone during
    the wait that ended at arrival j, so it starts at 1 and the first
    `jump_arrival_counts[u-1]` entries give the exact conditional law
    of T(u).  For dimension >= 2 the interval columns are empty and
    `interface_widths` holds the accepted-set size instead.
    """

    box: LatticeBox
    until: float
    arrival_times: np.ndarray
    interface_left: np.ndarray
    interface_right: np.ndarray
    interface_widths: np.ndarray
    zone_widths: np.ndarray
    jump_times: np.ndarray
    jump_arrival_counts: np.ndarray
    zone_sum_inv: np.ndarray
    zone_sum_inv2: np.ndarray
    zone_sum_inv3: np.ndarray
    exact: bool
    final_heights: np.ndarray = field(repr=False)

    @property
    def dimension(self):
        return self.box.dimension

    @property
    def total_arrivals(self):
        return int(len(self.arrival_times))

    @property
    def max_level(self):
        return int(len(self.jump_times))

    def minimum_at(self, t):
        """M_t: number of minimum jumps up to and including time t."""
        if t < 0 or t > self.until:
            raise ValueError("time outside the run window")
        return int(np.searchsorted(self.jump_times, t, side="right"))

    def count_at(self, t):
        """N_t: number of arrivals up to and including time t."""
        if t < 0 or t > self.until:
            raise ValueError("time outside the run window")
        return int(np.searchsorted(self.arrival_times, t, side="right"))

    def interface_at(self, t):
        """The accepted interval (l, r) at time t, or None if still empty.

        Dimension 1 only; the accepted set of a higher-dimensional run
        is not an interval.
        """
        if self.dimension != 1:
            raise ValueError("interface_at is only defined in dimension 1")
        j = np.searchsorted(self.arrival_times, t, side="right") - 1
        if j < 0:
            return None
        return int(self.interface_left[j]), int(self.interface_right[j])

    def width_at(self, t):
        """Size of the accepted set at time t (0 before the first)."""
        j = np.searchsorted(self.arrival_times, t, side="right") - 1
        if j < 0:
            return 0
        return int(self.interface_widths[j])


def _run_dual_general(events, until):
    # Reference-speed path for dimension >= 2: apply the rule per ring,
    # count arrivals by after-ring membership f > ||x||_1, and track the
    # box minimum with a deficit counter.
    box = events.box
    nbr = neighbor_table(box)
    nsites = box.site_count
    norm = np.empty(nsites, np.int64)
    for i in range(nsites):
        norm[i] = sum(abs(c) for c in box.unflatten(i))
    f = norm.copy()
    times = events.times
    flat = events.flat_sites()
    tau = []
    sizes = []
    jump_t = []
    jump_arr = []
    M = 0
    cnt = 1  # the origin is the unique minimum of the well
    size = 0
    exact = True
    edge = box.radius
    for i in range(len(times)):
        t = times[i]
        if t > until:
            break
        xi = int(flat[i])
        h = int(f[xi])
        new = h + 1
        for j in nbr[xi]:
            if j >= 0 and 1 + f[j] < new:
                new = 1 + f[j]
        accepted = new != h
        f[xi] = new
        if f[xi] <= norm[xi]:
            continue  # not on the accepted set even after the ring
        if accepted and h == norm[xi]:
            size += 1  # site joins the accepted set
            if any(abs(c) == edge for c in box.unflatten(xi)):
                exact = False
        if accepted and h == M:
            cnt -= 1
            if cnt == 0:
                M += 1
                cnt = int(np.count_nonzero(f == M))
                jump_t.append(t)
                jump_arr.append(len(tau) + 1)
        tau.append(t)
        sizes.append(size)
    empty_i = np.empty(0, np.int64)
    empty_f = np.empty(0, np.float64)
    return DualTrajectory(
        box=box,
        until=float(until),
        arrival_times=np.asarray(tau, np.float64),
        interface_left=empty_i,
        interface_right=empty_i.copy(),
        interface_widths=np.asarray(sizes, np.int64),
        zone_widths=empty_i.copy(),
        jump_times=np.asarray(jump_t, np.float64),
        jump_arrival_counts=np.asarray(jump_arr, np.int64),
        zone_sum_inv=empty_f,
        zone_sum_inv2=empty_f.copy(),
        zone_sum_inv3=empty_f.copy(),
        exact=exact,
        final_heights=f,
    )


def run_dual(events, until=None):
    """Run the well-started surface and record minimum, set, arrivals.

    `until` defaults to the event horizon; it may not exceed it.  The
    run is flagged inexact when the accepted set touches the box edge,
    after which free-boundary effects can distort the minimum.
    """
    box = events.box
    if until is None:
        until = box.horizon
    if until < 0 or until > box.horizon:
        raise ValueError("until must lie in [0, horizon]")
    if box.boundary != "free":
        raise ValueError("run_dual expects a free-boundary box")
    if box.dimension != 1:
        return _run_dual_general(events, until)
    xs = np.ascontiguousarray(events.sites[:, 0])
    out = _kernels.dual_scan_d1(events.times, xs, box.radius, float(until))
    (tau, arr_l, arr_r, arr_w, arr_z, mj_t, mj_arr,
     mj_s1, mj_s2, mj_s3, exact, heights) = out
    return DualTrajectory(
        box=box,
        until=float(until),
        arrival_times=tau.copy(),
        interface_left=arr_l.copy(),
        interface_right=arr_r.copy(),
        interface_widths=arr_w.copy(),
        zone_widths=arr_z.copy(),
        jump_times=mj_t.copy(),
        jump_arrival_counts=mj_arr.copy(),
        zone_sum_inv=mj_s1.copy(),
        zone_sum_inv2=mj_s2.copy(),
        zone_sum_inv3=mj_s3.copy(),
        exact=bool(exact),
        final_heights=np.asarray(heights),
    )


def hitting_time(trajectory, u):
    """T(u) = first time the minimum reaches level u, or None if the
    run ended below u.  T(0) is 0."""
    if int(u) != u or u < 0:
        raise ValueError("level must be a nonnegative integer")
    u = int(u)
    if u == 0:
        return 0.0
    if u > trajectory.max_level:
        return None
    return float(trajectory.jump_times[u - 1])


def coupled_restart(events, u, v, until=None):
    """Passage to u + v versus a fresh start at the passage of u.

    Runs the well-started surface A to T(u); at that instant starts B
    from the well lifted by u and re-centered at the site whose ring
    completed the passage, then runs both on the same remaining rings.
    B dominates A pointwise from the restart, so A cannot reach u + v
    before B does: T(u + v) >= T(u) + T*, with T* the time B takes.

    Returns a dict with T_u, T_star, T_uv (None when not observed
    within the window), inequality_holds, restart_site, exact, and the
    pointwise domination check b_dominates.
    """
    box = events.box
    if box.dimension != 1:
        raise ValueError("coupled_restart is only implemented in dimension 1")
    if box.boundary != "free":
        raise ValueError("coupled_restart expects a free-boundary box")
    if int(u) != u or u < 1 or int(v) != v or v < 1:
        raise ValueError("levels u and v must be positive integers")
    if until is None:
        until = box.horizon
    if until < 0 or until > box.horizon:
        raise ValueError("until must lie in [0, horizon]")
    xs = np.ascontiguousarray(events.sites[:, 0])
    T_u, x0, T_star_abs, T_uv, exact, b_dom = _kernels.coupled_restart_scan(
        events.times, xs, box.radius, int(u), int(v), float(until))
    out = {
        "T_u": float(T_u) if T_u >= 0.0 else None,
        "T_star": float(T_star_abs - T_u) if T_star_abs >= 0.0 else None,
        "T_uv": float(T_uv) if T_uv >= 0.0 else None,
        "restart_site": (int(x0),) if T_u >= 0.0 else None,
        "exact": bool(exact),
        "b_dominates": bool(b_dom),
    }
    if out["T_star"] is not None and out["T_uv"] is not None:
        # half a tick of slack: both sides are sums of grid times
        out["inequality_holds"] = out["T_uv"] >= out["T_u"] + out["T_star"] - 1e-12
    else:
        out["inequality_holds"] = None
    return out


def interface_stats(trajectory, times=()):
    """Edge-growth gaps, widths, and passage table of a d=1 run.

    The right-edge gap sequence starts with the wait for the first
    acceptance and continues with the waits between successive
    right-edge extensions; each gap is the first ring of a fresh
    unit-rate clock after a stopping time, so the gaps are iid mean-1
    exponentials.  Same on the left.
    """
    if trajectory.dimension != 1:
        raise ValueError("interface_stats is only defined in dimension 1")
    tau = trajectory.arrival_times
    right = trajectory.interface_right
    left = trajectory.interface_left
    if len(tau) == 0:
        r_times = np.empty(0, np.float64)
        l_times = np.empty(0, np.float64)
    else:
        r_move = np.ones(len(tau), dtype=bool)
        r_move[1:] = right[1:] > right[:-1]
        l_move = np.ones(len(tau), dtype=bool)
        l_move[1:] = left[1:] < left[:-1]
        r_times = tau[r_move]
        l_times = tau[l_move]
    out = {
        "right_edge_gaps": np.diff(r_times, prepend=0.0),
        "left_edge_gaps": np.diff(l_times, prepend=0.0),
        "interface_widths": trajectory.interface_widths.copy(),
        "arrival_times": tau.copy(),
        "total_arrivals": trajectory.total_arrivals,
        "passage_levels": np.arange(1, trajectory.max_level + 1),
        "passage_times": trajectory.jump_times.copy(),
        "passage_arrival_counts": trajectory.jump_arrival_counts.copy(),
        "exact": trajectory.exact,
    }
    if len(times) > 0:
        ts = np.asarray(times, np.float64)
        out["sample_times"] = ts
        out["widths_at"] = np.array(
            [trajectory.width_at(t) for t in ts], np.int64)
        out["arrivals_at"] = np.array(
            [trajectory.count_at(t) for t in ts], np.int64)
    return out


_THETA_COEFF = 12.0 / math.e - 2.0


def _width_sequence(trajectory, count, widths):
    if widths == "active":
        if len(trajectory.zone_widths) < count:
            raise ValueError("zone widths unavailable for this run")
        return trajectory.zone_widths[:count].astype(np.float64)
    if widths == "interface":
        # convention: width 1 before the first arrival
        seq = np.empty(count, np.float64)
        seq[0] = 1.0
        seq[1:] = trajectory.interface_widths[:count - 1]
        return seq
    raise ValueError("widths must be 'active' or 'interface'")


def berry_esseen_stats(trajectory, u, widths="active"):
    """Conditional moments of T(u) given the arrival record.

    T(u) is the sum of A(u) independent exponentials whose means are
    the reciprocal widths in force during each wait.  The default
    'active' convention uses the border-widened zone widths, which is
    the sequence that actually sets the ring rates; 'interface' uses
    the bare accepted-set widths instead.  Returns mu (mean), sigma_sq
    (variance), theta (sum of centered absolute third moments, each
    (12/e - 2) times the cube of the mean), and A(u); None when the
    run never reached u.
    """
    if trajectory.dimension != 1:
        raise ValueError("berry_esseen_stats is only defined in dimension 1")
    if int(u) != u or u < 1:
        raise ValueError("level must be a positive integer")
    u = int(u)
    if u > trajectory.max_level:
        return None
    arrivals = int(trajectory.jump_arrival_counts[u - 1])
    if widths == "active":
        mu = float(trajectory.zone_sum_inv[u - 1])
        sigma_sq = float(trajectory.zone_sum_inv2[u - 1])
        s3 = float(trajectory.zone_sum_inv3[u - 1])
    else:
        seq = _width_sequence(trajectory, arrivals, widths)
        inv = 1.0 / seq
        mu = float(np.sum(inv))
        sigma_sq = float(np.sum(inv * inv))
        s3 = float(np.sum(inv * inv * inv))
    return {
        "u": u,
        "arrivals": arrivals,
        "mu": mu,
        "sigma_sq": sigma_sq,
        "theta": _THETA_COEFF * s3,
        "widths": widths,
    }


def resample_hitting_time(trajectory, u, rng, widths="active"):
    """Draw one T(u) from its conditional law given the arrival record:
    the sum of A(u) independent exponentials with the recorded means.
    Returns None when the run never reached u."""
    if trajectory.dimension != 1:
        raise ValueError("resample_hitting_time needs a dimension-1 run")
    if int(u) != u or u < 1:
        raise ValueError("level must be a positive integer")
    u = int(u)
    if u > trajectory.max_level:
        return None
    arrivals = int(trajectory.jump_arrival_counts[u - 1])
    seq = _width_sequence(trajectory, arrivals, widths)
    return float(np.sum(rng.exponential(1.0 / seq)))


def write_trajectory_csv(trajectory, path):
    """Per-arrival rows: t_event, M, l, r, N (dimension 1 only)."""
    if trajectory.dimension != 1:
        raise ValueError("trajectory export is only defined in dimension 1")
    tau = trajectory.arrival_times
    m_at = np.searchsorted(trajectory.jump_times, tau, side="right")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_event,M,l,r,N\n")
        for j in range(len(tau)):
            fh.write("%s,%d,%d,%d,%d\n" % (
                repr(float(tau[j])), m_at[j],
                trajectory.interface_left[j],
                trajectory.interface_right[j], j + 1))


def write_hitting_csv(trajectory, path):
    """Rows u, T_u for every level the run reached."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("u,T_u\n")
        for u in range(1, trajectory.max_level + 1):
            fh.write("%d,%s\n" % (u, repr(float(trajectory.jump_times[u - 1]))))
