"""Compiled rollout kernels for the sampling-based planner.

The planner scores thousands of candidate command sequences per
control period, each requiring a model rollout with a collision test
per predicted pose.  Doing that in pure numpy is an order of magnitude
too slow for the real-time budget, so the hot loop lives here as numba
jitted code.

Collision tests are exact, not approximate: a spatial hash over the
boundary segments culls the candidate set per pose, and a cheap
point-to-segment distance bound skips the per-beam work for poses that
are provably clear.  Both shortcuts preserve the indicator decision
bit for bit relative to the full scan, because any segment able to
produce a beam range within threshold necessarily has a point within
the cull radius of the pose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import SLIP_SPEED_FLOOR


@dataclass(frozen=True)
class SegmentGrid:
    """Uniform spatial hash of boundary segments, CSR layout."""

    origin_x: float
    origin_y: float
    cell_size: float
    nx: int
    ny: int
    cell_start: np.ndarray
    cell_items: np.ndarray
    seg_px: np.ndarray
    seg_py: np.ndarray
    seg_sx: np.ndarray
    seg_sy: np.ndarray


def build_segment_grid(track, cell_size: float) -> SegmentGrid:
    segs = track.segment_array()
    lo, hi = track.bounds()
    ox = float(lo[0]) - cell_size
    oy = float(lo[1]) - cell_size
    nx = int(math.ceil((float(hi[0]) + cell_size - ox) / cell_size)) + 1
    ny = int(math.ceil((float(hi[1]) + cell_size - oy) / cell_size)) + 1

    buckets = [[] for _ in range(nx * ny)]
    for i in range(segs.shape[0]):
        x0 = min(segs[i, 0, 0], segs[i, 1, 0])
        x1 = max(segs[i, 0, 0], segs[i, 1, 0])
        y0 = min(segs[i, 0, 1], segs[i, 1, 1])
        y1 = max(segs[i, 0, 1], segs[i, 1, 1])
        ix0 = max(int(math.floor((x0 - ox) / cell_size)), 0)
        ix1 = min(int(math.floor((x1 - ox) / cell_size)), nx - 1)
        iy0 = max(int(math.floor((y0 - oy) / cell_size)), 0)
        iy1 = min(int(math.floor((y1 - oy) / cell_size)), ny - 1)
        for cy in range(iy0, iy1 + 1):
            for cx in range(ix0, ix1 + 1):
                buckets[cy * nx + cx].append(i)

    cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
    for c, bucket in enumerate(buckets):
        cell_start[c + 1] = cell_start[c] + len(bucket)
    cell_items = np.empty(int(cell_start[-1]), dtype=np.int64)
    pos = 0
    for bucket in buckets:
        for i in bucket:
            cell_items[pos] = i
            pos += 1

    return SegmentGrid(
        origin_x=ox, origin_y=oy, cell_size=cell_size, nx=nx, ny=ny,
        cell_start=cell_start, cell_items=cell_items,
        seg_px=np.ascontiguousarray(segs[:, 0, 0]),
        seg_py=np.ascontiguousarray(segs[:, 0, 1]),
        seg_sx=np.ascontiguousarray(segs[:, 1, 0] - segs[:, 0, 0]),
        seg_sy=np.ascontiguousarray(segs[:, 1, 1] - segs[:, 0, 1]),
    )


@njit(cache=True)
def _wrap_angle(angle):
    two_pi = 2.0 * math.pi
    wrapped = angle - two_pi * np.rint(angle / two_pi)
    if wrapped > math.pi:
        wrapped -= two_pi
    elif wrapped <= -math.pi:
        wrapped += two_pi
    return wrapped


@njit(cache=True)
def _axle_force(v_long, v_side, steer, stiffness, limit):
    cos_s = math.cos(steer)
    sin_s = math.sin(steer)
    wheel_long = v_long * cos_s + v_side * sin_s
    wheel_side = -v_long * sin_s + v_side * cos_s
    slip = math.atan2(wheel_side, max(abs(wheel_long), SLIP_SPEED_FLOOR))
    force = -stiffness * slip
    force = min(max(force, -limit), limit)
    return force * cos_s


@njit(cache=True)
def _deriv_kbm(yaw, v, delta, vc, dc, wheelbase, tau_v, tau_d):
    dv = (vc - v) / tau_v if tau_v > 0.0 else 0.0
    dd = (dc - delta) / tau_d if tau_d > 0.0 else 0.0
    return (v * math.cos(yaw), v * math.sin(yaw),
            v * math.tan(delta) / wheelbase, dv, dd)


@njit(cache=True)
def _step_kbm(x, y, yaw, v, delta, vc, dc, dt,
              wheelbase, v_max, delta_max, tau_v, tau_d):
    if tau_v == 0.0:
        v = vc
    if tau_d == 0.0:
        delta = dc

    k1 = _deriv_kbm(yaw, v, delta, vc, dc, wheelbase, tau_v, tau_d)
    h = 0.5 * dt
    k2 = _deriv_kbm(yaw + h * k1[2], v + h * k1[3], delta + h * k1[4],
                    vc, dc, wheelbase, tau_v, tau_d)
    k3 = _deriv_kbm(yaw + h * k2[2], v + h * k2[3], delta + h * k2[4],
                    vc, dc, wheelbase, tau_v, tau_d)
    k4 = _deriv_kbm(yaw + dt * k3[2], v + dt * k3[3], delta + dt * k3[4],
                    vc, dc, wheelbase, tau_v, tau_d)

    sixth = dt / 6.0
    x1 = x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    y1 = y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    yaw1 = _wrap_angle(yaw + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]))
    v1 = v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    d1 = delta + sixth * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    v1 = min(max(v1, -v_max), v_max)
    d1 = min(max(d1, -delta_max), delta_max)
    return x1, y1, yaw1, v1, 0.0, v1 * math.tan(d1) / wheelbase, d1


@njit(cache=True)
def _deriv_dyn(yaw, v, v_lat, r, delta, vc, dc,
               half_wb, mass, iz, cf, cr, limit, tau_v, tau_d):
    dv = (vc - v) / tau_v if tau_v > 0.0 else 0.0
    dd = (dc - delta) / tau_d if tau_d > 0.0 else 0.0
    f_front = _axle_force(v, v_lat + half_wb * r, delta, cf, limit)
    f_rear = _axle_force(v, v_lat - half_wb * r, 0.0, cr, limit)
    return (v * math.cos(yaw) - v_lat * math.sin(yaw),
            v * math.sin(yaw) + v_lat * math.cos(yaw),
            r,
            dv,
            (f_front + f_rear) / mass - v * r,
            (half_wb * f_front - half_wb * f_rear) / iz,
            dd)


@njit(cache=True)
def _step_dyn(x, y, yaw, v, v_lat, r, delta, vc, dc, dt,
              wheelbase, mass, iz, cf, cr, mu, v_max, delta_max, tau_v, tau_d):
    if tau_v == 0.0:
        v = vc
    if tau_d == 0.0:
        delta = dc
    half_wb = 0.5 * wheelbase
    limit = 0.5 * mu * mass * 9.81

    k1 = _deriv_dyn(yaw, v, v_lat, r, delta, vc, dc,
                    half_wb, mass, iz, cf, cr, limit, tau_v, tau_d)
    h = 0.5 * dt
    k2 = _deriv_dyn(yaw + h * k1[2], v + h * k1[3], v_lat + h * k1[4],
                    r + h * k1[5], delta + h * k1[6], vc, dc,
                    half_wb, mass, iz, cf, cr, limit, tau_v, tau_d)
    k3 = _deriv_dyn(yaw + h * k2[2], v + h * k2[3], v_lat + h * k2[4],
                    r + h * k2[5], delta + h * k2[6], vc, dc,
                    half_wb, mass, iz, cf, cr, limit, tau_v, tau_d)
    k4 = _deriv_dyn(yaw + dt * k3[2], v + dt * k3[3], v_lat + dt * k3[4],
                    r + dt * k3[5], delta + dt * k3[6], vc, dc,
                    half_wb, mass, iz, cf, cr, limit, tau_v, tau_d)

    sixth = dt / 6.0
    x1 = x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    y1 = y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    yaw1 = _wrap_angle(yaw + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]))
    v1 = v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    vl1 = v_lat + sixth * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    r1 = r + sixth * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
    d1 = delta + sixth * (k1[6] + 2.0 * k2[6] + 2.0 * k3[6] + k4[6])
    v1 = min(max(v1, -v_max), v_max)
    d1 = min(max(d1, -delta_max), delta_max)
    return x1, y1, yaw1, v1, vl1, r1, d1


@njit(cache=True)
def _gather_candidates(x, y, radius, grid_ox, grid_oy, cell_size, nx, ny,
                       cell_start, cell_items, scratch):
    ix0 = int(math.floor((x - radius - grid_ox) / cell_size))
    ix1 = int(math.floor((x + radius - grid_ox) / cell_size))
    iy0 = int(math.floor((y - radius - grid_oy) / cell_size))
    iy1 = int(math.floor((y + radius - grid_oy) / cell_size))
    if ix1 < 0 or iy1 < 0 or ix0 > nx - 1 or iy0 > ny - 1:
        return 0
    ix0 = max(ix0, 0)
    iy0 = max(iy0, 0)
    ix1 = min(ix1, nx - 1)
    iy1 = min(iy1, ny - 1)
    n = 0
    for cy in range(iy0, iy1 + 1):
        row = cy * nx
        for cx in range(ix0, ix1 + 1):
            c = row + cx
            for ii in range(cell_start[c], cell_start[c + 1]):
                scratch[n] = cell_items[ii]
                n += 1
    return n


@njit(cache=True)
def _pose_collides(x, y, yaw, beam_body, thresholds, cull_radius,
                   grid_ox, grid_oy, cell_size, nx, ny,
                   cell_start, cell_items,
                   seg_px, seg_py, seg_sx, seg_sy, scratch):
    n_cand = _gather_candidates(x, y, cull_radius, grid_ox, grid_oy,
                                cell_size, nx, ny, cell_start, cell_items,
                                scratch)
    if n_cand == 0:
        return 0

    # cheap lower bound: every beam range is at least the distance to
    # the nearest boundary point, so a clear margin skips the raycast
    dmin_sq = 1e30
    for i in range(n_cand):
        s = scratch[i]
        sx = seg_sx[s]
        sy = seg_sy[s]
        rx = x - seg_px[s]
        ry = y - seg_py[s]
        seg_len_sq = sx * sx + sy * sy
        tproj = (rx * sx + ry * sy) / seg_len_sq if seg_len_sq > 0.0 else 0.0
        tproj = min(max(tproj, 0.0), 1.0)
        ex = rx - tproj * sx
        ey = ry - tproj * sy
        d_sq = ex * ex + ey * ey
        if d_sq < dmin_sq:
            dmin_sq = d_sq
    if dmin_sq > cull_radius * cull_radius:
        return 0

    for b in range(beam_body.shape[0]):
        ang = yaw + beam_body[b]
        dxb = math.cos(ang)
        dyb = math.sin(ang)
        thr = thresholds[b]
        for i in range(n_cand):
            s = scratch[i]
            sx = seg_sx[s]
            sy = seg_sy[s]
            denom = dxb * sy - dyb * sx
            if denom == 0.0:
                continue
            pox = seg_px[s] - x
            poy = seg_py[s] - y
            t = (pox * sy - poy * sx) / denom
            if t < 0.0 or t > thr:
                continue
            u = (pox * dyb - poy * dxb) / denom
            if 0.0 <= u <= 1.0:
                return 1
    return 0


@njit(cache=True)
def rollout_returns(state0, seqs, dt, model_flag, params, w_v, w_c,
                    beam_body, thresholds, cull_radius,
                    grid_ox, grid_oy, cell_size, nx, ny,
                    cell_start, cell_items,
                    seg_px, seg_py, seg_sx, seg_sy,
                    scores, immediate):
    """Score command sequences by cumulative predicted reward.

    ``state0`` is the 7-value state layout, ``seqs`` a (K, T, 2) batch
    of pre-clamped commands.  A rollout stops at its first predicted
    collision; ``immediate[k]`` is set when that happens on the very
    first step.  Writes into ``scores`` and ``immediate`` in place.
    """
    wheelbase = params[0]
    mass = params[1]
    iz = params[2]
    cf = params[3]
    cr = params[4]
    mu = params[5]
    v_max = params[6]
    delta_max = params[7]
    tau_v = params[8]
    tau_d = params[9]

    K = seqs.shape[0]
    T = seqs.shape[1]
    scratch = np.empty(seg_px.shape[0] * 4 + 8, dtype=np.int64)

    for k in range(K):
        x = state0[0]
        y = state0[1]
        yaw = state0[2]
        v = state0[3]
        v_lat = state0[4]
        r = state0[5]
        delta = state0[6]
        total = 0.0
        for ti in range(T):
            vc = seqs[k, ti, 0]
            dc = seqs[k, ti, 1]
            if model_flag == 0:
                x, y, yaw, v, v_lat, r, delta = _step_kbm(
                    x, y, yaw, v, delta, vc, dc, dt,
                    wheelbase, v_max, delta_max, tau_v, tau_d)
            else:
                x, y, yaw, v, v_lat, r, delta = _step_dyn(
                    x, y, yaw, v, v_lat, r, delta, vc, dc, dt,
                    wheelbase, mass, iz, cf, cr, mu, v_max, delta_max,
                    tau_v, tau_d)
            col = _pose_collides(
                x, y, yaw, beam_body, thresholds, cull_radius,
                grid_ox, grid_oy, cell_size, nx, ny,
                cell_start, cell_items,
                seg_px, seg_py, seg_sx, seg_sy, scratch)
            total += w_v * v - w_c * abs(v) * col
            if col == 1:
                if ti == 0:
                    immediate[k] = 1
                break
        scores[k] = total
