"""Numba-compiled numeric kernels for the hot paths.

Everything here is plain-array code: no Python objects cross the
boundary. Kernels are single-threaded and avoid fastmath so results are
bit-reproducible across runs. The public modules wrap these with the
documented dataclass APIs.
"""

import numpy as np
from numba import njit

JIT = dict(cache=True, fastmath=False)


@njit(**JIT)
def bilinear_floor(floor, cell, ox, oy, x, y):
    """Bilinear floor height at world (x, y); out-of-grid queries clamp to the edge."""
    rows, cols = floor.shape
    gx = (x - ox) / cell
    gy = (y - oy) / cell
    i0 = int(np.floor(gx))
    j0 = int(np.floor(gy))
    fx = gx - i0
    fy = gy - j0
    if i0 < 0:
        i0, fx = 0, 0.0
    if i0 >= rows - 1:
        i0, fx = rows - 1, 0.0
    if j0 < 0:
        j0, fy = 0, 0.0
    if j0 >= cols - 1:
        j0, fy = cols - 1, 0.0
    i1 = min(i0 + 1, rows - 1)
    j1 = min(j0 + 1, cols - 1)
    h00 = floor[i0, j0]
    h10 = floor[i1, j0]
    h01 = floor[i0, j1]
    h11 = floor[i1, j1]
    return (
        h00 * (1 - fx) * (1 - fy)
        + h10 * fx * (1 - fy)
        + h01 * (1 - fx) * fy
        + h11 * fx * fy
    )


@njit(**JIT)
def nearest_cell_value(grid, cell, ox, oy, x, y):
    """Value of the grid cell whose center is nearest to (x, y), edge-clamped."""
    rows, cols = grid.shape
    i = int(np.floor((x - ox) / cell + 0.5))
    j = int(np.floor((y - oy) / cell + 0.5))
    if i < 0:
        i = 0
    elif i >= rows:
        i = rows - 1
    if j < 0:
        j = 0
    elif j >= cols:
        j = cols - 1
    return grid[i, j]


@njit(**JIT)
def extract_patch_core(
    floor,
    ceiling,
    has_ceiling,
    cell,
    ox,
    oy,
    base_x,
    base_y,
    yaw,
    front_offset,
    standoff,
    length,
    width,
    patch_cell,
    composite,
    out,
):
    """Fill `out` (m_rows far->near, n_cols left->right) with terrain heights.

    composite=True takes the ceiling height wherever a ceiling cell is
    present (nearest-cell lookup) and the floor height otherwise.
    """
    m, n = out.shape
    cy = np.cos(yaw)
    sy = np.sin(yaw)
    for i in range(m):
        fwd = front_offset + standoff + length - (i + 0.5) * patch_cell
        for j in range(n):
            lat = width / 2 - (j + 0.5) * patch_cell
            px = base_x + cy * fwd - sy * lat
            py = base_y + sy * fwd + cy * lat
            val = bilinear_floor(floor, cell, ox, oy, px, py)
            if composite and has_ceiling:
                c = nearest_cell_value(ceiling, cell, ox, oy, px, py)
                if not np.isnan(c):
                    val = c
            out[i, j] = val


@njit(**JIT)
def fk_chain(mounts, mount_yaw, link_lengths, q, base_pos, rot, chain):
    """Forward kinematics for all six legs.

    chain[leg, 0..3] = mount, femur joint, tibia joint, foot (world frame).
    Joint layout per leg: (coxa yaw, femur pitch, tibia pitch); positive
    pitch swings the link below the horizontal.
    """
    lc = link_lengths[0]
    lf = link_lengths[1]
    lt = link_lengths[2]
    for leg in range(6):
        q1 = q[3 * leg]
        q2 = q[3 * leg + 1]
        q3 = q[3 * leg + 2]
        th = mount_yaw[leg] + q1
        ux = np.cos(th)
        uy = np.sin(th)
        mx = mounts[leg, 0]
        my = mounts[leg, 1]
        mz = mounts[leg, 2]
        # femur joint at the coxa tip, femur/tibia pitch in the leg's vertical plane
        kx = mx + lc * ux
        ky = my + lc * uy
        kz = mz
        c2 = np.cos(q2)
        s2 = np.sin(q2)
        tx = kx + lf * c2 * ux
        ty = ky + lf * c2 * uy
        tz = kz - lf * s2
        c23 = np.cos(q2 + q3)
        s23 = np.sin(q2 + q3)
        fx = tx + lt * c23 * ux
        fy = ty + lt * c23 * uy
        fz = tz - lt * s23
        # body -> world
        for k in range(4):
            if k == 0:
                bx, by, bz = mx, my, mz
            elif k == 1:
                bx, by, bz = kx, ky, kz
            elif k == 2:
                bx, by, bz = tx, ty, tz
            else:
                bx, by, bz = fx, fy, fz
            chain[leg, k, 0] = (
                base_pos[0] + rot[0, 0] * bx + rot[0, 1] * by + rot[0, 2] * bz
            )
            chain[leg, k, 1] = (
                base_pos[1] + rot[1, 0] * bx + rot[1, 1] * by + rot[1, 2] * bz
            )
            chain[leg, k, 2] = (
                base_pos[2] + rot[2, 0] * bx + rot[2, 1] * by + rot[2, 2] * bz
            )


@njit(**JIT)
def support_fit(feet, gaps, contact, xy_in_body):
    """Least-squares (dz, roll, pitch) correction seating contact feet on the floor.

    Small-angle model: dz_foot = dz + roll*y - pitch*x. Falls back to a
    pure height shift when fewer than three contacts or the normal matrix
    is near singular (collinear feet).
    """
    a00 = 0.0
    a01 = 0.0
    a02 = 0.0
    a11 = 0.0
    a12 = 0.0
    a22 = 0.0
    b0 = 0.0
    b1 = 0.0
    b2 = 0.0
    ncon = 0
    for i in range(6):
        if not contact[i]:
            continue
        ncon += 1
        xi = xy_in_body[i, 0]
        yi = xy_in_body[i, 1]
        r = -gaps[i]
        a00 += 1.0
        a01 += yi
        a02 += -xi
        a11 += yi * yi
        a12 += -yi * xi
        a22 += xi * xi
        b0 += r
        b1 += r * yi
        b2 += -r * xi
    if ncon == 0:
        return 0.0, 0.0, 0.0
    det = (
        a00 * (a11 * a22 - a12 * a12)
        - a01 * (a01 * a22 - a12 * a02)
        + a02 * (a01 * a12 - a11 * a02)
    )
    if ncon < 3 or np.abs(det) < 1e-9:
        return b0 / a00, 0.0, 0.0
    # Cramer's rule on the 3x3 normal equations
    dz = (
        b0 * (a11 * a22 - a12 * a12)
        - a01 * (b1 * a22 - a12 * b2)
        + a02 * (b1 * a12 - a11 * b2)
    ) / det
    droll = (
        a00 * (b1 * a22 - b2 * a12)
        - b0 * (a01 * a22 - a12 * a02)
        + a02 * (a01 * b2 - b1 * a02)
    ) / det
    dpitch = (
        a00 * (a11 * b2 - a12 * b1)
        - a01 * (a01 * b2 - b1 * a02)
        + b0 * (a01 * a12 - a11 * a02)
    ) / det
    return dz, droll, dpitch


@njit(**JIT)
def rpy_to_mat(roll, pitch, yaw, out):
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    out[0, 0] = cy * cp
    out[0, 1] = cy * sp * sr - sy * cr
    out[0, 2] = cy * sp * cr + sy * sr
    out[1, 0] = sy * cp
    out[1, 1] = sy * sp * sr + cy * cr
    out[1, 2] = sy * sp * cr - cy * sr
    out[2, 0] = -sp
    out[2, 1] = cp * sr
    out[2, 2] = cp * cr


@njit(**JIT)
def settle_base(
    mounts,
    mount_yaw,
    link_lengths,
    q,
    pos,
    roll,
    pitch,
    yaw,
    floor,
    cell,
    ox,
    oy,
    contact_tol,
    iterations,
    chain,
    contact,
    gaps,
):
    """Iteratively seat contacting feet on the floor by adjusting (z, roll, pitch).

    Feet within contact_tol of the local floor (or below it) count as
    contacting; the least-squares correction from support_fit is applied
    and contacts re-evaluated. Returns the adjusted (z, roll, pitch).
    Output arrays: chain (6,4,3 world), contact (6,), gaps (6,).
    """
    rot = np.empty((3, 3))
    xy_body = np.empty((6, 2))
    z = pos[2]
    p = np.empty(3)
    for _ in range(iterations):
        rpy_to_mat(roll, pitch, yaw, rot)
        p[0] = pos[0]
        p[1] = pos[1]
        p[2] = z
        fk_chain(mounts, mount_yaw, link_lengths, q, p, rot, chain)
        ncon = 0
        for i in range(6):
            fx = chain[i, 3, 0]
            fy = chain[i, 3, 1]
            fz = chain[i, 3, 2]
            h = bilinear_floor(floor, cell, ox, oy, fx, fy)
            gaps[i] = fz - h
            contact[i] = gaps[i] <= contact_tol
            if contact[i]:
                ncon += 1
            # foot offsets in the yaw frame: roll/pitch act about these axes
            dx = fx - pos[0]
            dy = fy - pos[1]
            cyw = np.cos(yaw)
            syw = np.sin(yaw)
            xy_body[i, 0] = cyw * dx + syw * dy
            xy_body[i, 1] = -syw * dx + cyw * dy
        if ncon == 0:
            break
        # an unstable stance offers no righting moment: only the height
        # may adjust, so a tipping body keeps its tilt
        unstable, _, _, _, _, _ = support_instability(
            chain[:, 3, :], contact, pos[0], pos[1], 0.01
        )
        if unstable:
            s = 0.0
            for i in range(6):
                if contact[i]:
                    s += -gaps[i]
            dz, droll, dpitch = s / ncon, 0.0, 0.0
        else:
            dz, droll, dpitch = support_fit(chain[:, 3, :], gaps, contact, xy_body)
        z += dz
        roll += droll
        pitch += dpitch
        if np.abs(dz) < 1e-10 and np.abs(droll) < 1e-10 and np.abs(dpitch) < 1e-10:
            break
    # final kinematics and contact set at the settled pose
    rpy_to_mat(roll, pitch, yaw, rot)
    p[0] = pos[0]
    p[1] = pos[1]
    p[2] = z
    fk_chain(mounts, mount_yaw, link_lengths, q, p, rot, chain)
    for i in range(6):
        h = bilinear_floor(floor, cell, ox, oy, chain[i, 3, 0], chain[i, 3, 1])
        gaps[i] = chain[i, 3, 2] - h
        contact[i] = gaps[i] <= contact_tol
    return z, roll, pitch


@njit(**JIT)
def collision_flags(
    chain,
    pos,
    rot,
    half_length,
    half_width,
    box_height,
    floor,
    ceiling,
    has_ceiling,
    cell,
    ox,
    oy,
    threshold,
    flags,
):
    """Illegal-contact flags: (coxa, femur, base) x (floor, ceiling).

    A link class is flagged when any sampled point of its collision
    volume penetrates the floor (point below the bilinear surface) or
    the ceiling (point above a present ceiling cell) by more than
    `threshold`. Feet and tibiae are allowed to touch terrain.
    """
    for k in range(6):
        flags[k] = False
    for leg in range(6):
        for seg in range(2):  # 0: coxa (mount->femur joint), 1: femur (joint->tibia joint)
            for s in range(3):
                t = 0.5 * s
                x = chain[leg, seg, 0] + t * (chain[leg, seg + 1, 0] - chain[leg, seg, 0])
                y = chain[leg, seg, 1] + t * (chain[leg, seg + 1, 1] - chain[leg, seg, 1])
                z = chain[leg, seg, 2] + t * (chain[leg, seg + 1, 2] - chain[leg, seg, 2])
                h = bilinear_floor(floor, cell, ox, oy, x, y)
                if h - z > threshold:
                    flags[seg] = True
                if has_ceiling:
                    c = nearest_cell_value(ceiling, cell, ox, oy, x, y)
                    if not np.isnan(c) and z - c > threshold:
                        flags[3 + seg] = True
    # body box: corners of the top face (z=0) and bottom face (z=-box_height)
    for sx in range(-1, 2, 2):
        for sy in range(-1, 2, 2):
            bx = sx * half_length
            by = sy * half_width
            for face in range(2):
                bz = 0.0 if face == 0 else -box_height
                x = pos[0] + rot[0, 0] * bx + rot[0, 1] * by + rot[0, 2] * bz
                y = pos[1] + rot[1, 0] * bx + rot[1, 1] * by + rot[1, 2] * bz
                z = pos[2] + rot[2, 0] * bx + rot[2, 1] * by + rot[2, 2] * bz
                if face == 1:
                    h = bilinear_floor(floor, cell, ox, oy, x, y)
                    if h - z > threshold:
                        flags[2] = True
                else:
                    if has_ceiling:
                        c = nearest_cell_value(ceiling, cell, ox, oy, x, y)
                        if not np.isnan(c) and z - c > threshold:
                            flags[5] = True


@njit(**JIT)
def stance_motion(mounts, mount_yaw, link_lengths, q, q_prev, contact, dt):
    """Planar body twist induced by stance feet sweeping in the body frame.

    Stance feet push the body: the body's planar velocity is minus the
    mean stance-foot velocity and the yaw rate minus the tangential
    (centroid-relative) rotation rate of the stance feet.
    Returns (vx_body, vy_body, yaw_rate).
    """
    chain_now = np.empty((6, 4, 3))
    chain_prev = np.empty((6, 4, 3))
    origin = np.zeros(3)
    ident = np.eye(3)
    fk_chain(mounts, mount_yaw, link_lengths, q, origin, ident, chain_now)
    fk_chain(mounts, mount_yaw, link_lengths, q_prev, origin, ident, chain_prev)
    n = 0
    mvx = 0.0
    mvy = 0.0
    mpx = 0.0
    mpy = 0.0
    for i in range(6):
        if contact[i]:
            n += 1
            mvx += (chain_now[i, 3, 0] - chain_prev[i, 3, 0]) / dt
            mvy += (chain_now[i, 3, 1] - chain_prev[i, 3, 1]) / dt
            mpx += chain_now[i, 3, 0]
            mpy += chain_now[i, 3, 1]
    if n == 0:
        return 0.0, 0.0, 0.0
    mvx /= n
    mvy /= n
    mpx /= n
    mpy /= n
    num = 0.0
    den = 0.0
    for i in range(6):
        if contact[i]:
            px = chain_now[i, 3, 0] - mpx
            py = chain_now[i, 3, 1] - mpy
            vx = (chain_now[i, 3, 0] - chain_prev[i, 3, 0]) / dt - mvx
            vy = (chain_now[i, 3, 1] - chain_prev[i, 3, 1]) / dt - mvy
            num += px * vy - py * vx
            den += px * px + py * py
    omega = num / den if den > 1e-12 else 0.0
    return -mvx, -mvy, -omega


@njit(**JIT)
def support_instability(feet, contact, com_x, com_y, margin):
    """Check whether the COM lies outside the support polygon.

    Scans ordered point pairs for a hull edge separating the COM from
    all support points by more than `margin`. Returns (unstable,
    dir_x, dir_y, pivot_x, pivot_y, pivot_z): the overhang direction
    and the closest boundary point, the line the body tips about.
    """
    n = 0
    px = np.empty(6)
    py = np.empty(6)
    pz = np.empty(6)
    for i in range(6):
        if contact[i]:
            px[n] = feet[i, 0]
            py[n] = feet[i, 1]
            pz[n] = feet[i, 2]
            n += 1
    if n == 0:
        return False, 0.0, 0.0, 0.0, 0.0, 0.0
    if n == 1:
        dx = com_x - px[0]
        dy = com_y - py[0]
        d = np.sqrt(dx * dx + dy * dy)
        if d > margin:
            return True, dx / d, dy / d, px[0], py[0], pz[0]
        return False, 0.0, 0.0, 0.0, 0.0, 0.0
    best = margin
    bx = 0.0
    by = 0.0
    cx = 0.0
    cy = 0.0
    cz = 0.0
    found = False
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ex = px[j] - px[i]
            ey = py[j] - py[i]
            elen2 = ex * ex + ey * ey
            if elen2 < 1e-18:
                continue
            elen = np.sqrt(elen2)
            # left normal of the directed edge i->j
            nx = -ey / elen
            ny = ex / elen
            hull_edge = True
            for k in range(n):
                if k == i or k == j:
                    continue
                if (px[k] - px[i]) * nx + (py[k] - py[i]) * ny < -1e-9:
                    hull_edge = False
                    break
            if not hull_edge:
                continue
            d = (com_x - px[i]) * nx + (com_y - py[i]) * ny
            if d < -best:
                best = -d
                bx = -nx
                by = -ny
                t = ((com_x - px[i]) * ex + (com_y - py[i]) * ey) / elen2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx = px[i] + t * ex
                cy = py[i] + t * ey
                cz = pz[i] + t * (pz[j] - pz[i])
                found = True
    return found, bx, by, cx, cy, cz


@njit(**JIT)
def segment_floor_penetration(p0, p1, floor, cell, ox, oy, samples):
    """Largest floor penetration depth along the segment p0->p1 (0 when clear)."""
    worst = 0.0
    for k in range(samples):
        t = k / (samples - 1) if samples > 1 else 0.0
        x = p0[0] + t * (p1[0] - p0[0])
        y = p0[1] + t * (p1[1] - p0[1])
        z = p0[2] + t * (p1[2] - p0[2])
        h = bilinear_floor(floor, cell, ox, oy, x, y)
        pen = h - z
        if pen > worst:
            worst = pen
    return worst


@njit(**JIT)
def render_fans(
    floor,
    ceiling,
    has_ceil,
    cell,
    ox,
    oy,
    cx,
    cy,
    cz,
    yaw,
    a_min,
    da,
    n_fans,
    fan_start,
    pix_idx,
    pix_e,
    pix_scale,
    near,
    far,
    out,
):
    """Exact depth render of the layered height field via azimuth fans.

    Pixels are pre-bucketed into azimuth fans and sorted by elevation
    ratio (dz/horizontal). Each fan runs one DDA over the piecewise-
    constant terrain columns, filling pixels from two monotone horizon
    pointers: floor/wall surfaces sweep the horizon up from below,
    ceiling undersides sweep it down from above. Intersections are
    analytic per cell, so walls land exactly on cell boundaries.

    `out` must be prefilled with `far` (misses keep it).
    """
    rows, cols = floor.shape
    # camera inside terrain or slab: everything clips to near
    ci = int(np.floor((cx - ox) / cell + 0.5))
    cj = int(np.floor((cy - oy) / cell + 0.5))
    if ci < 0:
        ci = 0
    elif ci >= rows:
        ci = rows - 1
    if cj < 0:
        cj = 0
    elif cj >= cols:
        cj = cols - 1
    inside = cz <= floor[ci, cj]
    if has_ceil and not inside:
        cv = ceiling[ci, cj]
        if not np.isnan(cv) and cz >= cv:
            inside = True
    if inside:
        for p in range(out.size):
            out[p] = near
        return

    for k in range(n_fans):
        lo = fan_start[k]
        hi = fan_start[k + 1]
        if hi <= lo:
            continue
        az = yaw + a_min + (k + 0.5) * da
        ux = np.cos(az)
        uy = np.sin(az)
        iF = lo
        iC = hi - 1
        fl_h = -1e30
        ce_h = 1e30
        gi = int(np.floor((cx - ox) / cell + 0.5))
        gj = int(np.floor((cy - oy) / cell + 0.5))
        if ux > 1e-12:
            stepi = 1
            tmax_x = ((ox + (gi + 0.5) * cell) - cx) / ux
            tdx = cell / ux
        elif ux < -1e-12:
            stepi = -1
            tmax_x = ((ox + (gi - 0.5) * cell) - cx) / ux
            tdx = -cell / ux
        else:
            stepi = 0
            tmax_x = 1e30
            tdx = 1e30
        if uy > 1e-12:
            stepj = 1
            tmax_y = ((oy + (gj + 0.5) * cell) - cy) / uy
            tdy = cell / uy
        elif uy < -1e-12:
            stepj = -1
            tmax_y = ((oy + (gj - 0.5) * cell) - cy) / uy
            tdy = -cell / uy
        else:
            stepj = 0
            tmax_y = 1e30
            tdy = 1e30
        s0 = 0.0
        while True:
            s1 = tmax_x if tmax_x < tmax_y else tmax_y
            if s1 > far:
                s1 = far
            ii = gi
            jj = gj
            if ii < 0:
                ii = 0
            elif ii >= rows:
                ii = rows - 1
            if jj < 0:
                jj = 0
            elif jj >= cols:
                jj = cols - 1
            fz = floor[ii, jj]
            dzf = fz - cz
            s0g = s0 if s0 > 1e-9 else 1e-9
            s1g = s1 if s1 > 1e-9 else 1e-9
            h_front = dzf / s0g
            if h_front > fl_h:
                # vertical face at the cell's near boundary
                while iF <= iC and pix_e[iF] <= h_front:
                    d = s0 * pix_scale[iF]
                    if d < near:
                        d = near
                    elif d > far:
                        d = far
                    out[pix_idx[iF]] = d
                    iF += 1
                fl_h = h_front
            if dzf < 0.0:
                # top surface seen from above: ray at elevation e meets it at dzf/e
                h_back = dzf / s1g
                if h_back > fl_h:
                    while iF <= iC and pix_e[iF] <= h_back:
                        d = (dzf / pix_e[iF]) * pix_scale[iF]
                        if d < near:
                            d = near
                        elif d > far:
                            d = far
                        out[pix_idx[iF]] = d
                        iF += 1
                    fl_h = h_back
            if has_ceil:
                cv = ceiling[ii, jj]
                if cv == cv:  # present (not NaN)
                    dzc = cv - cz
                    c_front = dzc / s0g
                    if c_front < ce_h:
                        # slab front face blocks everything above its near edge
                        while iC >= iF and pix_e[iC] >= c_front:
                            d = s0 * pix_scale[iC]
                            if d < near:
                                d = near
                            elif d > far:
                                d = far
                            out[pix_idx[iC]] = d
                            iC -= 1
                        ce_h = c_front
                    if dzc > 0.0:
                        # underside seen from below
                        c_back = dzc / s1g
                        if c_back < ce_h:
                            while iC >= iF and pix_e[iC] >= c_back:
                                d = (dzc / pix_e[iC]) * pix_scale[iC]
                                if d < near:
                                    d = near
                                elif d > far:
                                    d = far
                                out[pix_idx[iC]] = d
                                iC -= 1
                            ce_h = c_back
            if iF > iC:
                break
            if s1 >= far:
                break
            if tmax_x < tmax_y:
                s0 = tmax_x
                tmax_x += tdx
                gi += stepi
            else:
                s0 = tmax_y
                tmax_y += tdy
                gj += stepj


@njit(**JIT)
def box_ceiling_penetration(corners, ceiling, cell, ox, oy):
    """Largest penetration of box-top corner points into the ceiling layer."""
    worst = 0.0
    n = corners.shape[0]
    for k in range(n):
        c = nearest_cell_value(ceiling, cell, ox, oy, corners[k, 0], corners[k, 1])
        if np.isnan(c):
            continue
        pen = corners[k, 2] - c
        if pen > worst:
            worst = pen
    return worst
