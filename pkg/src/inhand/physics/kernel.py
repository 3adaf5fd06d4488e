"""Compiled planar contact-dynamics core.

One tick advances the world by ``substeps`` semi-implicit Euler steps. Each
substep: finger joint-space dynamics plus PD torque, object free update,
contact detection into fixed slots, warm-started projected Gauss-Seidel over
normal and Coulomb friction rows, integration, then split position
correction applied directly to positions through the inverse mass matrix.

Contact slot layout (fixed so warm starts and audits can be indexed):

    0-1    fingertip circle of finger f vs object polygon
    2-5    link capsule (finger f, link k) vs object, order (0,0),(0,1),(1,0),(1,1)
    6-7    two deepest object vertices vs table
    8-9    fingertip f vs table
    10-13  link (f, k) vs table

Normals point from body A to body B where the object is always B against
fingers and the table, and fingers are B against the table; the solved
impulse ``lam_n * n + lam_t * t`` is applied to B, its negation to A.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

NUM_SLOTS = 14
POS_SLOP = 5.0e-5         # tolerated penetration, m
POS_MAX_CORR = 0.002      # per-pass positional correction cap, m
POS_PASSES = 3

ERR_OK = 0
ERR_DIVERGED = 1

# divergence guards; lanes running implausible parameters hit these
MAX_SPEED = 50.0
MAX_OMEGA = 500.0
MAX_JOINT_SPEED = 200.0
MAX_POS = 5.0


@njit(cache=True, nogil=True)
def _fk_arrays(q, anchors, base_angles, link_l, elbows, tips, phis):
    for f in range(2):
        p1 = base_angles[f] + q[2 * f]
        p2 = p1 + q[2 * f + 1]
        phis[f, 0] = p1
        phis[f, 1] = p2
        elbows[f, 0] = anchors[f, 0] + link_l[0] * math.cos(p1)
        elbows[f, 1] = anchors[f, 1] + link_l[0] * math.sin(p1)
        tips[f, 0] = elbows[f, 0] + link_l[1] * math.cos(p2)
        tips[f, 1] = elbows[f, 1] + link_l[1] * math.sin(p2)


@njit(cache=True, nogil=True)
def _point_in_polygon(px, py, verts):
    n = verts.shape[0]
    for i in range(n):
        j = (i + 1) % n
        ex = verts[j, 0] - verts[i, 0]
        ey = verts[j, 1] - verts[i, 1]
        if ex * (py - verts[i, 1]) - ey * (px - verts[i, 0]) < 0.0:
            return False
    return True


@njit(cache=True, nogil=True)
def _deepest_face(px, py, verts):
    """Max signed distance to the face lines; negative inside."""
    n = verts.shape[0]
    best = -1.0e18
    bi = 0
    bmx = 0.0
    bmy = 1.0
    for i in range(n):
        j = (i + 1) % n
        ex = verts[j, 0] - verts[i, 0]
        ey = verts[j, 1] - verts[i, 1]
        ln = math.sqrt(ex * ex + ey * ey)
        if ln < 1.0e-12:
            continue
        mx = ey / ln
        my = -ex / ln
        sd = mx * (px - verts[i, 0]) + my * (py - verts[i, 1])
        if sd > best:
            best = sd
            bi = i
            bmx = mx
            bmy = my
    return best, bi, bmx, bmy


@njit(cache=True, nogil=True)
def _circle_polygon(cx, cy, rad, verts):
    """Gap, normal (circle toward polygon), surface point, feature id."""
    if _point_in_polygon(cx, cy, verts):
        sd, face, mx, my = _deepest_face(cx, cy, verts)
        return sd - rad, -mx, -my, cx - sd * mx, cy - sd * my, face
    n = verts.shape[0]
    best_d2 = 1.0e18
    bx = 0.0
    by = 0.0
    feat = 0
    for i in range(n):
        j = (i + 1) % n
        ex = verts[j, 0] - verts[i, 0]
        ey = verts[j, 1] - verts[i, 1]
        ll = ex * ex + ey * ey
        t = 0.0
        if ll > 1.0e-18:
            t = ((cx - verts[i, 0]) * ex + (cy - verts[i, 1]) * ey) / ll
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        qx = verts[i, 0] + t * ex
        qy = verts[i, 1] + t * ey
        d2 = (qx - cx) * (qx - cx) + (qy - cy) * (qy - cy)
        if d2 < best_d2:
            best_d2 = d2
            bx = qx
            by = qy
            if t <= 1.0e-9:
                feat = 100 + i
            elif t >= 1.0 - 1.0e-9:
                feat = 100 + j
            else:
                feat = i
    d = math.sqrt(best_d2)
    if d < 1.0e-12:
        sd, face, mx, my = _deepest_face(cx, cy, verts)
        return sd - rad, -mx, -my, cx, cy, face
    return d - rad, (bx - cx) / d, (by - cy) / d, bx, by, feat


@njit(cache=True, nogil=True)
def _seg_seg_closest(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    """Squared distance and the closest points between two segments."""
    d1x = p2x - p1x
    d1y = p2y - p1y
    d2x = q2x - q1x
    d2y = q2y - q1y
    rx = p1x - q1x
    ry = p1y - q1y
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry
    if a <= 1.0e-18 and e <= 1.0e-18:
        return rx * rx + ry * ry, p1x, p1y, q1x, q1y
    if a <= 1.0e-18:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry
        if e <= 1.0e-18:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y
            den = a * e - b * b
            if den > 1.0e-18:
                s = min(max((b * f - c * e) / den, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    cpx = p1x + s * d1x
    cpy = p1y + s * d1y
    cqx = q1x + t * d2x
    cqy = q1y + t * d2y
    dx = cqx - cpx
    dy = cqy - cpy
    return dx * dx + dy * dy, cpx, cpy, cqx, cqy


@njit(cache=True, nogil=True)
def _segment_polygon(ax, ay, bx, by, rad, verts):
    """Capsule segment vs polygon: gap, normal (capsule toward polygon),
    surface point, feature id."""
    ina = _point_in_polygon(ax, ay, verts)
    inb = _point_in_polygon(bx, by, verts)
    if ina or inb:
        # deep case: resolve the deeper endpoint through its closest face
        if ina and inb:
            sda, fa, max_, may_ = _deepest_face(ax, ay, verts)
            sdb, fb, mbx_, mby_ = _deepest_face(bx, by, verts)
            if sda <= sdb:
                ex, ey, sd, mx, my = ax, ay, sda, max_, may_
                feat = 200
            else:
                ex, ey, sd, mx, my = bx, by, sdb, mbx_, mby_
                feat = 201
        elif ina:
            sd, face, mx, my = _deepest_face(ax, ay, verts)
            ex, ey = ax, ay
            feat = 200
        else:
            sd, face, mx, my = _deepest_face(bx, by, verts)
            ex, ey = bx, by
            feat = 201
        return sd - rad, -mx, -my, ex - sd * mx, ey - sd * my, feat
    n = verts.shape[0]
    best_d2 = 1.0e18
    bpx = 0.0
    bpy = 0.0
    bqx = 0.0
    bqy = 0.0
    feat = 0
    for i in range(n):
        j = (i + 1) % n
        d2, cpx, cpy, cqx, cqy = _seg_seg_closest(
            ax, ay, bx, by, verts[i, 0], verts[i, 1], verts[j, 0], verts[j, 1])
        if d2 < best_d2:
            best_d2 = d2
            bpx = cpx
            bpy = cpy
            bqx = cqx
            bqy = cqy
            feat = i
    d = math.sqrt(best_d2)
    if d < 1.0e-12:
        mx_ = 0.5 * (ax + bx)
        my_ = 0.5 * (ay + by)
        sd, face, fx, fy = _deepest_face(mx_, my_, verts)
        return sd - rad, -fx, -fy, mx_ - sd * fx, my_ - sd * fy, face
    return d - rad, (bqx - bpx) / d, (bqy - bpy) / d, bqx, bqy, feat


@njit(cache=True, nogil=True)
def _detect(q, pose, anchors, base_angles, link_l, link_radius, tip_radius,
            verts_body, table_y, margin,
            act, gap, nrm, cpt, ft, elbows, tips, phis, vw):
    """Fill all contact slots for the given configuration."""
    _fk_arrays(q, anchors, base_angles, link_l, elbows, tips, phis)
    nv = verts_body.shape[0]
    ca = math.cos(pose[2])
    sa = math.sin(pose[2])
    for i in range(nv):
        vw[i, 0] = pose[0] + ca * verts_body[i, 0] - sa * verts_body[i, 1]
        vw[i, 1] = pose[1] + sa * verts_body[i, 0] + ca * verts_body[i, 1]

    for c in range(NUM_SLOTS):
        act[c] = 0
        gap[c] = margin
        ft[c] = -1

    # fingertips vs object
    for f in range(2):
        g, nx, ny, px, py, feat = _circle_polygon(
            tips[f, 0], tips[f, 1], tip_radius, vw)
        if g < margin:
            act[f] = 1
            gap[f] = g
            nrm[f, 0] = nx
            nrm[f, 1] = ny
            cpt[f, 0] = px
            cpt[f, 1] = py
            ft[f] = feat

    # link capsules vs object; the distal capsule stops short of the sensor
    for f in range(2):
        for k in range(2):
            c = 2 + 2 * f + k
            if k == 0:
                ax, ay = anchors[f, 0], anchors[f, 1]
                bx, by = elbows[f, 0], elbows[f, 1]
            else:
                ax, ay = elbows[f, 0], elbows[f, 1]
                ln = link_l[1] - tip_radius
                bx = elbows[f, 0] + ln * math.cos(phis[f, 1])
                by = elbows[f, 1] + ln * math.sin(phis[f, 1])
            g, nx, ny, px, py, feat = _segment_polygon(ax, ay, bx, by,
                                                       link_radius, vw)
            if g < margin:
                act[c] = 1
                gap[c] = g
                nrm[c, 0] = nx
                nrm[c, 1] = ny
                cpt[c, 0] = px
                cpt[c, 1] = py
                ft[c] = feat

    # object vs table: two deepest vertices
    i0 = -1
    i1 = -1
    g0 = 1.0e18
    g1 = 1.0e18
    for i in range(nv):
        g = vw[i, 1] - table_y
        if g < g0:
            g1 = g0
            i1 = i0
            g0 = g
            i0 = i
        elif g < g1:
            g1 = g
            i1 = i
    if i0 >= 0 and g0 < margin:
        act[6] = 1
        gap[6] = g0
        nrm[6, 0] = 0.0
        nrm[6, 1] = 1.0
        cpt[6, 0] = vw[i0, 0]
        cpt[6, 1] = vw[i0, 1]
        ft[6] = i0
    if i1 >= 0 and g1 < margin:
        act[7] = 1
        gap[7] = g1
        nrm[7, 0] = 0.0
        nrm[7, 1] = 1.0
        cpt[7, 0] = vw[i1, 0]
        cpt[7, 1] = vw[i1, 1]
        ft[7] = i1

    # fingertips vs table
    for f in range(2):
        c = 8 + f
        g = tips[f, 1] - tip_radius - table_y
        if g < margin:
            act[c] = 1
            gap[c] = g
            nrm[c, 0] = 0.0
            nrm[c, 1] = 1.0
            cpt[c, 0] = tips[f, 0]
            cpt[c, 1] = tips[f, 1] - tip_radius
            ft[c] = 0

    # link capsules vs table, deeper endpoint only
    for f in range(2):
        for k in range(2):
            c = 10 + 2 * f + k
            if k == 0:
                e0x, e0y = anchors[f, 0], anchors[f, 1]
                e1x, e1y = elbows[f, 0], elbows[f, 1]
            else:
                e0x, e0y = elbows[f, 0], elbows[f, 1]
                ln = link_l[1] - tip_radius
                e1x = elbows[f, 0] + ln * math.cos(phis[f, 1])
                e1y = elbows[f, 1] + ln * math.sin(phis[f, 1])
            if e0y <= e1y:
                px, py, feat = e0x, e0y, 0
            else:
                px, py, feat = e1x, e1y, 1
            g = py - link_radius - table_y
            if g < margin:
                act[c] = 1
                gap[c] = g
                nrm[c, 0] = 0.0
                nrm[c, 1] = 1.0
                cpt[c, 0] = px
                cpt[c, 1] = py - link_radius
                ft[c] = feat


@njit(cache=True, nogil=True)
def _arm_dynamics(qf0, qf1, qdf0, qdf1, m1, m2, l1, l2, gx, gy, base_angle):
    """Mass matrix, Coriolis and gravity torque of one two-link finger.

    Links are uniform thin rods: com at mid-length, rod inertia m l^2 / 12.
    Returns (M11, M12, M22, C1, C2, Qg1, Qg2) with the gravity terms on the
    applied-torque side, i.e. qdd = Minv (tau + Qg - C).
    """
    lc1 = 0.5 * l1
    lc2 = 0.5 * l2
    i1 = m1 * l1 * l1 / 12.0
    i2 = m2 * l2 * l2 / 12.0
    c2 = math.cos(qf1)
    s2 = math.sin(qf1)
    m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2)
    m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2)
    m22 = i2 + m2 * lc2 * lc2
    h = m2 * l1 * lc2 * s2
    c_1 = -h * (2.0 * qdf0 * qdf1 + qdf1 * qdf1)
    c_2 = h * qdf0 * qdf0
    p1 = base_angle + qf0
    p2 = p1 + qf1
    t1 = math.cos(p1) * gy - math.sin(p1) * gx
    t2 = math.cos(p2) * gy - math.sin(p2) * gx
    qg1 = m1 * lc1 * t1 + m2 * (l1 * t1 + lc2 * t2)
    qg2 = m2 * lc2 * t2
    return m11, m12, m22, c_1, c_2, qg1, qg2


@njit(cache=True, nogil=True)
def _slot_finger(c):
    """(finger, uses_distal_joint) for a slot, finger -1 when none."""
    if c < 2:
        return c, True
    if c < 6:
        return (c - 2) // 2, (c - 2) % 2 == 1
    if c < 8:
        return -1, False
    if c < 10:
        return c - 8, True
    return (c - 10) // 2, (c - 10) % 2 == 1


@njit(cache=True, nogil=True)
def run_tick(q, qd, pose, vel,
             u_target, ext_force, ext_torque,
             theta,
             anchors, base_angles, link_l, link_m, link_radius, tip_radius,
             joint_limit, max_torque, gravity, table_y, verts_body,
             margin, rest_threshold, dt, n_substeps, n_iters,
             warm_feat, warm_lam,
             tick_lam, tick_imp,
             audit_gap, audit_lam,
             last_active, last_point, last_normal):
    """Advance one tick in place. Returns ERR_OK or ERR_DIVERGED."""
    m_obj = theta[0]
    i_obj = theta[1]
    mu = theta[2]
    rest = theta[3]
    kp = theta[4]
    kd = theta[5]
    k_c = theta[6]
    inv_m = 1.0 / m_obj
    inv_i = 1.0 / i_obj

    beta_pos = k_c * dt * dt / m_obj
    if beta_pos < 0.05:
        beta_pos = 0.05
    elif beta_pos > 0.8:
        beta_pos = 0.8

    nv = verts_body.shape[0]
    elbows = np.empty((2, 2))
    tips = np.empty((2, 2))
    phis = np.empty((2, 2))
    vw = np.empty((nv, 2))
    act = np.empty(NUM_SLOTS, dtype=np.int64)
    gap = np.empty(NUM_SLOTS)
    nrm = np.empty((NUM_SLOTS, 2))
    cpt = np.empty((NUM_SLOTS, 2))
    ft = np.empty(NUM_SLOTS, dtype=np.int64)

    minv = np.empty((2, 3))        # per finger: inv M = [[a, b], [b, c]]
    jf1 = np.empty((NUM_SLOTS, 2))
    jf2 = np.empty((NUM_SLOTS, 2))
    a_n = np.empty((NUM_SLOTS, 2))
    a_t = np.empty((NUM_SLOTS, 2))
    rr = np.empty((NUM_SLOTS, 2))
    w_n = np.empty(NUM_SLOTS)
    w_t = np.empty(NUM_SLOTS)
    v_tgt = np.empty(NUM_SLOTS)
    lam_n = np.zeros(NUM_SLOTS)
    lam_t = np.zeros(NUM_SLOTS)

    for s in range(n_substeps):
        # Finger dynamics with an implicit PD drive. The joint spring-damper
        # is folded into the velocity solve, which keeps stiff gains stable
        # at this step size; saturated joints fall back to constant torque.
        for f in range(2):
            m11, m12, m22, c1, c2, qg1, qg2 = _arm_dynamics(
                q[2 * f], q[2 * f + 1], qd[2 * f], qd[2 * f + 1],
                link_m[0], link_m[1], link_l[0], link_l[1],
                gravity[0], gravity[1], base_angles[f])
            det = m11 * m22 - m12 * m12
            if det < 1.0e-12:
                det = 1.0e-12
            minv[f, 0] = m22 / det
            minv[f, 1] = -m12 / det
            minv[f, 2] = m11 / det
            e1 = u_target[2 * f] - q[2 * f]
            e2 = u_target[2 * f + 1] - q[2 * f + 1]
            kimp = kd + dt * kp
            s1 = 1.0   # 1 while the joint drive is implicit, 0 once saturated
            s2 = 1.0
            tc1 = 0.0
            tc2 = 0.0
            nqd1 = qd[2 * f]
            nqd2 = qd[2 * f + 1]
            base1 = m11 * qd[2 * f] + m12 * qd[2 * f + 1]
            base2 = m12 * qd[2 * f] + m22 * qd[2 * f + 1]
            for _sat in range(3):
                a11 = m11 + dt * kimp * s1
                a12 = m12
                a22 = m22 + dt * kimp * s2
                b1 = base1 + dt * ((kp * e1 if s1 == 1.0 else tc1) + qg1 - c1)
                b2 = base2 + dt * ((kp * e2 if s2 == 1.0 else tc2) + qg2 - c2)
                adet = a11 * a22 - a12 * a12
                if adet < 1.0e-12:
                    adet = 1.0e-12
                nqd1 = (a22 * b1 - a12 * b2) / adet
                nqd2 = (a11 * b2 - a12 * b1) / adet
                changed = False
                if s1 == 1.0:
                    t1 = kp * e1 - kimp * nqd1
                    if t1 > max_torque:
                        s1, tc1, changed = 0.0, max_torque, True
                    elif t1 < -max_torque:
                        s1, tc1, changed = 0.0, -max_torque, True
                if s2 == 1.0:
                    t2 = kp * e2 - kimp * nqd2
                    if t2 > max_torque:
                        s2, tc2, changed = 0.0, max_torque, True
                    elif t2 < -max_torque:
                        s2, tc2, changed = 0.0, -max_torque, True
                if not changed:
                    break
            qd[2 * f] = nqd1
            qd[2 * f + 1] = nqd2

        # object free dynamics plus this tick's external wrench
        vel[0] += dt * (gravity[0] + ext_force[0] * inv_m)
        vel[1] += dt * (gravity[1] + ext_force[1] * inv_m)
        vel[2] += dt * ext_torque * inv_i

        _detect(q, pose, anchors, base_angles, link_l, link_radius, tip_radius,
                verts_body, table_y, margin,
                act, gap, nrm, cpt, ft, elbows, tips, phis, vw)

        # per-slot solver quantities and restitution targets
        for c in range(NUM_SLOTS):
            lam_n[c] = 0.0
            lam_t[c] = 0.0
            if act[c] == 0:
                continue
            f, distal = _slot_finger(c)
            nx = nrm[c, 0]
            ny = nrm[c, 1]
            tx = -ny
            ty = nx
            px = cpt[c, 0]
            py = cpt[c, 1]
            wn = 0.0
            wt = 0.0
            vnx = 0.0
            vny = 0.0
            if c < 8:  # object is body B
                rx = px - pose[0]
                ry = py - pose[1]
                rr[c, 0] = rx
                rr[c, 1] = ry
                cn = rx * ny - ry * nx
                ct = rx * ty - ry * tx
                wn += inv_m + cn * cn * inv_i
                wt += inv_m + ct * ct * inv_i
                vnx += vel[0] - vel[2] * ry
                vny += vel[1] + vel[2] * rx
            if f >= 0:
                j1x = -(py - anchors[f, 1])
                j1y = px - anchors[f, 0]
                if distal:
                    j2x = -(py - elbows[f, 1])
                    j2y = px - elbows[f, 0]
                else:
                    j2x = 0.0
                    j2y = 0.0
                jf1[c, 0] = j1x
                jf1[c, 1] = j1y
                jf2[c, 0] = j2x
                jf2[c, 1] = j2y
                an1 = j1x * nx + j1y * ny
                an2 = j2x * nx + j2y * ny
                at1 = j1x * tx + j1y * ty
                at2 = j2x * tx + j2y * ty
                a_n[c, 0] = an1
                a_n[c, 1] = an2
                a_t[c, 0] = at1
                a_t[c, 1] = at2
                ia = minv[f, 0]
                ib = minv[f, 1]
                ic = minv[f, 2]
                wn += an1 * (ia * an1 + ib * an2) + an2 * (ib * an1 + ic * an2)
                wt += at1 * (ia * at1 + ib * at2) + at2 * (ib * at1 + ic * at2)
                sfin = -1.0 if c < 6 else 1.0
                fvx = qd[2 * f] * j1x + qd[2 * f + 1] * j2x
                fvy = qd[2 * f] * j1y + qd[2 * f + 1] * j2y
                vnx += sfin * fvx
                vny += sfin * fvy
            if wn < 1.0e-9:
                act[c] = 0
                continue
            w_n[c] = wn
            w_t[c] = wt if wt > 1.0e-9 else 1.0e-9
            vn_pre = vnx * nx + vny * ny
            if gap[c] > 0.0:
                v_tgt[c] = -gap[c] / dt
            elif vn_pre < -rest_threshold:
                v_tgt[c] = -rest * vn_pre
            else:
                v_tgt[c] = 0.0

        # warm start persisting contacts (object-table slots share features)
        for c in range(NUM_SLOTS):
            if act[c] == 0:
                continue
            ln = 0.0
            lt = 0.0
            if c == 6 or c == 7:
                for cc in range(6, 8):
                    if warm_feat[cc] == ft[c]:
                        ln = warm_lam[cc, 0]
                        lt = warm_lam[cc, 1]
                        break
            elif warm_feat[c] == ft[c]:
                ln = warm_lam[c, 0]
                lt = warm_lam[c, 1]
            if ln != 0.0 or lt != 0.0:
                lam_n[c] = ln
                lam_t[c] = lt
                nx = nrm[c, 0]
                ny = nrm[c, 1]
                ix = ln * nx + lt * (-ny)
                iy = ln * ny + lt * nx
                f, _distal = _slot_finger(c)
                if c < 8:
                    vel[0] += ix * inv_m
                    vel[1] += iy * inv_m
                    vel[2] += (rr[c, 0] * iy - rr[c, 1] * ix) * inv_i
                if f >= 0:
                    sfin = -1.0 if c < 6 else 1.0
                    g1 = jf1[c, 0] * ix + jf1[c, 1] * iy
                    g2 = jf2[c, 0] * ix + jf2[c, 1] * iy
                    ia = minv[f, 0]
                    ib = minv[f, 1]
                    ic = minv[f, 2]
                    qd[2 * f] += sfin * (ia * g1 + ib * g2)
                    qd[2 * f + 1] += sfin * (ib * g1 + ic * g2)

        # projected Gauss-Seidel on velocities
        for _it in range(n_iters):
            for c in range(NUM_SLOTS):
                if act[c] == 0:
                    continue
                f, _distal = _slot_finger(c)
                nx = nrm[c, 0]
                ny = nrm[c, 1]
                tx = -ny
                ty = nx
                sfin = -1.0 if c < 6 else 1.0
                vx = 0.0
                vy = 0.0
                if c < 8:
                    vx += vel[0] - vel[2] * rr[c, 1]
                    vy += vel[1] + vel[2] * rr[c, 0]
                if f >= 0:
                    vx += sfin * (qd[2 * f] * jf1[c, 0] + qd[2 * f + 1] * jf2[c, 0])
                    vy += sfin * (qd[2 * f] * jf1[c, 1] + qd[2 * f + 1] * jf2[c, 1])
                vn = vx * nx + vy * ny
                new_n = lam_n[c] - (vn - v_tgt[c]) / w_n[c]
                if new_n < 0.0:
                    new_n = 0.0
                dn = new_n - lam_n[c]
                lam_n[c] = new_n
                if dn != 0.0:
                    ix = dn * nx
                    iy = dn * ny
                    if c < 8:
                        vel[0] += ix * inv_m
                        vel[1] += iy * inv_m
                        vel[2] += (rr[c, 0] * iy - rr[c, 1] * ix) * inv_i
                    if f >= 0:
                        g1 = a_n[c, 0] * dn
                        g2 = a_n[c, 1] * dn
                        qd[2 * f] += sfin * (minv[f, 0] * g1 + minv[f, 1] * g2)
                        qd[2 * f + 1] += sfin * (minv[f, 1] * g1 + minv[f, 2] * g2)

                # friction row against the updated velocities
                vx = 0.0
                vy = 0.0
                if c < 8:
                    vx += vel[0] - vel[2] * rr[c, 1]
                    vy += vel[1] + vel[2] * rr[c, 0]
                if f >= 0:
                    vx += sfin * (qd[2 * f] * jf1[c, 0] + qd[2 * f + 1] * jf2[c, 0])
                    vy += sfin * (qd[2 * f] * jf1[c, 1] + qd[2 * f + 1] * jf2[c, 1])
                vt = vx * tx + vy * ty
                hi = mu * lam_n[c]
                new_t = lam_t[c] - vt / w_t[c]
                if new_t > hi:
                    new_t = hi
                elif new_t < -hi:
                    new_t = -hi
                dtl = new_t - lam_t[c]
                lam_t[c] = new_t
                if dtl != 0.0:
                    ix = dtl * tx
                    iy = dtl * ty
                    if c < 8:
                        vel[0] += ix * inv_m
                        vel[1] += iy * inv_m
                        vel[2] += (rr[c, 0] * iy - rr[c, 1] * ix) * inv_i
                    if f >= 0:
                        g1 = a_t[c, 0] * dtl
                        g2 = a_t[c, 1] * dtl
                        qd[2 * f] += sfin * (minv[f, 0] * g1 + minv[f, 1] * g2)
                        qd[2 * f + 1] += sfin * (minv[f, 1] * g1 + minv[f, 2] * g2)

        # store warm-start state for the next substep
        for c in range(NUM_SLOTS):
            if act[c] == 1:
                warm_feat[c] = ft[c]
                warm_lam[c, 0] = lam_n[c]
                warm_lam[c, 1] = lam_t[c]
            else:
                warm_feat[c] = -1
                warm_lam[c, 0] = 0.0
                warm_lam[c, 1] = 0.0

        # integrate
        for j in range(4):
            q[j] += dt * qd[j]
            if q[j] > joint_limit:
                q[j] = joint_limit
                if qd[j] > 0.0:
                    qd[j] = 0.0
            elif q[j] < -joint_limit:
                q[j] = -joint_limit
                if qd[j] < 0.0:
                    qd[j] = 0.0
        pose[0] += dt * vel[0]
        pose[1] += dt * vel[1]
        pose[2] += dt * vel[2]

        # accumulate per-tick impulses and the per-substep audit
        for c in range(NUM_SLOTS):
            if act[c] == 1:
                nx = nrm[c, 0]
                ny = nrm[c, 1]
                tick_lam[c, 0] += lam_n[c]
                tick_lam[c, 1] += lam_t[c]
                tick_imp[c, 0] += lam_n[c] * nx + lam_t[c] * (-ny)
                tick_imp[c, 1] += lam_n[c] * ny + lam_t[c] * nx
            audit_lam[s, c, 0] = lam_n[c]
            audit_lam[s, c, 1] = lam_t[c]

        # split position correction: re-detect, push out of penetration
        for _pc in range(POS_PASSES):
            _detect(q, pose, anchors, base_angles, link_l, link_radius,
                    tip_radius, verts_body, table_y, margin,
                    act, gap, nrm, cpt, ft, elbows, tips, phis, vw)
            # mass matrices move with q during the passes
            for f in range(2):
                m11, m12, m22, _c1, _c2, _qg1, _qg2 = _arm_dynamics(
                    q[2 * f], q[2 * f + 1], 0.0, 0.0,
                    link_m[0], link_m[1], link_l[0], link_l[1],
                    gravity[0], gravity[1], base_angles[f])
                det = m11 * m22 - m12 * m12
                if det < 1.0e-12:
                    det = 1.0e-12
                minv[f, 0] = m22 / det
                minv[f, 1] = -m12 / det
                minv[f, 2] = m11 / det
            any_pen = False
            for c in range(NUM_SLOTS):
                if act[c] == 0 or gap[c] >= -POS_SLOP:
                    continue
                any_pen = True
                f, distal = _slot_finger(c)
                nx = nrm[c, 0]
                ny = nrm[c, 1]
                px = cpt[c, 0]
                py = cpt[c, 1]
                wn = 0.0
                rx = 0.0
                ry = 0.0
                an1 = 0.0
                an2 = 0.0
                if c < 8:
                    rx = px - pose[0]
                    ry = py - pose[1]
                    cn = rx * ny - ry * nx
                    wn += inv_m + cn * cn * inv_i
                if f >= 0:
                    j1x = -(py - anchors[f, 1])
                    j1y = px - anchors[f, 0]
                    if distal:
                        j2x = -(py - elbows[f, 1])
                        j2y = px - elbows[f, 0]
                    else:
                        j2x = 0.0
                        j2y = 0.0
                    an1 = j1x * nx + j1y * ny
                    an2 = j2x * nx + j2y * ny
                    wn += an1 * (minv[f, 0] * an1 + minv[f, 1] * an2) \
                        + an2 * (minv[f, 1] * an1 + minv[f, 2] * an2)
                if wn < 1.0e-9:
                    continue
                depth = -gap[c] - POS_SLOP
                corr = beta_pos * depth
                if corr > POS_MAX_CORR:
                    corr = POS_MAX_CORR
                p_imp = corr / wn
                if c < 8:
                    pose[0] += p_imp * nx * inv_m
                    pose[1] += p_imp * ny * inv_m
                    pose[2] += p_imp * (rx * ny - ry * nx) * inv_i
                if f >= 0:
                    sfin = -1.0 if c < 6 else 1.0
                    g1 = an1 * p_imp
                    g2 = an2 * p_imp
                    q[2 * f] += sfin * (minv[f, 0] * g1 + minv[f, 1] * g2)
                    q[2 * f + 1] += sfin * (minv[f, 1] * g1 + minv[f, 2] * g2)
            if not any_pen:
                break

        # final detection: audit gaps and observation contact frames
        _detect(q, pose, anchors, base_angles, link_l, link_radius, tip_radius,
                verts_body, table_y, margin,
                act, gap, nrm, cpt, ft, elbows, tips, phis, vw)
        for c in range(NUM_SLOTS):
            audit_gap[s, c] = gap[c] if act[c] == 1 else margin
            if act[c] == 1:
                last_active[c] = 1
                last_point[c, 0] = cpt[c, 0]
                last_point[c, 1] = cpt[c, 1]
                last_normal[c, 0] = nrm[c, 0]
                last_normal[c, 1] = nrm[c, 1]

        # divergence guard
        ok = True
        for j in range(4):
            if not (math.isfinite(q[j]) and math.isfinite(qd[j])):
                ok = False
            elif abs(qd[j]) > MAX_JOINT_SPEED:
                ok = False
        for j in range(3):
            if not (math.isfinite(pose[j]) and math.isfinite(vel[j])):
                ok = False
        if abs(vel[0]) > MAX_SPEED or abs(vel[1]) > MAX_SPEED:
            ok = False
        if abs(vel[2]) > MAX_OMEGA:
            ok = False
        if abs(pose[0]) > MAX_POS or abs(pose[1]) > MAX_POS:
            ok = False
        if not ok:
            return ERR_DIVERGED
    return ERR_OK


@njit(cache=True, nogil=True)
def signed_gaps(q, pose, anchors, base_angles, link_l, link_radius, tip_radius,
                verts_body, table_y, margin, gap_out):
    """Diagnostic: signed gap per slot (margin where no candidate contact)."""
    nv = verts_body.shape[0]
    elbows = np.empty((2, 2))
    tips = np.empty((2, 2))
    phis = np.empty((2, 2))
    vw = np.empty((nv, 2))
    act = np.empty(NUM_SLOTS, dtype=np.int64)
    nrm = np.empty((NUM_SLOTS, 2))
    cpt = np.empty((NUM_SLOTS, 2))
    ft = np.empty(NUM_SLOTS, dtype=np.int64)
    _detect(q, pose, anchors, base_angles, link_l, link_radius, tip_radius,
            verts_body, table_y, margin,
            act, gap_out, nrm, cpt, ft, elbows, tips, phis, vw)
