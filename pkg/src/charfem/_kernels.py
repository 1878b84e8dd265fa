"""Numba kernels for point location, clipping and transport assembly.

Everything here works on plain arrays; the wrapping modules own validation
and the object API. Status codes returned by the assembly kernels:

    0  ok
    1  image of an element escapes the unit square beyond tolerance
    2  foot map not invertible on an element
    3  clipped polygons fail to partition an element
    4  point location failed
"""

import numpy as np
from numba import njit

# element kind codes shared with fem.ElementPair
KIND_P2 = 0
KIND_MINI = 1

# containment tolerance for barycentric coordinates
LAM_TOL = 1e-11


@njit(cache=True, inline="always")
def vel_basis(kind, l1, l2, l3, out):
    """Scalar velocity shape functions at a barycentric point; returns count."""
    if kind == KIND_P2:
        out[0] = l1 * (2.0 * l1 - 1.0)
        out[1] = l2 * (2.0 * l2 - 1.0)
        out[2] = l3 * (2.0 * l3 - 1.0)
        out[3] = 4.0 * l2 * l3
        out[4] = 4.0 * l3 * l1
        out[5] = 4.0 * l1 * l2
        return 6
    out[0] = l1
    out[1] = l2
    out[2] = l3
    out[3] = 27.0 * l1 * l2 * l3
    return 4


@njit(cache=True)
def locate_walk(v0, tinv, neighbor, px, py, start, lam_tol, max_steps):
    """Visibility walk; returns element id, -1 if it exits, -2 on a cycle."""
    t = start
    for _ in range(max_steps):
        dx = px - v0[t, 0]
        dy = py - v0[t, 1]
        l2 = tinv[t, 0, 0] * dx + tinv[t, 0, 1] * dy
        l3 = tinv[t, 1, 0] * dx + tinv[t, 1, 1] * dy
        l1 = 1.0 - l2 - l3
        if l1 >= -lam_tol and l2 >= -lam_tol and l3 >= -lam_tol:
            return t
        k = 0
        lmin = l1
        if l2 < lmin:
            k = 1
            lmin = l2
        if l3 < lmin:
            k = 2
            lmin = l3
        nb = neighbor[t, k]
        if nb < 0:
            return -1
        t = nb
    return -2


@njit(cache=True)
def locate_brute(v0, tinv, px, py, lam_tol):
    """Scan all elements; returns the lowest containing id or -1."""
    nt = v0.shape[0]
    for t in range(nt):
        dx = px - v0[t, 0]
        dy = py - v0[t, 1]
        l2 = tinv[t, 0, 0] * dx + tinv[t, 0, 1] * dy
        l3 = tinv[t, 1, 0] * dx + tinv[t, 1, 1] * dy
        l1 = 1.0 - l2 - l3
        if l1 >= -lam_tol and l2 >= -lam_tol and l3 >= -lam_tol:
            return t
    return -1


@njit(cache=True)
def locate_robust(v0, tinv, neighbor, px, py, start, lam_tol):
    t = locate_walk(v0, tinv, neighbor, px, py, start, lam_tol, v0.shape[0] + 8)
    if t < 0:
        t = locate_brute(v0, tinv, px, py, lam_tol)
    return t


@njit(cache=True)
def locate_many(v0, tinv, neighbor, points, lam_tol):
    """Locate a batch of points, walking from the previous hit."""
    n = points.shape[0]
    out = np.empty(n, np.int64)
    start = 0
    for i in range(n):
        t = locate_robust(v0, tinv, neighbor, points[i, 0], points[i, 1], start, lam_tol)
        out[i] = t
        if t >= 0:
            start = t
    return out


@njit(cache=True, inline="always")
def _halfplane_clip(src, nsrc, ax, ay, bx, by, dst):
    """Keep the part of convex polygon ``src`` left of the directed line a->b."""
    ex = bx - ax
    ey = by - ay
    nout = 0
    if nsrc == 0:
        return 0
    sx = src[nsrc - 1, 0]
    sy = src[nsrc - 1, 1]
    ds = ex * (sy - ay) - ey * (sx - ax)
    for i in range(nsrc):
        px = src[i, 0]
        py = src[i, 1]
        dp = ex * (py - ay) - ey * (px - ax)
        if dp >= 0.0:
            if ds < 0.0:
                f = ds / (ds - dp)
                dst[nout, 0] = sx + f * (px - sx)
                dst[nout, 1] = sy + f * (py - sy)
                nout += 1
            dst[nout, 0] = px
            dst[nout, 1] = py
            nout += 1
        elif ds >= 0.0:
            f = ds / (ds - dp)
            dst[nout, 0] = sx + f * (px - sx)
            dst[nout, 1] = sy + f * (py - sy)
            nout += 1
        sx = px
        sy = py
        ds = dp
    return nout


@njit(cache=True)
def clip_triangle_triangle(subject, clipper, buf_a, buf_b, dedup_tol):
    """Intersection of two CCW triangles via successive half-plane clipping.

    Writes the result polygon into ``buf_a`` and returns its vertex count
    (after merging vertices closer than ``dedup_tol``).
    """
    for i in range(3):
        buf_a[i, 0] = subject[i, 0]
        buf_a[i, 1] = subject[i, 1]
    n = 3
    for e in range(3):
        ax = clipper[e, 0]
        ay = clipper[e, 1]
        j = e + 1
        if j == 3:
            j = 0
        n = _halfplane_clip(buf_a, n, ax, ay, clipper[j, 0], clipper[j, 1], buf_b)
        for i in range(n):
            buf_a[i, 0] = buf_b[i, 0]
            buf_a[i, 1] = buf_b[i, 1]
        if n == 0:
            return 0
    # merge duplicate consecutive vertices
    m = 0
    for i in range(n):
        j = (i + 1) % n
        dx = buf_a[j, 0] - buf_a[i, 0]
        dy = buf_a[j, 1] - buf_a[i, 1]
        if dx * dx + dy * dy > dedup_tol * dedup_tol:
            buf_b[m, 0] = buf_a[i, 0]
            buf_b[m, 1] = buf_a[i, 1]
            m += 1
    for i in range(m):
        buf_a[i, 0] = buf_b[i, 0]
        buf_a[i, 1] = buf_b[i, 1]
    return m


@njit(cache=True, inline="always")
def poly_area(pts, n):
    s = 0.0
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        s += pts[i, 0] * pts[j, 1] - pts[j, 0] * pts[i, 1]
    return 0.5 * s


@njit(cache=True)
def assemble_composite_exact_kernel(
    verts,
    tris,
    neighbor,
    v0,
    tinv,
    areas,
    tri_bbox,
    vel_dofs,
    nscalar,
    ucoef,
    wvert,
    dt,
    qb,
    qw,
    kind,
    domain_tol,
    part_tol,
):
    """r_i = integral of (u_prev o X1(w)) . phi_i, exactly, per source element.

    ``tri_bbox`` rows are (xlo, ylo, xhi, yhi). Returns
    (r, status, bad_element, worst_partition_defect).
    """
    nt = tris.shape[0]
    nl = vel_dofs.shape[1]
    nq = qw.shape[0]
    r = np.zeros(2 * nscalar)
    visited = np.full(nt, -1, np.int64)
    queue = np.empty(nt, np.int64)
    buf_a = np.empty((16, 2))
    buf_b = np.empty((16, 2))
    subject = np.empty((3, 2))
    pre = np.empty((3, 2))
    img = np.empty((3, 2))
    vals0 = np.empty(8)
    vals1 = np.empty(8)
    seed = 0
    worst_defect = 0.0

    for k0 in range(nt):
        i0 = tris[k0, 0]
        i1 = tris[k0, 1]
        i2 = tris[k0, 2]
        ax = verts[i0, 0]
        ay = verts[i0, 1]
        bx = verts[i1, 0]
        by = verts[i1, 1]
        cx = verts[i2, 0]
        cy = verts[i2, 1]
        # vertex images under the foot map
        img[0, 0] = ax - dt * wvert[i0, 0]
        img[0, 1] = ay - dt * wvert[i0, 1]
        img[1, 0] = bx - dt * wvert[i1, 0]
        img[1, 1] = by - dt * wvert[i1, 1]
        img[2, 0] = cx - dt * wvert[i2, 0]
        img[2, 1] = cy - dt * wvert[i2, 1]
        for i in range(3):
            if (
                img[i, 0] < -domain_tol
                or img[i, 0] > 1.0 + domain_tol
                or img[i, 1] < -domain_tol
                or img[i, 1] > 1.0 + domain_tol
            ):
                return r, 1, k0, worst_defect
        # affine map F(x) = M x + c agreeing with the images at the vertices
        m00 = (img[1, 0] - img[0, 0]) * tinv[k0, 0, 0] + (img[2, 0] - img[0, 0]) * tinv[k0, 1, 0]
        m01 = (img[1, 0] - img[0, 0]) * tinv[k0, 0, 1] + (img[2, 0] - img[0, 0]) * tinv[k0, 1, 1]
        m10 = (img[1, 1] - img[0, 1]) * tinv[k0, 0, 0] + (img[2, 1] - img[0, 1]) * tinv[k0, 1, 0]
        m11 = (img[1, 1] - img[0, 1]) * tinv[k0, 0, 1] + (img[2, 1] - img[0, 1]) * tinv[k0, 1, 1]
        c0 = img[0, 0] - m00 * ax - m01 * ay
        c1 = img[0, 1] - m10 * ax - m11 * ay
        det = m00 * m11 - m01 * m10
        if abs(det) <= 1e-14:
            return r, 2, k0, worst_defect
        w00 = m11 / det
        w01 = -m01 / det
        w10 = -m10 / det
        w11 = m00 / det

        # bounding box of the image, with a small margin
        xlo = min(img[0, 0], min(img[1, 0], img[2, 0])) - 1e-12
        xhi = max(img[0, 0], max(img[1, 0], img[2, 0])) + 1e-12
        ylo = min(img[0, 1], min(img[1, 1], img[2, 1])) - 1e-12
        yhi = max(img[0, 1], max(img[1, 1], img[2, 1])) + 1e-12

        # seed element: locate the image of the centroid
        gx = (img[0, 0] + img[1, 0] + img[2, 0]) / 3.0
        gy = (img[0, 1] + img[1, 1] + img[2, 1]) / 3.0
        gx = min(max(gx, 0.0), 1.0)
        gy = min(max(gy, 0.0), 1.0)
        t_seed = locate_robust(v0, tinv, neighbor, gx, gy, seed, LAM_TOL)
        if t_seed < 0:
            return r, 4, k0, worst_defect
        seed = t_seed

        area_k0 = areas[k0]
        diam = max(
            max(abs(bx - ax), abs(by - ay)),
            max(max(abs(cx - ax), abs(cy - ay)), max(abs(cx - bx), abs(cy - by))),
        )
        dedup_tol = 1e-13 * diam
        drop_tol = 1e-14 * area_k0
        area_sum = 0.0

        # BFS over candidate targets whose bbox meets the image bbox
        head = 0
        tail = 0
        queue[tail] = t_seed
        tail += 1
        visited[t_seed] = k0
        while head < tail:
            k1 = queue[head]
            head += 1
            if (
                tri_bbox[k1, 0] > xhi
                or tri_bbox[k1, 1] > yhi
                or tri_bbox[k1, 2] < xlo
                or tri_bbox[k1, 3] < ylo
            ):
                continue
            for e in range(3):
                nb = neighbor[k1, e]
                if nb >= 0 and visited[nb] != k0:
                    visited[nb] = k0
                    queue[tail] = nb
                    tail += 1
            # preimage of the target triangle under F
            for i in range(3):
                px = verts[tris[k1, i], 0] - c0
                py = verts[tris[k1, i], 1] - c1
                pre[i, 0] = w00 * px + w01 * py
                pre[i, 1] = w10 * px + w11 * py
            if det < 0.0:
                tx = pre[1, 0]
                ty = pre[1, 1]
                pre[1, 0] = pre[2, 0]
                pre[1, 1] = pre[2, 1]
                pre[2, 0] = tx
                pre[2, 1] = ty
            subject[0, 0] = ax
            subject[0, 1] = ay
            subject[1, 0] = bx
            subject[1, 1] = by
            subject[2, 0] = cx
            subject[2, 1] = cy
            n = clip_triangle_triangle(subject, pre, buf_a, buf_b, dedup_tol)
            if n < 3:
                continue
            ar = poly_area(buf_a, n)
            if ar < drop_tol:
                continue
            area_sum += ar
            # fan quadrature from the polygon centroid
            fx = 0.0
            fy = 0.0
            for i in range(n):
                fx += buf_a[i, 0]
                fy += buf_a[i, 1]
            fx /= n
            fy /= n
            for i in range(n):
                j = i + 1
                if j == n:
                    j = 0
                p1x = buf_a[i, 0]
                p1y = buf_a[i, 1]
                p2x = buf_a[j, 0]
                p2y = buf_a[j, 1]
                area_s = 0.5 * ((p1x - fx) * (p2y - fy) - (p2x - fx) * (p1y - fy))
                if area_s <= 0.0:
                    continue
                for q in range(nq):
                    xq = qb[q, 0] * fx + qb[q, 1] * p1x + qb[q, 2] * p2x
                    yq = qb[q, 0] * fy + qb[q, 1] * p1y + qb[q, 2] * p2y
                    # foot point inside the target element
                    ux = m00 * xq + m01 * yq + c0
                    uy = m10 * xq + m11 * yq + c1
                    dx = ux - v0[k1, 0]
                    dy = uy - v0[k1, 1]
                    t2 = tinv[k1, 0, 0] * dx + tinv[k1, 0, 1] * dy
                    t3 = tinv[k1, 1, 0] * dx + tinv[k1, 1, 1] * dy
                    vel_basis(kind, 1.0 - t2 - t3, t2, t3, vals1)
                    uval0 = 0.0
                    uval1 = 0.0
                    for l in range(nl):
                        g = vel_dofs[k1, l]
                        uval0 += vals1[l] * ucoef[g]
                        uval1 += vals1[l] * ucoef[nscalar + g]
                    # test functions on the source element
                    dx = xq - v0[k0, 0]
                    dy = yq - v0[k0, 1]
                    s2 = tinv[k0, 0, 0] * dx + tinv[k0, 0, 1] * dy
                    s3 = tinv[k0, 1, 0] * dx + tinv[k0, 1, 1] * dy
                    vel_basis(kind, 1.0 - s2 - s3, s2, s3, vals0)
                    wq = area_s * qw[q]
                    for l in range(nl):
                        g = vel_dofs[k0, l]
                        r[g] += wq * uval0 * vals0[l]
                        r[nscalar + g] += wq * uval1 * vals0[l]
        defect = abs(area_sum - area_k0)
        if defect > worst_defect:
            worst_defect = defect
        if defect > part_tol:
            return r, 3, k0, worst_defect
    return r, 0, -1, worst_defect


@njit(cache=True)
def assemble_composite_quadrature_kernel(
    verts,
    tris,
    neighbor,
    v0,
    tinv,
    areas,
    vel_dofs,
    nscalar,
    ucoef,
    dt,
    qbary,
    basis_at_q,
    qw,
    kind,
):
    """Transport vector of the conventional scheme via a fixed rule.

    ``basis_at_q`` holds the velocity shape functions at the rule points,
    shape (nq, nl). Feet leaving the unit square are clamped onto its
    boundary before the upstream velocity is evaluated.
    Returns (r, status, bad_element).
    """
    nt = tris.shape[0]
    nl = vel_dofs.shape[1]
    nq = qw.shape[0]
    r = np.zeros(2 * nscalar)
    vals1 = np.empty(8)
    for k in range(nt):
        i0 = tris[k, 0]
        i1 = tris[k, 1]
        i2 = tris[k, 2]
        x0 = verts[i0, 0]
        y0 = verts[i0, 1]
        x1 = verts[i1, 0]
        y1 = verts[i1, 1]
        x2 = verts[i2, 0]
        y2 = verts[i2, 1]
        area_k = areas[k]
        start = k
        for q in range(nq):
            xq = qbary[q, 0] * x0 + qbary[q, 1] * x1 + qbary[q, 2] * x2
            yq = qbary[q, 0] * y0 + qbary[q, 1] * y1 + qbary[q, 2] * y2
            # velocity at the rule point from this element
            wx = 0.0
            wy = 0.0
            for l in range(nl):
                g = vel_dofs[k, l]
                wx += basis_at_q[q, l] * ucoef[g]
                wy += basis_at_q[q, l] * ucoef[nscalar + g]
            fx = xq - dt * wx
            fy = yq - dt * wy
            if fx < 0.0:
                fx = 0.0
            elif fx > 1.0:
                fx = 1.0
            if fy < 0.0:
                fy = 0.0
            elif fy > 1.0:
                fy = 1.0
            t1 = locate_robust(v0, tinv, neighbor, fx, fy, start, LAM_TOL)
            if t1 < 0:
                return r, 4, k
            start = t1
            dx = fx - v0[t1, 0]
            dy = fy - v0[t1, 1]
            t2 = tinv[t1, 0, 0] * dx + tinv[t1, 0, 1] * dy
            t3 = tinv[t1, 1, 0] * dx + tinv[t1, 1, 1] * dy
            vel_basis(kind, 1.0 - t2 - t3, t2, t3, vals1)
            uval0 = 0.0
            uval1 = 0.0
            for l in range(nl):
                g = vel_dofs[t1, l]
                uval0 += vals1[l] * ucoef[g]
                uval1 += vals1[l] * ucoef[nscalar + g]
            wq = area_k * qw[q]
            for l in range(nl):
                g = vel_dofs[k, l]
                r[g] += wq * uval0 * basis_at_q[q, l]
                r[nscalar + g] += wq * uval1 * basis_at_q[q, l]
    return r, 0, -1
