"""Small 3D toolkit for a cube world.

Quaternions are (w, x, y, z) unit quaternions. Vectors are plain tuples so
they serialize and compare without ceremony. Everything here is dependency
free; callers that want arrays convert at the edge.
"""
from __future__ import annotations

import math
from enum import Enum
from typing import Iterable, Sequence

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def vdot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vnorm(a: Vec3) -> float:
    return math.sqrt(vdot(a, a))


def vnormalize(a: Vec3) -> Vec3:
    n = vnorm(a)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return (a[0] / n, a[1] / n, a[2] / n)


def quat_norm(q: Quat) -> float:
    return math.sqrt(sum(c * c for c in q))


def quat_normalize(q: Quat) -> Quat:
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize the zero quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_mul(p: Quat, q: Quat) -> Quat:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return (
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    )


def quat_conj(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_from_axis_angle(axis: Vec3, angle_rad: float) -> Quat:
    ax = vnormalize(axis)
    half = angle_rad / 2.0
    s = math.sin(half)
    return (math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s)


def rotate(q: Quat, v: Vec3) -> Vec3:
    # q * (0, v) * q^-1 expanded; q must be unit.
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def rotate_inverse(q: Quat, v: Vec3) -> Vec3:
    return rotate(quat_conj(q), v)


class Face(str, Enum):
    """Cube faces, named in the scene frame at identity orientation.

    FRONT is +x (toward the camera side), LEFT is +y, TOP is +z.
    """

    TOP = "TOP"
    BOTTOM = "BOTTOM"
    FRONT = "FRONT"
    BACK = "BACK"
    LEFT = "LEFT"
    RIGHT = "RIGHT"


FACE_NORMALS: dict[Face, Vec3] = {
    Face.TOP: (0.0, 0.0, 1.0),
    Face.BOTTOM: (0.0, 0.0, -1.0),
    Face.FRONT: (1.0, 0.0, 0.0),
    Face.BACK: (-1.0, 0.0, 0.0),
    Face.LEFT: (0.0, 1.0, 0.0),
    Face.RIGHT: (0.0, -1.0, 0.0),
}

# The glyph of a labeled cube is painted on the local TOP face with its
# upright direction along local -x, so an identity-oriented cube reads
# correctly from the default camera on the +x side.
GLYPH_FACE = Face.TOP
GLYPH_UP_LOCAL: Vec3 = (-1.0, 0.0, 0.0)


def face_normal_world(q: Quat, face: Face) -> Vec3:
    return rotate(q, FACE_NORMALS[face])


def glyph_up_world(q: Quat) -> Vec3:
    return rotate(q, GLYPH_UP_LOCAL)


def canonical_upright(normal_world: Vec3) -> Vec3:
    """Reference glyph-up direction for a face with the given world normal.

    Horizontal faces read top-edge-away-from-camera (-x); vertical faces
    read top-edge-up (+z projected into the face plane).
    """
    nz = normal_world[2]
    if nz > 0.9:
        return (-1.0, 0.0, 0.0)
    if nz < -0.9:
        return (1.0, 0.0, 0.0)
    up = (0.0, 0.0, 1.0)
    proj = vsub(up, vscale(normal_world, vdot(up, normal_world)))
    return vnormalize(proj)


def _cube_rotations() -> tuple[Quat, ...]:
    """All 24 orientation-preserving symmetries of the cube as quaternions."""
    quarter = math.pi / 2.0
    gens = [
        quat_from_axis_angle((1.0, 0.0, 0.0), quarter),
        quat_from_axis_angle((0.0, 1.0, 0.0), quarter),
        quat_from_axis_angle((0.0, 0.0, 1.0), quarter),
    ]

    def key(q: Quat) -> tuple:
        basis = [rotate(q, v) for v in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        return tuple(round(c) for v in basis for c in v)

    seen: dict[tuple, Quat] = {key(IDENTITY_QUAT): IDENTITY_QUAT}
    frontier = [IDENTITY_QUAT]
    while frontier:
        nxt = []
        for q in frontier:
            for g in gens:
                cand = quat_normalize(quat_mul(g, q))
                k = key(cand)
                if k not in seen:
                    seen[k] = cand
                    nxt.append(cand)
        frontier = nxt
    rots = tuple(sorted(seen.values()))
    if len(rots) != 24:
        raise AssertionError(f"expected 24 cube rotations, got {len(rots)}")
    return rots


CUBE_ROTATIONS: tuple[Quat, ...] = _cube_rotations()


# ---------------------------------------------------------------------------
# 2D hulls for support-contact tests.
# ---------------------------------------------------------------------------

Point2 = tuple[float, float]


def convex_hull_2d(points: Iterable[Point2]) -> list[Point2]:
    """Andrew monotone chain. Returns hull vertices in CCW order."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o: Point2, a: Point2, b: Point2) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Point2] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point2] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def point_in_convex_hull(point: Point2, hull: Sequence[Point2], eps: float = 1e-9) -> bool:
    """Containment test including the boundary."""
    if not hull:
        return False
    if len(hull) == 1:
        return abs(point[0] - hull[0][0]) <= eps and abs(point[1] - hull[0][1]) <= eps
    if len(hull) == 2:
        (x1, y1), (x2, y2) = hull
        px, py = point
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if abs(cross) > eps:
            return False
        lo_x, hi_x = min(x1, x2) - eps, max(x1, x2) + eps
        lo_y, hi_y = min(y1, y2) - eps, max(y1, y2) + eps
        return lo_x <= px <= hi_x and lo_y <= py <= hi_y
    for i in range(len(hull)):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % len(hull)]
        cross = (bx - ax) * (point[1] - ay) - (by - ay) * (point[0] - ax)
        if cross < -eps:
            return False
    return True


def rect_overlap_1d(lo1: float, hi1: float, lo2: float, hi2: float) -> float:
    return max(0.0, min(hi1, hi2) - max(lo1, lo2))


# ---------------------------------------------------------------------------
# Segment vs oriented box, slab method.
# ---------------------------------------------------------------------------


def segment_box_chord(
    p0: Vec3,
    p1: Vec3,
    center: Vec3,
    half_extent: float,
    orientation: Quat = IDENTITY_QUAT,
) -> float:
    """Length of the segment portion inside the box (0.0 when disjoint).

    The segment runs p0 -> p1; the box is a cube of the given half extent
    at `center` with `orientation`. Tangential grazing yields chord 0.
    """
    rel0 = rotate_inverse(orientation, vsub(p0, center))
    rel1 = rotate_inverse(orientation, vsub(p1, center))
    d = vsub(rel1, rel0)
    tmin, tmax = 0.0, 1.0
    for axis in range(3):
        o, dd = rel0[axis], d[axis]
        lo, hi = -half_extent, half_extent
        if abs(dd) < 1e-15:
            # sliding exactly in a face plane is tangency, not interior
            if o <= lo or o >= hi:
                return 0.0
            continue
        t1 = (lo - o) / dd
        t2 = (hi - o) / dd
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
        if tmin >= tmax:
            return 0.0
    seg_len = vnorm(vsub(p1, p0))
    return max(0.0, (tmax - tmin) * seg_len)
