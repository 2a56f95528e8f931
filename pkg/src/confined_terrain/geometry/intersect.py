"""Vectorised intersection kernels.

Triangles are passed as ``(T, 3, 3)`` arrays of corner coordinates. Overlap
tests treat touching as overlapping (closed sets).
"""

from __future__ import annotations

import numpy as np

RAY_EPS = 1e-9
# barycentric slack so rays through shared edges cannot slip between triangles
BARY_EPS = 1e-12


def ray_triangles(origins: np.ndarray, dirs: np.ndarray, tris: np.ndarray, eps: float = RAY_EPS) -> np.ndarray:
    """Möller–Trumbore distances, shape ``(R, T)``; ``inf`` where a ray misses.

    Hits with ``t < eps`` are discarded. Distances are in units of ``dirs``.
    """
    o = origins[:, None, :]
    d = dirs[:, None, :]
    v0 = tris[None, :, 0, :]
    e1 = tris[None, :, 1, :] - v0
    e2 = tris[None, :, 2, :] - v0
    p = np.cross(d, e2)
    det = np.einsum("rtk,rtk->rt", np.broadcast_to(e1, p.shape), p)
    ok = np.abs(det) > 1e-14
    inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
    s = o - v0
    u = np.einsum("rtk,rtk->rt", s, p) * inv
    qv = np.cross(s, np.broadcast_to(e1, s.shape))
    v = np.einsum("rtk,rtk->rt", np.broadcast_to(d, qv.shape), qv) * inv
    t = np.einsum("rtk,rtk->rt", np.broadcast_to(e2, qv.shape), qv) * inv
    hit = ok & (u >= -BARY_EPS) & (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS) & (t >= eps)
    return np.where(hit, t, np.inf)


def safe_inverse(dirs: np.ndarray) -> np.ndarray:
    d = np.where(np.abs(dirs) < 1e-300, np.copysign(1e-300, dirs), dirs)
    return 1.0 / d


def ray_aabb(origins: np.ndarray, inv_dirs: np.ndarray, bmin: np.ndarray, bmax: np.ndarray):
    """Slab test; returns ``(t_near, t_far)`` per ray."""
    t1 = (bmin - origins) * inv_dirs
    t2 = (bmax - origins) * inv_dirs
    tn = np.minimum(t1, t2).max(axis=-1)
    tf = np.maximum(t1, t2).min(axis=-1)
    return tn, tf


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=-1)


def tri_aabb_overlap(tris: np.ndarray, centers: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Separating-axis triangle/AABB test (Akenine-Möller), vectorised over pairs.

    ``tris`` is ``(K, 3, 3)``; ``centers`` and ``half`` broadcast to ``(K, 3)``.
    """
    half = np.broadcast_to(np.asarray(half, dtype=np.float64), (len(tris), 3))
    v = tris - np.asarray(centers)[:, None, :]
    result = np.ones(len(tris), dtype=bool)

    # box face normals
    result &= np.all(v.min(axis=1) <= half, axis=1) & np.all(v.max(axis=1) >= -half, axis=1)

    edges = (v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2])
    # triangle normal
    nrm = np.cross(edges[0], edges[1])
    d = np.einsum("kj,kj->k", nrm, v[:, 0])
    r = np.einsum("kj,kj->k", np.abs(nrm), half)
    result &= np.abs(d) <= r

    eye = np.eye(3)
    for e in edges:
        for a in range(3):
            axis = np.cross(eye[a], e)
            p = np.einsum("kj,kij->ki", axis, v)
            r = np.einsum("kj,kj->k", np.abs(axis), half)
            result &= ~((p.min(axis=1) > r) | (p.max(axis=1) < -r))
    return result


def obb_local(points: np.ndarray, center: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """World points into the frame of a box with given center and rotation."""
    return (points - center) @ rotation


def obb_triangles_overlap(center, half_extents, rotation, tris: np.ndarray) -> np.ndarray:
    """Oriented box vs triangles; one bool per triangle."""
    if len(tris) == 0:
        return np.zeros(0, dtype=bool)
    local = obb_local(tris.reshape(-1, 3), center, rotation).reshape(-1, 3, 3)
    return tri_aabb_overlap(local, np.zeros((len(tris), 3)), half_extents)


def obb_obb_overlap(c1, h1, r1, c2, h2, r2, eps: float = 1e-12) -> bool:
    """15-axis separating-axis test between two oriented boxes."""
    rot = r1.T @ r2
    t = r1.T @ (np.asarray(c2) - np.asarray(c1))
    abs_rot = np.abs(rot) + eps
    for i in range(3):
        if abs(t[i]) > h1[i] + abs_rot[i] @ h2:
            return False
    for j in range(3):
        if abs(t @ rot[:, j]) > h1 @ abs_rot[:, j] + h2[j]:
            return False
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            ra = h1[i1] * abs_rot[i2, j] + h1[i2] * abs_rot[i1, j]
            rb = h2[j1] * abs_rot[i, j2] + h2[j2] * abs_rot[i, j1]
            if abs(t[i2] * rot[i1, j] - t[i1] * rot[i2, j]) > ra + rb:
                return False
    return True


def obb_obb_overlap_many(c1: np.ndarray, h1, r1: np.ndarray, c2, h2, r2, eps: float = 1e-12) -> np.ndarray:
    """:func:`obb_obb_overlap` for ``K`` first boxes (``c1 (K,3)``, ``r1 (K,3,3)``) against one box."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    rot = np.einsum("kji,jl->kil", r1, r2)
    t = np.einsum("kji,kj->ki", r1, np.asarray(c2) - c1)
    abs_rot = np.abs(rot) + eps
    sep = np.any(np.abs(t) > h1 + abs_rot @ h2, axis=1)
    tb = np.einsum("ki,kij->kj", t, rot)
    sep |= np.any(np.abs(tb) > np.einsum("i,kij->kj", h1, abs_rot) + h2, axis=1)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            ra = h1[i1] * abs_rot[:, i2, j] + h1[i2] * abs_rot[:, i1, j]
            rb = h2[j1] * abs_rot[:, i, j2] + h2[j2] * abs_rot[:, i, j1]
            sep |= np.abs(t[:, i2] * rot[:, i1, j] - t[:, i1] * rot[:, i2, j]) > ra + rb
    return ~sep
