"""Bounding volume hierarchy over triangles with packet ray traversal."""

from __future__ import annotations

import numpy as np

from .intersect import ray_aabb, ray_triangles, safe_inverse


class BVH:
    """Median-split BVH stored as flat node arrays.

    Node ``k`` covers ``order[start[k] : start[k] + count[k]]`` when it is a
    leaf (``left[k] == -1``); inner nodes have children ``left[k]`` and
    ``right[k]``.
    """

    def __init__(self, tris: np.ndarray, leaf_size: int = 4):
        self.tris = np.ascontiguousarray(tris, dtype=np.float64).reshape(-1, 3, 3)
        n = len(self.tris)
        self.leaf_size = max(1, int(leaf_size))
        self.order = np.arange(n)
        tri_min = self.tris.min(axis=1)
        tri_max = self.tris.max(axis=1)
        centroids = self.tris.mean(axis=1)
        bmin, bmax, left, right, start, count = [], [], [], [], [], []

        def new_node(lo, hi):
            idx = self.order[lo:hi]
            bmin.append(tri_min[idx].min(axis=0) if hi > lo else np.zeros(3))
            bmax.append(tri_max[idx].max(axis=0) if hi > lo else -np.ones(3))
            left.append(-1)
            right.append(-1)
            start.append(lo)
            count.append(hi - lo)
            return len(bmin) - 1

        root = new_node(0, n)
        stack = [(root, 0, n)]
        while stack:
            node, lo, hi = stack.pop()
            if hi - lo <= self.leaf_size:
                continue
            idx = self.order[lo:hi]
            c = centroids[idx]
            extent = c.max(axis=0) - c.min(axis=0)
            axis = int(np.argmax(extent))
            if extent[axis] <= 0:
                continue
            mid = (hi - lo) // 2
            part = np.argpartition(c[:, axis], mid, kind="introselect")
            self.order[lo:hi] = idx[part]
            l_node = new_node(lo, lo + mid)
            r_node = new_node(lo + mid, hi)
            left[node], right[node] = l_node, r_node
            count[node] = 0
            stack.append((r_node, lo + mid, hi))
            stack.append((l_node, lo, lo + mid))

        self.bmin = np.array(bmin).reshape(-1, 3)
        self.bmax = np.array(bmax).reshape(-1, 3)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.tris)

    @property
    def node_count(self) -> int:
        return len(self.left)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray, t_max) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit per ray: ``(t, triangle index)``; ``(inf, -1)`` on miss."""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        nr = len(origins)
        limit = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (nr,)).copy()
        best_t = np.full(nr, np.inf)
        best_i = np.full(nr, -1, dtype=np.int64)
        if nr == 0 or len(self.tris) == 0:
            return best_t, best_i
        inv = safe_inverse(dirs)
        bound = limit.copy()
        stack = [(0, np.arange(nr))]
        while stack:
            node, rays = stack.pop()
            tn, tf = ray_aabb(origins[rays], inv[rays], self.bmin[node], self.bmax[node])
            keep = (tn <= tf) & (tf >= 0.0) & (tn <= bound[rays])
            rays = rays[keep]
            if rays.size == 0:
                continue
            if self.left[node] < 0:
                tri_idx = self.order[self.start[node]: self.start[node] + self.count[node]]
                t = ray_triangles(origins[rays], dirs[rays], self.tris[tri_idx])
                k = np.argmin(t, axis=1)
                tk = t[np.arange(len(rays)), k]
                better = (tk <= bound[rays]) & (tk < best_t[rays])
                upd = rays[better]
                best_t[upd] = tk[better]
                best_i[upd] = tri_idx[k[better]]
                bound[upd] = tk[better]
            else:
                stack.append((self.right[node], rays))
                stack.append((self.left[node], rays))
        return best_t, best_i


def brute_force_intersect(tris: np.ndarray, origins: np.ndarray, dirs: np.ndarray, t_max,
                          chunk: int = 1 << 21) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest hit over all triangles, same contract as :meth:`BVH.intersect`."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    nr = len(origins)
    limit = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (nr,))
    best_t = np.full(nr, np.inf)
    best_i = np.full(nr, -1, dtype=np.int64)
    if nr == 0 or len(tris) == 0:
        return best_t, best_i
    step = max(1, chunk // max(1, len(tris)))
    for a in range(0, nr, step):
        t = ray_triangles(origins[a:a + step], dirs[a:a + step], tris)
        k = np.argmin(t, axis=1)
        tk = t[np.arange(len(k)), k]
        ok = tk <= limit[a:a + step]
        best_t[a:a + step] = np.where(ok, tk, np.inf)
        best_i[a:a + step] = np.where(ok, k, -1)
    return best_t, best_i
