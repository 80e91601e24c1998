"""Independent reference implementations used to check the library.

Everything here is written with plain loops and no spatial index, so it
shares no code path with the implementations under test.
"""

import itertools

import numpy as np

OFFSETS_26 = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def components_26(mask: np.ndarray, min_size: int = 1) -> list:
    """26-connected components of a boolean volume as sorted lists of x-fastest linear indices,
    ordered by size descending then smallest index."""
    nx, ny, nz = mask.shape
    lin = lambda x, y, z: x + nx * (y + ny * z)  # noqa: E731
    uf = UnionFind(mask.size)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not mask[x, y, z]:
                    continue
                for dx, dy, dz in OFFSETS_26:
                    X, Y, Z = x + dx, y + dy, z + dz
                    if 0 <= X < nx and 0 <= Y < ny and 0 <= Z < nz and mask[X, Y, Z]:
                        uf.union(lin(x, y, z), lin(X, Y, Z))
    groups = {}
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if mask[x, y, z]:
                    i = lin(x, y, z)
                    groups.setdefault(uf.find(i), []).append(i)
    comps = [sorted(g) for g in groups.values() if len(g) >= min_size]
    comps.sort(key=lambda g: (-len(g), g[0]))
    return comps


def _nearest_sq(p, Q):
    best, arg = float("inf"), -1
    for j in range(len(Q)):
        d = 0.0
        for k in range(3):
            diff = p[k] - Q[j][k]
            d += diff * diff
        if d < best:
            best, arg = d, j
    return best, arg


def chamfer_brute(P, Q) -> float:
    fwd = sum(_nearest_sq(p, Q)[0] for p in P) / len(P)
    bwd = sum(_nearest_sq(q, P)[0] for q in Q) / len(Q)
    return fwd + bwd


def f1_brute(P, Q, tau) -> float:
    prec = sum(_nearest_sq(p, Q)[0] ** 0.5 <= tau for p in P) / len(P)
    rec = sum(_nearest_sq(q, P)[0] ** 0.5 <= tau for q in Q) / len(Q)
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


def nc_brute(P, nP, Q, nQ) -> float:
    def side(A, nA, B, nB):
        total = 0.0
        for i in range(len(A)):
            j = _nearest_sq(A[i], B)[1]
            total += abs(sum(nA[i][k] * nB[j][k] for k in range(3)))
        return total / len(A)
    return 0.5 * (side(P, nP, Q, nQ) + side(Q, nQ, P, nP))


def threshold_sequence_reference(t1, alpha, floor) -> list:
    out = [t1]
    while abs(alpha * out[-1]) >= floor:
        out.append(alpha * out[-1])
    return out


def box_overlap_ratio(lo_a, hi_a, lo_b, hi_b) -> float:
    inter = np.prod(np.clip(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b), 0, None))
    va, vb = np.prod(np.subtract(hi_a, lo_a)), np.prod(np.subtract(hi_b, lo_b))
    return float(inter / (va + vb - inter))
