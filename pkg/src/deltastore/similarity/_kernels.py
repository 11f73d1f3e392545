"""Hot loops of the HNSW index, in numba and pure-numpy flavours.

Vertices are stored as 8-bit codes with a per-vertex scale and minimum and
dequantized on the fly inside the distance computation. Distances are squared
L2 in float64. Ties are broken on vertex id so both flavours walk the graph in
the same order when they compute the same distances.

Adjacency layout: ``links[v, layer, k]`` for ``k < counts[v, layer]``.
"""

import heapq

import numpy as np

from .._jit import njit, pick


# -- numba ------------------------------------------------------------------

@njit
def _dist(q, codes, scales, mins, j):
    s = scales[j]
    m = mins[j]
    acc = 0.0
    for i in range(q.size):
        diff = q[i] - (m + s * codes[j, i])
        acc += diff * diff
    return acc


@njit
def _before(kd, ki, a, b):
    return kd[a] < kd[b] or (kd[a] == kd[b] and ki[a] < ki[b])


@njit
def _swap(kd, ki, a, b):
    kd[a], kd[b] = kd[b], kd[a]
    ki[a], ki[b] = ki[b], ki[a]


@njit
def _heap_push(kd, ki, size, d, i):
    pos = size
    kd[pos] = d
    ki[pos] = i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _before(kd, ki, pos, parent):
            _swap(kd, ki, pos, parent)
            pos = parent
        else:
            break
    return size + 1


@njit
def _heap_pop(kd, ki, size):
    size -= 1
    kd[0] = kd[size]
    ki[0] = ki[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and _before(kd, ki, left + 1, left):
            child = left + 1
        if _before(kd, ki, child, pos):
            _swap(kd, ki, child, pos)
            pos = child
        else:
            break
    return size


@njit
def distances_numba(q, codes, scales, mins, ids):
    out = np.empty(ids.size)
    for k in range(ids.size):
        out[k] = _dist(q, codes, scales, mins, ids[k])
    return out


@njit
def search_layer_numba(q, codes, scales, mins, links, counts, layer, n, entries, ef):
    visited = np.zeros(n, np.bool_)
    cd = np.empty(n + 1)
    ci = np.empty(n + 1, np.int64)
    rd = np.empty(ef + 2)
    ri = np.empty(ef + 2, np.int64)
    nc = 0
    nr = 0
    for j in range(entries.size):
        e = entries[j]
        if visited[e]:
            continue
        visited[e] = True
        d = _dist(q, codes, scales, mins, e)
        nc = _heap_push(cd, ci, nc, d, e)
        nr = _heap_push(rd, ri, nr, -d, -e)
        if nr > ef:
            nr = _heap_pop(rd, ri, nr)
    while nc > 0:
        dc = cd[0]
        c = ci[0]
        if dc > -rd[0] and nr >= ef:
            break
        nc = _heap_pop(cd, ci, nc)
        for k in range(counts[c, layer]):
            nb = links[c, layer, k]
            if visited[nb]:
                continue
            visited[nb] = True
            dn = _dist(q, codes, scales, mins, nb)
            if nr < ef or dn < -rd[0]:
                nc = _heap_push(cd, ci, nc, dn, nb)
                nr = _heap_push(rd, ri, nr, -dn, -nb)
                if nr > ef:
                    nr = _heap_pop(rd, ri, nr)
    out_i = np.empty(nr, np.int64)
    out_d = np.empty(nr)
    for k in range(nr - 1, -1, -1):
        out_d[k] = -rd[0]
        out_i[k] = -ri[0]
        nr = _heap_pop(rd, ri, nr)
    return out_i, out_d


@njit
def select_neighbors_numba(cand_ids, cand_d, m, codes, scales, mins):
    dim = codes.shape[1]
    out = np.empty(m, np.int64)
    buf = np.empty(dim)
    k = 0
    for j in range(cand_ids.size):
        if k >= m:
            break
        e = cand_ids[j]
        for i in range(dim):
            buf[i] = mins[e] + scales[e] * codes[e, i]
        keep = True
        for r in range(k):
            if _dist(buf, codes, scales, mins, out[r]) < cand_d[j]:
                keep = False
                break
        if keep:
            out[k] = e
            k += 1
    return out[:k]


# -- numpy ------------------------------------------------------------------

def distances_numpy(q, codes, scales, mins, ids):
    ids = np.asarray(ids, dtype=np.int64)
    deq = mins[ids, None] + scales[ids, None] * codes[ids]
    diff = q - deq
    return np.einsum("ij,ij->i", diff, diff)


def search_layer_numpy(q, codes, scales, mins, links, counts, layer, n, entries, ef):
    visited = np.zeros(n, np.bool_)
    fresh = [int(e) for e in dict.fromkeys(int(e) for e in entries)]
    for e in fresh:
        visited[e] = True
    dists = distances_numpy(q, codes, scales, mins, fresh) if fresh else []
    candidates = []
    results = []  # (-d, -id): root is the worst kept result
    for e, d in zip(fresh, dists):
        heapq.heappush(candidates, (d, e))
        heapq.heappush(results, (-d, -e))
        if len(results) > ef:
            heapq.heappop(results)
    while candidates:
        dc, c = candidates[0]
        if dc > -results[0][0] and len(results) >= ef:
            break
        heapq.heappop(candidates)
        nbrs = links[c, layer, : counts[c, layer]]
        nbrs = nbrs[~visited[nbrs]]
        if not nbrs.size:
            continue
        visited[nbrs] = True
        for nb, dn in zip(nbrs.tolist(), distances_numpy(q, codes, scales, mins, nbrs)):
            if len(results) < ef or dn < -results[0][0]:
                heapq.heappush(candidates, (dn, nb))
                heapq.heappush(results, (-dn, -nb))
                if len(results) > ef:
                    heapq.heappop(results)
    ordered = sorted((-d, -i) for d, i in results)
    return (np.array([i for _, i in ordered], dtype=np.int64),
            np.array([d for d, _ in ordered], dtype=np.float64))


def select_neighbors_numpy(cand_ids, cand_d, m, codes, scales, mins):
    out = []
    for e, de in zip(np.asarray(cand_ids).tolist(), cand_d):
        if len(out) >= m:
            break
        if out:
            q = mins[e] + scales[e] * codes[e]
            if (distances_numpy(q, codes, scales, mins, out) < de).any():
                continue
        out.append(e)
    return np.array(out, dtype=np.int64)


distances = pick(distances_numba, distances_numpy)
search_layer = pick(search_layer_numba, search_layer_numpy)
select_neighbors = pick(select_neighbors_numba, select_neighbors_numpy)
