"""numba kernels for the HNSW graph.

Storage is flat arrays so the hot loops compile to nopython code:

* ``vecs[n]``            float32 vector of node ``n``
* ``links0[n, :n0[n]]``  layer-0 neighbours (capacity ``2 * M``)
* ``up_off[n]``          first row of node ``n`` in ``links_up`` (-1 if level 0);
  layer ``L >= 1`` lives in row ``up_off[n] + L - 1``
* ``links_up[r, :n_up[r]]`` upper-layer neighbours (capacity ``M``)
"""

import heapq

import numpy as np
from numba import njit


# reassoc lets LLVM vectorise the sum; products are exact in float64, so
# results differ from a sequential sum only in the last few ulps
@njit(cache=True, nogil=True, fastmath={"reassoc"})
def _dist(vecs, q, i):
    acc = 0.0
    v = vecs[i]
    for j in range(q.shape[0]):
        acc += np.float64(v[j]) * np.float64(q[j])
    return 1.0 - acc


@njit(cache=True, nogil=True)
def _pair_dist(vecs, a, b):
    return _dist(vecs, vecs[b], a)


@njit(cache=True, nogil=True)
def _neighbours(links0, n0, links_up, n_up, up_off, node, layer):
    if layer == 0:
        return links0[node, : n0[node]]
    row = up_off[node] + layer - 1
    return links_up[row, : n_up[row]]


@njit(cache=True, nogil=True)
def greedy(vecs, links0, n0, links_up, n_up, up_off, q, ep, ep_dist, layer):
    changed = True
    while changed:
        changed = False
        nb = _neighbours(links0, n0, links_up, n_up, up_off, ep, layer)
        for i in range(nb.shape[0]):
            n = nb[i]
            d = _dist(vecs, q, n)
            if d < ep_dist or (d == ep_dist and n < ep):
                ep = n
                ep_dist = d
                changed = True
    return ep, ep_dist


@njit(cache=True, nogil=True)
def search_layer(vecs, links0, n0, links_up, n_up, up_off, visited, tag,
                 q, entry_d, entry_n, ef, layer):
    """Beam search; returns (dists, ids) sorted ascending by (dist, id)."""
    cand = [(entry_d[0], entry_n[0])]
    res = [(-entry_d[0], -entry_n[0])]
    cand.pop()
    res.pop()
    for i in range(entry_n.shape[0]):
        visited[entry_n[i]] = tag
        heapq.heappush(cand, (entry_d[i], entry_n[i]))
        heapq.heappush(res, (-entry_d[i], -entry_n[i]))
        if len(res) > ef:
            heapq.heappop(res)
    while len(cand) > 0:
        d, c = heapq.heappop(cand)
        if len(res) >= ef and d > -res[0][0]:
            break
        nb = _neighbours(links0, n0, links_up, n_up, up_off, c, layer)
        for i in range(nb.shape[0]):
            n = nb[i]
            if visited[n] == tag:
                continue
            visited[n] = tag
            dn = _dist(vecs, q, n)
            if len(res) < ef:
                heapq.heappush(cand, (dn, n))
                heapq.heappush(res, (-dn, -n))
            elif (-dn, -n) > res[0]:
                heapq.heappush(cand, (dn, n))
                heapq.heapreplace(res, (-dn, -n))
    k = len(res)
    out_d = np.empty(k, dtype=np.float64)
    out_n = np.empty(k, dtype=np.int64)
    for i in range(k - 1, -1, -1):
        d, n = heapq.heappop(res)
        out_d[i] = -d
        out_n[i] = -n
    return out_d, out_n


@njit(cache=True, nogil=True)
def select_neighbours(vecs, cand_d, cand_n, m, out):
    """Diversity heuristic over candidates sorted ascending; fills ``out``
    and returns how many were chosen. Pruned candidates backfill the
    remaining slots in distance order."""
    k = cand_n.shape[0]
    if k <= m:
        for i in range(k):
            out[i] = cand_n[i]
        return k
    kept = 0
    pruned = np.empty(k, dtype=np.int64)
    n_pruned = 0
    for i in range(k):
        if kept >= m:
            break
        ok = True
        for j in range(kept):
            if _pair_dist(vecs, cand_n[i], out[j]) <= cand_d[i]:
                ok = False
                break
        if ok:
            out[kept] = cand_n[i]
            kept += 1
        else:
            pruned[n_pruned] = cand_n[i]
            n_pruned += 1
    for i in range(n_pruned):
        if kept >= m:
            break
        out[kept] = pruned[i]
        kept += 1
    return kept


@njit(cache=True, nogil=True)
def _sort_pairs(ds, ns):
    # stable lexicographic sort on (dist, id)
    order = np.argsort(ns, kind="mergesort")
    ds2 = ds[order]
    ns2 = ns[order]
    order2 = np.argsort(ds2, kind="mergesort")
    return ds2[order2], ns2[order2]


@njit(cache=True, nogil=True)
def _link_back(vecs, links0, n0, links_up, n_up, up_off, node, nb, layer, m_max):
    if layer == 0:
        cur = links0[nb]
        cnt = n0[nb]
    else:
        row = up_off[nb] + layer - 1
        cur = links_up[row]
        cnt = n_up[row]
    if cnt < m_max:
        cur[cnt] = node
        cnt += 1
    else:
        ds = np.empty(cnt + 1, dtype=np.float64)
        ns = np.empty(cnt + 1, dtype=np.int64)
        for i in range(cnt):
            ns[i] = cur[i]
            ds[i] = _pair_dist(vecs, cur[i], nb)
        ns[cnt] = node
        ds[cnt] = _pair_dist(vecs, node, nb)
        ds, ns = _sort_pairs(ds, ns)
        out = np.empty(m_max, dtype=np.int64)
        cnt = select_neighbours(vecs, ds, ns, m_max, out)
        for i in range(cnt):
            cur[i] = out[i]
    if layer == 0:
        n0[nb] = cnt
    else:
        n_up[up_off[nb] + layer - 1] = cnt


@njit(cache=True, nogil=True)
def insert(vecs, levels, links0, n0, links_up, n_up, up_off, visited, tag,
           node, entry_point, max_level, M, ef_construction):
    """Link ``node`` (vector and level already stored) into the graph."""
    q = vecs[node]
    level = levels[node]
    ep = entry_point
    ep_dist = _dist(vecs, q, ep)
    layer = max_level
    while layer > level:
        ep, ep_dist = greedy(vecs, links0, n0, links_up, n_up, up_off, q, ep, ep_dist, layer)
        layer -= 1
    entry_d = np.empty(1, dtype=np.float64)
    entry_n = np.empty(1, dtype=np.int64)
    entry_d[0] = ep_dist
    entry_n[0] = ep
    out = np.empty(2 * M, dtype=np.int64)
    layer = min(level, max_level)
    while layer >= 0:
        tag += 1
        fd, fn = search_layer(vecs, links0, n0, links_up, n_up, up_off, visited, tag,
                              q, entry_d, entry_n, ef_construction, layer)
        m_max = 2 * M if layer == 0 else M
        cnt = select_neighbours(vecs, fd, fn, m_max, out)
        for i in range(cnt):
            if layer == 0:
                links0[node, i] = out[i]
            else:
                links_up[up_off[node] + layer - 1, i] = out[i]
        if layer == 0:
            n0[node] = cnt
        else:
            n_up[up_off[node] + layer - 1] = cnt
        for i in range(cnt):
            _link_back(vecs, links0, n0, links_up, n_up, up_off, node, out[i], layer, m_max)
        entry_d = fd
        entry_n = fn
        layer -= 1
    return tag


@njit(cache=True, nogil=True)
def knn(vecs, links0, n0, links_up, n_up, up_off, visited, tag,
        q, entry_point, max_level, k, ef):
    ep = entry_point
    ep_dist = _dist(vecs, q, ep)
    layer = max_level
    while layer > 0:
        ep, ep_dist = greedy(vecs, links0, n0, links_up, n_up, up_off, q, ep, ep_dist, layer)
        layer -= 1
    entry_d = np.empty(1, dtype=np.float64)
    entry_n = np.empty(1, dtype=np.int64)
    entry_d[0] = ep_dist
    entry_n[0] = ep
    fd, fn = search_layer(vecs, links0, n0, links_up, n_up, up_off, visited, tag,
                          q, entry_d, entry_n, max(ef, k), 0)
    k = min(k, fd.shape[0])
    return fd[:k], fn[:k]
