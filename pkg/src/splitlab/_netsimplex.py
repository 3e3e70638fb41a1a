"""Primal network simplex for dense transportation problems.

The tree bookkeeping follows the classical strongly-feasible-tree scheme
(block-search pricing, artificial root with big-M arcs), with the spanning
tree held as parent pointers plus doubly linked child lists so that a pivot
only touches the subtree that is re-hung.
"""
import math

import numba
import numpy as np

_UP = 1      # pred arc points from the node to its parent
_DOWN = -1   # pred arc points from the parent to the node

_STATE_TREE = 0
_STATE_LOWER = 1


@numba.njit(cache=True)
def _remove_child(first_child, next_sib, prev_sib, par, node):
    p = prev_sib[node]
    q = next_sib[node]
    if p >= 0:
        next_sib[p] = q
    else:
        first_child[par] = q
    if q >= 0:
        prev_sib[q] = p
    next_sib[node] = -1
    prev_sib[node] = -1


@numba.njit(cache=True)
def _add_child(first_child, next_sib, prev_sib, par, node):
    head = first_child[par]
    next_sib[node] = head
    prev_sib[node] = -1
    if head >= 0:
        prev_sib[head] = node
    first_child[par] = node


@numba.njit(cache=True)
def _solve(a, b, C, max_iter, eps):
    n = a.shape[0]
    m = b.shape[0]
    n_nodes = n + m
    root = n_nodes
    n_real = n * m

    cmax = 0.0
    for i in range(n):
        for j in range(m):
            if C[i, j] > cmax:
                cmax = C[i, j]
    art_cost = (cmax + 1.0) * (n_nodes + 1)

    parent = np.empty(n_nodes + 1, np.int64)
    pred = np.empty(n_nodes + 1, np.int64)
    pdir = np.zeros(n_nodes + 1, np.int64)
    depth = np.zeros(n_nodes + 1, np.int64)
    pi = np.zeros(n_nodes + 1)
    first_child = -np.ones(n_nodes + 1, np.int64)
    next_sib = -np.ones(n_nodes + 1, np.int64)
    prev_sib = -np.ones(n_nodes + 1, np.int64)

    # flows of real arcs live only while the arc is in the tree
    state = np.ones(n_real, np.int8)
    tree_flow = np.zeros(n_nodes + 1)  # flow on pred arc of each node

    parent[root] = -1
    pred[root] = -1
    for u in range(n_nodes):
        parent[u] = root
        pred[u] = n_real + u
        depth[u] = 1
        _add_child(first_child, next_sib, prev_sib, root, u)
        if u < n:
            pdir[u] = _UP
            tree_flow[u] = a[u]
            pi[u] = 0.0
        else:
            pdir[u] = _DOWN
            tree_flow[u] = b[u - n]
            pi[u] = art_cost

    block = max(int(math.ceil(math.sqrt(n_real))), 10)
    next_arc = 0
    stack = np.empty(n_nodes + 1, np.int64)
    it = 0
    status = 0
    while True:
        # block search pricing
        best = -eps
        in_arc = -1
        cnt = block
        e = next_arc
        scanned = 0
        while scanned < n_real:
            if state[e] == _STATE_LOWER:
                i = e // m
                j = e - i * m
                rc = C[i, j] + pi[i] - pi[n + j]
                if rc < best:
                    best = rc
                    in_arc = e
            scanned += 1
            e += 1
            if e == n_real:
                e = 0
            cnt -= 1
            if cnt == 0:
                if in_arc >= 0:
                    break
                cnt = block
        if in_arc < 0:
            break
        next_arc = e
        it += 1
        if it > max_iter:
            status = 1
            break

        first = in_arc // m
        second = n + (in_arc - first * m)

        # join node
        u = first
        v = second
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        join = u

        # leaving arc; strict on the first path, non-strict on the second
        delta = np.inf
        u_out = -1
        result = 0
        u = first
        while u != join:
            if pdir[u] == _UP:
                d = tree_flow[u]
                if d < delta:
                    delta = d
                    u_out = u
                    result = 1
            u = parent[u]
        u = second
        while u != join:
            if pdir[u] == _DOWN:
                d = tree_flow[u]
                if d <= delta:
                    delta = d
                    u_out = u
                    result = 2
            u = parent[u]
        if result == 0:
            status = 2
            break

        # augment
        if delta > 0.0:
            u = first
            while u != join:
                tree_flow[u] += -delta if pdir[u] == _UP else delta
                u = parent[u]
            u = second
            while u != join:
                tree_flow[u] += delta if pdir[u] == _UP else -delta
                u = parent[u]

        if result == 1:
            u_in = first
            v_in = second
        else:
            u_in = second
            v_in = first

        # retire the leaving arc
        out_arc = pred[u_out]
        if out_arc < n_real:
            state[out_arc] = _STATE_LOWER
        state[in_arc] = _STATE_TREE

        # re-hang the subtree of u_out from u_in below v_in
        _remove_child(first_child, next_sib, prev_sib, parent[u_out], u_out)
        cur = u_in
        new_par = v_in
        new_pred = in_arc
        new_dir = _UP if u_in == first else _DOWN
        new_flow = delta
        while True:
            old_par = parent[cur]
            old_pred = pred[cur]
            old_dir = pdir[cur]
            old_flow = tree_flow[cur]
            if cur != u_out:
                _remove_child(first_child, next_sib, prev_sib, old_par, cur)
            parent[cur] = new_par
            pred[cur] = new_pred
            pdir[cur] = new_dir
            tree_flow[cur] = new_flow
            _add_child(first_child, next_sib, prev_sib, new_par, cur)
            if cur == u_out:
                break
            new_par = cur
            new_pred = old_pred
            new_dir = -old_dir
            new_flow = old_flow
            cur = old_par

        # potentials and depths on the moved subtree
        i = first
        j = second - n
        rc = C[i, j] + pi[first] - pi[second]
        shift = -rc if u_in == first else rc
        top = 0
        stack[0] = u_in
        depth[u_in] = depth[v_in] + 1
        while top >= 0:
            w = stack[top]
            top -= 1
            pi[w] += shift
            c = first_child[w]
            while c >= 0:
                depth[c] = depth[w] + 1
                top += 1
                stack[top] = c
                c = next_sib[c]

    # collect the plan from tree arcs
    rows = np.empty(n_nodes, np.int64)
    cols = np.empty(n_nodes, np.int64)
    vals = np.empty(n_nodes)
    k = 0
    art_flow = 0.0
    for w in range(n_nodes):
        e = pred[w]
        if e < n_real:
            f = tree_flow[w]
            if f > 0.0:
                ii = e // m
                rows[k] = ii
                cols[k] = e - ii * m
                vals[k] = f
                k += 1
        else:
            art_flow += tree_flow[w]
    return rows[:k], cols[:k], vals[:k], pi[:n].copy(), pi[n:n_nodes].copy(), art_flow, status, it


def transport_simplex(a, b, C, max_iter=10_000_000):
    """Solve min <C, P> over couplings P of the probability vectors ``a`` and ``b``.

    Returns (rows, cols, masses, u, v, status) with ``u``/``v`` the dual
    potentials (``C[i, j] + u[i] - v[j] >= 0``) and ``status`` 0 on success.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    # the tree only balances if the supplies match exactly
    b = b * (a.sum() / b.sum())
    eps = 1e-13 * max(1.0, float(C.max(initial=0.0)))
    rows, cols, vals, u, v, art_flow, status, it = _solve(a, b, C, max_iter, eps)
    if status == 0 and art_flow > 1e-9:
        status = 3
    return rows, cols, vals, u, v, status
