"""Pure numpy versions of the orbit kernels (same contract as ``_ckernels``)."""

import numpy as np

ZERO_REL_TOL = 64 * np.finfo(float).eps


def chain_product(mats):
    """``mats[L-1] @ ... @ mats[0]`` for a stack of shape (L, n, n)."""
    mats = np.ascontiguousarray(mats, dtype=float)
    out = np.eye(mats.shape[1])
    for M in mats:
        out = M @ out
    return out


def _complement_column(Q, j):
    n = Q.shape[0]
    best, best_norm = None, -1.0
    for k in range(n):
        v = np.zeros(n)
        v[k] = 1.0
        for _ in range(2):
            v -= Q[:, :j] @ (Q[:, :j].T @ v)
        nv = np.linalg.norm(v)
        if nv > best_norm:
            best, best_norm = v, nv
    return best / best_norm


def _mgs(F, logs_row, zero_rel_tol):
    n, k = F.shape
    Q = F.copy()
    for j in range(k):
        v = Q[:, j].copy()
        orig = np.linalg.norm(v)
        for _ in range(2):
            for i in range(j):
                v -= (Q[:, i] @ v) * Q[:, i]
        r = np.linalg.norm(v)
        if orig == 0.0 or r <= zero_rel_tol * orig:
            logs_row[j] = -np.inf
            Q[:, j] = _complement_column(Q, j)
        else:
            logs_row[j] = np.log(r)
            Q[:, j] = v / r
    return Q


def qr_steps(mats, frame, stride, zero_rel_tol=ZERO_REL_TOL):
    """Push ``frame`` through the stack, re-orthonormalising every ``stride`` steps.

    Returns ``(logs, frame)`` where ``logs[b, j]`` is ``log R_jj`` of block ``b``
    (``-inf`` when column ``j`` collapsed into the span of the earlier ones).
    """
    mats = np.ascontiguousarray(mats, dtype=float)
    L = mats.shape[0]
    nblocks = -(-L // stride)
    F = np.array(frame, dtype=float)
    logs = np.empty((nblocks, F.shape[1]))
    t = 0
    for b in range(nblocks):
        stop = min(t + stride, L)
        while t < stop:
            F = mats[t] @ F
            t += 1
        F = _mgs(F, logs[b], zero_rel_tol)
    return logs, F


def hilbert_diameter(G):
    """Hilbert projective diameter of the cone spanned by the positive columns of ``G``."""
    k = G.shape[1]
    diam = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            r = np.log(G[:, a]) - np.log(G[:, b])
            diam = max(diam, r.max() - r.min())
    return diam


def cone_push(mats, G):
    """Push positive columns through the stack, normalising each column to unit sum.

    Returns the final generators and the Hilbert diameter of their cone.
    """
    mats = np.ascontiguousarray(mats, dtype=float)
    G = np.array(G, dtype=float)
    for M in mats:
        G = M @ G
        G /= G.sum(axis=0, keepdims=True)
    return G, hilbert_diameter(G)
