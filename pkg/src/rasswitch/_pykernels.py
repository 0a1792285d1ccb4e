"""Pure-Python/numpy implementations of the hot numerical kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors the same
signatures with explicit loops.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def injections(G, B, vm, va):
    """Complex power injections P, Q at every bus for voltage (vm, va)."""
    V = vm * np.exp(1j * va)
    S = V * np.conj((G + 1j * B) @ V)
    return S.real.copy(), S.imag.copy()


def jacobian(G, B, vm, va):
    """Full polar Jacobian [[dP/dva, dP/dvm], [dQ/dva, dQ/dvm]] of shape (2n, 2n)."""
    Y = G + 1j * B
    V = vm * np.exp(1j * va)
    Ibus = Y @ V
    Vnorm = V / vm
    diagV = np.diag(V)
    dS_dva = 1j * diagV @ np.conj(np.diag(Ibus) - Y * V[np.newaxis, :])
    dS_dvm = diagV @ np.conj(Y * Vnorm[np.newaxis, :]) + np.diag(np.conj(Ibus) * Vnorm)
    return np.block([[dS_dva.real, dS_dvm.real], [dS_dva.imag, dS_dvm.imag]])


def components(n, f, t, edge_on, node_on):
    """Connected-component label per node; -1 for nodes that are off.

    Labels are renumbered so components appear in order of their smallest
    node position.
    """
    keep = edge_on & node_on[f] & node_on[t]
    ff, tt = f[keep], t[keep]
    graph = coo_matrix((np.ones(len(ff)), (ff, tt)), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    labels = np.full(n, -1, dtype=np.int64)
    remap = {}
    for i in range(n):
        if not node_on[i]:
            continue
        labels[i] = remap.setdefault(raw[i], len(remap))
    return labels
