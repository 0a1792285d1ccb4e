# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the power-flow and topology kernels.

Signatures match ``rasswitch._pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def injections(double[:, ::1] G, double[:, ::1] B, double[::1] vm, double[::1] va):
    # rectangular form: one cos/sin per bus instead of per pair
    cdef Py_ssize_t n = vm.shape[0]
    cdef Py_ssize_t i, k
    cdef double ir, ii
    e_arr = np.empty(n)
    f_arr = np.empty(n)
    cdef double[::1] e = e_arr
    cdef double[::1] f = f_arr
    for k in range(n):
        e[k] = vm[k] * cos(va[k])
        f[k] = vm[k] * sin(va[k])
    P = np.zeros(n)
    Q = np.zeros(n)
    cdef double[::1] Pv = P
    cdef double[::1] Qv = Q
    for i in range(n):
        ir = 0.0
        ii = 0.0
        for k in range(n):
            ir += G[i, k] * e[k] - B[i, k] * f[k]
            ii += G[i, k] * f[k] + B[i, k] * e[k]
        Pv[i] = e[i] * ir + f[i] * ii
        Qv[i] = f[i] * ir - e[i] * ii
    return P, Q


def jacobian(double[:, ::1] G, double[:, ::1] B, double[::1] vm, double[::1] va):
    # vm_i vm_k cos(th_ik) = e_i e_k + f_i f_k and vm_i vm_k sin(th_ik) = f_i e_k - e_i f_k
    cdef Py_ssize_t n = vm.shape[0]
    cdef Py_ssize_t i, k
    cdef double cc, ss, a, b, pi, qi
    e_arr = np.empty(n)
    f_arr = np.empty(n)
    cdef double[::1] e = e_arr
    cdef double[::1] f = f_arr
    for k in range(n):
        e[k] = vm[k] * cos(va[k])
        f[k] = vm[k] * sin(va[k])
    J = np.zeros((2 * n, 2 * n))
    cdef double[:, ::1] Jv = J
    for i in range(n):
        pi = 0.0
        qi = 0.0
        for k in range(n):
            cc = e[i] * e[k] + f[i] * f[k]
            ss = f[i] * e[k] - e[i] * f[k]
            a = G[i, k] * cc + B[i, k] * ss    # vm_i vm_k (G cos + B sin)
            b = G[i, k] * ss - B[i, k] * cc    # vm_i vm_k (G sin - B cos)
            pi += a
            qi += b
            if k != i:
                Jv[i, k] = b
                Jv[n + i, k] = -a
                if vm[k] != 0.0:
                    Jv[i, n + k] = a / vm[k]
                    Jv[n + i, n + k] = b / vm[k]
        Jv[i, i] = -qi - B[i, i] * vm[i] * vm[i]
        Jv[n + i, i] = pi - G[i, i] * vm[i] * vm[i]
        if vm[i] != 0.0:
            Jv[i, n + i] = pi / vm[i] + G[i, i] * vm[i]
            Jv[n + i, n + i] = qi / vm[i] - B[i, i] * vm[i]
    return J


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x):
    cdef Py_ssize_t root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def components(Py_ssize_t n, cnp.int64_t[::1] f, cnp.int64_t[::1] t, edge_on, node_on):
    cdef cnp.uint8_t[::1] eon = np.ascontiguousarray(edge_on, dtype=np.uint8)
    cdef cnp.uint8_t[::1] non = np.ascontiguousarray(node_on, dtype=np.uint8)
    cdef Py_ssize_t m = f.shape[0]
    cdef Py_ssize_t e, a, b, i, r, nxt = 0
    parent_arr = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    for e in range(m):
        if not eon[e]:
            continue
        a = f[e]
        b = t[e]
        if not non[a] or not non[b]:
            continue
        a = _find(parent, a)
        b = _find(parent, b)
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    labels_arr = np.full(n, -1, dtype=np.int64)
    rootlabel_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.int64_t[::1] rootlabel = rootlabel_arr
    for i in range(n):
        if not non[i]:
            continue
        r = _find(parent, i)
        if rootlabel[r] < 0:
            rootlabel[r] = nxt
            nxt += 1
        labels[i] = rootlabel[r]
    return labels_arr
