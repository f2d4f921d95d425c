"""Compiled slot loops for the simulator.

Random draws are generated outside (numpy PCG64) and passed in, so results
depend only on the seed and the draw layout, never on the compiler.
"""
import numpy as np
from numba import njit

# counters layout (int64)
ARR1, ARR2, DEP1, DEP2, COLL, MARR1, MARR2, MDEP1, MDEP2 = range(9)
# reals layout (float64)
QSUM1, QSUM2, SOJ1, SOJ2 = range(4)
# trace columns (int8)
T_ARR1, T_ARR2, T_DEP1, T_DEP2, T_COLL = range(5)


@njit(cache=True)
def run_block(u, k0, half_duplex, l1, l2, p1, p2, warmup,
              q, counters, reals, arr_times, trace, record):
    """Advance the network over ``len(u)`` slots starting at slot ``k0``.

    ``u[:, 0]`` drives arrivals (and ``u[:, 3]`` node-2 arrivals in full
    duplex), ``u[:, 1]``/``u[:, 2]`` the transmission coin of node 1/2.
    """
    lam = l1 + l2
    for r in range(u.shape[0]):
        k = k0 + r
        measured = k >= warmup
        if measured:
            reals[QSUM1] += q[0]
            reals[QSUM2] += q[1]

        a1 = False
        a2 = False
        if half_duplex:
            x = u[r, 0]
            if x < l1:
                a1 = True
            elif x < lam:
                a2 = True
        else:
            a1 = u[r, 0] < l1
            a2 = u[r, 3] < l2

        if half_duplex:
            t1 = (not a1) and q[0] > 0 and u[r, 1] < p1
            t2 = (not a2) and q[1] > 0 and u[r, 2] < p2
        else:
            t1 = q[0] > 0 and u[r, 1] < p1
            t2 = q[1] > 0 and u[r, 2] < p2

        d1 = False
        d2 = False
        if t1 and t2:
            counters[COLL] += 1
        elif t1:
            d1 = True
        elif t2:
            d2 = True

        if d1:
            head = counters[DEP1]
            if measured:
                reals[SOJ1] += k - arr_times[0, head]
                counters[MDEP1] += 1
            counters[DEP1] += 1
            q[0] -= 1
        if d2:
            head = counters[DEP2]
            if measured:
                reals[SOJ2] += k - arr_times[1, head]
                counters[MDEP2] += 1
            counters[DEP2] += 1
            q[1] -= 1

        if a1:
            arr_times[0, counters[ARR1]] = k
            counters[ARR1] += 1
            q[0] += 1
            if measured:
                counters[MARR1] += 1
        if a2:
            arr_times[1, counters[ARR2]] = k
            counters[ARR2] += 1
            q[1] += 1
            if measured:
                counters[MARR2] += 1

        if record:
            trace[k, T_ARR1] = a1
            trace[k, T_ARR2] = a2
            trace[k, T_DEP1] = d1
            trace[k, T_DEP2] = d2
            trace[k, T_COLL] = t1 and t2


def new_buffers(slots, record):
    q = np.zeros(2, dtype=np.int64)
    counters = np.zeros(9, dtype=np.int64)
    reals = np.zeros(4, dtype=np.float64)
    arr_times = np.zeros((2, slots), dtype=np.int64)
    trace = np.zeros((slots if record else 0, 5), dtype=np.int8)
    return q, counters, reals, arr_times, trace
