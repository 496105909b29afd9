"""Independent brute-force oracles used across the test suite.

Everything here is written for clarity over speed and deliberately avoids
the production contraction code paths.
"""

from __future__ import annotations

import itertools

import numpy as np

from ledkit.tensornet import (
    OPEN_LEG_CLOSURE,
    TRACE_LEG_CLOSURE,
    DoubledTensor,
    build_site_tensor,
    coupling_matrix,
    doubled_tensor,
    parity_tensor,
)


def site_tensor_by_sum(g_x, g_z):
    """Element-by-element evaluation of the defining contraction."""
    big_l = coupling_matrix(g_x, g_z)
    par = parity_tensor()
    a = np.zeros((2, 2, 2, 2, 2, 2))
    for p, q, i, j, k, l in itertools.product(range(2), repeat=6):
        total = 0.0
        for pp, qq in itertools.product(range(2), repeat=2):
            delta = 1.0 if (pp == i and qq == j) else 0.0
            total += big_l[p, pp] * big_l[q, qq] * delta * par[i, j, k, l]
        a[p, q, i, j, k, l] = total
    return a


def dense_column_matrix(sites: list[DoubledTensor]) -> np.ndarray:
    """Column transfer matrix mapping joint south legs to joint north legs.

    Sites are contracted west to east with the production end closures;
    the result is reshaped to (4**n, 4**n) with row = north, col = south.
    """
    run = None
    for x, site in enumerate(sites):
        if x == 0:
            # close the west leg; axes become (south, north, east)
            first = np.tensordot(OPEN_LEG_CLOSURE, site.entries, axes=(0, 1))
            run = first.transpose(2, 0, 1)  # (east, S, N)
            continue
        # run: (east_prev, S, N); site entries: (south, west, north, east)
        merged = np.tensordot(run, site.entries, axes=(0, 1))  # (S, N, s, n, e)
        s_dim = run.shape[1] * 4
        n_dim = run.shape[2] * 4
        run = merged.transpose(4, 0, 2, 1, 3).reshape(4, s_dim, n_dim)
    closed = np.tensordot(TRACE_LEG_CLOSURE, run, axes=(0, 0))  # (S, N)
    return closed.T  # rows = north, cols = south


def dense_patch_log_weight(g_x, g_z, width_x, n_columns, outcomes=None):
    """Log of the finite-patch weight, contracted densely column by column.

    ``outcomes`` is an optional (width_x, n_columns) array of outcome codes
    ``2*a + b``; None averages every site.
    """
    site = build_site_tensor(g_x, g_z)
    south = np.ones(4 ** width_x)
    log_scale = 0.0
    vec = south
    for y in range(n_columns):
        col = []
        for x in range(width_x):
            if outcomes is None:
                col.append(doubled_tensor(site))
            else:
                code = int(outcomes[x, y])
                col.append(doubled_tensor(site, (code >> 1, code & 1)))
        mat = dense_column_matrix(col)
        vec = mat @ vec
        scale = np.abs(vec).max()
        if scale == 0:
            return -np.inf
        vec /= scale
        log_scale += np.log(scale)
    # joint trace closure = outer product of per-site closures
    north = TRACE_LEG_CLOSURE
    for _ in range(width_x - 1):
        north = np.kron(north, TRACE_LEG_CLOSURE)
    val = float(north @ vec)
    if val <= 0:
        return -np.inf
    return log_scale + np.log(val)


def brute_force_patch_distribution(g_x, g_z, width_x, n_columns):
    """Born distribution of the finite patch by explicit state construction.

    The patch state applies exp(g_x X + g_z Z) to every real qubit of the
    uniform superposition over parity-closed configurations on the patch
    extended by one virtual bit per truncated plaquette (east rim v links
    and north rim h links), which are then traced out.

    Returns probabilities indexed by the real-qubit bit pattern with bit
    order h(0,0), v(0,0), h(1,0), v(1,0), ... (x fastest, then y; h before
    v), matching the sampler's column-major sweep.
    """
    lx, ly = width_x, n_columns
    n_real = 2 * lx * ly
    n_virt = ly + lx  # east rim v(lx, y) then north rim h(x, ly)
    n = n_real + n_virt
    if n > 26:
        raise ValueError("patch too large for the dense oracle")

    def real_bit(x, y, link):  # link 0 = h, 1 = v
        return 2 * (y * lx + x) + link

    def virt_east(y):
        return n_real + y

    def virt_north(x):
        return n_real + ly + x

    # plaquette (x, y): h(x,y), v(x,y), v(x+1,y) or east virt, h(x,y+1) or north virt
    masks = []
    for y in range(ly):
        for x in range(lx):
            bits = [real_bit(x, y, 0), real_bit(x, y, 1)]
            bits.append(virt_east(y) if x + 1 == lx else real_bit(x + 1, y, 1))
            bits.append(virt_north(x) if y + 1 == ly else real_bit(x, y + 1, 0))
            mask = 0
            for b in bits:
                mask |= 1 << b
            masks.append(mask)

    configs = np.arange(1 << n, dtype=np.uint64)
    ok = np.ones(1 << n, dtype=bool)
    for mask in masks:
        ok &= np.bitwise_count(configs & np.uint64(mask)) % 2 == 0
    psi = ok.astype(np.float64)

    big_l = coupling_matrix(g_x, g_z)
    psi = psi.reshape((2,) * n)
    for qubit in range(n_real):
        axis = n - 1 - qubit  # bit 0 is the last axis
        psi = np.moveaxis(np.tensordot(big_l, psi, axes=(1, axis)), 0, axis)
    # virtual bits sit at the high positions: split them off and trace
    probs = (psi ** 2).reshape(1 << n_virt, 1 << n_real).sum(axis=0)
    return probs / probs.sum()
