"""Ensemble sampling: many snapshots advance through columns together.

The exact sampler in :mod:`ledkit.sampler` carries one boundary MPS per
snapshot and truncates by singular-value threshold.  For ensembles of
hundreds of snapshots that is dominated by per-call overhead, so this
module keeps a batch axis in every tensor and a fixed bond-dimension cap
``chi`` for the measured-history boundary, shared by all members.  Every
hot contraction is expressed as a (batched) matmul; contractions against
member-independent tensors (the averaged site tensor, the static right
environment) fold the batch into the rows of one large GEMM.  Boundary
compression uses the Gram-matrix eigendecomposition, the cheapest exact
route to the dominant subspace at these matrix sizes.

The scheme draws from the same conditional distributions as the exact
sampler up to the fixed-``chi`` truncation; statistical agreement with
the exact path is covered by tests.  Runs are deterministic in
(config, seed, n_snapshots).
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateWeightError
from .lattice import BOUNDARY_STRIP, LatticeGeometry, Snapshot
from .sampler import SampleConfig, WEIGHT_FLOOR, _pinned_stack
from .tensornet import (
    OPEN_LEG_CLOSURE,
    TRACE_LEG_CLOSURE,
    strip_fixed_points,
)

DEFAULT_BATCH_CHI = 8
_EPS = 1e-300


def _rescale(vec: np.ndarray) -> np.ndarray:
    batch = vec.shape[0]
    scale = np.abs(vec).reshape(batch, -1).max(axis=1)
    return vec / np.maximum(scale, _EPS).reshape((batch,) + (1,) * (vec.ndim - 1))


def _truncated_row_basis(mat: np.ndarray, keep: int) -> tuple[np.ndarray, np.ndarray]:
    """Dominant rank-``keep`` row-space factorization of a batched matrix.

    Returns (U, C) with U (B, m, keep) orthonormal columns and C = U^T M,
    via the eigendecomposition of the Gram matrix M M^T (cheaper than a
    batched SVD at these sizes).  A small relative diagonal shift keeps
    the LAPACK eigensolver away from denormal trouble; it leaves the
    eigenvectors untouched.
    """
    batch, m, _ = mat.shape
    scale = np.abs(mat).reshape(batch, -1).max(axis=1)
    matn = mat / np.maximum(scale, _EPS)[:, None, None]
    gram = matn @ matn.transpose(0, 2, 1)
    gram += 1e-14 * np.eye(m)
    try:
        _, vecs = np.linalg.eigh(gram)  # ascending eigenvalues
        u = np.ascontiguousarray(vecs[:, :, ::-1][:, :, :keep])
    except np.linalg.LinAlgError:
        u, _, _ = np.linalg.svd(matn, full_matrices=False)
        u = np.ascontiguousarray(u[:, :, :keep])
    return u, u.transpose(0, 2, 1) @ mat


class _BatchLeft:
    """Batched left boundary MPS: tensors of shape (B, a, 4, b)."""

    def __init__(self, tensors: list[np.ndarray]):
        self.tensors = tensors

    @classmethod
    def from_shared(cls, shared: list[np.ndarray], batch: int) -> "_BatchLeft":
        return cls([np.broadcast_to(t, (batch,) + t.shape).copy() for t in shared])


def _fold_closures(site: np.ndarray, x: int, n: int) -> np.ndarray:
    """End closures of a column: (B, s, w, n, e) with w/e collapsed at ends."""
    if x == 0:
        site = np.einsum("w,Bswne->Bsne", OPEN_LEG_CLOSURE, site)[:, :, None, :, :]
    if x == n - 1:
        site = np.einsum("Bswne,e->Bswn", site, TRACE_LEG_CLOSURE)[..., None]
    return site


def _zip_up_absorb(left: _BatchLeft, site_tensors: list[np.ndarray], chi: int) -> _BatchLeft:
    """Absorb one measured column into the batched left boundary.

    One left-to-right sweep; each bond is compressed to at most ``chi``
    through its Gram matrix.
    """
    n = len(site_tensors)
    batch = site_tensors[0].shape[0]
    carry = np.ones((batch, 1, 1, 1))  # (B, new bond k, old bond a, column bond w)
    out = []
    for x in range(n):
        w = _fold_closures(site_tensors[x], x, n)  # (B, s, w, n, e)
        m = left.tensors[x]  # (B, a, s, b)
        bk, kk, aa, ww = carry.shape
        _, _, ss, bb = m.shape
        _, _, _, nn, ee = w.shape
        # sum over a: (B, k*w, a) @ (B, a, s*b)
        tmp = carry.transpose(0, 1, 3, 2).reshape(bk, kk * ww, aa) @ m.reshape(bk, aa, ss * bb)
        tmp = tmp.reshape(bk, kk, ww, ss, bb)
        # sum over (w, s): (B, k*b, w*s) @ (B, w*s, n*e)
        tmp = tmp.transpose(0, 1, 4, 2, 3).reshape(bk, kk * bb, ww * ss)
        tmp = tmp @ w.transpose(0, 2, 1, 3, 4).reshape(bk, ww * ss, nn * ee)
        tmp = tmp.reshape(bk, kk, bb, nn, ee)
        mat = tmp.transpose(0, 1, 3, 2, 4).reshape(bk, kk * nn, bb * ee)
        keep = min(chi, kk * nn, bb * ee)
        u, c = _truncated_row_basis(mat, keep)
        out.append(u.reshape(bk, kk, nn, keep))
        carry = _rescale(c.reshape(bk, keep, bb, ee))
    # final carry is (B, k, 1, 1): fold into the last tensor, then normalize
    last = np.einsum("Bank,Bkb->Banb", out[-1], carry[..., 0])
    norms = np.sqrt(np.einsum("Banb,Banb->B", last, last))
    out[-1] = last / np.maximum(norms, _EPS)[:, None, None, None]
    return _BatchLeft(out)


class _BatchSandwich:
    """Batched (left | column | right) contraction for one column sweep.

    Cut vectors carry axes (B, left bond a, column bond w, right bond c).
    The member-independent right tensors and site tensors are premapped to
    matrix form so the batch folds into GEMM rows.
    """

    def __init__(self, left: _BatchLeft, right_tensors, t_avg, t_pinned):
        self.left = left.tensors
        self.n = len(right_tensors)
        self.rt = right_tensors  # (c, n, d)
        self.rt_down = [t.transpose(2, 0, 1).reshape(t.shape[2], -1) for t in right_tensors]
        # (d, c*n)
        self.rt_up = [t.reshape(-1, t.shape[2]) for t in right_tensors]  # (c*n, d)
        self.t_avg_mat = t_avg.reshape(16, 16)  # rows (s,w), cols (n,e)
        self.t_pinned = t_pinned
        # (w,s,e,n) -> outcome, for the weight GEMM
        self.p_mat = np.ascontiguousarray(
            t_pinned.transpose(2, 1, 4, 3, 0).reshape(256, 4)
        )
        self._build_up()
        self._d1_cache: tuple[int, np.ndarray] | None = None

    def _fused(self, x: int) -> np.ndarray:
        """right[x] fused with up[x+1]: (B, b, e, c, n)."""
        u = self.up[x + 1]
        bk, bb, ee, dd = u.shape
        t1 = u.reshape(bk * bb * ee, dd) @ self.rt_down[x]
        cc, nn = self.rt[x].shape[0], self.rt[x].shape[1]
        return t1.reshape(bk, bb, ee, cc, nn)

    def _build_up(self):
        n = self.n
        batch = self.left[0].shape[0]
        self.up = [None] * (n + 1)
        self.up[n] = np.broadcast_to(
            TRACE_LEG_CLOSURE.reshape(1, 1, 4, 1), (batch, 1, 4, 1)
        ).copy()
        for x in range(n - 1, -1, -1):
            t1 = self._fused(x)  # (B, b, e, c, n)
            bk, bb, ee, cc, nn = t1.shape
            # sum over (n, e) against the averaged site: rows (s,w) x cols (n,e)
            t2 = t1.transpose(0, 1, 3, 4, 2).reshape(bk, bb * cc, nn * ee) @ self.t_avg_mat.T
            t2 = t2.reshape(bk, bb, cc, 4, 4)  # (B, b, c, s, w)
            lt = self.left[x]  # (B, a, s, b)
            aa = lt.shape[1]
            # sum over (s, b)
            t3 = lt.transpose(0, 1, 3, 2).reshape(bk, aa, bb * 4) @ t2.transpose(
                0, 1, 3, 2, 4
            ).reshape(bk, bb * 4, cc * 4)
            vec = t3.reshape(bk, aa, cc, 4).transpose(0, 1, 3, 2)  # (B, a, w, c)
            self.up[x] = _rescale(np.ascontiguousarray(vec))

    def start_down(self, batch: int) -> np.ndarray:
        return np.broadcast_to(
            OPEN_LEG_CLOSURE.reshape(1, 1, 4, 1), (batch, 1, 4, 1)
        ).copy()

    def _d1(self, x: int, down: np.ndarray) -> np.ndarray:
        """sum over a of down (B,a,w,c) with left (B,a,s,b): (B, w, c, s, b)."""
        if self._d1_cache is not None and self._d1_cache[0] == x:
            return self._d1_cache[1]
        lt = self.left[x]
        bk, aa, ww, cc = down.shape
        ss, bb = lt.shape[2], lt.shape[3]
        d1 = down.transpose(0, 2, 3, 1).reshape(bk, ww * cc, aa) @ lt.reshape(bk, aa, ss * bb)
        d1 = d1.reshape(bk, ww, cc, ss, bb)
        self._d1_cache = (x, d1)
        return d1

    def site_weights(self, x: int, down: np.ndarray) -> np.ndarray:
        d1 = self._d1(x, down)
        t1 = self._fused(x)  # (B, b, e, c, n)
        bk, ww, cc, ss, bb = d1.shape
        ee, nn = t1.shape[2], t1.shape[4]
        core = d1.transpose(0, 1, 3, 2, 4).reshape(bk, ww * ss, cc * bb) @ t1.transpose(
            0, 3, 1, 2, 4
        ).reshape(bk, cc * bb, ee * nn)
        # core axes (w, s, e, n) match p_mat's row layout
        return core.reshape(bk, -1) @ self.p_mat

    def pin(self, x: int, codes: np.ndarray, down: np.ndarray) -> np.ndarray:
        d1 = self._d1(x, down)
        self._d1_cache = None
        sel = self.t_pinned[codes]  # (B, s, w, n, e)
        bk, ww, cc, ss, bb = d1.shape
        nn, ee = sel.shape[3], sel.shape[4]
        f = d1.transpose(0, 2, 4, 1, 3).reshape(bk, cc * bb, ww * ss) @ sel.transpose(
            0, 2, 1, 3, 4
        ).reshape(bk, ww * ss, nn * ee)
        f = f.reshape(bk, cc, bb, nn, ee)
        # sum over (c, n) against the static right tensor
        dd = self.rt_up[x].shape[1]
        vec = f.transpose(0, 2, 4, 1, 3).reshape(bk * bb * ee, cc * nn) @ self.rt_up[x]
        vec = vec.reshape(bk, bb, ee, dd)
        return _rescale(vec)


def sample_ensemble(
    config: SampleConfig,
    n_snapshots: int,
    chi: int = DEFAULT_BATCH_CHI,
) -> list[Snapshot]:
    """Draw ``n_snapshots`` independent snapshots in one batched pass.

    Honors ``config.basis``: X-basis ensembles are drawn at the swapped
    couplings one cell larger and dual-relabeled, exactly like
    :func:`ledkit.sampler.sample_basis_x`.
    """
    if config.basis == "X":
        from dataclasses import replace

        swapped = replace(config, g_x=config.g_z, g_z=config.g_x, basis="Z")
        wide = _sample_ensemble_z(swapped, n_snapshots, chi)
        return [Snapshot(s.geometry, "X", s.values) for s in wide]
    return _sample_ensemble_z(config, n_snapshots, chi)


def _sample_ensemble_z(config: SampleConfig, n_snapshots: int, chi: int) -> list[Snapshot]:
    lx = config.width_x
    total_columns = config.burn_in_columns + config.n_columns
    left_shared, right = strip_fixed_points(
        config.g_x,
        config.g_z,
        lx,
        threshold=config.truncation_threshold,
        chi_max=config.chi_max,
    )
    avg, pinned = _pinned_stack(config.g_x, config.g_z)
    left = _BatchLeft.from_shared(left_shared.tensors, n_snapshots)
    right_tensors = right.tensors

    root = np.random.SeedSequence(config.seed)
    children = root.spawn(total_columns)
    outcomes = np.zeros((n_snapshots, lx, total_columns), dtype=np.int8)

    for y in range(total_columns):
        rng = np.random.Generator(np.random.Philox(children[y]))
        uniforms = rng.random((lx, n_snapshots))
        sandwich = _BatchSandwich(left, right_tensors, avg, pinned)
        down = sandwich.start_down(n_snapshots)
        col_sites = []
        for x in range(lx):
            w = sandwich.site_weights(x, down)
            # orient each member by its sum: environments carry an
            # arbitrary global eigenvector sign
            totals = w.sum(axis=1)
            w = np.where(totals[:, None] < 0, -w, w)
            totals = np.abs(totals)
            w = np.clip(w, 0.0, None)
            if np.any(totals <= WEIGHT_FLOOR):
                bad = int(np.argmin(totals))
                raise DegenerateWeightError(
                    f"conditional weights collapsed for member {bad} "
                    f"(sum={totals[bad]:.3e}); raise chi"
                )
            cdf = np.cumsum(w / w.sum(axis=1)[:, None], axis=1)
            codes = (uniforms[x][:, None] > cdf).sum(axis=1).astype(np.int8)
            codes = np.minimum(codes, 3)
            outcomes[:, x, y] = codes
            col_sites.append(pinned[codes])
            down = sandwich.pin(x, codes, down)
        left = _zip_up_absorb(left, col_sites, chi)

    kept = outcomes[:, :, config.burn_in_columns :]
    geometry = LatticeGeometry(lx, config.n_columns, BOUNDARY_STRIP)
    snapshots = []
    for b in range(n_snapshots):
        values = np.stack([1 - 2 * (kept[b] >> 1), 1 - 2 * (kept[b] & 1)]).astype(np.int8)
        snapshots.append(Snapshot(geometry, "Z", values))
    return snapshots
