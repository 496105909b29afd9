"""PEPS site tensors, doubled transfer tensors, boundary MPS, SVD truncation.

Index conventions
-----------------
A site tensor ``A[p, q, i, j, k, l]`` carries physical indices ``p`` (the
cell's h qubit) and ``q`` (the v qubit) plus virtual indices pointing
south (``i``, locked to ``p``), west (``j``, locked to ``q``), north
(``k``) and east (``l``).  Doubled tensors pair ket and bra legs into a
single index ``m = 2*ket + bra`` of dimension four, ordered
``[south, west, north, east]``.

A column of the lattice (fixed ``y``, ``x = 0 .. Lx-1``) contracts its
east/west legs internally and becomes a matrix product operator whose
dangling legs are the south/north doubled legs.  The column ends are
closed with the vector ``(1, 1, 1, 1)`` on the west leg of site 0 (the
locked leg: its physical qubit stays free) and ``(1, 0, 0, 1)`` (a trace)
on the east leg of the last site.  Boundary MPS tensors have shape
``(chi_left, 4, chi_right)``; overall norms are accumulated in log space.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GeometryMismatchError, ParameterError, ResourceCapError

OPEN_LEG_CLOSURE = np.ones(4)  # keeps the locked physical qubit free
TRACE_LEG_CLOSURE = np.array([1.0, 0.0, 0.0, 1.0])  # traces a bare virtual leg

DEFAULT_THRESHOLD = 1e-8
DEFAULT_CHI_MAX = 64
HARD_CHI_CAP = 512


def parity_tensor() -> np.ndarray:
    """P[i,j,k,l] = 1 when i+j+k+l is even, else 0."""
    idx = np.indices((2, 2, 2, 2)).sum(axis=0)
    return (idx % 2 == 0).astype(np.float64)


def coupling_matrix(g_x: float, g_z: float) -> np.ndarray:
    """exp(g_x * X + g_z * Z) in closed form (the generator squares to r^2)."""
    r = np.hypot(g_x, g_z)
    if r == 0.0:
        return np.eye(2)
    m = np.array([[g_z, g_x], [g_x, -g_z]])
    return np.cosh(r) * np.eye(2) + (np.sinh(r) / r) * m


@dataclass(frozen=True)
class PepsTensor:
    """Site tensor A(g_x, g_z) with entries [p, q, i, j, k, l]."""

    entries: np.ndarray = field(repr=False)
    g_x: float = 0.0
    g_z: float = 0.0


def build_site_tensor(g_x: float, g_z: float) -> PepsTensor:
    """A[p,q,i,j,k,l] = L[p,i] * L[q,j] * P[i,j,k,l] with L = exp(gx X + gz Z)."""
    big_l = coupling_matrix(g_x, g_z)
    entries = np.einsum("pi,qj,ijkl->pqijkl", big_l, big_l, parity_tensor())
    return PepsTensor(entries, float(g_x), float(g_z))


@dataclass(frozen=True)
class DoubledTensor:
    """Bra-ket pair of one site tensor, legs [south, west, north, east], dim 4.

    ``outcome`` is None for the measurement-averaged tensor or the pinned
    outcome ``(a, b)`` with ``a`` the h-qubit bit and ``b`` the v-qubit bit.
    """

    entries: np.ndarray = field(repr=False)
    outcome: tuple[int, int] | None = None


def doubled_tensor(t: PepsTensor, outcome: tuple[int, int] | None = None) -> DoubledTensor:
    a = t.entries
    if outcome is None:
        dense = np.einsum("pqijkl,pqIJKL->iIjJkKlL", np.conj(a), a)
    else:
        p, q = outcome
        if p not in (0, 1) or q not in (0, 1):
            raise ParameterError(f"outcome bits must be 0 or 1, got {outcome}")
        ket = a[p, q]
        dense = np.einsum("ijkl,IJKL->iIjJkKlL", np.conj(ket), ket)
    return DoubledTensor(dense.reshape(4, 4, 4, 4), outcome)


@dataclass
class ColumnMpo:
    """One column of doubled tensors with end closures folded in.

    ``tensors[x]`` has shape ``(D_w, D_e, 4_in, 4_out)`` where ``in`` is the
    south leg and ``out`` the north leg; internal bonds run east-west.
    """

    tensors: list[np.ndarray]
    outcomes: list[tuple[int, int]] | None = None

    def __len__(self) -> int:
        return len(self.tensors)


def column_mpo(sites: list[DoubledTensor]) -> ColumnMpo:
    if len(sites) < 1:
        raise ParameterError("column needs at least one site")
    tensors = []
    for x, site in enumerate(sites):
        w = site.entries.transpose(1, 3, 0, 2)  # (west, east, south, north)
        if x == 0:
            w = np.tensordot(OPEN_LEG_CLOSURE, w, axes=(0, 0))[None, ...]
        if x == len(sites) - 1:
            w = np.tensordot(w, TRACE_LEG_CLOSURE, axes=(1, 0))[:, None, :, :]
        tensors.append(np.ascontiguousarray(w))
    outcomes = [s.outcome for s in sites]
    if any(o is None for o in outcomes):
        outcomes = None
    return ColumnMpo(tensors, outcomes)


def averaged_column_mpo(g_x: float, g_z: float, width_x: int) -> ColumnMpo:
    t = doubled_tensor(build_site_tensor(g_x, g_z))
    return column_mpo([t] * width_x)


@dataclass
class BoundaryMps:
    """MPS along the x direction; overall scale kept in ``log_norm``."""

    tensors: list[np.ndarray]
    log_norm: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[0] for t in self.tensors] + [self.tensors[-1].shape[2]]

    def copy(self) -> "BoundaryMps":
        return BoundaryMps([t.copy() for t in self.tensors], self.log_norm, dict(self.meta))


def product_boundary(vector: np.ndarray, n_sites: int) -> BoundaryMps:
    vec = np.asarray(vector, dtype=np.float64).reshape(1, 4, 1)
    return BoundaryMps([vec.copy() for _ in range(n_sites)])


@dataclass
class TruncationReport:
    discarded_weights: list[float]
    rank_floor_hit: bool = False

    @property
    def max_discarded(self) -> float:
        return max(self.discarded_weights, default=0.0)


def mps_log_overlap(m1: BoundaryMps, m2: BoundaryMps) -> tuple[float, float]:
    """(log |<m1|m2>|, sign); excludes the stored log_norm factors."""
    if len(m1) != len(m2):
        raise GeometryMismatchError("MPS lengths differ")
    env = np.ones((1, 1))
    log_scale = 0.0
    for t1, t2 in zip(m1.tensors, m2.tensors):
        env = np.einsum("ab,aic,bid->cd", env, t1, t2, optimize=True)
        scale = np.abs(env).max()
        if scale == 0.0:
            return -np.inf, 0.0
        env /= scale
        log_scale += np.log(scale)
    val = float(env[0, 0])
    if val == 0.0:
        return -np.inf, 0.0
    return log_scale + np.log(abs(val)), float(np.sign(val))


def fidelity_per_site(m1: BoundaryMps, m2: BoundaryMps) -> float:
    log12, _ = mps_log_overlap(m1, m2)
    log11, _ = mps_log_overlap(m1, m1)
    log22, _ = mps_log_overlap(m2, m2)
    if not np.isfinite(log12):
        return 0.0
    return float(np.exp((log12 - 0.5 * log11 - 0.5 * log22) / len(m1)))


def svd_truncate(
    m: BoundaryMps,
    threshold: float = DEFAULT_THRESHOLD,
    chi_max: int = DEFAULT_CHI_MAX,
) -> BoundaryMps:
    """Canonicalize, normalize, and discard singular values below ``threshold``.

    The returned state is 2-normalized with the norm folded into
    ``log_norm``; singular values are therefore on the Schmidt scale and the
    absolute threshold matches the configured truncation criterion.  At
    least one value per cut is always kept; a ``TruncationReport`` lands in
    ``meta['truncation']``.
    """
    if threshold < 0:
        raise ParameterError("threshold must be >= 0")
    if chi_max > HARD_CHI_CAP:
        raise ResourceCapError(f"chi_max {chi_max} beyond hard cap {HARD_CHI_CAP}")
    tensors = [t.copy() for t in m.tensors]
    n = len(tensors)
    log_norm = m.log_norm
    # Left-to-right QR sweep: left-orthogonalize, pushing the norm rightward.
    for x in range(n - 1):
        chi_l, d, chi_r = tensors[x].shape
        q, r = np.linalg.qr(tensors[x].reshape(chi_l * d, chi_r))
        scale = np.abs(r).max()
        if scale > 0:
            r = r / scale
            log_norm += np.log(scale)
        tensors[x] = q.reshape(chi_l, d, q.shape[1])
        tensors[x + 1] = np.tensordot(r, tensors[x + 1], axes=(1, 0))
    norm = np.linalg.norm(tensors[-1])
    if norm == 0.0:
        raise ParameterError("cannot truncate a zero MPS")
    tensors[-1] = tensors[-1] / norm
    log_norm += np.log(norm)
    # Right-to-left SVD sweep with truncation.
    discarded = []
    rank_floor = False
    for x in range(n - 1, 0, -1):
        chi_l, d, chi_r = tensors[x].shape
        u, s, vh = np.linalg.svd(tensors[x].reshape(chi_l, d * chi_r), full_matrices=False)
        keep = int(np.sum(s >= threshold))
        if keep == 0:
            keep = 1
            rank_floor = True
        keep = min(keep, chi_max)
        discarded.append(float(np.sum(s[keep:] ** 2)))
        tensors[x] = vh[:keep].reshape(keep, d, chi_r)
        carry = u[:, :keep] * s[:keep]
        tensors[x - 1] = np.tensordot(tensors[x - 1], carry, axes=(2, 0))
    # Renormalize: truncation sheds a little weight.
    norm = np.linalg.norm(tensors[0])
    tensors[0] = tensors[0] / norm
    log_norm += np.log(norm)
    out = BoundaryMps(tensors, log_norm, dict(m.meta))
    out.meta["truncation"] = TruncationReport(discarded[::-1], rank_floor)
    return out


def apply_column(
    m: BoundaryMps,
    mpo: ColumnMpo,
    chi_max: int = DEFAULT_CHI_MAX,
    threshold: float = DEFAULT_THRESHOLD,
    side: str = "left",
) -> BoundaryMps:
    """Contract a column MPO into the boundary MPS and truncate.

    ``side='left'`` absorbs the column from the south side (MPS legs plug
    into the MPO input legs); ``side='right'`` from the north side.
    """
    if len(m) != len(mpo):
        raise GeometryMismatchError("boundary MPS and column length differ")
    if side not in ("left", "right"):
        raise ParameterError("side must be 'left' or 'right'")
    new_tensors = []
    for t, w in zip(m.tensors, mpo.tensors):
        if side == "left":
            merged = np.einsum("aib,weik->awkbe", t, w, optimize=True)
        else:
            merged = np.einsum("akb,weik->awibe", t, w, optimize=True)
        a, wdim, d, b, e = merged.shape
        new_tensors.append(merged.reshape(a * wdim, d, b * e))
    grown = BoundaryMps(new_tensors, m.log_norm, dict(m.meta))
    return svd_truncate(grown, threshold=threshold, chi_max=chi_max)


def boundary_fixed_point(
    mpo: ColumnMpo,
    init: BoundaryMps,
    side: str = "left",
    tol: float = 1e-10,
    chi_max: int = DEFAULT_CHI_MAX,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = 10_000,
) -> BoundaryMps:
    """Power-iterate a column MPO to its boundary fixed point.

    Convergence is measured by the fidelity per site between successive
    normalized iterates.  The log of the dominant growth factor per column
    is stored in ``meta['growth_rate']``.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    current = svd_truncate(init, threshold=threshold, chi_max=chi_max)
    current.log_norm = 0.0
    residual = None
    for iteration in range(max_iter):
        nxt = apply_column(current, mpo, chi_max=chi_max, threshold=threshold, side=side)
        growth = nxt.log_norm
        nxt.log_norm = 0.0
        residual = 1.0 - fidelity_per_site(current, nxt)
        current = nxt
        if residual <= tol:
            current.meta["growth_rate"] = growth
            current.meta["iterations"] = iteration + 1
            current.meta["residual"] = residual
            return current
    raise ConvergenceError(
        f"boundary fixed point did not converge within {max_iter} iterations",
        residual=residual,
    )


def default_boundary_init(width_x: int, seed: int = 0xB0A2D1CE) -> BoundaryMps:
    """Deterministic near-uniform positive initial MPS for power iteration."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    tensors = [
        np.abs(np.ones((1, 4, 1)) + 0.01 * rng.random((1, 4, 1))) for _ in range(width_x)
    ]
    return BoundaryMps(tensors)


# ---------------------------------------------------------------------------
# Fixed-point cache (read-mostly; guarded for threaded sweeps)

_FIXED_POINT_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def clear_fixed_point_cache() -> None:
    with _CACHE_LOCK:
        _FIXED_POINT_CACHE.clear()


def strip_fixed_points(
    g_x: float,
    g_z: float,
    width_x: int,
    threshold: float = DEFAULT_THRESHOLD,
    chi_max: int = DEFAULT_CHI_MAX,
    tol: float = 1e-10,
) -> tuple[BoundaryMps, BoundaryMps]:
    """Left and right boundary fixed points of the averaged column MPO."""
    key = (round(g_x, 12), round(g_z, 12), width_x, threshold, chi_max, tol)
    with _CACHE_LOCK:
        hit = _FIXED_POINT_CACHE.get(key)
    if hit is not None:
        return hit[0].copy(), hit[1].copy()
    mpo = averaged_column_mpo(g_x, g_z, width_x)
    init = default_boundary_init(width_x)
    left = boundary_fixed_point(mpo, init, side="left", tol=tol, chi_max=chi_max, threshold=threshold)
    right = boundary_fixed_point(mpo, init, side="right", tol=tol, chi_max=chi_max, threshold=threshold)
    with _CACHE_LOCK:
        _FIXED_POINT_CACHE[key] = (left.copy(), right.copy())
    return left, right


# ---------------------------------------------------------------------------
# Checkpointing

CHECKPOINT_VERSION = 1


def save_boundary_mps(path, m: BoundaryMps, **header) -> None:
    payload = {f"tensor_{i}": t for i, t in enumerate(m.tensors)}
    meta = {k: v for k, v in m.meta.items() if isinstance(v, (int, float, str))}
    np.savez(
        path,
        version=CHECKPOINT_VERSION,
        n_sites=len(m),
        log_norm=m.log_norm,
        header=json.dumps({**meta, **header}),
        **payload,
    )


def load_boundary_mps(path) -> BoundaryMps:
    with np.load(path) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {data['version']}")
        n = int(data["n_sites"])
        tensors = [data[f"tensor_{i}"] for i in range(n)]
        meta = json.loads(str(data["header"]))
        return BoundaryMps(tensors, float(data["log_norm"]), meta)
