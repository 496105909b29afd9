"""Sequential exact sampling of projective measurement snapshots.

Snapshots of the perturbed state are drawn column by column on a strip of
height ``width_x``.  The environment of the sampled region is carried by
two boundary MPS: the right one is the averaged fixed point of the column
transfer operator (a static, unmeasured environment), while the left one
starts from the averaged fixed point and absorbs each measured column, so
later conditionals see all earlier outcomes.  Within a column, sites are
sampled bottom-to-top from their exact conditional distributions.

``environment='finite'`` replaces both fixed points with the open-patch
end closures, turning the sampler into an exact finite-system sampler
that the dense brute-force oracle checks against.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateWeightError, ParameterError, ResourceCapError
from .lattice import (
    BOUNDARY_STRIP,
    LatticeGeometry,
    Snapshot,

)
from .tensornet import (
    HARD_CHI_CAP,
    OPEN_LEG_CLOSURE,
    TRACE_LEG_CLOSURE,
    BoundaryMps,
    apply_column,
    averaged_column_mpo,
    build_site_tensor,
    column_mpo,
    doubled_tensor,
    product_boundary,
    strip_fixed_points,
)

WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class SampleConfig:
    """Run parameters for one sampling job."""

    g_x: float
    g_z: float
    width_x: int
    n_columns: int
    seed: int
    basis: str = "Z"
    truncation_threshold: float = 1e-8
    chi_max: int = 64
    burn_in_columns: int = 0
    environment: str = "infinite"

    def __post_init__(self):
        if self.n_columns < 1:
            raise ParameterError("n_columns must be >= 1")
        if self.width_x < 2:
            raise ParameterError("width_x must be >= 2")
        if self.truncation_threshold < 0:
            raise ParameterError("truncation threshold must be >= 0")
        if self.basis not in ("Z", "X"):
            raise ParameterError("basis must be 'Z' or 'X'")
        if self.environment not in ("infinite", "finite"):
            raise ParameterError("environment must be 'infinite' or 'finite'")


@dataclass(frozen=True)
class SnapshotStream:
    """One sampling run: a wide snapshot plus per-column replay data."""

    config: SampleConfig
    snapshot: Snapshot
    column_outcomes: np.ndarray = field(repr=False)  # (width_x, n_columns), codes 2a+b
    column_spawn_keys: tuple[int, ...] = ()

    def split(self, columns_per_snapshot: int) -> list[Snapshot]:
        """Chop the wide snapshot into consecutive open-strip snapshots."""
        g = self.snapshot.geometry
        n = g.length_y // columns_per_snapshot
        return [
            self.snapshot.crop(0, i * columns_per_snapshot, g.width_x, columns_per_snapshot)
            for i in range(n)
        ]


class _ColumnSandwich:
    """(left bMPS | column | right bMPS) contraction engine for one column.

    Environment vectors live on cuts between sites and carry three axes:
    the left-MPS bond, the column-internal doubled bond, and the right-MPS
    bond.  The cut below site 0 holds the open-leg closure, the cut above
    the last site the trace closure; everything is rescaled to unit
    max-norm since only weight ratios matter.
    """

    def __init__(self, left: BoundaryMps, right: BoundaryMps, t_avg: np.ndarray, t_pinned: np.ndarray):
        self.left = left.tensors
        self.right = right.tensors
        self.n = len(self.left)
        self.t_avg = t_avg  # (south, west, north, east), dims 4
        self.t_pinned = t_pinned  # (outcome, south, west, north, east)
        self._build_up()

    def _build_up(self):
        """up[x]: contraction of sites x..n-1, vector on cut x as (b, e, d)."""
        n = self.n
        self.up = [None] * (n + 1)
        vec = TRACE_LEG_CLOSURE.reshape(1, 4, 1)
        self.up[n] = vec
        self.fused = [None] * n  # right[x] fused with up[x+1]
        for x in range(n - 1, -1, -1):
            ru = np.einsum("cnd,bed->cnbe", self.right[x], self.up[x + 1], optimize=True)
            self.fused[x] = ru
            sw = np.einsum("swne,cnbe->swcb", self.t_avg, ru, optimize=True)
            vec = np.einsum("asb,swcb->awc", self.left[x], sw, optimize=True)
            scale = np.abs(vec).max()
            if scale > 0:
                vec = vec / scale
            self.up[x] = vec

    def start_down(self) -> np.ndarray:
        return OPEN_LEG_CLOSURE.reshape(1, 4, 1)

    def site_weights(self, x: int, down: np.ndarray) -> np.ndarray:
        """Unnormalized weights of the four outcomes at site x."""
        d1 = np.einsum("awc,asb->wscb", down, self.left[x], optimize=True)
        core = np.einsum("wscb,cnbe->swne", d1, self.fused[x], optimize=True)
        return np.einsum("swne,oswne->o", core, self.t_pinned, optimize=True)

    def pin(self, x: int, code: int, down: np.ndarray) -> np.ndarray:
        """Absorb site x with a fixed outcome into the downward environment."""
        d1 = np.einsum("awc,asb->wscb", down, self.left[x], optimize=True)
        f = np.einsum("wscb,swne->cbne", d1, self.t_pinned[code], optimize=True)
        vec = np.einsum("cbne,cnd->bed", f, self.right[x], optimize=True)
        scale = np.abs(vec).max()
        if scale > 0:
            vec = vec / scale
        return vec


def _environments(
    config: SampleConfig, chi_max: int, total_columns: int
) -> tuple[BoundaryMps, list[BoundaryMps]]:
    """Initial left environment plus one right environment per column.

    The right environment of column ``y`` accounts for every unmeasured
    column beyond it: the averaged fixed point in infinite mode, or the
    remaining averaged columns in front of the trace closure on a finite
    patch.
    """
    if config.environment == "finite":
        left = product_boundary(OPEN_LEG_CLOSURE, config.width_x)
        mpo = averaged_column_mpo(config.g_x, config.g_z, config.width_x)
        rights = [None] * total_columns
        r = product_boundary(TRACE_LEG_CLOSURE, config.width_x)
        for y in range(total_columns - 1, -1, -1):
            rights[y] = r
            if y > 0:
                r = apply_column(
                    r,
                    mpo,
                    chi_max=chi_max,
                    threshold=config.truncation_threshold,
                    side="right",
                )
                r.log_norm = 0.0
        return left, rights
    left, right = strip_fixed_points(
        config.g_x,
        config.g_z,
        config.width_x,
        threshold=config.truncation_threshold,
        chi_max=chi_max,
    )
    return left, [right] * total_columns


def _pinned_stack(g_x: float, g_z: float) -> tuple[np.ndarray, np.ndarray]:
    site = build_site_tensor(g_x, g_z)
    avg = doubled_tensor(site).entries
    pinned = np.stack(
        [doubled_tensor(site, (code >> 1, code & 1)).entries for code in range(4)]
    )
    return avg, pinned


def _normalize_weights(weights: np.ndarray) -> np.ndarray:
    # environments carry an arbitrary global sign (QR/SVD gauge); the true
    # weights are nonnegative, so orient by the sum before clipping
    total = weights.sum()
    if total < 0:
        weights, total = -weights, -total
    weights = np.clip(weights, 0.0, None)
    if total <= WEIGHT_FLOOR:
        raise DegenerateWeightError(
            f"conditional weights collapsed (sum={total:.3e})"
        )
    return weights / weights.sum()


def conditional_distribution(
    left: BoundaryMps,
    right: BoundaryMps,
    column_partial: list[tuple[int, int]],
    site_x: int,
    g_x: float,
    g_z: float,
) -> np.ndarray:
    """P(ab | fixed outcomes below ``site_x``) for ab in {00, 01, 10, 11}.

    ``column_partial`` lists the outcomes already fixed at sites
    ``0 .. site_x - 1`` of the current column as ``(a, b)`` bit pairs with
    ``a`` the h qubit.  Result index order is ``2*a + b``; the four entries
    are clamped nonnegative and sum to one.
    """
    if len(column_partial) != site_x:
        raise ParameterError("column_partial must fix exactly the sites below site_x")
    avg, pinned = _pinned_stack(g_x, g_z)
    sandwich = _ColumnSandwich(left, right, avg, pinned)
    down = sandwich.start_down()
    for x, (a, b) in enumerate(column_partial):
        down = sandwich.pin(x, 2 * a + b, down)
    return _normalize_weights(sandwich.site_weights(site_x, down))


def sample_snapshot(config: SampleConfig) -> SnapshotStream:
    """Draw one wide Z-basis snapshot, column by column, site by site.

    On a degenerate-weight failure (a truncation artifact near phase
    boundaries) the whole stream is redrawn with doubled ``chi_max`` up to
    the hard cap; draws stay deterministic in (config, seed).
    """
    if config.basis != "Z":
        raise ParameterError("sample_snapshot draws Z-basis snapshots; see sample_basis_x")
    return _sample_stream(config)


def _sample_stream(config: SampleConfig) -> SnapshotStream:
    chi = config.chi_max
    while True:
        try:
            return _sample_stream_once(config, chi)
        except DegenerateWeightError:
            chi *= 2
            if chi > HARD_CHI_CAP:
                raise


def _sample_stream_once(config: SampleConfig, chi_max: int) -> SnapshotStream:
    lx = config.width_x
    total_columns = config.burn_in_columns + config.n_columns
    left, rights = _environments(config, chi_max, total_columns)
    avg, pinned = _pinned_stack(config.g_x, config.g_z)
    site = build_site_tensor(config.g_x, config.g_z)
    pinned_tensors = [doubled_tensor(site, (c >> 1, c & 1)) for c in range(4)]

    root = np.random.SeedSequence(config.seed)
    children = root.spawn(total_columns)
    outcomes = np.zeros((lx, total_columns), dtype=np.int8)

    for y in range(total_columns):
        rng = np.random.Generator(np.random.Philox(children[y]))
        sandwich = _ColumnSandwich(left, rights[y], avg, pinned)
        down = sandwich.start_down()
        for x in range(lx):
            probs = _normalize_weights(sandwich.site_weights(x, down))
            code = int(rng.choice(4, p=probs))
            outcomes[x, y] = code
            down = sandwich.pin(x, code, down)
        mpo = column_mpo([pinned_tensors[int(c)] for c in outcomes[:, y]])
        left = apply_column(
            left, mpo, chi_max=chi_max, threshold=config.truncation_threshold
        )
        left.log_norm = 0.0  # only ratios of weights are ever used

    kept = outcomes[:, config.burn_in_columns :]
    geometry = LatticeGeometry(lx, config.n_columns, BOUNDARY_STRIP)
    values = np.stack([1 - 2 * (kept >> 1), 1 - 2 * (kept & 1)]).astype(np.int8)
    snapshot = Snapshot(geometry, "Z", values)
    spawn_keys = tuple(int(c.spawn_key[-1]) for c in children)
    return SnapshotStream(config, snapshot, kept.copy(), spawn_keys)


def sample_basis_x(config: SampleConfig) -> SnapshotStream:
    """X-basis snapshots via self-duality.

    Measuring every qubit of the state at couplings ``(g_x, g_z)`` in the X
    basis is statistically identical to Z-basis sampling at the swapped
    couplings, read in dual-lattice coordinates.  Since X snapshots are
    stored in the dual frame (see :mod:`ledkit.lattice`), the relabeling is
    purely a retag: plaquette products of the returned array are the
    physical vertex stabilizers.
    """
    if config.basis != "X":
        raise ParameterError("sample_basis_x requires basis='X'")
    swapped = replace(config, g_x=config.g_z, g_z=config.g_x, basis="Z")
    stream = _sample_stream(swapped)
    dual = Snapshot(stream.snapshot.geometry, "X", stream.snapshot.values)
    return SnapshotStream(config, dual, stream.column_outcomes, stream.column_spawn_keys)


# ---------------------------------------------------------------------------
# Dense oracle


@dataclass(frozen=True)
class OutcomeDistribution:
    """Born probabilities of a small open patch, bit order matching the sampler.

    The flat index packs qubit bits as h(0,0), v(0,0), h(1,0), v(1,0), ...
    with x fastest, then y, and h before v; bit 0 = h(0,0) is least
    significant.  Bit value 1 encodes spin -1.
    """

    width_x: int
    n_columns: int
    probs: np.ndarray = field(repr=False)

    def index_of(self, snapshot: Snapshot) -> int:
        bits = (snapshot.values == -1).astype(np.int64)
        idx = 0
        for y in range(self.n_columns):
            for x in range(self.width_x):
                pos = 2 * (y * self.width_x + x)
                idx |= int(bits[0, x, y]) << pos
                idx |= int(bits[1, x, y]) << (pos + 1)
        return idx

    def probability(self, snapshot: Snapshot) -> float:
        return float(self.probs[self.index_of(snapshot)])

    def site_conditionals(self, outcomes: np.ndarray) -> list[np.ndarray]:
        """Exact conditionals along the sampler's sweep for given outcomes.

        ``outcomes`` is (width_x, n_columns) with codes ``2a + b``; returns
        one length-4 distribution per site in sweep order (x fast, y slow).
        """
        n_cells = self.width_x * self.n_columns
        # cell outcome code = 2a + b = the two bits (h, v) of that cell,
        # h being the lower bit position; so code = bit pair reversed
        joint = self.probs.reshape((4,) * n_cells)
        out = []
        prefix: list[int] = []
        for cell in range(n_cells):
            view = joint
            for code in prefix:  # consumes the least significant cell first
                a, b = code >> 1, code & 1
                view = view[..., 2 * b + a]
            marg = view.reshape(-1, 4).sum(axis=0)
            # last axis is the current cell's bit pair (v, h); reorder to 2a+b
            marg = marg[[0, 2, 1, 3]]
            out.append(marg / marg.sum())
            x, y = cell % self.width_x, cell // self.width_x
            prefix.append(int(outcomes[x, y]))
        return out


def brute_force_probabilities(
    g_x: float, g_z: float, geometry: LatticeGeometry
) -> OutcomeDistribution:
    """Dense state-vector oracle for open patches of at most 20 qubits.

    Builds the uniform superposition over parity-closed configurations on
    the patch (extended by one traced virtual bit per truncated plaquette:
    east-rim v links and north-rim h links), applies exp(g_x X + g_z Z) to
    every real qubit, and returns the Born distribution over real qubits.
    """
    lx, ly = geometry.width_x, geometry.length_y
    if geometry.periodic_y:
        raise ParameterError("oracle supports open strips only")
    n_real = 2 * lx * ly
    if n_real > 20:
        raise ResourceCapError(f"patch has {n_real} qubits; oracle cap is 20")
    from .tensornet import coupling_matrix

    n_virt = ly + lx
    n = n_real + n_virt

    def real_bit(x, y, link):
        return 2 * (y * lx + x) + link

    masks = []
    for y in range(ly):
        for x in range(lx):
            bits = [real_bit(x, y, 0), real_bit(x, y, 1)]
            bits.append(n_real + y if x + 1 == lx else real_bit(x + 1, y, 1))
            bits.append(n_real + ly + x if y + 1 == ly else real_bit(x, y + 1, 0))
            mask = 0
            for b in bits:
                mask |= 1 << b
            masks.append(np.uint64(mask))

    configs = np.arange(1 << n, dtype=np.uint64)
    ok = np.ones(1 << n, dtype=bool)
    for mask in masks:
        ok &= np.bitwise_count(configs & mask) % 2 == 0
    psi = ok.astype(np.float64).reshape((2,) * n)

    big_l = coupling_matrix(g_x, g_z)
    for qubit in range(n_real):
        axis = n - 1 - qubit  # bit 0 maps to the last axis
        psi = np.moveaxis(np.tensordot(big_l, psi, axes=(1, axis)), 0, axis)
    # virtual bits occupy the high positions: split them off and trace
    probs = (psi ** 2).reshape(1 << n_virt, 1 << n_real).sum(axis=0)
    return OutcomeDistribution(lx, ly, probs / probs.sum())
