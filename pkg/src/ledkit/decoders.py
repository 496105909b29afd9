"""Local error correction on snapshots and the layered correction pipeline.

Three decoders are provided.  The pairing decoder flips a qubit exactly
when both adjacent plaquettes hold an anyon (decisions read the input
syndrome only, never each other's flips) and additionally removes
diagonal pairs through two-qubit L-paths.  The patch decoder runs exact
minimum-weight matching with open boundaries inside every l-by-l window
and aggregates pairings by vote; its correction distance is floor(l/2).
The annulus decoder matches all anyons inside an annulus against each
other or the nearest annulus edge and never connects the annulus interior
to its exterior.

All decoders operate on open-strip snapshots of either basis (X-basis
snapshots live in the dual frame where the same plaquette arithmetic
applies).  Decoding is a pure function of the snapshot; the
transformer-style wrappers at the bottom compose with scikit-learn
pipelines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import LayerCountError, ParameterError, ResourceCapError
from .lattice import (
    LINK_H,
    LINK_V,
    LatticeGeometry,
    Snapshot,
    coarse_grain,
    compute_syndrome,
)
from .validation import as_snapshot_list, check_snapshot

DEFAULT_BOUNDARY_BIAS = 1e-3
EXHAUSTIVE_ANYON_CAP = 10
MATCHING_ANYON_CAP = 10_000
_TIE_TOL = 1e-9


@dataclass
class CorrectionPlan:
    """Qubit flips a decoder commits to, with their anyon-pairing record.

    ``pairings`` entries are either two plaquette coordinates or a
    plaquette plus a ``(boundary_tag, dump_plaquette)`` pair for boundary
    matches; ``dump_plaquette`` is None when the path leaves the lattice.
    Applying ``flips`` toggles the syndrome exactly at the XOR of all
    pairing endpoints (boundary pairings toggle the dump site too).
    """

    geometry: LatticeGeometry
    flips: np.ndarray = field(repr=False)
    pairings: list = field(default_factory=list)

    @property
    def n_flips(self) -> int:
        return int(self.flips.sum())

    def expected_toggles(self) -> np.ndarray:
        toggles = np.zeros(self.geometry.plaquette_shape(), dtype=bool)
        for a, b in self.pairings:
            toggles[a] ^= True
            if isinstance(b, tuple) and len(b) == 2 and isinstance(b[0], str):
                if b[1] is not None:
                    toggles[b[1]] ^= True
            else:
                toggles[b] ^= True
        return toggles

    def to_json(self) -> str:
        flips = [
            {"link": "hv"[a], "x": int(x), "y": int(y)}
            for a, x, y in zip(*np.nonzero(self.flips))
        ]
        pairs = []
        for a, b in self.pairings:
            if isinstance(b, tuple) and len(b) == 2 and isinstance(b[0], str):
                pairs.append({"p": list(map(int, a)), "boundary": b[0],
                              "dump": None if b[1] is None else list(map(int, b[1]))})
            else:
                pairs.append({"p": list(map(int, a)), "q": list(map(int, b))})
        return json.dumps({"flips": flips, "pairings": pairs}, sort_keys=True)


def _empty_flips(geometry: LatticeGeometry) -> np.ndarray:
    return np.zeros((2, geometry.width_x, geometry.length_y), dtype=bool)


def _require_strip(s: Snapshot) -> Snapshot:
    check_snapshot(s)
    if s.geometry.periodic_y:
        raise ParameterError("decoders operate on open-strip snapshots")
    return s


def _l_path_flips(flips: np.ndarray, p: tuple, q: tuple) -> None:
    """Toggle a horizontal-then-vertical minimal path between plaquettes."""
    x1, y1 = p
    x2, y2 = q
    step = 1 if x2 > x1 else -1
    for x in range(x1, x2, step):
        flips[LINK_V, max(x, x + step), y1] ^= True
    step = 1 if y2 > y1 else -1
    for y in range(y1, y2, step):
        flips[LINK_H, x2, max(y, y + step)] ^= True


def apply_plan(s: Snapshot, plan: CorrectionPlan) -> Snapshot:
    if plan.geometry != s.geometry:
        raise ParameterError("plan geometry does not match snapshot")
    return s.with_flips(plan.flips)


# ---------------------------------------------------------------------------
# Pairing decoder


def pairing_decode(
    s: Snapshot,
    randomize_diagonal: bool = False,
    seed: int = 0,
) -> CorrectionPlan:
    """Adjacent-pair flips plus diagonal L-path removal.

    All decisions read the syndrome of the input snapshot.  Diagonal pairs
    (offsets (+1, +1) and (+1, -1), both orthogonal intermediates clean)
    are committed greedily in lexicographic order, each anyon at most
    once.  The L-path runs horizontal-then-vertical; ``randomize_diagonal``
    picks vertical-first with probability 1/2 per pair for bias studies.
    """
    _require_strip(s)
    minus = compute_syndrome(s).plaquette_values == -1
    flips = _empty_flips(s.geometry)
    pairings = []

    both_h = minus[:, :-1] & minus[:, 1:]  # plaquettes (x,y),(x,y+1) share h(x,y+1)
    flips[LINK_H, :, 1:] ^= both_h
    for x, y in np.argwhere(both_h):
        pairings.append(((x, y), (x, y + 1)))
    both_v = minus[:-1, :] & minus[1:, :]  # plaquettes (x,y),(x+1,y) share v(x+1,y)
    flips[LINK_V, 1:, :] ^= both_v
    for x, y in np.argwhere(both_v):
        pairings.append(((x, y), (x + 1, y)))

    rng = np.random.default_rng(seed) if randomize_diagonal else None
    consumed = np.zeros_like(minus)
    wx, ly = minus.shape
    for x, y in np.argwhere(minus):
        for dy in (-1, 1):
            q = (x + 1, y + dy)
            if not (q[0] < wx and 0 <= q[1] < ly):
                continue
            if consumed[x, y] or consumed[q]:
                continue
            if not minus[q]:
                continue
            mid1, mid2 = (x + 1, y), (x, y + dy)
            if minus[mid1] or minus[mid2]:
                continue
            consumed[x, y] = consumed[q] = True
            if rng is not None and rng.random() < 0.5:
                flips[LINK_H, x, max(y, y + dy)] ^= True
                flips[LINK_V, x + 1, y + dy] ^= True
            else:
                flips[LINK_V, x + 1, y] ^= True
                flips[LINK_H, x + 1, max(y, y + dy)] ^= True
            pairings.append(((int(x), int(y)), (int(q[0]), int(q[1]))))
            break
    return CorrectionPlan(s.geometry, flips, pairings)


# ---------------------------------------------------------------------------
# Minimum-weight matching engines


def _enumerate_min_matchings(pair_w: np.ndarray, bd_w: np.ndarray, cap: int = 32):
    """All minimum-weight matchings of anyons with per-anyon boundary options.

    ``pair_w[i, j]`` is the anyon-anyon weight and ``bd_w[i]`` the boundary
    weight.  Returns (weight, matchings) where each matching is a list of
    (i, j) pairs and (i, None) boundary matches.  Exact branch-and-bound,
    intended for small windows.
    """
    n = len(bd_w)
    best = [np.inf]
    results: list[list] = []

    def recurse(unmatched: tuple, weight: float, partial: list):
        if weight > best[0] + _TIE_TOL:
            return
        if not unmatched:
            if weight < best[0] - _TIE_TOL:
                best[0] = weight
                results.clear()
            if len(results) < cap:
                results.append(list(partial))
            return
        i, rest = unmatched[0], unmatched[1:]
        partial.append((i, None))
        recurse(rest, weight + bd_w[i], partial)
        partial.pop()
        for idx, j in enumerate(rest):
            partial.append((i, j))
            recurse(rest[:idx] + rest[idx + 1 :], weight + pair_w[i, j], partial)
            partial.pop()

    recurse(tuple(range(n)), 0.0, [])
    return best[0], results


def _blossom_min_matching(pair_w: np.ndarray, bd_w: np.ndarray):
    """One minimum-weight matching via blossom on the boundary-doubled graph."""
    n = len(bd_w)
    g = nx.Graph()
    for i in range(n):
        g.add_edge(i, n + i, weight=-float(bd_w[i]))
        for j in range(i + 1, n):
            g.add_edge(i, j, weight=-float(pair_w[i, j]))
            g.add_edge(n + i, n + j, weight=0.0)
    mate = nx.max_weight_matching(g, maxcardinality=True)
    matching = []
    for a, b in mate:
        a, b = min(a, b), max(a, b)
        if a < n and b < n:
            matching.append((a, b))
        elif a < n and b == n + a:
            matching.append((a, None))
        # boundary-boundary edges carry no action
    weight = sum(bd_w[i] if j is None else pair_w[i, j] for i, j in matching)
    return weight, [matching]


def mwpm_with_boundary(
    anyons: list[tuple[int, int]],
    window: tuple[int, int, int, int],
    bias: float = DEFAULT_BOUNDARY_BIAS,
    rng: np.random.Generator | None = None,
    return_optima: bool = False,
):
    """Exact MWPM inside a window with open boundaries.

    Anyon-anyon weight is the Manhattan distance; the boundary option costs
    the number of steps to exit the window minus ``bias`` (ties break in
    favor of the boundary).  Equal-weight optima are tie-broken uniformly
    at random unless ``return_optima`` asks for the full list.
    """
    x0, y0, x1, y1 = window
    pts = np.asarray(anyons, dtype=int)
    if pts.size and (
        pts[:, 0].min() < x0 or pts[:, 0].max() > x1 or pts[:, 1].min() < y0 or pts[:, 1].max() > y1
    ):
        raise ParameterError("anyons must lie inside the window")
    n = len(anyons)
    if n == 0:
        return [] if not return_optima else (0.0, [[]])
    pair_w = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2).astype(float)
    bd_w = (
        np.minimum.reduce(
            [pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]]
        ).astype(float)
        + 1.0
        - bias
    )
    if n <= EXHAUSTIVE_ANYON_CAP:
        weight, optima = _enumerate_min_matchings(pair_w, bd_w)
    else:
        weight, optima = _blossom_min_matching(pair_w, bd_w)
    if return_optima:
        return weight, optima
    pick = optima[0]
    if len(optima) > 1:
        rng = rng or np.random.default_rng(0)
        pick = optima[int(rng.integers(len(optima)))]
    return [
        (tuple(anyons[i]), None if j is None else tuple(anyons[j])) for i, j in pick
    ]


# ---------------------------------------------------------------------------
# Patch decoder


def aggregate_pair_counts(
    s: Snapshot,
    l: int,
    boundary_bias: float = DEFAULT_BOUNDARY_BIAS,
    tie_seed: int = 0,
) -> dict:
    """Vote table of the patch decoder: window-matched pair frequencies.

    Every l-by-l window of plaquettes runs MWPM and casts one vote per
    matched anyon pair (boundary matches are dropped).  A window with two
    optimal matchings casts half votes each; more than two draw one at
    random with a window-local seed, so far-away snapshot changes cannot
    shift a window's draw.
    """
    _require_strip(s)
    if l < 2:
        raise ParameterError("patch window must satisfy l >= 2")
    minus = compute_syndrome(s).plaquette_values == -1
    wx, ly = minus.shape
    anyons = np.argwhere(minus)
    if len(anyons) > MATCHING_ANYON_CAP:
        raise ResourceCapError(f"{len(anyons)} anyons exceed the matching cap")
    counts: dict[tuple, float] = {}
    if len(anyons) < 2 or wx < l or ly < l:
        return counts
    # prefix sums give per-window anyon counts; only windows holding at
    # least two anyons can vote
    cum = np.zeros((wx + 1, ly + 1), dtype=int)
    cum[1:, 1:] = np.cumsum(np.cumsum(minus, axis=0), axis=1)
    ax, ay = anyons[:, 0], anyons[:, 1]
    for wxo in range(wx - l + 1):
        for wyo in range(ly - l + 1):
            inside = (
                cum[wxo + l, wyo + l] - cum[wxo, wyo + l] - cum[wxo + l, wyo] + cum[wxo, wyo]
            )
            if inside < 2:
                continue
            mask = (ax >= wxo) & (ax < wxo + l) & (ay >= wyo) & (ay < wyo + l)
            local = [tuple(a) for a in anyons[mask]]
            _, optima = mwpm_with_boundary(
                local,
                (wxo, wyo, wxo + l - 1, wyo + l - 1),
                bias=boundary_bias,
                return_optima=True,
            )
            if len(optima) > 2:
                rng = np.random.Generator(
                    np.random.Philox(np.random.SeedSequence((tie_seed, wxo, wyo)))
                )
                optima = [optima[int(rng.integers(len(optima)))]]
            share = 1.0 / len(optima)
            for matching in optima:
                for i, j in matching:
                    if j is None:
                        continue
                    p, q = sorted((local[i], local[j]))
                    counts[(p, q)] = counts.get((p, q), 0.0) + share
    return counts


def patch_decode(
    s: Snapshot,
    l: int,
    boundary_bias: float = DEFAULT_BOUNDARY_BIAS,
    tie_seed: int = 0,
) -> CorrectionPlan:
    """Windowed MWPM with vote aggregation; correction distance floor(l/2).

    Each anyon pairs with its most frequent window partner; conflicts are
    resolved greedily by descending vote (ties lexicographic) and losers
    stay in place.  Committed pairs are removed through minimal L-paths.
    """
    counts = aggregate_pair_counts(s, l, boundary_bias, tie_seed)
    flips = _empty_flips(s.geometry)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    consumed: set = set()
    pairings = []
    for (p, q), votes in ordered:
        if votes <= 0 or p in consumed or q in consumed:
            continue
        consumed.add(p)
        consumed.add(q)
        _l_path_flips(flips, p, q)
        pairings.append((p, q))
    return CorrectionPlan(s.geometry, flips, pairings)


# ---------------------------------------------------------------------------
# Annulus decoder


@dataclass(frozen=True)
class Annulus:
    """Square (Chebyshev) annulus of plaquettes around ``center``."""

    center: tuple[int, int]
    r_in: int
    r_out: int

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out):
            raise ParameterError("annulus radii must satisfy 0 < r_in < r_out")

    def radius(self, p) -> int:
        return max(abs(p[0] - self.center[0]), abs(p[1] - self.center[1]))

    def contains(self, p) -> bool:
        return self.r_in <= self.radius(p) <= self.r_out


def _radial_dump(annulus: Annulus, p: tuple[int, int], outward: bool) -> tuple[int, int]:
    """Endpoint of a boundary-match path: one ring past the matched edge.

    Outward matches extend the dominant axis to radius r_out + 1; inward
    matches clamp the offset into the hole box (radius r_in - 1), which a
    monotone L-path reaches without ever touching the outer edge.
    """
    cx, cy = annulus.center
    dx, dy = p[0] - cx, p[1] - cy
    if outward:
        target = annulus.r_out + 1
        if abs(dx) >= abs(dy):
            return (cx + (1 if dx >= 0 else -1) * target, p[1])
        return (p[0], cy + (1 if dy >= 0 else -1) * target)
    hole = annulus.r_in - 1
    return (cx + int(np.clip(dx, -hole, hole)), cy + int(np.clip(dy, -hole, hole)))


def annulus_decode(s: Snapshot, annulus: Annulus) -> CorrectionPlan:
    """Exact MWPM over the annulus with matching to the nearest edge.

    Boundary matches move the anyon one ring past the corresponding edge
    (their dump plaquette is recorded); no path ever crosses from the
    inner edge to the outer one, so the topological charge enclosed well
    inside the annulus is preserved.
    """
    _require_strip(s)
    g = s.geometry
    cx, cy = annulus.center
    if (
        cx - annulus.r_out - 1 < 0
        or cy - annulus.r_out - 1 < 0
        or cx + annulus.r_out + 1 >= g.width_x
        or cy + annulus.r_out + 1 >= g.length_y
    ):
        raise ParameterError("annulus (plus one dump ring) must fit inside the geometry")
    minus = compute_syndrome(s).plaquette_values == -1
    coords = [tuple(p) for p in np.argwhere(minus) if annulus.contains(tuple(p))]
    flips = _empty_flips(g)
    if len(coords) > MATCHING_ANYON_CAP:
        raise ResourceCapError(f"{len(coords)} anyons exceed the matching cap")
    if not coords:
        return CorrectionPlan(g, flips, [])
    pts = np.asarray(coords)
    pair_w = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2).astype(float)
    radii = np.array([annulus.radius(p) for p in coords])
    inner_w = radii - annulus.r_in + 1.0
    outer_w = annulus.r_out - radii + 1.0
    bd_w = np.minimum(inner_w, outer_w)
    outward = outer_w <= inner_w  # prefer outward on exact ties
    if len(coords) <= EXHAUSTIVE_ANYON_CAP:
        _, optima = _enumerate_min_matchings(pair_w, bd_w)
        matching = optima[0]
    else:
        _, optima = _blossom_min_matching(pair_w, bd_w)
        matching = optima[0]
    pairings = []
    for i, j in matching:
        if j is None:
            dump = _radial_dump(annulus, coords[i], bool(outward[i]))
            _l_path_flips(flips, coords[i], dump)
            tag = "outer" if outward[i] else "inner"
            pairings.append((coords[i], (tag, dump)))
        else:
            _l_path_flips(flips, coords[i], coords[j])
            pairings.append((coords[i], coords[j]))
    return CorrectionPlan(g, flips, pairings)


# ---------------------------------------------------------------------------
# Layered runner and schedules


@dataclass(frozen=True)
class LedLayer:
    decoder: "SnapshotDecoder"
    blocksize: int | None = None

    def __post_init__(self):
        if self.blocksize is not None and self.blocksize < 2:
            raise ParameterError("blocksize must be >= 2 when present")


@dataclass(frozen=True)
class LedSchedule:
    layers: tuple[LedLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ParameterError("a schedule needs at least one layer")

    def __len__(self):
        return len(self.layers)


def parse_schedule(spec: list[dict]) -> LedSchedule:
    """Schedule from config dicts: {"decoder": "pairing"|"patch"|"annulus",
    "l": int?, "b": int?, ...}."""
    layers = []
    for entry in spec:
        kind = entry.get("decoder")
        if kind == "pairing":
            dec = PairingDecoder(
                randomize_diagonal=entry.get("randomize_diagonal", False),
                seed=entry.get("seed", 0),
            )
        elif kind == "patch":
            if "l" not in entry:
                raise ParameterError("patch layer requires a window size 'l'")
            dec = PatchDecoder(
                window=entry["l"],
                boundary_bias=entry.get("bias", DEFAULT_BOUNDARY_BIAS),
                tie_seed=entry.get("tie_seed", 0),
            )
        elif kind == "annulus":
            dec = AnnulusDecoder(
                center=tuple(entry["center"]), r_in=entry["r_in"], r_out=entry["r_out"]
            )
        else:
            raise ParameterError(f"unknown decoder kind {kind!r}")
        layers.append(LedLayer(dec, entry.get("b")))
    return LedSchedule(tuple(layers))


def hierarchical_pairing_schedule(n_layers: int, b: int = 2) -> LedSchedule:
    return LedSchedule(tuple(LedLayer(PairingDecoder(), b) for _ in range(n_layers)))


def patch_schedule(n_layers: int, l: int = 4, b: int | None = 2) -> LedSchedule:
    return LedSchedule(tuple(LedLayer(PatchDecoder(window=l), b) for _ in range(n_layers)))


def run_led(s: Snapshot, schedule: LedSchedule) -> list[Snapshot]:
    """Alternate decode and coarse-grain; returns snapshots at layers 0..n."""
    out = [s]
    current = s
    for layer in schedule.layers:
        plan = layer.decoder.decode(current)
        current = apply_plan(current, plan)
        if layer.blocksize is not None:
            try:
                current = coarse_grain(current, layer.blocksize)
            except ParameterError as exc:
                raise LayerCountError(
                    f"geometry exhausted after {len(out) - 1} layers: {exc}"
                ) from exc
        out.append(current)
    return out


# ---------------------------------------------------------------------------
# Transformer-style API


class SnapshotTransformer(BaseEstimator, TransformerMixin):
    """Stateless snapshot-to-snapshot transformer base.

    ``transform`` accepts a Snapshot or a sequence of Snapshots and maps
    each through ``transform_one``; ``fit`` is a no-op so these compose
    with scikit-learn pipelines and ``get_params`` round-trips.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [self.transform_one(s) for s in as_snapshot_list(X)]

    def transform_one(self, s: Snapshot) -> Snapshot:  # pragma: no cover
        raise NotImplementedError


class SnapshotDecoder(SnapshotTransformer):
    def decode(self, s: Snapshot) -> CorrectionPlan:  # pragma: no cover
        raise NotImplementedError

    def transform_one(self, s: Snapshot) -> Snapshot:
        return apply_plan(s, self.decode(s))


class PairingDecoder(SnapshotDecoder):
    """Flip a qubit iff both adjacent plaquettes hold anyons, plus
    diagonal-pair removal."""

    def __init__(self, randomize_diagonal=False, seed=0):
        self.randomize_diagonal = randomize_diagonal
        self.seed = seed

    def decode(self, s: Snapshot) -> CorrectionPlan:
        return pairing_decode(s, self.randomize_diagonal, self.seed)


class PatchDecoder(SnapshotDecoder):
    """Windowed MWPM decoder with vote aggregation (d = window // 2)."""

    def __init__(self, window=4, boundary_bias=DEFAULT_BOUNDARY_BIAS, tie_seed=0):
        self.window = window
        self.boundary_bias = boundary_bias
        self.tie_seed = tie_seed

    @property
    def correction_distance(self) -> int:
        return self.window // 2

    def decode(self, s: Snapshot) -> CorrectionPlan:
        return patch_decode(s, self.window, self.boundary_bias, self.tie_seed)


class AnnulusDecoder(SnapshotDecoder):
    """MWPM over a square annulus, matching to the nearest edge."""

    def __init__(self, center=(0, 0), r_in=1, r_out=2):
        self.center = center
        self.r_in = r_in
        self.r_out = r_out

    def decode(self, s: Snapshot) -> CorrectionPlan:
        return annulus_decode(s, Annulus(tuple(self.center), self.r_in, self.r_out))


class CoarseGrainer(SnapshotTransformer):
    """Block b x b plaquettes into one (see lattice.coarse_grain)."""

    def __init__(self, blocksize=2):
        self.blocksize = blocksize

    def transform_one(self, s: Snapshot) -> Snapshot:
        return coarse_grain(s, self.blocksize)


class BitFlipChannel(SnapshotTransformer):
    """Independent measurement bit flips, one substream per snapshot."""

    def __init__(self, p_flip=0.0, seed=0):
        self.p_flip = p_flip
        self.seed = seed

    def transform(self, X):
        from .noise import apply_bitflips

        snapshots = as_snapshot_list(X)
        children = np.random.SeedSequence(self.seed).spawn(len(snapshots))
        return [apply_bitflips(s, self.p_flip, c) for s, c in zip(snapshots, children)]

    def transform_one(self, s: Snapshot) -> Snapshot:
        from .noise import apply_bitflips

        return apply_bitflips(s, self.p_flip, self.seed)


class LedPipeline(SnapshotTransformer):
    """One LED run as a transformer: decode/coarse-grain layers in order."""

    def __init__(self, schedule=None):
        self.schedule = schedule

    def _schedule(self) -> LedSchedule:
        if isinstance(self.schedule, LedSchedule):
            return self.schedule
        if isinstance(self.schedule, list):
            return parse_schedule(self.schedule)
        raise ParameterError("LedPipeline needs a schedule")

    def transform_one(self, s: Snapshot) -> Snapshot:
        return run_led(s, self._schedule())[-1]

    def transform_layers(self, X) -> list[list[Snapshot]]:
        """Per-snapshot lists of all intermediate layers (index = n)."""
        schedule = self._schedule()
        return [run_led(s, schedule) for s in as_snapshot_list(X)]
