"""Square-lattice geometry with qubits on links, snapshots, and syndromes.

Conventions used throughout the package:

* Unit cells carry integer coordinates ``(x, y)`` with ``0 <= x < width_x``
  and ``0 <= y < length_y``.  Each cell owns two link qubits: ``h(x, y)``
  runs from vertex ``(x, y)`` to ``(x+1, y)`` and ``v(x, y)`` from
  ``(x, y)`` to ``(x, y+1)``.
* Snapshot values are stored as an ``int8`` array of shape
  ``(2, width_x, length_y)`` with axis 0 indexing the link type
  (``0 = h``, ``1 = v``) and entries in ``{+1, -1}``.
* The plaquette at cell ``(x, y)`` multiplies ``h(x, y)``, ``h(x, y+1)``,
  ``v(x, y)`` and ``v(x+1, y)``.  On an open strip the plaquettes of the
  last column ``x = width_x - 1`` and last row ``y = length_y - 1`` are
  truncated: the product runs over the links that exist.  On a cylinder
  the y direction wraps and only the x edge is truncated.
* X-basis snapshots are stored in the dual frame: the value slot
  ``h(x, y)`` of an X snapshot holds the measured X value of the physical
  link that maps onto ``h(x, y)`` under the vertex<->plaquette duality.
  With this convention vertex stabilizers of the physical lattice are the
  plaquette products of the stored array, and every decoder, observable
  and coarse-graining routine applies verbatim in either basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import (
    CoordinateError,
    GeometryMismatchError,
    InfeasibleSyndromeError,
    ParameterError,
)

BOUNDARY_STRIP = "strip"
BOUNDARY_CYLINDER = "cyl"

LINK_H = 0
LINK_V = 1

_LINK_NAMES = {"h": LINK_H, "v": LINK_V}


@dataclass(frozen=True)
class LatticeGeometry:
    """Strip or y-periodic cylinder of unit cells, two link qubits per cell."""

    width_x: int
    length_y: int
    boundary: str = BOUNDARY_STRIP

    def __post_init__(self):
        if self.width_x < 2 or self.length_y < 2:
            raise ParameterError("geometry requires width_x >= 2 and length_y >= 2")
        if self.boundary not in (BOUNDARY_STRIP, BOUNDARY_CYLINDER):
            raise ParameterError(f"unknown boundary {self.boundary!r}")

    @property
    def n_qubits(self) -> int:
        return 2 * self.width_x * self.length_y

    @property
    def periodic_y(self) -> bool:
        return self.boundary == BOUNDARY_CYLINDER

    def plaquette_shape(self) -> tuple[int, int]:
        return (self.width_x, self.length_y)

    def full_plaquette_mask(self) -> np.ndarray:
        """Boolean mask of plaquettes whose four links all exist."""
        mask = np.ones(self.plaquette_shape(), dtype=bool)
        mask[-1, :] = False
        if not self.periodic_y:
            mask[:, -1] = False
        return mask

    def contains_plaquette(self, p: tuple[int, int]) -> bool:
        x, y = p
        return 0 <= x < self.width_x and 0 <= y < self.length_y

    def qubit_coords(self) -> Iterable["QubitCoord"]:
        for link in ("h", "v"):
            for x in range(self.width_x):
                for y in range(self.length_y):
                    yield QubitCoord(x, y, link)


@dataclass(frozen=True)
class QubitCoord:
    """One link qubit: cell coordinate plus link label ``h`` or ``v``."""

    x: int
    y: int
    link: str

    def __post_init__(self):
        if self.link not in _LINK_NAMES:
            raise ParameterError(f"link must be 'h' or 'v', got {self.link!r}")

    @property
    def axis(self) -> int:
        return _LINK_NAMES[self.link]


def _check_values(geometry: LatticeGeometry, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int8)
    expected = (2, geometry.width_x, geometry.length_y)
    if values.shape != expected:
        raise GeometryMismatchError(
            f"values shape {values.shape} does not match geometry {expected}"
        )
    if not np.all(np.abs(values) == 1):
        raise ParameterError("snapshot values must all be +1 or -1")
    return values


@dataclass(frozen=True)
class Snapshot:
    """A single-shot measurement record of every qubit, tagged with its basis."""

    geometry: LatticeGeometry
    basis: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ParameterError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        values = _check_values(self.geometry, self.values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def value(self, coord: QubitCoord) -> int:
        g = self.geometry
        if not (0 <= coord.x < g.width_x and 0 <= coord.y < g.length_y):
            raise CoordinateError(f"{coord} outside geometry")
        return int(self.values[coord.axis, coord.x, coord.y])

    def with_flips(self, mask: np.ndarray) -> "Snapshot":
        """Return a copy with values negated where ``mask`` is True."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.values.shape:
            raise GeometryMismatchError("flip mask shape mismatch")
        out = self.values.copy()
        out[mask] = -out[mask]
        return Snapshot(self.geometry, self.basis, out)

    def crop(self, x0: int, y0: int, width: int, length: int) -> "Snapshot":
        """Open-strip sub-snapshot covering cells [x0, x0+width) x [y0, y0+length)."""
        g = self.geometry
        if x0 < 0 or y0 < 0 or x0 + width > g.width_x or y0 + length > g.length_y:
            raise CoordinateError("crop window outside geometry")
        sub = LatticeGeometry(width, length, BOUNDARY_STRIP)
        return Snapshot(sub, self.basis, self.values[:, x0 : x0 + width, y0 : y0 + length])


@dataclass(frozen=True)
class SyndromeField:
    """Plaquette stabilizer values on the snapshot's geometry."""

    geometry: LatticeGeometry
    plaquette_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.plaquette_values, dtype=np.int8)
        if vals.shape != self.geometry.plaquette_shape():
            raise GeometryMismatchError("syndrome shape does not match geometry")
        vals.flags.writeable = False
        object.__setattr__(self, "plaquette_values", vals)

    def anyon_positions(self, full_only: bool = False) -> np.ndarray:
        """(n, 2) array of plaquette coordinates with value -1."""
        minus = self.plaquette_values == -1
        if full_only:
            minus &= self.geometry.full_plaquette_mask()
        return np.argwhere(minus)

    def anyon_density(self, full_only: bool = True) -> float:
        minus = self.plaquette_values == -1
        if full_only:
            mask = self.geometry.full_plaquette_mask()
            return float(minus[mask].mean())
        return float(minus.mean())


def plaquette_stabilizer(snapshot: Snapshot, p: tuple[int, int]) -> int:
    """Product of the (up to four) link values bordering plaquette ``p``."""
    g = snapshot.geometry
    x, y = p
    if not g.contains_plaquette(p):
        raise CoordinateError(f"plaquette {p} outside geometry")
    v = snapshot.values
    prod = int(v[LINK_H, x, y]) * int(v[LINK_V, x, y])
    if x + 1 < g.width_x:
        prod *= int(v[LINK_V, x + 1, y])
    if y + 1 < g.length_y:
        prod *= int(v[LINK_H, x, y + 1])
    elif g.periodic_y:
        prod *= int(v[LINK_H, x, 0])
    return prod


def compute_syndrome(snapshot: Snapshot) -> SyndromeField:
    """Evaluate every plaquette stabilizer (truncated products at open edges)."""
    g = snapshot.geometry
    h = snapshot.values[LINK_H].astype(np.int64)
    v = snapshot.values[LINK_V].astype(np.int64)
    synd = h * v
    synd[:-1, :] *= v[1:, :]
    if g.periodic_y:
        synd *= np.roll(h, -1, axis=1)
    else:
        synd[:, :-1] *= h[:, 1:]
    return SyndromeField(g, synd.astype(np.int8))


def coarse_grain(snapshot: Snapshot, b: int) -> Snapshot:
    """Block b x b plaquettes into one; coarse links are products of b
    colinear fine links along the coarse edge.  Trailing cells that do not
    fill a block are dropped."""
    if b < 2:
        raise ParameterError("coarse-graining blocksize must be >= 2")
    g = snapshot.geometry
    wx, ly = g.width_x // b, g.length_y // b
    if wx < 2 or ly < 2:
        raise ParameterError(
            f"geometry {g.width_x}x{g.length_y} too small for blocksize {b}"
        )
    if g.periodic_y and g.length_y % b != 0:
        raise ParameterError("cylinder length must divide the blocksize")
    h = snapshot.values[LINK_H]
    v = snapshot.values[LINK_V]
    # h'(X, Y) = prod_j h(bX + j, bY): b colinear horizontal links.
    hc = h[: wx * b, ::b][:, :ly].reshape(wx, b, ly).prod(axis=1)
    # v'(X, Y) = prod_i v(bX, bY + i): b colinear vertical links.
    vc = v[::b, : ly * b][:wx].reshape(wx, ly, b).prod(axis=2)
    coarse = LatticeGeometry(wx, ly, g.boundary)
    return Snapshot(coarse, snapshot.basis, np.stack([hc, vc]).astype(np.int8))


def syndrome_to_config(
    target: SyndromeField,
    reference: Snapshot,
    rng: np.random.Generator | None = None,
) -> Snapshot:
    """Flip qubits of ``reference`` so its syndrome becomes ``target``.

    Each plaquette whose value must toggle is connected to the open lattice
    edge by a straight path of flips (south through ``h`` links, or west
    through ``v`` links).  With an ``rng`` the exit direction is chosen at
    random per excitation, which avoids a systematic path-orientation bias;
    otherwise all paths exit south (west on cylinders).
    """
    g = reference.geometry
    if target.geometry != g:
        raise GeometryMismatchError("target syndrome geometry mismatch")
    delta = target.plaquette_values * compute_syndrome(reference).plaquette_values
    toggle = delta == -1  # plaquettes whose sign must change
    if g.periodic_y:
        south = np.zeros_like(toggle)
        west = toggle
    elif rng is None:
        south = toggle
        west = np.zeros_like(toggle)
    else:
        pick = rng.random(toggle.shape) < 0.5
        south = toggle & pick
        west = toggle & ~pick
    flips = np.zeros((2, g.width_x, g.length_y), dtype=bool)
    # South path for (x, y): flip h(x, 0..y).  Suffix-XOR along y gives all
    # paths at once.
    if south.any():
        suffix = np.flip(np.cumsum(np.flip(south, axis=1), axis=1), axis=1) % 2
        flips[LINK_H] ^= suffix.astype(bool)
    if west.any():
        suffix = np.flip(np.cumsum(np.flip(west, axis=0), axis=0), axis=0) % 2
        flips[LINK_V] ^= suffix.astype(bool)
    result = reference.with_flips(flips)
    realized = compute_syndrome(result).plaquette_values
    if not np.array_equal(realized, target.plaquette_values):
        raise InfeasibleSyndromeError("target syndrome not realizable on this geometry")
    return result


def dual_relabel(snapshot: Snapshot, new_basis: str) -> Snapshot:
    """Map a snapshot to the dual lattice frame (vertices <-> plaquettes).

    The output covers one fewer cell in each direction:
    ``h'(x, y) = v(x+1, y)`` and ``v'(x, y) = h(x, y+1)``.  Vertex
    stabilizers of the input at ``(x+1, y+1)`` become plaquette products of
    the output at ``(x, y)``.  Requires an open strip.
    """
    g = snapshot.geometry
    if g.periodic_y:
        raise ParameterError("dual relabeling is defined for open strips only")
    sub = LatticeGeometry(g.width_x - 1, g.length_y - 1, BOUNDARY_STRIP)
    h_out = snapshot.values[LINK_V, 1:, :-1]
    v_out = snapshot.values[LINK_H, :-1, 1:]
    return Snapshot(sub, new_basis, np.stack([h_out, v_out]))


def vertex_stabilizer(snapshot: Snapshot, vtx: tuple[int, int]) -> int:
    """Product of the four link values meeting at an interior vertex."""
    g = snapshot.geometry
    x, y = vtx
    if not (1 <= x < g.width_x and 1 <= y < g.length_y):
        raise CoordinateError(f"vertex {vtx} is not interior")
    v = snapshot.values
    return int(
        v[LINK_H, x - 1, y] * v[LINK_H, x, y] * v[LINK_V, x, y - 1] * v[LINK_V, x, y]
    )


def translate(snapshot: Snapshot, dy: int) -> Snapshot:
    """Roll a cylinder snapshot along its periodic direction."""
    if not snapshot.geometry.periodic_y:
        raise ParameterError("translate requires a cylinder; use crop on strips")
    return replace(snapshot, values=np.roll(snapshot.values, dy, axis=2))


def xor_snapshots(s0: Snapshot, s1: Snapshot) -> Snapshot:
    """Element-wise product snapshot (spin XOR), used by squared-loop estimators."""
    if s0.geometry != s1.geometry or s0.basis != s1.basis:
        raise GeometryMismatchError("snapshots must share geometry and basis")
    return Snapshot(s0.geometry, s0.basis, s0.values * s1.values)
