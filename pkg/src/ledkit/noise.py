"""Classical noise on snapshots: independent bit flips and thermal ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .lattice import (
    LatticeGeometry,
    Snapshot,
    SyndromeField,
    compute_syndrome,
    syndrome_to_config,
)
from .validation import check_probability


@dataclass(frozen=True)
class NoiseSpec:
    """Incoherent noise parameters; temperature in units of the stabilizer
    coupling (J = 1)."""

    p_flip: float = 0.0
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_probability(self.p_flip, "p_flip")
        if self.temperature < 0:
            raise ParameterError("temperature must be >= 0")


def flip_mask(geometry: LatticeGeometry, p_flip: float, seed) -> np.ndarray:
    """Per-site flip decisions in canonical (link, x, y) order.

    Exposed so translation-covariance can be tested: the mask attaches to
    sites through one counter-based stream, independent of the values.
    """
    check_probability(p_flip)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.random((2, geometry.width_x, geometry.length_y)) < p_flip


def apply_bitflips(s: Snapshot, p_flip: float, seed) -> Snapshot:
    """Independently negate each qubit with probability ``p_flip``."""
    return s.with_flips(flip_mask(s.geometry, p_flip, seed))


def excitation_probability(temperature: float) -> float:
    """Two-level Gibbs weight of one flipped stabilizer (energy gap 2J, J=1)."""
    if temperature < 0:
        raise ParameterError("temperature must be >= 0")
    if temperature == 0.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(2.0 / temperature))


def sample_fixed_point_snapshot(
    geometry: LatticeGeometry, rng: np.random.Generator
) -> Snapshot:
    """Uniform sample over configurations with all full plaquettes +1.

    Draws a random vertex gauge and takes its boundary: each link value is
    the parity of the two adjacent vertex coins.  This reproduces the
    zero-coupling sampler's distribution exactly at O(N) cost.
    """
    lx, ly = geometry.width_x, geometry.length_y
    if geometry.periodic_y:
        coins = rng.integers(0, 2, size=(lx + 1, ly), dtype=np.int8)
        h_bits = coins[:-1, :] ^ coins[1:, :]
        v_bits = coins[:lx, :] ^ np.roll(coins[:lx, :], -1, axis=1)
    else:
        coins = rng.integers(0, 2, size=(lx + 1, ly + 1), dtype=np.int8)
        h_bits = coins[:-1, :-1] ^ coins[1:, :-1]
        v_bits = coins[:lx, :-1] ^ coins[:lx, 1:]
    values = np.stack([1 - 2 * h_bits, 1 - 2 * v_bits]).astype(np.int8)
    return Snapshot(geometry, "Z", values)


def sample_thermal_snapshot(
    geometry: LatticeGeometry,
    temperature: float,
    p_flip: float = 0.0,
    seed: int = 0,
) -> Snapshot:
    """Thermal stabilizer ensemble dressed with measurement bit flips.

    Excites each full plaquette independently with the two-level Gibbs
    probability on top of a uniform ground-state snapshot, realizes that
    syndrome with randomized error paths, then applies bit-flip noise.
    """
    if geometry.periodic_y:
        raise ParameterError("thermal sampling is defined on open strips")
    root = np.random.SeedSequence(seed)
    kid_gauge, kid_exc, kid_path, kid_flip = root.spawn(4)
    rng_gauge = np.random.Generator(np.random.Philox(kid_gauge))
    base = sample_fixed_point_snapshot(geometry, rng_gauge)

    p_exc = excitation_probability(temperature)
    rng_exc = np.random.Generator(np.random.Philox(kid_exc))
    excite = rng_exc.random(geometry.plaquette_shape()) < p_exc
    excite &= geometry.full_plaquette_mask()
    target_vals = compute_syndrome(base).plaquette_values.copy()
    target_vals[excite] = -target_vals[excite]
    target = SyndromeField(geometry, target_vals)

    rng_path = np.random.Generator(np.random.Philox(kid_path))
    thermal = syndrome_to_config(target, base, rng=rng_path)
    if p_flip > 0:
        thermal = apply_bitflips(thermal, p_flip, kid_flip)
    return thermal
