"""Toolkit for detecting topological order from measurement snapshots.

Generates projective-measurement snapshots of perturbed toric-code states
by tensor-network sampling, applies local error correction interleaved
with real-space coarse-graining, and measures decorated Wilson-loop and
open-string observables.  An independent transfer-matrix module locates
the phase boundary, and a kagome-lattice module analyses dimer-model
snapshots of the same universality class.
"""

from .lattice import (
    BOUNDARY_CYLINDER,
    BOUNDARY_STRIP,
    LatticeGeometry,
    QubitCoord,
    Snapshot,
    SyndromeField,
    compute_syndrome,
    coarse_grain,
    dual_relabel,
    plaquette_stabilizer,
    syndrome_to_config,
    xor_snapshots,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY_CYLINDER",
    "BOUNDARY_STRIP",
    "LatticeGeometry",
    "QubitCoord",
    "Snapshot",
    "SyndromeField",
    "compute_syndrome",
    "coarse_grain",
    "dual_relabel",
    "plaquette_stabilizer",
    "syndrome_to_config",
    "xor_snapshots",
    "__version__",
]
