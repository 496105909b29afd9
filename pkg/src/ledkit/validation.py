"""Input validation helpers shared by the transformer-style API."""

from __future__ import annotations

from typing import Sequence

from .errors import BasisMismatchError, ParameterError
from .lattice import Snapshot


def check_probability(p, name: str = "probability") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_positive(value, name: str) -> float:
    value = float(value)
    if value <= 0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def check_snapshot(s, basis: str | None = None) -> Snapshot:
    if not isinstance(s, Snapshot):
        raise ParameterError(f"expected a Snapshot, got {type(s).__name__}")
    if basis is not None and s.basis != basis:
        raise BasisMismatchError(f"snapshot basis {s.basis} where {basis} required")
    return s


def as_snapshot_list(X) -> list[Snapshot]:
    """Accept one snapshot or a sequence of snapshots; always return a list."""
    if isinstance(X, Snapshot):
        return [X]
    if isinstance(X, Sequence):
        return [check_snapshot(s) for s in X]
    raise ParameterError("expected a Snapshot or a sequence of Snapshots")
