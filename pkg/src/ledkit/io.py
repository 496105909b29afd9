"""Snapshot file formats, result tables, and run manifests.

LEDSNAP v1
----------
Header line::

    LEDSNAP 1 basis=<Z|X> Lx=<int> Ly=<int> boundary=<strip|cyl>

followed by the qubit values in one of two bodies sharing the header:

* text: ``Ly`` lines, each with ``2*Lx`` entries in ``{+1, -1}``, ordered by
  ascending ``x`` with the ``h`` link before the ``v`` link of each cell;
* packed binary: the same values as a bit stream (bit 1 encodes ``-1``) in
  the same order, padded with zero bits to a whole number of bytes.

Readers accept both bodies and distinguish them by attempting a strict text
parse first.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .errors import ParseError
from .lattice import (
    BOUNDARY_CYLINDER,
    BOUNDARY_STRIP,
    LatticeGeometry,
    Snapshot,
)

_BOUNDARY_TOKENS = {BOUNDARY_STRIP: "strip", BOUNDARY_CYLINDER: "cyl"}
_TOKEN_BOUNDARIES = {v: k for k, v in _BOUNDARY_TOKENS.items()}


def _interleaved(snapshot: Snapshot) -> np.ndarray:
    """(Ly, 2*Lx) view in file order: y rows, x ascending, h then v."""
    # values axes: (link, x, y) -> (y, x, link) -> flatten x & link
    v = snapshot.values.transpose(2, 1, 0)
    return v.reshape(snapshot.geometry.length_y, -1)


def _header_line(snapshot: Snapshot) -> str:
    g = snapshot.geometry
    return (
        f"LEDSNAP 1 basis={snapshot.basis} Lx={g.width_x} Ly={g.length_y} "
        f"boundary={_BOUNDARY_TOKENS[g.boundary]}"
    )


def write_snapshot(path, snapshot: Snapshot, packed: bool = False) -> None:
    path = Path(path)
    header = _header_line(snapshot).encode() + b"\n"
    flat = _interleaved(snapshot)
    if packed:
        bits = (flat.reshape(-1) == -1).astype(np.uint8)
        body = np.packbits(bits).tobytes()
        path.write_bytes(header + body)
    else:
        lines = [" ".join("+1" if v == 1 else "-1" for v in row) for row in flat]
        path.write_bytes(header + ("\n".join(lines) + "\n").encode())


def _parse_header(line: str) -> tuple[str, LatticeGeometry]:
    parts = line.split()
    if len(parts) != 6 or parts[0] != "LEDSNAP" or parts[1] != "1":
        raise ParseError(f"bad LEDSNAP header: {line!r}", line=1)
    fields = {}
    for tok in parts[2:]:
        if "=" not in tok:
            raise ParseError(f"bad header token {tok!r}", line=1)
        key, val = tok.split("=", 1)
        fields[key] = val
    try:
        basis = fields["basis"]
        lx = int(fields["Lx"])
        ly = int(fields["Ly"])
        boundary = _TOKEN_BOUNDARIES[fields["boundary"]]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad LEDSNAP header: {exc}", line=1) from exc
    return basis, LatticeGeometry(lx, ly, boundary)


def read_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ParseError("missing header line", line=1)
    basis, geometry = _parse_header(raw[:newline].decode("ascii", "replace"))
    body = raw[newline + 1 :]
    lx, ly = geometry.width_x, geometry.length_y
    n_qubits = 2 * lx * ly
    values = _try_text_body(body, lx, ly)
    if values is None:
        values = _packed_body(body, n_qubits)
    flat = values.reshape(ly, lx, 2).transpose(2, 1, 0)
    return Snapshot(geometry, basis, flat.astype(np.int8))


def _try_text_body(body: bytes, lx: int, ly: int) -> np.ndarray | None:
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError:
        return None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != ly:
        return None
    rows = []
    for i, line in enumerate(lines):
        toks = line.split()
        if len(toks) != 2 * lx:
            raise ParseError(
                f"expected {2 * lx} entries, found {len(toks)}", line=i + 2
            )
        row = []
        for tok in toks:
            if tok in ("+1", "1"):
                row.append(1)
            elif tok == "-1":
                row.append(-1)
            else:
                raise ParseError(f"bad value {tok!r}", line=i + 2)
        rows.append(row)
    return np.asarray(rows, dtype=np.int8)


def _packed_body(body: bytes, n_qubits: int) -> np.ndarray:
    expected = (n_qubits + 7) // 8
    if len(body) != expected:
        raise ParseError(
            f"body is neither valid text nor {expected} packed bytes "
            f"(got {len(body)} bytes)"
        )
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))[:n_qubits]
    return np.where(bits == 1, -1, 1).astype(np.int8)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


class ManifestWriter:
    """Collects outputs and timings of one run into a manifest JSON."""

    def __init__(self, out_dir, config: dict, seed: int | None = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.seed = seed
        self.files: list[Path] = []
        self.timings: dict[str, float] = {}
        self._t0 = time.monotonic()
        self.partial = False

    def register(self, path) -> Path:
        path = Path(path)
        self.files.append(path)
        return path

    def time_stage(self, name: str):
        writer = self

        class _Stage:
            def __enter__(self):
                self.start = time.monotonic()

            def __exit__(self, exc_type, exc, tb):
                writer.timings[name] = time.monotonic() - self.start
                if exc_type is not None:
                    writer.partial = True
                return False

        return _Stage()

    def write(self, name: str = "manifest.json") -> Path:
        from . import __version__

        manifest = {
            "artifact_version": __version__,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "wall_time_s": time.monotonic() - self._t0,
            "stage_timings_s": self.timings,
            "partial": self.partial,
            "outputs": [
                {"path": str(p), "sha256": sha256_file(p)} for p in self.files
            ],
        }
        path = self.out_dir / name
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def write_results_csv(path, rows: list[dict]) -> None:
    """Fixed-column result table; one row per estimator output."""
    columns = [
        "g_x",
        "g_z",
        "p_flip",
        "temperature",
        "basis",
        "observable",
        "n_layer",
        "schedule_id",
        "L",
        "mean",
        "stderr",
        "n_samples",
    ]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_results_json(path, rows: list[dict]) -> None:
    Path(path).write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)
