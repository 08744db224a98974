"""Versioned persistence: MCAS1 level snapshots and CSV exports.

MCAS1 layout (little-endian throughout):

    bytes 0..4    magic b"MCAS1"
    bytes 5..8    u32 header length H
    bytes 9..9+H  UTF-8 JSON header: {"ell", "depth", "model", "seed",
                  "replica", "digest"} with digest = SHA-256 hex of the
                  payload bytes
    payload       8 * ell^depth bytes of IEEE 754 binary64 log-masses in
                  lexicographic path order (extinct intervals stored as
                  -inf), followed by ceil(ell^depth / 8) bytes of zero
                  bitmap (LSB-first within each byte)

The separate bitmap keeps structural extinction distinguishable from any
-inf that later arithmetic might produce.  Writes are atomic (temp file +
rename).  CSV floats are printed with 17 significant digits so that text
round-trips binary64 exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .engine import CascadeConfig, LevelMassArray, MATERIALIZE_CAP
from .errors import (
    BadMagic,
    DepthTooLarge,
    DigestMismatch,
    IoFailure,
    TruncatedPayload,
)
from .records import MartingaleTrace, MassStatistics, SpectrumEstimate, StructureFunctionTable

MAGIC = b"MCAS1"


@dataclass(frozen=True)
class Snapshot:
    """Metadata returned by save_snapshot (the digest is the identity)."""

    path: str
    ell: int
    depth: int
    model: dict
    seed: int
    replica: int
    digest: str


def _payload_bytes(level: LevelMassArray) -> bytes:
    lm = np.where(level.zero_mask, -np.inf, level.log_masses)
    masses = np.ascontiguousarray(lm, dtype="<f8").tobytes()
    bitmap = np.packbits(level.zero_mask, bitorder="little").tobytes()
    return masses + bitmap


def save_snapshot(level: LevelMassArray, destination) -> Snapshot:
    """Write a level to ``destination`` atomically and return its metadata."""
    if level.ell ** level.depth > MATERIALIZE_CAP:
        raise DepthTooLarge("level exceeds the materialization cap")
    destination = os.fspath(destination)
    payload = _payload_bytes(level)
    digest = hashlib.sha256(payload).hexdigest()
    header = json.dumps({
        "ell": level.ell,
        "depth": level.depth,
        "model": level.model,
        "seed": level.config.seed,
        "replica": level.config.replica,
        "digest": digest,
    }, sort_keys=True).encode("utf-8")
    try:
        directory = os.path.dirname(os.path.abspath(destination))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".mcas.tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(MAGIC)
                fh.write(struct.pack("<I", len(header)))
                fh.write(header)
                fh.write(payload)
            os.replace(tmp, destination)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot {destination}: {exc}") from exc
    return Snapshot(path=destination, ell=level.ell, depth=level.depth,
                    model=level.model, seed=level.config.seed,
                    replica=level.config.replica, digest=digest)


def load_snapshot(source) -> LevelMassArray:
    """Read an MCAS1 file, verifying the digest before returning the level."""
    source = os.fspath(source)
    try:
        with open(source, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {source}: {exc}") from exc
    if blob[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"{source} is not an MCAS1 file")
    if len(blob) < len(MAGIC) + 4:
        raise TruncatedPayload(f"{source} ends inside the header length")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_end = len(MAGIC) + 4 + hlen
    if len(blob) < header_end:
        raise TruncatedPayload(f"{source} ends inside the header")
    header = json.loads(blob[len(MAGIC) + 4:header_end].decode("utf-8"))
    ell, depth = int(header["ell"]), int(header["depth"])
    count = ell ** depth
    mass_bytes = 8 * count
    bitmap_bytes = (count + 7) // 8
    payload = blob[header_end:]
    if len(payload) != mass_bytes + bitmap_bytes:
        raise TruncatedPayload(
            f"{source}: payload is {len(payload)} bytes, "
            f"expected {mass_bytes + bitmap_bytes}"
        )
    if hashlib.sha256(payload).hexdigest() != header["digest"]:
        raise DigestMismatch(f"{source}: payload digest mismatch")
    lm = np.frombuffer(payload[:mass_bytes], dtype="<f8").astype(np.float64)
    zero = np.unpackbits(
        np.frombuffer(payload[mass_bytes:], dtype=np.uint8), bitorder="little"
    )[:count].astype(bool)
    config = CascadeConfig(ell=ell, depth=depth, seed=int(header["seed"]),
                           replica=int(header["replica"]))
    return LevelMassArray(config=config, model=header["model"],
                          log_masses=lm, zero_mask=zero)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _csv_lines(record) -> list[str]:
    if isinstance(record, StructureFunctionTable):
        lines = ["q,value,kind,depth"]
        depth = "" if record.depth is None else str(record.depth)
        for q, v in zip(record.q_grid, record.values):
            lines.append(f"{_fmt(q)},{_fmt(v)},{record.kind},{depth}")
        return lines
    if isinstance(record, SpectrumEstimate):
        lines = ["beta,value,kind,depth,epsilon"]
        depth = "" if record.depth is None else str(record.depth)
        eps = "" if record.epsilon is None else _fmt(record.epsilon)
        for b, v in zip(record.beta_grid, record.values):
            lines.append(f"{_fmt(b)},{_fmt(v)},{record.kind},{depth},{eps}")
        return lines
    if isinstance(record, MartingaleTrace):
        lines = ["depth,Y"]
        for k, y in enumerate(record.values, start=1):
            lines.append(f"{k},{_fmt(y)}")
        return lines
    if isinstance(record, MassStatistics):
        return [
            "q,mean,variance,se,replicas,extinct_fraction,depth",
            ",".join([
                _fmt(record.q), _fmt(record.mean), _fmt(record.variance),
                _fmt(record.standard_error), str(record.replica_count),
                _fmt(record.extinct_fraction), str(record.depth),
            ]),
        ]
    raise TypeError(f"no CSV schema for {type(record).__name__}")


def export_csv(record, destination) -> None:
    """Write a result record as deterministic UTF-8 CSV (LF newlines)."""
    data = ("\n".join(_csv_lines(record)) + "\n").encode("utf-8")
    destination = os.fspath(destination)
    try:
        with open(destination, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write CSV {destination}: {exc}") from exc
