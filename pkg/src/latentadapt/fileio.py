"""Binary file formats and the flat config format.

Feature files (magic ``LATF``) carry 32-bit floats, compact enough for
exported embeddings. Model artifacts (magic ``LAMA``) carry 64-bit floats in
a sectioned container so a reload reproduces the fitted structures bit for
bit. Both formats are little-endian and versioned.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .decoder import LinearDecoder
from .errors import ContractViolation, DataFormatError
from .subspace import PrincipalSubspace

FEATURE_MAGIC = b"LATF"
ARTIFACT_MAGIC = b"LAMA"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sIIIB")
_SECTION_ENTRY = struct.Struct("<16sQQ")


def write_features(
    path: str | Path, features: np.ndarray, labels: Optional[np.ndarray] = None
) -> None:
    """Write an N x D float matrix (and optional labels) as a feature file."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.size == 0:
        raise ContractViolation("features must be a non-empty 2-d array")
    if not np.all(np.isfinite(features)):
        raise ContractViolation("features contain non-finite entries")
    n, d = features.shape
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ContractViolation("labels must have one entry per row")
        if np.any(labels < 0) or np.any(labels > 0xFFFFFFFF):
            raise ContractViolation("labels must fit in u32")
    payload = features.astype("<f4").tobytes()
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC, FORMAT_VERSION, n, d, 1 if labels is not None else 0
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if labels is not None:
            fh.write(labels.astype("<u4").tobytes())


def read_features(path: str | Path) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Read a feature file; rejects bad magic, truncation, and non-finite data."""
    blob = Path(path).read_bytes()
    if len(blob) < _FEATURE_HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, n, d, label_flag = _FEATURE_HEADER.unpack_from(blob, 0)
    if magic != FEATURE_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if n == 0 or d == 0 or label_flag not in (0, 1):
        raise DataFormatError(f"{path}: invalid header fields")
    offset = _FEATURE_HEADER.size
    need = n * d * 4 + (n * 4 if label_flag else 0)
    if len(blob) != offset + need:
        raise DataFormatError(f"{path}: payload length mismatch")
    features = np.frombuffer(blob, dtype="<f4", count=n * d, offset=offset)
    features = features.reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(features)):
        raise DataFormatError(f"{path}: non-finite feature values")
    labels = None
    if label_flag:
        labels = np.frombuffer(
            blob, dtype="<u4", count=n, offset=offset + n * d * 4
        ).copy()
    return features, labels


@dataclass(frozen=True)
class ModelArtifact:
    """Fitted subspace and decoder plus the metadata of the fit."""

    subspace: PrincipalSubspace
    decoder: LinearDecoder
    meta: dict


def fit_config_hash(source_path: str | Path, k: int, n_used: int, seed: int) -> str:
    """Stable digest of the inputs that produced an artifact."""
    h = hashlib.sha256()
    h.update(Path(source_path).read_bytes())
    h.update(f"|k={k}|n={n_used}|seed={seed}".encode())
    return h.hexdigest()


def _pack_sections(sections: list[tuple[str, bytes]]) -> bytes:
    head = struct.pack("<4sII", ARTIFACT_MAGIC, FORMAT_VERSION, len(sections))
    offset = len(head) + _SECTION_ENTRY.size * len(sections)
    table = b""
    body = b""
    for name, data in sections:
        table += _SECTION_ENTRY.pack(name.encode().ljust(16, b"\0"), offset, len(data))
        body += data
        offset += len(data)
    return head + table + body


def write_artifact(path: str | Path, artifact: ModelArtifact) -> None:
    s = artifact.subspace
    d = artifact.decoder
    sub_head = struct.pack("<IIIB", s.dim, s.k, s.source_count, 1 if s.rank_deficient else 0)
    sub_body = (
        s.mean.astype("<f8").tobytes()
        + s.basis.astype("<f8").tobytes()
        + s.singular_values.astype("<f8").tobytes()
    )
    dec_head = struct.pack("<II", d.class_count, d.dim)
    dec_body = d.weights.astype("<f8").tobytes() + d.bias.astype("<f8").tobytes()
    meta = json.dumps(artifact.meta, sort_keys=True).encode()
    blob = _pack_sections(
        [
            ("meta", meta),
            ("subspace", sub_head + sub_body),
            ("decoder", dec_head + dec_body),
        ]
    )
    Path(path).write_bytes(blob)


def read_artifact(path: str | Path) -> ModelArtifact:
    blob = Path(path).read_bytes()
    head = struct.Struct("<4sII")
    if len(blob) < head.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, count = head.unpack_from(blob, 0)
    if magic != ARTIFACT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    sections: dict[str, bytes] = {}
    pos = head.size
    for _ in range(count):
        if pos + _SECTION_ENTRY.size > len(blob):
            raise DataFormatError(f"{path}: truncated section table")
        raw_name, offset, length = _SECTION_ENTRY.unpack_from(blob, pos)
        pos += _SECTION_ENTRY.size
        if offset + length > len(blob):
            raise DataFormatError(f"{path}: section out of bounds")
        sections[raw_name.rstrip(b"\0").decode()] = blob[offset : offset + length]
    for required in ("meta", "subspace", "decoder"):
        if required not in sections:
            raise DataFormatError(f"{path}: missing section {required!r}")

    try:
        meta = json.loads(sections["meta"].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad meta section") from exc

    sub = sections["subspace"]
    sub_head = struct.Struct("<IIIB")
    dim, k, source_count, rank_flag = sub_head.unpack_from(sub, 0)
    expect = sub_head.size + 8 * (dim + dim * k + k)
    if len(sub) != expect:
        raise DataFormatError(f"{path}: subspace section length mismatch")
    off = sub_head.size
    mean = np.frombuffer(sub, dtype="<f8", count=dim, offset=off).copy()
    off += 8 * dim
    basis = np.frombuffer(sub, dtype="<f8", count=dim * k, offset=off).reshape(dim, k).copy()
    off += 8 * dim * k
    singular = np.frombuffer(sub, dtype="<f8", count=k, offset=off).copy()
    subspace = PrincipalSubspace(
        mean=mean,
        basis=basis,
        singular_values=singular,
        source_count=source_count,
        rank_deficient=bool(rank_flag),
    )

    dec = sections["decoder"]
    dec_head = struct.Struct("<II")
    c, d_dim = dec_head.unpack_from(dec, 0)
    if len(dec) != dec_head.size + 8 * (c * d_dim + c):
        raise DataFormatError(f"{path}: decoder section length mismatch")
    off = dec_head.size
    weights = np.frombuffer(dec, dtype="<f8", count=c * d_dim, offset=off).reshape(c, d_dim).copy()
    off += 8 * c * d_dim
    bias = np.frombuffer(dec, dtype="<f8", count=c, offset=off).copy()
    decoder = LinearDecoder(weights=weights, bias=bias)
    if decoder.dim != subspace.dim:
        raise DataFormatError(f"{path}: decoder and subspace dimensions differ")
    return ModelArtifact(subspace=subspace, decoder=decoder, meta=meta)


def parse_config(path: str | Path) -> dict[str, str]:
    """Flat key=value config; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataFormatError(f"{path}:{lineno}: expected key=value")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()
    return values
