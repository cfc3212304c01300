"""JSON helpers for artifacts: array encoding, fingerprints, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FingerprintMismatch, MalformedRecord, MissingIndex


def array_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    # float repr round-trips exactly
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel(order="C")]}


def array_from_json(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=np.float64).reshape(obj["shape"])


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def fingerprint(obj: Any) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()[:16]


def file_digest(*paths: str | Path) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
        h.update(b"\0")
    return h.hexdigest()[:16]


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_artifact(path: str | Path, kind: str, version: int, fp: str, body: dict) -> None:
    doc = {"format": kind, "version": version, "fingerprint": fp, **body}
    atomic_write_text(path, json.dumps(doc, sort_keys=False, allow_nan=False) + "\n")


def read_artifact(path: str | Path, kind: str, version: int, fp: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingIndex(f"{path} does not exist; run build-index/train first")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{path}: invalid JSON ({exc.msg})") from None
    if doc.get("format") != kind or doc.get("version") != version:
        raise MalformedRecord(
            f"{path}: expected {kind} v{version}, found {doc.get('format')} v{doc.get('version')}"
        )
    if fp is not None and doc.get("fingerprint") != fp:
        raise FingerprintMismatch(
            f"{path}: fingerprint {doc.get('fingerprint')} does not match current configuration ({fp})"
        )
    return doc
