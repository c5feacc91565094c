"""Binary caches for per-clip feature matrices and the similarity matrix.

Format: a ZIP container holding a `meta.json` header (format name,
version, extra parameters) plus one .npy member per array. Entries are
written with a fixed timestamp so identical content gives identical
bytes. Clip ids live in the header, not in member names, so opaque id
strings never have to be path-safe.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .dsp import MfccMatrix
from .errors import CacheError
from .hmm import SimilarityMatrix

FORMAT_VERSION = 1
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _write_container(path: str | Path, meta: dict, arrays: list[np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        header = dict(meta, version=FORMAT_VERSION)
        zf.writestr(zipfile.ZipInfo("meta.json", date_time=_FIXED_DATE), json.dumps(header, sort_keys=True))
        for i, array in enumerate(arrays):
            buffer = io.BytesIO()
            np.save(buffer, np.ascontiguousarray(array))
            zf.writestr(zipfile.ZipInfo(f"{i:06d}.npy", date_time=_FIXED_DATE), buffer.getvalue())


def _read_container(path: str | Path, expected_kind: str) -> tuple[dict, list[np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CacheError(f"{path}: cache file not found")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            names = sorted(name for name in zf.namelist() if name.endswith(".npy"))
            arrays = [np.load(io.BytesIO(zf.read(name)), allow_pickle=False) for name in names]
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CacheError(f"{path}: unreadable cache ({exc})") from exc
    if meta.get("version") != FORMAT_VERSION:
        raise CacheError(f"{path}: cache version {meta.get('version')} not supported (expected {FORMAT_VERSION})")
    if meta.get("kind") != expected_kind:
        raise CacheError(f"{path}: cache holds {meta.get('kind')!r}, expected {expected_kind!r}")
    return meta, arrays


def save_features(path: str | Path, mfccs: Mapping[str, MfccMatrix], params: dict | None = None) -> None:
    clip_ids = list(mfccs)
    meta = {"kind": "features", "clip_ids": clip_ids, "params": params or {}}
    _write_container(path, meta, [np.asarray(mfccs[cid].frames, dtype=np.float64) for cid in clip_ids])


def load_features(path: str | Path) -> dict[str, MfccMatrix]:
    meta, arrays = _read_container(path, "features")
    clip_ids = meta["clip_ids"]
    if len(clip_ids) != len(arrays):
        raise CacheError(f"{path}: header lists {len(clip_ids)} clips but {len(arrays)} arrays stored")
    return {cid: MfccMatrix(clip_id=cid, frames=array) for cid, array in zip(clip_ids, arrays)}


def save_similarity(path: str | Path, similarity: SimilarityMatrix, params: dict | None = None) -> None:
    meta = {"kind": "similarity", "clip_ids": list(similarity.clip_ids), "params": params or {}}
    _write_container(path, meta, [similarity.scores])


def load_similarity(path: str | Path) -> tuple[SimilarityMatrix, dict]:
    meta, arrays = _read_container(path, "similarity")
    if len(arrays) != 1:
        raise CacheError(f"{path}: expected one score matrix, found {len(arrays)}")
    clip_ids = tuple(meta["clip_ids"])
    scores = arrays[0]
    if scores.shape != (len(clip_ids), len(clip_ids)):
        raise CacheError(f"{path}: score shape {scores.shape} does not match {len(clip_ids)} ids")
    return SimilarityMatrix(clip_ids=clip_ids, scores=scores), meta.get("params", {})
