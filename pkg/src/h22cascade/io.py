"""Realization files: a JSON form and a compact binary form, both versioned.

Binary layout: the magic bytes, a little-endian uint32 header length, a UTF-8
JSON header, then every array as raw little-endian float64 in header order.
Both writers are canonical (sorted keys, fixed separators), so
save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .cascade import CascadeLevel, CascadeRealization, check_invariants
from .hier_graph import HierParams

FORMAT_NAME = "h22cascade-realization"
FORMAT_VERSION = 1
MAGIC = b"H22C\x00\x01"


class RealizationFormatError(ValueError):
    pass


def _rng_state(r: CascadeRealization):
    if r.rng is None:
        return None
    return r.rng.bit_generator.state


def _restore_rng(state):
    if state is None:
        return None
    name = state.get("bit_generator")
    if name != "PCG64":
        raise RealizationFormatError(f"unsupported bit generator {name!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def _header(r: CascadeRealization, with_arrays: bool) -> dict:
    levels = []
    for lvl in r.levels:
        entry = {"level": lvl.level, "wbar": lvl.wbar}
        if with_arrays:
            entry["beta"] = lvl.beta.tolist()
            entry["u"] = lvl.u.tolist()
        levels.append(entry)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "params": {"wbar": r.params.wbar, "rho": r.params.rho},
        "gamma": r.gamma,
        "max_level": r.max_level,
        "levels": levels,
        "rng_state": _rng_state(r),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def to_json_bytes(r: CascadeRealization) -> bytes:
    return (_dumps(_header(r, True)) + "\n").encode("utf-8")


def to_binary_bytes(r: CascadeRealization) -> bytes:
    head = _dumps(_header(r, False)).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(head)), head]
    for lvl in r.levels:
        parts.append(np.ascontiguousarray(lvl.beta, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(lvl.u, dtype="<f8").tobytes())
    return b"".join(parts)


def _from_header(h: dict, arrays) -> CascadeRealization:
    if h.get("format") != FORMAT_NAME:
        raise RealizationFormatError("not a realization file")
    if h.get("version") != FORMAT_VERSION:
        raise RealizationFormatError(f"unsupported format version {h.get('version')}")
    p = h["params"]
    params = HierParams(float(p["wbar"]), float(p["rho"]), 0)
    levels = [CascadeLevel(int(e["level"]), float(e["wbar"]), beta, u)
              for e, (beta, u) in zip(h["levels"], arrays)]
    return CascadeRealization(float(h["gamma"]), params, levels, _restore_rng(h["rng_state"]),
                              int(h["max_level"]))


def from_json_bytes(data: bytes) -> CascadeRealization:
    try:
        h = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RealizationFormatError(f"not a realization file: {exc}") from exc
    arrays = [(np.array(e["beta"], dtype=float), np.array(e["u"], dtype=float))
              for e in h.get("levels", [])]
    return _from_header(h, arrays)


def from_binary_bytes(data: bytes) -> CascadeRealization:
    if not data.startswith(MAGIC):
        raise RealizationFormatError("bad magic bytes")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    h = json.loads(data[off:off + n].decode("utf-8"))
    off += n
    arrays = []
    try:
        for e in h.get("levels", []):
            k = 2 ** int(e["level"])
            beta = np.frombuffer(data, dtype="<f8", count=k + 1, offset=off).astype(float)
            off += 8 * (k + 1)
            u = np.frombuffer(data, dtype="<f8", count=k, offset=off).astype(float)
            off += 8 * k
            arrays.append((beta, u))
    except ValueError as exc:
        raise RealizationFormatError(f"truncated array data: {exc}") from exc
    if off != len(data):
        raise RealizationFormatError("trailing or missing array data")
    return _from_header(h, arrays)


def _is_json(path: Path) -> bool:
    return path.suffix.lower() == ".json"


def save_realization(r: CascadeRealization, path: Union[str, Path]) -> Path:
    """Write ``r``; the format follows the suffix (``.json`` or binary otherwise)."""
    path = Path(path)
    data = to_json_bytes(r) if _is_json(path) else to_binary_bytes(r)
    path.write_bytes(data)
    return path


def load_realization(path: Union[str, Path], validate: bool = True) -> CascadeRealization:
    """Read a realization; the format is sniffed from the content."""
    path = Path(path)
    data = path.read_bytes()
    r = from_binary_bytes(data) if data.startswith(MAGIC) else from_json_bytes(data)
    if validate:
        check_invariants(r)
    return r
