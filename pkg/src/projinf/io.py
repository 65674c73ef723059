"""Binary gradient/factor files, curvature caches and report writers.

GRDF: ``b"GRDF"``, u32 version (1), u64 n, u64 d, then ``n*d`` little-endian
f64 values, row-major (one gradient per row).

KFCF: ``b"KFCF"``, u32 version (1), then for each of A and E a u64 dimension
followed by the square block as little-endian f64, row-major.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from projinf.errors import FormatError
from projinf.linalg import CompactEigen, KroneckerPair, RankPolicy

VERSION = 1
_F64 = np.dtype("<f8")


def write_gradients(path, G) -> None:
    G = np.ascontiguousarray(np.atleast_2d(np.asarray(G, dtype=np.float64)))
    if not np.all(np.isfinite(G)):
        raise FormatError("gradients must be finite")
    n, d = G.shape
    with open(path, "wb") as fh:
        fh.write(b"GRDF" + struct.pack("<IQQ", VERSION, n, d))
        fh.write(G.astype(_F64).tobytes())


def read_gradients(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:4] != b"GRDF":
        raise FormatError(f"{path}: not a GRDF file")
    version, n, d = struct.unpack_from("<IQQ", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(data) - 24 != 8 * n * d:
        raise FormatError(f"{path}: payload has {len(data) - 24} bytes, header declares {8 * n * d}")
    G = np.frombuffer(data, dtype=_F64, offset=24).reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(G)):
        raise FormatError(f"{path}: non-finite gradient values")
    return G


def write_factors(path, A, E) -> None:
    blocks = [np.ascontiguousarray(np.asarray(M, dtype=np.float64)) for M in (A, E)]
    with open(path, "wb") as fh:
        fh.write(b"KFCF" + struct.pack("<I", VERSION))
        for M in blocks:
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise FormatError("factor blocks must be square")
            fh.write(struct.pack("<Q", M.shape[0]))
            fh.write(M.astype(_F64).tobytes())


def read_factors(path, symmetry_tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != b"KFCF":
        raise FormatError(f"{path}: not a KFCF file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos, out = 8, []
    for name in ("A", "E"):
        if pos + 8 > len(data):
            raise FormatError(f"{path}: truncated before block {name}")
        (k,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        nbytes = 8 * k * k
        if pos + nbytes > len(data):
            raise FormatError(f"{path}: block {name} truncated")
        M = np.frombuffer(data, dtype=_F64, count=k * k, offset=pos).reshape(k, k).astype(np.float64)
        pos += nbytes
        if not np.all(np.isfinite(M)):
            raise FormatError(f"{path}: block {name} has non-finite values")
        scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
        if M.size and np.max(np.abs(M - M.T)) > symmetry_tol * scale:
            raise FormatError(f"{path}: block {name} is not symmetric")
        out.append(M)
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return out[0], out[1]


def save_curvature(path, curv) -> None:
    """Persist a CompactEigen (dense curvature) or KroneckerPair."""
    with open(path, "wb") as fh:
        if isinstance(curv, KroneckerPair):
            np.savez(fh, kind=np.array("kron"), A=curv.A, E=curv.E,
                     policy=np.array([curv.policy.rel_tol, curv.policy.abs_tol]))
        else:
            np.savez(fh, kind=np.array("eig"), U=curv.U, lambdas=curv.lambdas,
                     policy=np.array([curv.policy.rel_tol, curv.policy.abs_tol]))


def load_curvature(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            kind = str(z["kind"])
            policy = RankPolicy(*(float(x) for x in z["policy"]))
            if kind == "kron":
                return KroneckerPair(z["A"], z["E"], policy)
            U, lam = z["U"].copy(), z["lambdas"].copy()
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"{path}: not a curvature cache ({exc})") from exc
    U.setflags(write=False)
    lam.setflags(write=False)
    return CompactEigen(U=U, lambdas=lam, policy=policy)


def fmt(x) -> str:
    """Shortest round-trip text for numbers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def json_text(obj) -> str:
    return json.dumps(_json_safe(obj), sort_keys=True, ensure_ascii=False, allow_nan=False, indent=2) + "\n"


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
