"""Binary operator cache for assembled Liouvillian bundles.

File layout (all little endian)::

    b"TFLD"  u32 version  u32 n_matrices  i64 dim  f64 beta  f64 lam
    16 bytes  spec/grid/truncation key (ascii hex)
    per matrix: u16 name length, name, i64 rows, i64 cols, i64 nnz,
                i64 indptr[rows+1], i64 indices[nnz], c128 data[nnz]
    u32 crc32 of everything above

Matrices are stored in canonical CSR form, so a load reproduces them bit for
bit.
"""
from __future__ import annotations

import hashlib
import io
import os
import struct
import zlib
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fock import BathGrid, enumerate_basis
from .liouvillian import LiouvillianBundle, assemble
from .model import ModelSpec

MAGIC = b"TFLD"
VERSION = 1
OPERATORS = ("L0", "I", "I_ell", "I1", "N")
_HEAD = struct.Struct("<4sIIqdd16s")


class CacheError(RuntimeError):
    pass


class CacheVersionError(CacheError):
    """File written by a different format version; rebuild or migrate explicitly."""


def cache_dir() -> Path:
    return Path(os.environ.get("THERMOFIELD_CACHE_DIR", Path.home() / ".cache" / "thermofield"))


def cache_key(spec: ModelSpec, grid: BathGrid, n_total_max: int) -> str:
    """Hash of everything the operators depend on (lambda excluded)."""
    h = hashlib.sha256()
    h.update(np.asarray(spec.atom.energies, dtype="<f8").tobytes())
    h.update(struct.pack("<dd", spec.beta, spec.glue_phase))
    for t in spec.couplings:
        h.update(np.ascontiguousarray(t.G, dtype="<c16").tobytes())
        ff = t.ff
        h.update(repr((ff.p, ff.amplitude, ff.cutoff, ff.center, ff.phase0, ff.profile,
                       ff.angular_factor)).encode())
    h.update(grid.digest().encode())
    h.update(struct.pack("<q", n_total_max))
    return h.hexdigest()[:16]


def _canonical(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=complex)
    A.sum_duplicates()
    A.sort_indices()
    return A


def dumps(mats: dict, dim: int, beta: float, lam: float, key: str) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEAD.pack(MAGIC, VERSION, len(mats), dim, beta, lam, key.encode("ascii")[:16].ljust(16)))
    for name, A in mats.items():
        A = _canonical(A)
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb)
        buf.write(struct.pack("<qqq", A.shape[0], A.shape[1], A.nnz))
        buf.write(A.indptr.astype("<i8").tobytes())
        buf.write(A.indices.astype("<i8").tobytes())
        buf.write(A.data.astype("<c16").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes):
    """``(header dict, {name: csr_matrix})``; raises on corruption or version mismatch."""
    if len(blob) < _HEAD.size + 4:
        raise CacheError("file too short for a cache header")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    magic, version, count, dim, beta, lam, key = _HEAD.unpack_from(body, 0)
    if magic != MAGIC:
        raise CacheError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheVersionError(f"cache format version {version}, this build reads {VERSION}; "
                                "delete the file or rebuild the operators")
    actual = zlib.crc32(body)
    if actual != crc:
        raise CacheError(f"checksum mismatch: stored {crc:08x}, computed {actual:08x}")
    off = _HEAD.size
    mats = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + nl].decode()
        off += nl
        rows, cols, nnz = struct.unpack_from("<qqq", body, off)
        off += 24
        indptr = np.frombuffer(body, "<i8", rows + 1, off)
        off += 8 * (rows + 1)
        indices = np.frombuffer(body, "<i8", nnz, off)
        off += 8 * nnz
        data = np.frombuffer(body, "<c16", nnz, off)
        off += 16 * nnz
        mats[name] = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(rows, cols))
    head = dict(version=version, dim=dim, beta=beta, lam=lam, key=key.decode("ascii").strip())
    return head, mats


def save_bundle(bundle: LiouvillianBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    key = cache_key(bundle.spec, bundle.grid, bundle.basis.n_total_max)
    mats = {name: getattr(bundle, name) for name in OPERATORS}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(mats, bundle.dim, bundle.spec.beta, bundle.spec.lam, key))
    os.replace(tmp, path)
    return path


def load_bundle(path, spec: ModelSpec, grid: BathGrid, n_total_max: int) -> LiouvillianBundle | None:
    """The cached bundle, or None if the file is for a different configuration."""
    head, mats = loads(Path(path).read_bytes())
    if head["key"] != cache_key(spec, grid, n_total_max):
        return None
    basis = enumerate_basis(grid.M, n_total_max)
    if head["dim"] != spec.atom.dim ** 2 * basis.dim:
        return None
    return LiouvillianBundle(*(mats[n] for n in OPERATORS), spec, basis, grid)


def cached_assemble(spec: ModelSpec, grid: BathGrid, n_total_max: int, directory=None):
    """Load from the cache directory if possible, else assemble and store.

    Returns ``(bundle, hit)``. Corrupt or stale files are rebuilt.
    """
    directory = cache_dir() if directory is None else Path(directory)
    path = directory / f"{cache_key(spec, grid, n_total_max)}.tfld"
    if path.exists():
        try:
            b = load_bundle(path, spec, grid, n_total_max)
            if b is not None:
                return b.with_lambda(spec.lam), True
        except CacheVersionError:
            raise
        except CacheError:
            pass
    basis = enumerate_basis(grid.M, n_total_max)
    bundle = assemble(spec, basis, grid)
    save_bundle(bundle, path)
    return bundle, False


def _identical(A, B) -> bool:
    A, B = _canonical(A), _canonical(B)
    return (A.shape == B.shape and np.array_equal(A.indptr, B.indptr)
            and np.array_equal(A.indices, B.indices)
            and A.data.tobytes() == B.data.tobytes())


def cache_roundtrip(bundle: LiouvillianBundle, path) -> bool:
    """Save, reload and compare bit for bit."""
    save_bundle(bundle, path)
    try:
        back = load_bundle(path, bundle.spec, bundle.grid, bundle.basis.n_total_max)
    except CacheVersionError:
        raise
    except CacheError:
        return False
    if back is None:
        return False
    return all(_identical(getattr(bundle, n), getattr(back, n)) for n in OPERATORS)


def verify_file(path) -> tuple:
    """``(ok, message)`` for an existing cache file."""
    try:
        loads(Path(path).read_bytes())
    except CacheError as exc:
        return False, str(exc)
    return True, "ok"
