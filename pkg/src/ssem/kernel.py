"""Tabulated fundamental solution ``h = (1 - Lap)^{-p} delta`` on the torus.

The table holds ``h`` at displacements ``j * 2*pi/store_m`` (index 0 is the
origin, indices wrap periodically).  It equals the restriction to the storage
grid of ``S_p^{-1} delta`` computed on a ``fine_m^d`` grid, where the discrete
delta carries mass one.  Instead of transforming the fine grid we fold the fine
frequency lattice onto the storage lattice (sampling every ``fine_m/store_m``-th
node aliases frequencies modulo ``store_m``), which gives the same values from a
``store_m^d`` transform.

Cache file layout (little endian)::

    8s  magic b"SSEMKTBL"
    u32 format version
    u32 d, u32 p_effective, u32 fine_m, u32 store_m
    f64 values[store_m ** d]   row-major
"""

from __future__ import annotations

import itertools
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionError, UnsupportedOrderError

__all__ = [
    "FINE_M",
    "KernelTable",
    "STORE_M",
    "build_kernel_table",
    "default_cache_dir",
    "load_kernel_table",
    "save_kernel_table",
]

MAGIC = b"SSEMKTBL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIII")
STORE_M = 256
FINE_M = {1: 4096, 2: 4096, 3: 512}


@dataclass(frozen=True)
class KernelTable:
    p: int
    d: int
    fine_m: int
    store_m: int
    values: np.ndarray

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.store_m

    def __call__(self, displacement) -> np.ndarray:
        """Tensor-product cubic Lagrange interpolation at ``(n, d)`` displacements."""
        disp = np.atleast_2d(np.asarray(displacement, dtype=float))
        if disp.shape[-1] != self.d:
            raise DimensionError(f"displacements must have {self.d} components")
        s = self.store_m
        pos = np.mod(disp, 2 * np.pi) / self.spacing
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        weights = [_cubic_weights(frac[:, a]) for a in range(self.d)]
        out = np.zeros(disp.shape[0])
        for offs in itertools.product(range(4), repeat=self.d):
            idx = tuple(np.mod(base[:, a] + offs[a] - 1, s) for a in range(self.d))
            w = weights[0][offs[0]]
            for a in range(1, self.d):
                w = w * weights[a][offs[a]]
            out += w * self.values[idx]
        return out


def _cubic_weights(f):
    """Lagrange weights for nodes -1, 0, 1, 2 at fractional position ``f``."""
    return (
        -f * (f - 1) * (f - 2) / 6,
        (f + 1) * (f - 1) * (f - 2) / 2,
        -(f + 1) * f * (f - 2) / 2,
        (f + 1) * f * (f - 1) / 6,
    )


def _folded_symbol(p, d, fine_m, store_m):
    """Sum of ``(1 + |k|^2)^{-p}`` over fine frequencies congruent mod ``store_m``."""
    r = fine_m // store_m
    k = np.fft.fftfreq(fine_m, 1.0 / fine_m)
    k2 = k**2
    if d == 1:
        return ((1.0 + k2) ** -p).reshape(r, store_m).sum(axis=0)
    if d == 2:
        sym = (1.0 + k2[:, None] + k2[None, :]) ** -p
        return sym.reshape(r, store_m, r, store_m).sum(axis=(0, 2))
    out = np.zeros((store_m,) * 3)
    for i in range(r):
        kx = k2[i * store_m : (i + 1) * store_m, None, None]
        for j in range(r):
            ky = k2[None, j * store_m : (j + 1) * store_m, None]
            block = (1.0 + kx + ky + k2[None, None, :]) ** -p
            out += block.reshape(store_m, store_m, r, store_m).sum(axis=2)
    return out


def compute_kernel_values(p: int, d: int, fine_m: int, store_m: int = STORE_M) -> np.ndarray:
    if fine_m % store_m:
        raise DimensionError("fine grid size must be a multiple of the storage size")
    folded = _folded_symbol(p, d, fine_m, store_m)
    vals = np.fft.ifftn(folded).real * (store_m / (2 * np.pi)) ** d
    return vals


def default_cache_dir() -> Path:
    env = os.environ.get("SSEM_KERNEL_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "ssem" / "kernels"


def _cache_path(cache_dir, p, d, fine_m, store_m):
    return Path(cache_dir) / f"kernel_d{d}_p{p}_f{fine_m}_s{store_m}.bin"


def save_kernel_table(table: KernelTable, path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, table.d, table.p, table.fine_m, table.store_m)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(table.values, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_kernel_table(path) -> KernelTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, p, fine_m, store_m = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path} is not a kernel table file")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != store_m**d:
        raise ValueError(f"{path} is truncated")
    return KernelTable(p=p, d=d, fine_m=fine_m, store_m=store_m, values=vals.reshape((store_m,) * d).copy())


def build_kernel_table(
    p_effective: int,
    d: int,
    fine_m: Optional[int] = None,
    store_m: int = STORE_M,
    cache_dir=None,
    use_cache: bool = True,
) -> KernelTable:
    """Build (or load from the disk cache) the kernel table for ``S_p`` in ``d`` dimensions."""
    if int(p_effective) != p_effective or p_effective < 1:
        raise UnsupportedOrderError(
            f"kernel order must be >= 1, got {p_effective} (Neumann problems need p >= 2)"
        )
    if d not in FINE_M:
        raise DimensionError(f"no kernel tables for d={d}")
    fine_m = FINE_M[d] if fine_m is None else fine_m
    path = None
    if use_cache:
        path = _cache_path(cache_dir or default_cache_dir(), p_effective, d, fine_m, store_m)
        if path.exists():
            try:
                return load_kernel_table(path)
            except ValueError:
                pass
    table = KernelTable(
        p=int(p_effective),
        d=d,
        fine_m=fine_m,
        store_m=store_m,
        values=compute_kernel_values(p_effective, d, fine_m, store_m),
    )
    if path is not None:
        save_kernel_table(table, path)
    return table
