"""Privacy amplification by binary Toeplitz hashing."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptyKey
from .rng import make_rng


def bits_to_array(bits: str) -> np.ndarray:
    arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    if arr.size and arr.max() > 1:
        raise ValueError("bit string may only contain '0' and '1'")
    return arr.astype(np.int64)


def array_to_bits(arr) -> str:
    return "".join("1" if b else "0" for b in np.asarray(arr).tolist())


def toeplitz_seed_bits(n_in: int, n_out: int, seed: int) -> np.ndarray:
    """The n_out + n_in - 1 random bits defining the first column and row."""
    return make_rng(seed).integers(0, 2, size=n_out + n_in - 1, dtype=np.int64)


def toeplitz_hash(x: np.ndarray, diagonals: np.ndarray, n_out: int) -> np.ndarray:
    """``T @ x mod 2`` with ``T[i, j] = diagonals[i - j + n_in - 1]``.

    Computed as a slice of the full convolution, so large keys never build T.
    """
    n_in = len(x)
    if n_out == 0:
        return np.zeros(0, dtype=np.int64)
    conv = fftconvolve(diagonals.astype(float), x.astype(float))
    counts = np.rint(conv[n_in - 1 : n_in - 1 + n_out]).astype(np.int64)
    return counts & 1


def privacy_amplify(bits: str, compression_ratio: float, seed: int) -> str:
    """Compress ``bits`` to ``floor(ratio * len)`` bits with a seeded Toeplitz hash."""
    if not bits:
        raise EmptyKey("nothing to amplify")
    if not 0 < compression_ratio <= 1:
        raise ValueError(f"compression_ratio must be in (0, 1], got {compression_ratio}")
    x = bits_to_array(bits)
    n_out = int(np.floor(compression_ratio * len(x) + 1e-9))
    diag = toeplitz_seed_bits(len(x), n_out, seed)
    return array_to_bits(toeplitz_hash(x, diag, n_out))
