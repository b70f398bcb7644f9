"""State-vector algebra over the polarization x time-bin lattice.

A single photon is described by complex amplitudes on a 2 x 6 grid: two
polarizations (h, v) times six time bins of width dt.  Bin 0 is the early
transmitter slot t, bin 1 is t' = t + dt, and the receiver delays push
amplitude out to bins 2 and 3 (t'', t''').  Bins 4 and 5 are headroom so
that a misconfigured chain raises instead of silently wrapping.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    BinOutOfRange,
    BinOverflow,
    DuplicateCell,
    NonUnitary,
    NotNormalized,
)

N_BINS = 6
TOL = 1e-12


class Pol(enum.IntEnum):
    H = 0
    V = 1

    @classmethod
    def parse(cls, value: "Pol | str | int") -> "Pol":
        if isinstance(value, Pol):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


class Detector(enum.Enum):
    DH = "Dh"
    DV = "Dv"

    @property
    def pol(self) -> Pol:
        return Pol.H if self is Detector.DH else Pol.V

    @classmethod
    def for_pol(cls, pol: Pol) -> "Detector":
        return cls.DH if Pol.parse(pol) is Pol.H else cls.DV


@functools.total_ordering
@dataclass(frozen=True)
class DetectionEvent:
    """A click on detector ``detector`` in time bin ``bin``."""

    detector: Detector
    bin: int

    def __post_init__(self):
        if not 0 <= self.bin < N_BINS:
            raise BinOutOfRange(f"bin {self.bin} outside 0..{N_BINS - 1}")

    def __lt__(self, other):
        return (self.bin, self.detector.value) < (other.bin, other.detector.value)

    def __str__(self):
        return f"({self.detector.value},{self.bin})"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PolTimeState:
    """Immutable amplitude grid ``amps[pol, bin]``.

    Not auto-normalized. Arithmetic (``+``, ``-``, scalar ``*`` and ``/``) is
    provided so that superpositions read like the kets they represent.
    """

    amps: np.ndarray

    def __post_init__(self):
        arr = np.array(self.amps, dtype=np.complex128)
        if arr.shape != (2, N_BINS):
            raise ValueError(f"expected shape (2, {N_BINS}), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "amps", _freeze(arr))

    @classmethod
    def zero(cls) -> "PolTimeState":
        return cls(np.zeros((2, N_BINS), dtype=np.complex128))

    @classmethod
    def cell(cls, pol, bin: int) -> "PolTimeState":
        return state_from_amplitudes([(pol, bin, 1.0)])

    @classmethod
    def from_vector(cls, vec) -> "PolTimeState":
        return cls(np.asarray(vec, dtype=np.complex128).reshape(2, N_BINS))

    @property
    def vector(self) -> np.ndarray:
        """Flattened view, index ``pol * N_BINS + bin``."""
        return self.amps.reshape(-1)

    def amp(self, pol, bin: int) -> complex:
        return complex(self.amps[Pol.parse(pol), bin])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def is_normalized(self, tol: float = TOL) -> bool:
        return abs(self.norm() ** 2 - 1.0) <= tol

    def support(self, tol: float = TOL) -> set[tuple[Pol, int]]:
        return {(Pol(p), int(b)) for p, b in zip(*np.nonzero(np.abs(self.amps) > tol))}

    def bins_used(self, tol: float = TOL) -> set[int]:
        return {b for _, b in self.support(tol)}

    def normalized(self) -> "PolTimeState":
        n = self.norm()
        if n == 0:
            raise NotNormalized("cannot normalize the zero vector")
        return PolTimeState(self.amps / n)

    def __add__(self, other: "PolTimeState") -> "PolTimeState":
        return PolTimeState(self.amps + other.amps)

    def __sub__(self, other: "PolTimeState") -> "PolTimeState":
        return PolTimeState(self.amps - other.amps)

    def __neg__(self) -> "PolTimeState":
        return PolTimeState(-self.amps)

    def __mul__(self, k: complex) -> "PolTimeState":
        return PolTimeState(self.amps * k)

    __rmul__ = __mul__

    def __truediv__(self, k: complex) -> "PolTimeState":
        return PolTimeState(self.amps / k)

    def __repr__(self):
        terms = [
            f"{complex(self.amps[p, b]):.4g}|{Pol(p).name.lower()},{b}>"
            for p, b in sorted(self.support())
        ]
        return "PolTimeState(" + (" + ".join(terms) or "0") + ")"


def state_from_amplitudes(entries: Iterable[tuple]) -> PolTimeState:
    """Build a state from ``(pol, bin, amplitude)`` triples; other cells are 0."""
    amps = np.zeros((2, N_BINS), dtype=np.complex128)
    seen = set()
    for pol, b, a in entries:
        pol = Pol.parse(pol)
        if not 0 <= b < N_BINS:
            raise BinOutOfRange(f"bin {b} outside 0..{N_BINS - 1}")
        if (pol, b) in seen:
            raise DuplicateCell(f"cell ({pol.name.lower()}, {b}) given twice")
        seen.add((pol, b))
        amps[pol, b] = a
    return PolTimeState(amps)


def inner_product(a: PolTimeState, b: PolTimeState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    return complex(np.vdot(a.amps, b.amps))


def overlap2(a: PolTimeState, b: PolTimeState) -> float:
    return abs(inner_product(a, b)) ** 2


def is_unitary(u: np.ndarray, tol: float = TOL) -> bool:
    u = np.asarray(u)
    return u.shape == (2, 2) and np.max(np.abs(u.conj().T @ u - np.eye(2))) < tol


@dataclass(frozen=True, eq=False)
class TimeGatedOp:
    """2x2 polarization unitary switched on only during ``bins``."""

    unitary: np.ndarray
    bins: frozenset[int]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "unitary", _freeze(np.array(self.unitary, dtype=np.complex128)))
        bins = frozenset(int(b) for b in self.bins)
        for b in bins:
            if not 0 <= b < N_BINS:
                raise BinOutOfRange(f"bin {b} outside 0..{N_BINS - 1}")
        object.__setattr__(self, "bins", bins)

    @property
    def is_unitary(self) -> bool:
        return is_unitary(self.unitary)


@dataclass(frozen=True)
class DelayOp:
    """Delays the v component by ``shift`` bins; h passes straight through."""

    shift: int

    def __post_init__(self):
        if self.shift < 0:
            raise ValueError("shift must be non-negative")


DELTA1 = DelayOp(1)
DELTA2 = DelayOp(2)


def apply_gated(op: TimeGatedOp, s: PolTimeState) -> PolTimeState:
    if not op.is_unitary:
        raise NonUnitary(f"operator {op.name or op.unitary!r} is not unitary")
    amps = s.amps.copy()
    idx = sorted(op.bins)
    if idx:
        amps[:, idx] = op.unitary @ amps[:, idx]
    return PolTimeState(amps)


def apply_delay(d: DelayOp, s: PolTimeState) -> PolTimeState:
    k = d.shift
    if k == 0:
        return s
    v = s.amps[Pol.V]
    if np.any(v[N_BINS - k:] != 0):
        raise BinOverflow(f"delay by {k} pushes v amplitude past bin {N_BINS - 1}")
    amps = s.amps.copy()
    amps[Pol.V, k:] = v[: N_BINS - k]
    amps[Pol.V, :k] = 0
    return PolTimeState(amps)


def _check_normalized(s: PolTimeState) -> None:
    if not s.is_normalized():
        raise NotNormalized(f"state norm^2 = {s.norm() ** 2!r}, expected 1")


# canonical cell order for distributions and sampling: Dh bins 0..5, then Dv bins 0..5
CELL_EVENTS = tuple(DetectionEvent(Detector.for_pol(p), b) for p in Pol for b in range(N_BINS))

# probabilities below this are roundoff, not outcomes
_PROB_FLOOR = 1e-15


def outcome_distribution(s: PolTimeState) -> dict[DetectionEvent, float]:
    """Born-rule click probabilities after the final PBS."""
    _check_normalized(s)
    probs = np.abs(s.vector) ** 2
    return {ev: float(p) for ev, p in zip(CELL_EVENTS, probs) if p > _PROB_FLOOR}


def sample_outcome(s: PolTimeState, rng: np.random.Generator) -> DetectionEvent:
    _check_normalized(s)
    cum = np.cumsum(np.abs(s.vector) ** 2)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return CELL_EVENTS[min(k, len(CELL_EVENTS) - 1)]


def total_probability(dist: Mapping[DetectionEvent, float]) -> float:
    return float(sum(dist.values()))
