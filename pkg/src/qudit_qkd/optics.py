"""Transmitter and receiver optics as operator chains.

The receiver for each basis is ``P3 . D2 . P2 . D1 . P1``: three switched
polarization rotators (Pockels cells) separated by two delay lines that hold
back the v component by one and two bins.  Which concrete 2x2 matrix each
named wave-plate operation stands for is ambiguous, so ``convention_search``
enumerates a finite catalog and reports how close each choice comes to the
reference detection tables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .bases import CHI1, CHI2, CHI3, PSI1, PSI2, PSI4, BasisId, StateId, basis_states, state
from .core import (
    DELTA1,
    DELTA2,
    DelayOp,
    DetectionEvent,
    Detector,
    Pol,
    PolTimeState,
    TimeGatedOp,
    apply_delay,
    apply_gated,
    inner_product,
    is_unitary,
)
from .errors import InvalidSetting, NotNormalized, UnsupportedBasis

SUPPORTED = (PSI2, PSI4, CHI1, CHI2, CHI3)

# Stage time gates: P1 sees (t, t'), P2 sees (t, t', t''), P3 sees (t', t'', t''').
P1_BINS = frozenset({0, 1})
P2_BINS = frozenset({0, 1, 2})
P3_BINS = frozenset({1, 2, 3})

PHASES = (1, -1, 1j, -1j)
PHASE_NAMES = {1: "1", -1: "-1", 1j: "i", -1j: "-i"}


# --- Jones matrices --------------------------------------------------------


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def reflection(theta: float) -> np.ndarray:
    """Half-wave plate that turns linear polarization by ``theta`` (axis at theta/2)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]], dtype=np.complex128)


def quarter_wave(axis: float, handed: int = 1) -> np.ndarray:
    return rotation(axis) @ np.diag([1, handed * 1j]) @ rotation(-axis)


def _clean(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=np.complex128)
    m.real[np.abs(m.real) < 1e-15] = 0.0
    m.imag[np.abs(m.imag) < 1e-15] = 0.0
    return m


def half_wave_form(form: str, degrees: float) -> np.ndarray:
    t = math.radians(degrees)
    if form == "rot":
        return _clean(rotation(t))
    if form == "rot_inv":
        return _clean(rotation(-t))
    if form == "refl":
        return _clean(reflection(t))
    if form == "axis":
        return _clean(reflection(2 * t))
    raise InvalidSetting(f"unknown half-wave form {form!r}")


HALF_WAVE_FORMS = ("axis", "refl", "rot", "rot_inv")
QUARTER_WAVE_FORMS = {
    "qwp-45+": (-45, 1),
    "qwp-45-": (-45, -1),
    "qwp0+": (0, 1),
    "qwp0-": (0, -1),
    "qwp45+": (45, 1),
    "qwp45-": (45, -1),
}

# named operations and their nominal rotation angle in degrees
HALF_WAVE_ELEMENTS = {"H45": 45.0, "H-45": -45.0, "H90": 90.0}


@dataclass(frozen=True)
class WavePlateConvention:
    """Concrete matrices for the named operations H45, H-45, H90, Q and I.

    ``bin1_phase`` multiplies the t' amplitude just ahead of the quarter-wave
    stage; it models the +-i that may be added at the late slot.
    """

    h45: str = "rot"
    hm45: str = "rot"
    h90: str = "rot"
    q: str = "qwp45+"
    phases: tuple = (1, 1, 1, 1)  # global phase on H45, H-45, H90, Q
    bin1_phase: complex = 1

    def matrix(self, element: str) -> np.ndarray:
        if element == "I":
            return np.eye(2, dtype=np.complex128)
        if element == "Q":
            axis, handed = QUARTER_WAVE_FORMS[self.q]
            return _clean(self.phases[3] * quarter_wave(math.radians(axis), handed))
        form, k = {"H45": (self.h45, 0), "H-45": (self.hm45, 1), "H90": (self.h90, 2)}[element]
        return _clean(self.phases[k] * half_wave_form(form, HALF_WAVE_ELEMENTS[element]))

    def sort_key(self) -> tuple:
        return (self.h45, self.hm45, self.h90, self.q,
                tuple(PHASE_NAMES[p] for p in self.phases), PHASE_NAMES[self.bin1_phase])

    def to_dict(self) -> dict:
        return {
            "forms": {"H45": self.h45, "H-45": self.hm45, "H90": self.h90, "Q": self.q},
            "element_phases": {
                k: PHASE_NAMES[p] for k, p in zip(("H45", "H-45", "H90", "Q"), self.phases)
            },
            "bin1_phase": PHASE_NAMES[self.bin1_phase],
            "matrices": {e: matrix_pairs(self.matrix(e)) for e in ("H45", "H-45", "H90", "Q", "I")},
        }


def matrix_pairs(m: np.ndarray) -> list:
    """Row-major [[re, im], ...] rows, rounded for stable JSON."""
    return [[[round(float(z.real), 12) + 0.0, round(float(z.imag), 12) + 0.0] for z in row] for row in m]


def convention_catalog(element_phases: bool = False) -> list[WavePlateConvention]:
    """All catalog conventions in lexicographic order.

    The default catalog has 4*4*4*6 forms times 4 late-slot phases = 1536
    entries.  ``element_phases`` multiplies in a global phase per half-wave
    element (x64).
    """
    phase_sets = (
        [(a, b, c, 1) for a, b, c in itertools.product(PHASES, repeat=3)]
        if element_phases
        else [(1, 1, 1, 1)]
    )
    out = [
        WavePlateConvention(h45, hm45, h90, q, ph, b1)
        for h45, hm45, h90 in itertools.product(HALF_WAVE_FORMS, repeat=3)
        for q in sorted(QUARTER_WAVE_FORMS)
        for ph in phase_sets
        for b1 in PHASES
    ]
    return sorted(out, key=WavePlateConvention.sort_key)


# --- chains ----------------------------------------------------------------

ChainElement = Union[TimeGatedOp, DelayOp]


@dataclass(frozen=True)
class OperatorChain:
    label: BasisId
    elements: tuple[ChainElement, ...]

    def __post_init__(self):
        delays = [e.shift for e in self.elements if isinstance(e, DelayOp)]
        if delays != [1, 2]:
            raise ValueError(f"chain needs delays (1, 2) in order, got {delays}")

    def stages(self) -> list[list[ChainElement]]:
        """Elements split at the delays: [P1 ops], [D1], [P2 ops], [D2], [P3 ops]."""
        out: list[list[ChainElement]] = [[]]
        for e in self.elements:
            if isinstance(e, DelayOp):
                out.append([e])
                out.append([])
            else:
                out[-1].append(e)
        return out


def _gate(conv: WavePlateConvention, element: str, bins) -> TimeGatedOp:
    return TimeGatedOp(conv.matrix(element), frozenset(bins), element)


def build_chain(basis: BasisId, conv: WavePlateConvention | None = None) -> OperatorChain:
    conv = conv or best_convention()
    g = lambda el, *bins: _gate(conv, el, bins)  # noqa: E731
    # P2 and P3 are shared by psi2, psi4, chi1, chi2
    p2 = [g("H90", 0), g("H45", 1), g("H90", 2)]
    p3 = [g("I", 1), g("H45", 2), g("I", 3)]
    if basis == PSI2:
        p1 = [g("H45", 0), g("H-45", 1)]
    elif basis == PSI4:
        p1 = [TimeGatedOp(conv.bin1_phase * np.eye(2), {1}, "phase"), g("Q", 0, 1)]
    elif basis == CHI1:
        p1 = [g("I", 0, 1)]
    elif basis == CHI2:
        p1 = [g("I", 0), g("H90", 1)]
    elif basis == CHI3:
        p1 = [g("H45", *P1_BINS)]
        p2 = [g("H90", *P2_BINS)]
        p3 = [g("I", *P3_BINS)]
    else:
        raise UnsupportedBasis(f"no receiver chain for {basis}")
    return OperatorChain(basis, (*p1, DELTA1, *p2, DELTA2, *p3))


def run_chain(chain: OperatorChain, s: PolTimeState) -> PolTimeState:
    if not s.is_normalized():
        raise NotNormalized("input to run_chain must be normalized")
    if not s.bins_used() <= {0, 1}:
        raise ValueError(f"arriving state occupies bins {sorted(s.bins_used())}, expected {{0, 1}}")
    for e in chain.elements:
        s = apply_delay(e, s) if isinstance(e, DelayOp) else apply_gated(e, s)
    return s


def chain_matrix(chain: OperatorChain) -> np.ndarray:
    """12x12 matrix of the chain acting on flattened lattice vectors."""
    cols = []
    for k in range(12):
        vec = np.zeros(12, dtype=np.complex128)
        vec[k] = 1
        s = PolTimeState.from_vector(vec)
        pol, b = divmod(k, 6)
        if b > 1:
            cols.append(np.zeros(12, dtype=np.complex128))
            continue
        for e in chain.elements:
            s = apply_delay(e, s) if isinstance(e, DelayOp) else apply_gated(e, s)
        cols.append(s.vector)
    return np.array(cols).T


# --- detection tables ------------------------------------------------------


def _ev(det: str, b: int) -> DetectionEvent:
    return DetectionEvent(Detector(det), b)


@dataclass(frozen=True)
class DetectionMap:
    """Correct-basis outcome per state; ``cells[i - 1]`` is state i's click."""

    basis: BasisId
    cells: tuple[DetectionEvent, DetectionEvent, DetectionEvent, DetectionEvent]

    def __post_init__(self):
        if len(set(self.cells)) != 4:
            raise ValueError("detection map must be one-to-one")

    def __getitem__(self, i: int) -> DetectionEvent:
        return self.cells[i - 1]

    def decode(self, ev: DetectionEvent) -> int | None:
        try:
            return self.cells.index(ev) + 1
        except ValueError:
            return None

    def as_dict(self) -> dict[int, DetectionEvent]:
        return {i + 1: ev for i, ev in enumerate(self.cells)}

    def to_json(self) -> dict:
        return {str(i + 1): [ev.detector.value, ev.bin] for i, ev in enumerate(self.cells)}


# psi2/psi4 cells follow the kets V'', H'', V''', H'
_REFERENCE_CELLS = {
    PSI2: (("Dv", 2), ("Dh", 2), ("Dv", 3), ("Dh", 1)),
    PSI4: (("Dv", 2), ("Dh", 2), ("Dv", 3), ("Dh", 1)),
    CHI1: (("Dh", 2), ("Dv", 2), ("Dv", 3), ("Dh", 1)),
    CHI2: (("Dh", 2), ("Dv", 2), ("Dv", 3), ("Dh", 1)),
    CHI3: (("Dh", 1), ("Dv", 2), ("Dh", 2), ("Dv", 3)),
}

# the four cells every basis uses: Dh at t', Dh and Dv at t'', Dv at t'''
DETECTION_CELLS = frozenset({_ev("Dh", 1), _ev("Dh", 2), _ev("Dv", 2), _ev("Dv", 3)})


@lru_cache(maxsize=None)
def paper_detection_map(basis: BasisId) -> DetectionMap:
    try:
        cells = _REFERENCE_CELLS[basis]
    except KeyError:
        raise UnsupportedBasis(f"no reference detection table for {basis}") from None
    return DetectionMap(basis, tuple(_ev(d, b) for d, b in cells))


def decode(ev: DetectionEvent, basis: BasisId, detection_map: DetectionMap | None = None) -> int | None:
    """State index for a click, or None for a cell no state of the basis uses."""
    dmap = detection_map or paper_detection_map(basis)
    return dmap.decode(ev)


# --- convention search ------------------------------------------------------

EXACT, PERMUTED, FAILED = "EXACT", "PERMUTED", "FAILED"
DETERMINISTIC = 1 - 1e-9


@dataclass
class ChainVerdict:
    basis: BasisId
    verdict: str
    observed: list[DetectionEvent | None]
    permutation: list[int] | None = None  # state i lands on reference cell of state permutation[i-1]
    matches: int = 0

    def detection_map(self) -> DetectionMap | None:
        if self.verdict == FAILED:
            return None
        return DetectionMap(self.basis, tuple(self.observed))

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "matches": self.matches,
            "observed": [None if ev is None else [ev.detector.value, ev.bin] for ev in self.observed],
            "reference": paper_detection_map(self.basis).to_json(),
            "permutation": self.permutation,
        }


def chain_verdict(basis: BasisId, conv: WavePlateConvention) -> ChainVerdict:
    chain = build_chain(basis, conv)
    ref = paper_detection_map(basis)
    observed: list[DetectionEvent | None] = []
    for s in basis_states(basis):
        probs = np.abs(run_chain(chain, s).amps) ** 2
        p, b = np.unravel_index(int(np.argmax(probs)), probs.shape)
        observed.append(_ev(Detector.for_pol(Pol(p)).value, int(b)) if probs[p, b] > DETERMINISTIC else None)
    matches = sum(o == ref[i + 1] for i, o in enumerate(observed))
    if matches == 4:
        return ChainVerdict(basis, EXACT, observed, [1, 2, 3, 4], 4)
    if None not in observed and set(observed) == set(ref.cells):
        perm = [ref.decode(o) for o in observed]
        return ChainVerdict(basis, PERMUTED, observed, perm, matches)
    return ChainVerdict(basis, FAILED, observed, None, matches)


def _relevant_key(basis: BasisId, conv: WavePlateConvention) -> tuple:
    """Only the settings a chain actually uses, for caching verdicts."""
    if basis == PSI2:
        return (conv.h45, conv.hm45, conv.h90, conv.phases[:3])
    if basis == PSI4:
        return (conv.h45, conv.h90, conv.q, conv.phases[0], conv.phases[2], conv.bin1_phase)
    return (conv.h45, conv.h90, conv.phases[0], conv.phases[2])


@dataclass
class SearchReport:
    targets: list[BasisId]
    best: WavePlateConvention
    verdicts: dict[BasisId, ChainVerdict]
    score: tuple
    catalog_size: int
    global_exact: bool
    per_chain_best: dict[BasisId, tuple[WavePlateConvention, ChainVerdict]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v.verdict in (EXACT, PERMUTED) for v in self.verdicts.values())

    def detection_maps(self) -> dict[BasisId, DetectionMap]:
        return {b: v.detection_map() for b, v in self.verdicts.items() if v.verdict != FAILED}

    def to_dict(self) -> dict:
        return {
            "targets": [b.name for b in self.targets],
            "catalog_size": self.catalog_size,
            "score": {"chains_resolved": self.score[0], "cells_matched": self.score[1]},
            "global_exact": self.global_exact,
            "pass": self.ok,
            "convention": self.best.to_dict(),
            "verdicts": {b.name: v.to_dict() for b, v in self.verdicts.items()},
            "per_chain_best": {
                b.name: {"convention": c.to_dict(), **v.to_dict()}
                for b, (c, v) in self.per_chain_best.items()
            },
        }


def convention_search(
    targets: Sequence[BasisId] = SUPPORTED, element_phases: bool = False
) -> SearchReport:
    """Exhaustive search of the convention catalog.

    A convention scores (chains not FAILED, states on their reference cell);
    ties go to the lexicographically first convention.
    """
    targets = list(targets)
    for b in targets:
        if b not in SUPPORTED:
            raise UnsupportedBasis(f"no receiver chain for {b}")
    catalog = convention_catalog(element_phases)
    cache: dict[tuple, ChainVerdict] = {}

    def verdict(b, conv):
        key = (b, _relevant_key(b, conv))
        if key not in cache:
            cache[key] = chain_verdict(b, conv)
        return cache[key]

    best, best_score = None, (-1, -1)
    per_chain: dict[BasisId, tuple[WavePlateConvention, ChainVerdict]] = {}
    for conv in catalog:
        vs = [verdict(b, conv) for b in targets]
        score = (sum(v.verdict != FAILED for v in vs), sum(v.matches for v in vs))
        if score > best_score:
            best, best_score = conv, score
        for b, v in zip(targets, vs):
            cur = per_chain.get(b)
            if cur is None or (v.verdict != FAILED, v.matches) > (cur[1].verdict != FAILED, cur[1].matches):
                per_chain[b] = (conv, v)
    verdicts = {b: verdict(b, best) for b in targets}
    return SearchReport(
        targets=targets,
        best=best,
        verdicts=verdicts,
        score=best_score,
        catalog_size=len(catalog),
        global_exact=all(v.verdict == EXACT for v in verdicts.values()),
        per_chain_best=per_chain,
    )


@lru_cache(maxsize=None)
def best_convention() -> WavePlateConvention:
    return convention_search(SUPPORTED).best


# --- transmitter -----------------------------------------------------------


def transmit(sid: StateId) -> PolTimeState:
    """Ideal source: the requested basis state exactly."""
    return state(sid)


SQ = 1 / math.sqrt(2)
POLARIZATIONS = {
    "h": np.array([1, 0], dtype=np.complex128),
    "v": np.array([0, 1], dtype=np.complex128),
    "d": np.array([SQ, SQ], dtype=np.complex128),
    "dbar": np.array([SQ, -SQ], dtype=np.complex128),
    "r": np.array([SQ, 1j * SQ], dtype=np.complex128),
    "l": np.array([SQ, -1j * SQ], dtype=np.complex128),
}
PC1_SETTINGS = ("h-pass", "v-rotate", "d-rotate")
PC2_SETTINGS = ("identity", "to-h", "to-v", "to-d", "to-dbar", "to-r", "to-l")


def pc2_unitary(setting: str, bin: int) -> np.ndarray:
    """Rotator for the second Pockels cell.

    At t the arriving light is h (short arm), at t' it is v (long arm), so
    ``to-x`` is the unitary whose corresponding column is the target x.
    """
    if setting == "identity":
        return np.eye(2, dtype=np.complex128)
    if setting not in PC2_SETTINGS:
        raise InvalidSetting(f"unknown PC2 setting {setting!r}")
    x0, x1 = POLARIZATIONS[setting[3:]]
    if bin == 0:
        return np.array([[x0, -np.conj(x1)], [x1, np.conj(x0)]])
    return np.array([[np.conj(x1), x0], [-np.conj(x0), x1]])


def transmit_physical(pc1: str, pm: float, pc2) -> PolTimeState:
    """Trace one photon through PC1, the unbalanced interferometer and PC2.

    ``pm`` is the phase-modulator setting in radians (0 or pi) on the long
    arm.  ``pc2`` is a setting name applied at both slots, or a pair
    ``(setting_at_t, setting_at_t')``.
    """
    if pc1 not in PC1_SETTINGS:
        raise InvalidSetting(f"unknown PC1 setting {pc1!r}")
    if not (math.isclose(pm, 0.0, abs_tol=1e-12) or math.isclose(pm, math.pi, abs_tol=1e-12)):
        raise InvalidSetting(f"phase modulator takes 0 or pi, got {pm!r}")
    s0, s1 = (pc2, pc2) if isinstance(pc2, str) else tuple(pc2)
    u0, u1 = pc2_unitary(s0, 0), pc2_unitary(s1, 1)

    pol_in = {"h-pass": POLARIZATIONS["h"], "v-rotate": POLARIZATIONS["v"], "d-rotate": POLARIZATIONS["d"]}[pc1]
    # PBS: h takes the short arm (slot t), v the long arm with the PM (slot t')
    short = np.array([pol_in[0], 0])
    long = np.array([0, pol_in[1] * np.exp(1j * pm)])
    amps = np.zeros((2, 6), dtype=np.complex128)
    amps[:, 0] = u0 @ short
    amps[:, 1] = u1 @ long
    amps.real[np.abs(amps.real) < 1e-15] = 0.0
    amps.imag[np.abs(amps.imag) < 1e-15] = 0.0
    return PolTimeState(amps)


def derive_transmitter_setting(target: PolTimeState, tol: float = 1e-12):
    """Solve for (pc1, pm, (pc2_t, pc2_t')) producing ``target`` exactly.

    Returns None when no setting reaches the state (e.g. states needing a
    +-i between the slots).
    """
    for pc1, pm, s0, s1 in itertools.product(PC1_SETTINGS, (0.0, math.pi), PC2_SETTINGS, PC2_SETTINGS):
        out = transmit_physical(pc1, pm, (s0, s1))
        if np.max(np.abs(out.amps - target.amps)) <= tol:
            return pc1, ("0" if pm == 0 else "pi"), (s0, s1)
    return None


# Frozen output of derive_transmitter_setting for every reachable state.
TRANSMITTER_TABLE: dict[StateId, tuple[str, str, tuple[str, str]]] = {
    StateId(PSI1, 1): ("h-pass", "0", ("identity", "identity")),
    StateId(PSI1, 2): ("h-pass", "0", ("to-v", "identity")),
    StateId(PSI1, 3): ("v-rotate", "0", ("identity", "to-h")),
    StateId(PSI1, 4): ("v-rotate", "0", ("identity", "identity")),
    StateId(PSI2, 1): ("d-rotate", "0", ("to-d", "to-d")),
    StateId(PSI2, 2): ("d-rotate", "pi", ("to-d", "to-d")),
    StateId(PSI2, 3): ("d-rotate", "pi", ("to-dbar", "to-dbar")),
    StateId(PSI2, 4): ("d-rotate", "0", ("to-dbar", "to-dbar")),
    StateId(PSI4, 1): ("d-rotate", "pi", ("to-r", "to-l")),
    StateId(PSI4, 2): ("d-rotate", "pi", ("to-l", "to-r")),
    StateId(PSI4, 3): ("d-rotate", "0", ("to-r", "to-l")),
    StateId(PSI4, 4): ("d-rotate", "0", ("to-l", "to-r")),
    StateId(CHI1, 1): ("d-rotate", "0", ("identity", "identity")),
    StateId(CHI1, 2): ("d-rotate", "pi", ("identity", "identity")),
    StateId(CHI1, 3): ("d-rotate", "0", ("to-v", "to-h")),
    StateId(CHI1, 4): ("d-rotate", "pi", ("to-v", "to-h")),
    StateId(CHI2, 1): ("d-rotate", "0", ("identity", "to-h")),
    StateId(CHI2, 2): ("d-rotate", "pi", ("identity", "to-h")),
    StateId(CHI2, 3): ("d-rotate", "pi", ("to-v", "identity")),
    StateId(CHI2, 4): ("d-rotate", "0", ("to-v", "identity")),
    StateId(CHI3, 1): ("h-pass", "0", ("to-d", "identity")),
    StateId(CHI3, 2): ("h-pass", "0", ("to-dbar", "identity")),
    StateId(CHI3, 3): ("v-rotate", "0", ("identity", "to-d")),
    StateId(CHI3, 4): ("v-rotate", "0", ("identity", "to-dbar")),
}


def transmit_from_table(sid: StateId) -> PolTimeState:
    pc1, pm, pc2 = TRANSMITTER_TABLE[sid]
    return transmit_physical(pc1, 0.0 if pm == "0" else math.pi, pc2)


def fidelity(a: PolTimeState, b: PolTimeState) -> float:
    return abs(inner_product(a, b)) ** 2


def is_catalog_unitary(conv: WavePlateConvention) -> bool:
    return all(is_unitary(conv.matrix(e)) for e in ("H45", "H-45", "H90", "Q", "I"))
