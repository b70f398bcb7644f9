"""Alice/Bob/Eve session engine.

Bob's measurement here is the ideal projective measurement in his chosen
basis, with the outcome labelled by the basis's detection table.  The
operator-chain model in :mod:`qudit_qkd.optics` is validated separately and
is not on this path.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .amplify import privacy_amplify
from .bases import CHI1, CHI2, CHI3, PSI2, PSI4, BasisId, StateId, basis_states
from .core import DetectionEvent, PolTimeState, TimeGatedOp, apply_gated, N_BINS
from .errors import ConfigError, EmptyKey, InsufficientPairs, MisalignedLogs, QKDError
from .optics import DetectionMap, paper_detection_map, rotation, transmit
from .rng import split

log = logging.getLogger(__name__)

INDIVIDUAL_ATTACK_THRESHOLD = 0.25
COHERENT_ATTACK_THRESHOLD = 0.1893

DEFAULT_BASIS_SET = (PSI2, PSI4)
ALLOWED_BASIS_SETS = (DEFAULT_BASIS_SET, (CHI1, CHI2), (CHI1, CHI2, CHI3))

SYMBOL_BITS = {1: "00", 2: "01", 3: "10", 4: "11"}


class SourceKind(str, enum.Enum):
    SINGLE_PHOTON = "single_photon"
    WCP = "wcp"


class EveKind(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"


@dataclass(frozen=True)
class ChannelConfig:
    transmittance: float = 1.0
    depolarizing_prob: float = 0.0
    rotation_misalignment: float = 0.0  # radians, same at every bin
    dark_count_prob: float = 0.0

    def __post_init__(self):
        for name in ("transmittance", "depolarizing_prob", "dark_count_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"channel.{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class SourceConfig:
    kind: SourceKind = SourceKind.SINGLE_PHOTON
    mu: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.kind is SourceKind.WCP:
            if self.mu <= 0:
                raise ConfigError(f"source.mu must be > 0, got {self.mu}")
            if self.mu > 1:
                log.warning("mean photon number %.3g > 1: multi-photon pulses dominate", self.mu)


@dataclass(frozen=True)
class EveConfig:
    kind: EveKind = EveKind.NONE

    def __post_init__(self):
        object.__setattr__(self, "kind", EveKind(self.kind))


@dataclass(frozen=True)
class SessionConfig:
    n_pulses: int = 10_000
    basis_set: tuple[BasisId, ...] = DEFAULT_BASIS_SET
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    eve: EveConfig = field(default_factory=EveConfig)
    sample_fraction: float = 0.5
    compression_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "basis_set", tuple(self.basis_set))
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be >= 1")
        if self.basis_set not in ALLOWED_BASIS_SETS:
            names = [b.name for b in self.basis_set]
            raise ConfigError(f"basis_set {names} is not one of the supported sets")
        if not 0 < self.sample_fraction < 1:
            raise ConfigError(f"sample_fraction must be in (0, 1), got {self.sample_fraction}")
        if not 0 < self.compression_ratio <= 1:
            raise ConfigError(f"compression_ratio must be in (0, 1], got {self.compression_ratio}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis_set"] = [b.name for b in self.basis_set]
        d["source"]["kind"] = self.source.kind.value
        d["eve"]["kind"] = self.eve.kind.value
        return d


# --- measurement primitives -------------------------------------------------


_PROJECTORS: dict[BasisId, np.ndarray] = {}


def _projector(basis: BasisId) -> np.ndarray:
    """Rows are <b_k| for the four basis states, on flattened vectors."""
    rows = _PROJECTORS.get(basis)
    if rows is None:
        rows = _PROJECTORS[basis] = np.array([s.vector.conj() for s in basis_states(basis)])
    return rows


def measure_outcome(s: PolTimeState, basis: BasisId, rng: np.random.Generator) -> int | None:
    """Projective measurement; returns state index 1..4, or None if the photon
    has weight outside the basis span and that part was drawn."""
    u = rng.random()
    acc = 0.0
    for k, p in enumerate((np.abs(_projector(basis) @ s.vector) ** 2).tolist(), start=1):
        acc += p
        if u < acc:
            return k
    # roundoff when the state lies fully in the basis span
    return 4 if acc > 1 - 1e-9 else None


def measure_in_basis(
    s: PolTimeState, basis: BasisId, rng: np.random.Generator, detection_map: DetectionMap | None = None
) -> DetectionEvent | None:
    k = measure_outcome(s, basis, rng)
    if k is None:
        return None
    return (detection_map or paper_detection_map(basis))[k]


@dataclass(frozen=True)
class DarkCount:
    event: DetectionEvent


class _NoClick:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "NO_CLICK"


NO_CLICK = _NoClick()


def _dark_click(basis: BasisId, rng: np.random.Generator, dmap: DetectionMap | None = None) -> DarkCount:
    dmap = dmap or paper_detection_map(basis)
    return DarkCount(dmap[int(rng.integers(1, 5))])


# --- protocol steps ---------------------------------------------------------


def alice_prepare(rng: np.random.Generator, basis_set: Sequence[BasisId] = DEFAULT_BASIS_SET):
    b = basis_set[int(rng.integers(len(basis_set)))]
    sid = StateId(b, int(rng.integers(1, 5)))
    return sid, transmit(sid)


def random_protocol_state(rng: np.random.Generator, basis_set: Sequence[BasisId]) -> PolTimeState:
    return alice_prepare(rng, basis_set)[1]


def misalign(s: PolTimeState, angle: float) -> PolTimeState:
    if angle == 0:
        return s
    return apply_gated(TimeGatedOp(rotation(angle), range(N_BINS), "misalignment"), s)


def channel_apply(
    cfg: ChannelConfig,
    s: PolTimeState,
    rng: np.random.Generator,
    basis_set: Sequence[BasisId] = DEFAULT_BASIS_SET,
) -> PolTimeState | None:
    """Loss, then depolarization (replacement by a random protocol state),
    otherwise the fixed polarization misalignment."""
    if rng.random() >= cfg.transmittance:
        return None
    if rng.random() < cfg.depolarizing_prob:
        return random_protocol_state(rng, basis_set)
    return misalign(s, cfg.rotation_misalignment)


def eve_measure(s: PolTimeState, rng: np.random.Generator, basis_set: Sequence[BasisId] = DEFAULT_BASIS_SET):
    b = basis_set[int(rng.integers(len(basis_set)))]
    k = measure_outcome(s, b, rng)
    return b, k


def eve_intercept_resend(
    s: PolTimeState, rng: np.random.Generator, basis_set: Sequence[BasisId] = DEFAULT_BASIS_SET
) -> PolTimeState:
    b, k = eve_measure(s, rng, basis_set)
    # an outcome outside the basis span never happens for protocol states
    return basis_states(b)[(k or 1) - 1]


def bob_measure(
    s: PolTimeState | None,
    rng: np.random.Generator,
    basis_set: Sequence[BasisId] = DEFAULT_BASIS_SET,
    dark_count_prob: float = 0.0,
):
    """Random basis, then a click, a dark count, or ``NO_CLICK``."""
    b = basis_set[int(rng.integers(len(basis_set)))]
    if s is not None:
        ev = measure_in_basis(s, b, rng)
        if ev is not None:
            return b, ev
    if dark_count_prob > 0 and rng.random() < dark_count_prob:
        return b, _dark_click(b, rng)
    return b, NO_CLICK


# --- classical post-processing ------------------------------------------------


@dataclass(frozen=True)
class AliceRecord:
    pulse: int
    sid: StateId


@dataclass(frozen=True)
class BobRecord:
    pulse: int
    basis: BasisId
    symbol: int | None  # private; never announced

    def announcement(self) -> tuple[int, str, bool]:
        """What Bob says in public: pulse slot, basis, and whether he clicked."""
        return self.pulse, self.basis.name, self.symbol is not None


@dataclass(frozen=True)
class SiftedPair:
    pulse: int
    alice_symbol: int
    bob_symbol: int
    basis: BasisId
    disclosed: bool = False

    @property
    def error(self) -> bool:
        return self.alice_symbol != self.bob_symbol


def sift(alice_log: Sequence[AliceRecord], bob_log: Sequence[BobRecord]) -> list[SiftedPair]:
    if len(alice_log) != len(bob_log):
        raise MisalignedLogs(f"{len(alice_log)} Alice records vs {len(bob_log)} Bob records")
    pairs = []
    for a, b in zip(alice_log, bob_log):
        if a.pulse != b.pulse:
            raise MisalignedLogs(f"pulse index mismatch: {a.pulse} vs {b.pulse}")
        pulse, basis_name, clicked = b.announcement()
        if clicked and basis_name == a.sid.basis.name:
            pairs.append(SiftedPair(pulse, a.sid.i, b.symbol, a.sid.basis))
    return pairs


def estimate_qber(
    pairs: Sequence[SiftedPair], sample_fraction: float, rng: np.random.Generator
) -> tuple[float, list[SiftedPair]]:
    """Disclose a random ``sample_fraction`` of the pairs.

    Returns the symbol error rate on the disclosed sample and the pairs that
    stay secret.
    """
    n = len(pairs)
    need = math.ceil(1 / sample_fraction)
    if n < need:
        raise InsufficientPairs(f"{n} sifted pairs, need at least {need}")
    k = max(1, int(round(sample_fraction * n)))
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=k, replace=False)] = True
    errors = sum(p.error for p, c in zip(pairs, chosen) if c)
    kept = [p for p, c in zip(pairs, chosen) if not c]
    return errors / k, kept


class Verdict(NamedTuple):
    individual: bool
    coherent: bool


def threshold_verdict(qber: float) -> Verdict:
    if not 0 <= qber <= 1:
        raise ValueError(f"qber must be in [0, 1], got {qber}")
    return Verdict(qber < INDIVIDUAL_ATTACK_THRESHOLD, qber < COHERENT_ATTACK_THRESHOLD)


def symbols_to_bits(pairs: Iterable) -> str:
    """Two bits per symbol: 1->00, 2->01, 3->10, 4->11."""
    return "".join(SYMBOL_BITS[p.alice_symbol if isinstance(p, SiftedPair) else int(p)] for p in pairs)


def wcp_photon_number(mu: float, rng: np.random.Generator) -> int:
    if mu <= 0:
        raise ValueError("mu must be positive")
    return int(rng.poisson(mu))


# --- session ----------------------------------------------------------------


def _pf(ok: bool) -> str:
    return "pass" if ok else "fail"


@dataclass
class SessionStats:
    sent: int
    detected: int
    lost: int
    sifted: int
    disclosed: int
    sample_errors: int
    sifted_fraction: float
    qber: float | None
    raw_bits_per_detection: float
    double_clicks: int
    dark_counts: int
    verdict_individual: str
    verdict_coherent: str
    final_key_bits: int
    final_key_sha256: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PulseTrace:
    pulse_idx: int
    alice_basis: str
    alice_symbol: int
    survived: bool
    eve_basis: str
    bob_basis: str
    detector: str
    bin: str
    sifted: bool = False
    disclosed: bool = False
    error: str = ""


TRACE_COLUMNS = (
    "pulse_idx", "alice_basis", "alice_symbol", "survived", "eve_basis", "bob_basis",
    "detector", "bin", "sifted", "disclosed", "error",
)


def run_session(cfg: SessionConfig, trace: list | None = None) -> SessionStats:
    """Run one full exchange; the result depends on ``cfg`` only.

    If ``trace`` is a list, one :class:`PulseTrace` per pulse is appended.
    """
    streams = split(cfg.seed)
    bases = cfg.basis_set
    ch = cfg.channel
    wcp = cfg.source.kind is SourceKind.WCP
    eve_on = cfg.eve.kind is EveKind.INTERCEPT_RESEND

    alice_log, bob_log = [], []
    events: list = []
    double_clicks = dark_counts = lost = 0
    survived_flags = []
    eve_bases = []

    for pulse in range(cfg.n_pulses):
        try:
            sid, psi = alice_prepare(streams["alice"], bases)
            n = wcp_photon_number(cfg.source.mu, streams["source"]) if wcp else 1
            arriving = []
            eve_b = ""
            for _ in range(n):
                out = channel_apply(ch, psi, streams["channel"], bases)
                if out is None:
                    continue
                if eve_on:
                    b_e, k_e = eve_measure(out, streams["eve"], bases)
                    eve_b = b_e.name
                    out = basis_states(b_e)[(k_e or 1) - 1]
                arriving.append(out)

            bob = streams["bob"]
            if len(arriving) <= 1:
                b_bob, click = bob_measure(arriving[0] if arriving else None, bob, bases, ch.dark_count_prob)
            else:
                b_bob = bases[int(bob.integers(len(bases)))]
                clicks = [e for e in (measure_in_basis(s, b_bob, bob) for s in arriving) if e is not None]
                if len(clicks) >= 2:
                    double_clicks += 1
                click = clicks[int(bob.integers(len(clicks)))] if clicks else NO_CLICK
        except QKDError as exc:
            raise type(exc)(f"pulse {pulse}: {exc}") from exc

        if isinstance(click, DarkCount):
            dark_counts += 1
            ev = click.event
        elif click is NO_CLICK:
            ev = None
            lost += 1
        else:
            ev = click
        symbol = paper_detection_map(b_bob).decode(ev) if ev is not None else None

        alice_log.append(AliceRecord(pulse, sid))
        bob_log.append(BobRecord(pulse, b_bob, symbol))
        events.append(ev)
        survived_flags.append(bool(arriving))
        eve_bases.append(eve_b)

    detected = sum(r.symbol is not None for r in bob_log)
    pairs = sift(alice_log, bob_log)
    try:
        qber, kept = estimate_qber(pairs, cfg.sample_fraction, streams["sample"])
    except InsufficientPairs as exc:
        log.warning("no error estimate: %s", exc)
        qber, kept = None, []
    kept_pulses = {p.pulse for p in kept}
    disclosed = [p for p in pairs if p.pulse not in kept_pulses] if qber is not None else []

    if qber is None:
        verdict = Verdict(False, False)
    else:
        verdict = threshold_verdict(qber)

    final_key = ""
    bits = symbols_to_bits(kept)
    if bits:
        pa_seed = int(streams["amplify"].integers(2**63))
        try:
            final_key = privacy_amplify(bits, cfg.compression_ratio, pa_seed)
        except EmptyKey:
            final_key = ""

    if trace is not None:
        disclosed_idx = {p.pulse: p for p in disclosed}
        sifted_idx = {p.pulse: p for p in pairs}
        for a, b, ev, surv, eb in zip(alice_log, bob_log, events, survived_flags, eve_bases):
            p = sifted_idx.get(a.pulse)
            trace.append(
                PulseTrace(
                    pulse_idx=a.pulse,
                    alice_basis=a.sid.basis.name,
                    alice_symbol=a.sid.i,
                    survived=surv,
                    eve_basis=eb,
                    bob_basis=b.basis.name,
                    detector="" if ev is None else ev.detector.value,
                    bin="" if ev is None else str(ev.bin),
                    sifted=p is not None,
                    disclosed=a.pulse in disclosed_idx,
                    error="" if p is None else str(int(p.error)),
                )
            )

    return SessionStats(
        sent=cfg.n_pulses,
        detected=detected,
        lost=lost,
        sifted=len(pairs),
        disclosed=len(disclosed),
        sample_errors=sum(p.error for p in disclosed),
        sifted_fraction=len(pairs) / detected if detected else 0.0,
        qber=qber,
        raw_bits_per_detection=2 * len(pairs) / detected if detected else 0.0,
        double_clicks=double_clicks,
        dark_counts=dark_counts,
        verdict_individual=_pf(verdict.individual),
        verdict_coherent=_pf(verdict.coherent),
        final_key_bits=len(final_key),
        final_key_sha256=hashlib.sha256(final_key.encode()).hexdigest(),
    )


def write_trace_csv(records: Sequence[PulseTrace], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.pulse_idx, r.alice_basis, r.alice_symbol, int(r.survived), r.eve_basis, r.bob_basis,
                r.detector, r.bin, int(r.sifted), int(r.disclosed), r.error,
            ]
        )
