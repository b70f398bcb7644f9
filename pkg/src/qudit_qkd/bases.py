"""The twenty psi states (five MUBs), twelve chi states (three MUBs) and
checks on them, plus the grid search that completes {chi1, chi2} to a
third unbiased basis.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import TOL, Pol, PolTimeState, inner_product, state_from_amplitudes
from .errors import NoSolutions, UnknownBasis

SQRT2 = math.sqrt(2.0)


class Family(enum.Enum):
    PSI = "psi"
    CHI = "chi"


FAMILY_SIZE = {Family.PSI: 5, Family.CHI: 3}


@functools.total_ordering
@dataclass(frozen=True)
class BasisId:
    family: Family
    index: int

    def __post_init__(self):
        if not isinstance(self.family, Family):
            raise UnknownBasis(f"unknown family {self.family!r}")
        if not 1 <= self.index <= FAMILY_SIZE[self.family]:
            raise UnknownBasis(f"{self.family.value}{self.index} does not exist")

    def __lt__(self, other):
        return (self.family.value, self.index) < (other.family.value, other.index)

    @property
    def name(self) -> str:
        return f"{self.family.value}{self.index}"

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, text: str) -> "BasisId":
        t = text.strip().lower().replace("/", "")
        for fam in Family:
            if t.startswith(fam.value) and t[len(fam.value):].isdigit():
                return cls(fam, int(t[len(fam.value):]))
        raise UnknownBasis(f"cannot parse basis name {text!r}")


PSI1, PSI2, PSI3, PSI4, PSI5 = (BasisId(Family.PSI, m) for m in range(1, 6))
CHI1, CHI2, CHI3 = (BasisId(Family.CHI, m) for m in range(1, 4))
PSI_BASES = (PSI1, PSI2, PSI3, PSI4, PSI5)
CHI_BASES = (CHI1, CHI2, CHI3)
ALL_BASES = PSI_BASES + CHI_BASES


@dataclass(frozen=True, order=True)
class StateId:
    basis: BasisId
    i: int

    def __post_init__(self):
        if self.i not in (1, 2, 3, 4):
            raise ValueError(f"state index {self.i} not in 1..4")

    def __str__(self):
        return f"{self.basis.name}[{self.i}]"


# Named kets on the lattice: unprimed = bin 0 (t), primed = bin 1 (t').
def H(b: int = 0) -> PolTimeState:
    return state_from_amplitudes([(Pol.H, b, 1.0)])


def V(b: int = 0) -> PolTimeState:
    return state_from_amplitudes([(Pol.V, b, 1.0)])


def D(b: int = 0) -> PolTimeState:
    return (H(b) + V(b)) / SQRT2


def Dbar(b: int = 0) -> PolTimeState:
    return (H(b) - V(b)) / SQRT2


def R(b: int = 0) -> PolTimeState:
    return (H(b) + 1j * V(b)) / SQRT2


def L(b: int = 0) -> PolTimeState:
    return (H(b) - 1j * V(b)) / SQRT2


def _table() -> dict[BasisId, tuple[PolTimeState, ...]]:
    p = 1  # primed bin
    return {
        PSI1: (H(), V(), H(p), V(p)),
        PSI2: (
            (D() + D(p)) / SQRT2,
            (D() - D(p)) / SQRT2,
            (Dbar() - Dbar(p)) / SQRT2,
            (Dbar() + Dbar(p)) / SQRT2,
        ),
        PSI3: (
            (D() + 1j * Dbar(p)) / SQRT2,
            (D() - 1j * Dbar(p)) / SQRT2,
            (Dbar() - 1j * D(p)) / SQRT2,
            (Dbar() + 1j * D(p)) / SQRT2,
        ),
        PSI4: (
            (R() - L(p)) / SQRT2,
            (L() - R(p)) / SQRT2,
            (R() + L(p)) / SQRT2,
            (L() + R(p)) / SQRT2,
        ),
        PSI5: (
            (R() + 1j * R(p)) / SQRT2,
            (R() - 1j * R(p)) / SQRT2,
            (L() - 1j * L(p)) / SQRT2,
            (L() + 1j * L(p)) / SQRT2,
        ),
        CHI1: (
            (H() + V(p)) / SQRT2,
            (H() - V(p)) / SQRT2,
            (V() + H(p)) / SQRT2,
            (V() - H(p)) / SQRT2,
        ),
        CHI2: (
            (H() + H(p)) / SQRT2,
            (H() - H(p)) / SQRT2,
            (V() - V(p)) / SQRT2,
            (V() + V(p)) / SQRT2,
        ),
        # second entry read as |Dbar>
        CHI3: (D(), Dbar(), D(p), Dbar(p)),
    }


@functools.lru_cache(maxsize=None)
def _cached_table():
    return _table()


def basis_states(basis: BasisId) -> tuple[PolTimeState, ...]:
    """The four states of ``basis`` in table order (index 0 is state 1)."""
    try:
        return _cached_table()[basis]
    except (KeyError, TypeError):
        raise UnknownBasis(f"no states for {basis!r}") from None


def state(sid: StateId) -> PolTimeState:
    return basis_states(sid.basis)[sid.i - 1]


def all_state_ids(bases=ALL_BASES) -> list[StateId]:
    return [StateId(b, i) for b in bases for i in range(1, 5)]


def overlap_table(a_states, b_states) -> np.ndarray:
    """``|<a_i|b_j>|^2`` as a 4x4 array."""
    return np.array([[abs(inner_product(x, y)) ** 2 for y in b_states] for x in a_states])


@dataclass
class OrthonormalityReport:
    ok: bool
    gram: np.ndarray
    violations: list[tuple[int, int]] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def verify_orthonormal(states, tol: float = TOL) -> OrthonormalityReport:
    """Gram matrix check; violating pairs use 1-based indices, i <= j."""
    gram = np.array([[inner_product(x, y) for y in states] for x in states])
    bad = np.abs(gram - np.eye(len(states))) > tol
    violations = [(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(bad)) if i <= j]
    return OrthonormalityReport(not violations, gram, violations)


@dataclass
class UnbiasednessReport:
    a: BasisId
    b: BasisId
    ok: bool
    overlaps: np.ndarray

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {
            "a": self.a.name,
            "b": self.b.name,
            "pass": self.ok,
            "overlaps": np.round(self.overlaps, 15).tolist(),
        }


def verify_unbiased(a: BasisId, b: BasisId, tol: float = TOL, states=None) -> UnbiasednessReport:
    lookup = states or {}
    sa = lookup.get(a) or basis_states(a)
    sb = lookup.get(b) or basis_states(b)
    table = overlap_table(sa, sb)
    return UnbiasednessReport(a, b, bool(np.all(np.abs(table - 0.25) <= tol)), table)


@dataclass
class FamilyReport:
    psi_pairs: list[UnbiasednessReport]
    chi_pairs: list[UnbiasednessReport]
    orthonormal: dict[BasisId, OrthonormalityReport]
    coincidences: list[tuple[StateId, StateId]]
    cross_family_max: float

    @property
    def ok(self) -> bool:
        return (
            all(self.psi_pairs)
            and all(self.chi_pairs)
            and all(self.orthonormal.values())
            and not self.coincidences
        )

    def failures(self) -> list[str]:
        out = []
        for b, rep in self.orthonormal.items():
            if not rep:
                out.append(f"orthonormal:{b.name} violations {rep.violations}")
        for rep in self.psi_pairs + self.chi_pairs:
            if not rep:
                out.append(f"unbiased:{rep.a.name}-{rep.b.name}")
        for x, y in self.coincidences:
            out.append(f"coincidence:{x}={y}")
        return out

    def to_dict(self) -> dict:
        return {
            "pass": self.ok,
            "psi_pairs": [r.to_dict() for r in self.psi_pairs],
            "chi_pairs": [r.to_dict() for r in self.chi_pairs],
            "orthonormal": {b.name: bool(r) for b, r in self.orthonormal.items()},
            "psi_chi_coincidences": [[str(x), str(y)] for x, y in self.coincidences],
            # measured only; the two families are not claimed to be mutually unbiased
            "psi_chi_max_overlap": self.cross_family_max,
            "failures": self.failures(),
        }


def verify_all_families(tol: float = TOL, states=None) -> FamilyReport:
    """Run every orthonormality and unbiasedness check over both families.

    ``states`` optionally overrides the state table per basis, which is how
    the negative-control path injects a corrupted fixture.
    """
    lookup = states or {}

    def get(b):
        return lookup.get(b) or basis_states(b)

    psi_pairs = [verify_unbiased(a, b, tol, lookup) for a, b in itertools.combinations(PSI_BASES, 2)]
    chi_pairs = [verify_unbiased(a, b, tol, lookup) for a, b in itertools.combinations(CHI_BASES, 2)]
    ortho = {b: verify_orthonormal(get(b), tol) for b in ALL_BASES}
    coincidences = []
    cross_max = 0.0
    for pb, cb in itertools.product(PSI_BASES, CHI_BASES):
        table = overlap_table(get(pb), get(cb))
        cross_max = max(cross_max, float(table.max()))
        for i, j in zip(*np.nonzero(np.abs(table - 1.0) <= tol)):
            coincidences.append((StateId(pb, i + 1), StateId(cb, j + 1)))
    return FamilyReport(psi_pairs, chi_pairs, ortho, coincidences, cross_max)


# --- completing {chi1, chi2} -------------------------------------------------


@dataclass(frozen=True)
class CompletionCandidate:
    """``a|H> + b|V> + c|H'> + d|V'>`` with ``a = A exp(i theta_a)`` etc."""

    A: float
    B: float
    C: float
    D: float
    theta_a: float = 0.0
    theta_b: float = 0.0
    theta_c: float = 0.0
    theta_d: float = 0.0

    def __post_init__(self):
        n = self.A ** 2 + self.B ** 2 + self.C ** 2 + self.D ** 2
        if abs(n - 1.0) > TOL:
            raise ValueError(f"moduli must satisfy A^2+B^2+C^2+D^2 = 1, got {n}")

    @property
    def coefficients(self) -> np.ndarray:
        mods = np.array([self.A, self.B, self.C, self.D])
        phases = np.array([self.theta_a, self.theta_b, self.theta_c, self.theta_d])
        return mods * np.exp(1j * phases)

    def to_state(self) -> PolTimeState:
        a, b, c, d = self.coefficients
        return state_from_amplitudes([(Pol.H, 0, a), (Pol.V, 0, b), (Pol.H, 1, c), (Pol.V, 1, d)])

    @property
    def single_time_bin(self) -> bool:
        """True when all weight sits in one time bin: {A,B} = 0 or {C,D} = 0."""
        return (abs(self.A) < TOL and abs(self.B) < TOL) or (abs(self.C) < TOL and abs(self.D) < TOL)


def completion_overlaps(candidate: CompletionCandidate) -> np.ndarray:
    """``|<chi^m_i|lambda>|^2`` for m = 1, 2 as a 2x4 array."""
    lam = candidate.to_state()
    return np.array([[abs(inner_product(s, lam)) ** 2 for s in basis_states(b)] for b in (CHI1, CHI2)])


def is_completion(candidate: CompletionCandidate, tol: float = TOL) -> bool:
    return bool(np.all(np.abs(completion_overlaps(candidate) - 0.25) <= tol))


def _grid_moduli(step: float) -> np.ndarray:
    """(A, B, C, D) from hyperspherical angles in [0, pi/2] sampled at ``step``."""
    n = int(round((math.pi / 2) / step))
    angles = np.linspace(0.0, math.pi / 2, n + 1)
    rows = []
    for al, be, ga in itertools.product(angles, repeat=3):
        rows.append(
            (
                math.cos(al),
                math.sin(al) * math.cos(be),
                math.sin(al) * math.sin(be) * math.cos(ga),
                math.sin(al) * math.sin(be) * math.sin(ga),
            )
        )
    mods = np.array(rows)
    mods[np.abs(mods) < 1e-15] = 0.0
    return np.unique(np.round(mods, 15), axis=0)


def completion_grid(grid: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """All grid points as (moduli[N,4], phases[N,4]).

    ``grid`` is the number of points per full turn, so 8 means pi/4 steps for
    the four phases; the moduli angles use the same step over [0, pi/2].
    """
    if grid < 8:
        raise ValueError("grid must have at least 8 points per angle")
    step = 2 * math.pi / grid
    mods = _grid_moduli(step)
    ph = np.arange(grid) * step
    phases = np.array(list(itertools.product(ph, repeat=4)))
    m = np.repeat(mods, len(phases), axis=0)
    p = np.tile(phases, (len(mods), 1))
    return m, p


def _chi12_matrix() -> np.ndarray:
    """Rows are the chi1 and chi2 states restricted to (H, V, H', V')."""
    rows = []
    for b in (CHI1, CHI2):
        for s in basis_states(b):
            rows.append([s.amp(Pol.H, 0), s.amp(Pol.V, 0), s.amp(Pol.H, 1), s.amp(Pol.V, 1)])
    return np.array(rows)


def grid_unbiased_mask(mods: np.ndarray, phases: np.ndarray, tol: float) -> np.ndarray:
    coeffs = mods * np.exp(1j * phases)
    ov = np.abs(_chi12_matrix().conj() @ coeffs.T) ** 2
    return np.all(np.abs(ov - 0.25) <= tol, axis=0)


def completion_solver(grid: int = 8, tol: float = 1e-9) -> list[CompletionCandidate]:
    """Enumerate grid states unbiased to every chi1 and chi2 state."""
    mods, phases = completion_grid(grid)
    keep = grid_unbiased_mask(mods, phases, tol)
    out = [
        CompletionCandidate(*map(float, m), *map(float, p))
        for m, p in zip(mods[keep], phases[keep])
    ]
    if not out:
        raise NoSolutions(f"no unbiased completion found at grid={grid}")
    return out


def grid_counterexamples(grid: int = 8, tol: float = 1e-9) -> int:
    """Grid points that pass both filters yet spread over both time bins."""
    mods, phases = completion_grid(grid)
    keep = grid_unbiased_mask(mods, phases, tol)
    early = np.all(np.abs(mods[:, 2:]) < TOL, axis=1)
    late = np.all(np.abs(mods[:, :2]) < TOL, axis=1)
    return int(np.count_nonzero(keep & ~(early | late)))


def distinct_rays(candidates, tol: float = 1e-9) -> list[PolTimeState]:
    """Collapse candidates that differ only by a global phase."""
    rays: list[PolTimeState] = []
    for c in candidates:
        s = c.to_state()
        if not any(abs(abs(inner_product(r, s)) - 1.0) <= tol for r in rays):
            rays.append(s)
    return rays


def orthonormal_quadruples(rays, tol: float = 1e-9) -> list[tuple[int, int, int, int]]:
    """Index quadruples of mutually orthogonal rays (sorted, no repeats)."""
    n = len(rays)
    ortho = np.array([[abs(inner_product(rays[i], rays[j])) <= tol for j in range(n)] for i in range(n)])
    quads = []
    for q in itertools.combinations(range(n), 4):
        if all(ortho[i, j] for i, j in itertools.combinations(q, 2)):
            quads.append(q)
    return quads


def contains_basis(rays, basis: BasisId, tol: float = 1e-9) -> bool:
    """Every state of ``basis`` appears among ``rays`` up to a phase."""
    return all(
        any(abs(abs(inner_product(r, s)) - 1.0) <= tol for r in rays) for s in basis_states(basis)
    )
