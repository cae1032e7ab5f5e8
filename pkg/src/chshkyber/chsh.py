"""Exact two-qubit CHSH simulation, classical baselines and session verification.

Alice measures ``sigma_z`` (a=0) or ``sigma_x`` (a=1); Bob measures
``(sigma_z + sigma_x)/sqrt2`` (b=0) or ``(sigma_z - sigma_x)/sqrt2`` (b=1).
Each round yields ``c = x * y * (-1)**(a*b)``; an ideal EPR source gives
``E[c] = 1/sqrt2`` for every setting, while local hidden-variable strategies
are capped at ``E[c] = 1/2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

DEFAULT_EPSILON = 2.0 ** -32
CLASSICAL_BOUND = 0.5
TSIRELSON = 2 * math.sqrt(2)

_I2 = np.eye(2, dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)

# Bloch angles in the x-z plane for the four canonical observables
ALICE_ANGLES = (0.0, math.pi / 2)
BOB_ANGLES = (math.pi / 4, -math.pi / 4)


class DegenerateObservable(ValueError):
    """The operator is not a Hermitian involution with spectrum {+1, -1}."""


class InconsistentTranscript(ValueError):
    """A stored round's c does not equal x * y * (-1)**(a*b)."""


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Pure two-qubit state, basis order |00>, |01>, |10>, |11>."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex).reshape(4)
        norm = float(np.sum(np.abs(amp) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def epr_state() -> TwoQubitState:
    h = 1 / math.sqrt(2)
    return TwoQubitState(np.array([h, 0, 0, h], dtype=complex))


def product_state(bits: str) -> TwoQubitState:
    amp = np.zeros(4, dtype=complex)
    amp[int(bits, 2)] = 1.0
    return TwoQubitState(amp)


def werner_density(visibility: float) -> np.ndarray:
    """``v |EPR><EPR| + (1 - v) I/4``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    return visibility * epr_state().density() + (1 - visibility) * np.eye(4) / 4


@dataclass(frozen=True, eq=False)
class Observable:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex).reshape(2, 2)
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
            raise DegenerateObservable(f"observable {self.label!r} is not Hermitian")
        if np.max(np.abs(mat @ mat - _I2)) > 1e-12:
            raise DegenerateObservable(f"observable {self.label!r} does not square to identity")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_angle(cls, theta: float, label: str = "") -> "Observable":
        return cls(math.cos(theta) * SIGMA_Z + math.sin(theta) * SIGMA_X, label)

    def projectors(self):
        """(P+, P-) from the Bloch form ``O = r0 I + r . sigma``."""
        m = self.matrix
        r0 = (m[0, 0] + m[1, 1]).real / 2
        rz = (m[0, 0] - m[1, 1]).real / 2
        rx = m[0, 1].real
        ry = -m[0, 1].imag
        length = math.sqrt(rx * rx + ry * ry + rz * rz)
        if abs(r0) > 1e-12 or abs(length - 1.0) > 1e-12:
            raise DegenerateObservable(
                f"observable {self.label!r} does not split into +/-1 eigenprojectors")
        plus = (_I2 + m) / 2
        return plus, _I2 - plus


A0 = Observable(SIGMA_Z, "A0")
A1 = Observable(SIGMA_X, "A1")
B0 = Observable((SIGMA_Z + SIGMA_X) / math.sqrt(2), "B0")
B1 = Observable((SIGMA_Z - SIGMA_X) / math.sqrt(2), "B1")
ALICE = (A0, A1)
BOB = (B0, B1)

OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def joint_outcome_probs(state, alice: Observable, bob: Observable) -> dict:
    """Born-rule ``P(x, y)`` for x, y in {+1, -1}.

    ``state`` is a :class:`TwoQubitState` or a 4x4 density matrix.
    """
    rho = state.density() if isinstance(state, TwoQubitState) else np.asarray(state, dtype=complex)
    pa = dict(zip((1, -1), alice.projectors()))
    pb = dict(zip((1, -1), bob.projectors()))
    probs = {}
    for x, y in OUTCOMES:
        p = np.trace(rho @ np.kron(pa[x], pb[y])).real
        probs[(x, y)] = max(float(p), 0.0)
    return probs


def correlator(state, alice: Observable, bob: Observable) -> float:
    probs = joint_outcome_probs(state, alice, bob)
    return sum(x * y * p for (x, y), p in probs.items())


# --- strategies ------------------------------------------------------------

@dataclass(frozen=True)
class QuantumIdeal:
    tag = "quantum"


@dataclass(frozen=True)
class QuantumNoisy:
    visibility: float

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")

    @property
    def tag(self) -> str:
        return f"noisy:{self.visibility:g}"


@dataclass(frozen=True)
class ClassicalDeterministic:
    """``x = f[a]``, ``y = g[b]`` with f, g tuples of +/-1."""

    f: tuple = (1, 1)
    g: tuple = (1, 1)

    def __post_init__(self):
        for name, table in (("f", self.f), ("g", self.g)):
            if len(table) != 2 or any(v not in (1, -1) for v in table):
                raise ValueError(f"{name} must be a pair of +/-1 values, got {table!r}")
        object.__setattr__(self, "f", tuple(int(v) for v in self.f))
        object.__setattr__(self, "g", tuple(int(v) for v in self.g))

    @property
    def tag(self) -> str:
        return "lhv:" + "".join("+" if v > 0 else "-" for v in self.f + self.g)

    @classmethod
    def parse(cls, text: str) -> "ClassicalDeterministic":
        """Parse four signs, e.g. ``"++-+"`` for f=(+1,+1), g=(-1,+1)."""
        if len(text) != 4 or any(ch not in "+-" for ch in text):
            raise ValueError(f"LHV table must be four '+'/'-' characters, got {text!r}")
        vals = [1 if ch == "+" else -1 for ch in text]
        return cls(tuple(vals[:2]), tuple(vals[2:]))

    def expected_c(self) -> float:
        return sum(self.f[a] * self.g[b] * (-1) ** (a * b) for a in (0, 1) for b in (0, 1)) / 4


@dataclass(frozen=True)
class ClassicalRandomLHV:
    """Shared randomness picks a deterministic table per round."""

    tables: tuple = field(default_factory=lambda: tuple(all_deterministic_strategies()))
    weights: Optional[tuple] = None

    @property
    def tag(self) -> str:
        return "lhv:random"

    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.tables), 1 / len(self.tables))
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.tables) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative, one per table, not all zero")
        return w / w.sum()


Strategy = Union[QuantumIdeal, QuantumNoisy, ClassicalDeterministic, ClassicalRandomLHV]


def all_deterministic_strategies():
    signs = (1, -1)
    for f0, f1, g0, g1 in itertools.product(signs, repeat=4):
        yield ClassicalDeterministic((f0, f1), (g0, g1))


BEST_LHV = ClassicalDeterministic((1, 1), (1, 1))


def parse_strategy(text: str) -> Strategy:
    """``quantum`` | ``noisy:<v>`` | ``lhv:<table>`` | ``lhv:random``."""
    if text == "quantum":
        return QuantumIdeal()
    if text.startswith("noisy:"):
        return QuantumNoisy(float(text.split(":", 1)[1]))
    if text == "lhv:random":
        return ClassicalRandomLHV()
    if text.startswith("lhv:"):
        return ClassicalDeterministic.parse(text.split(":", 1)[1])
    raise ValueError(f"unknown strategy {text!r}")


def _setting_table(strategy) -> np.ndarray:
    """probs[a, b, o] over the OUTCOMES order for quantum strategies."""
    if isinstance(strategy, QuantumIdeal):
        rho = epr_state().density()
    else:
        rho = werner_density(strategy.visibility)
    table = np.empty((2, 2, 4))
    for a in (0, 1):
        for b in (0, 1):
            probs = joint_outcome_probs(rho, ALICE[a], BOB[b])
            table[a, b] = [probs[o] for o in OUTCOMES]
    return table / table.sum(axis=-1, keepdims=True)


_OUT_X = np.array([o[0] for o in OUTCOMES])
_OUT_Y = np.array([o[1] for o in OUTCOMES])


# --- rounds and games --------------------------------------------------------

@dataclass(frozen=True)
class ChshRound:
    a: int
    b: int
    x: int
    y: int
    c: int

    def consistent(self) -> bool:
        return self.c == self.x * self.y * (-1) ** (self.a * self.b)

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "x": self.x, "y": self.y, "c": self.c}


@dataclass(frozen=True, eq=False)
class ChshTranscript:
    """Column-stored rounds; ``rounds`` materializes :class:`ChshRound` objects."""

    a: np.ndarray
    b: np.ndarray
    x: np.ndarray
    y: np.ndarray
    c: np.ndarray
    strategy_tag: str = ""

    def __post_init__(self):
        cols = [np.array(getattr(self, k), dtype=np.int64).reshape(-1) for k in "abxyc"]
        if len({len(col) for col in cols}) != 1:
            raise ValueError("transcript columns have different lengths")
        if len(cols[0]) < 1:
            raise ValueError("a transcript needs at least one round")
        for name, col in zip("abxyc", cols):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    @property
    def m(self) -> int:
        return len(self.c)

    def __len__(self):
        return self.m

    @property
    def rounds(self):
        return [ChshRound(*map(int, r)) for r in zip(self.a, self.b, self.x, self.y, self.c)]

    @classmethod
    def from_rounds(cls, rounds: Sequence[ChshRound], strategy_tag: str = "") -> "ChshTranscript":
        cols = list(zip(*[(r.a, r.b, r.x, r.y, r.c) for r in rounds])) if rounds else [[]] * 5
        return cls(*cols, strategy_tag=strategy_tag)

    def to_json(self) -> list:
        return [{"a": int(a), "b": int(b), "x": int(x), "y": int(y), "c": int(c)}
                for a, b, x, y, c in zip(self.a, self.b, self.x, self.y, self.c)]

    @classmethod
    def from_json(cls, rows: list, strategy_tag: str = "") -> "ChshTranscript":
        return cls(*[[int(r[k]) for r in rows] for k in "abxyc"], strategy_tag=strategy_tag)

    def inconsistent_rounds(self) -> np.ndarray:
        expected = self.x * self.y * (1 - 2 * (self.a & self.b))
        return np.flatnonzero(expected != self.c)


@dataclass(frozen=True)
class ChshEstimate:
    e_hat: float
    s_hat: float
    ci_half_width: float
    violated: bool
    m: int

    def to_json(self) -> dict:
        return {"e_hat": self.e_hat, "s_hat": self.s_hat,
                "ci": self.ci_half_width, "violated": self.violated}


def hoeffding_half_width(m: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """Two-sided Hoeffding half-width for the mean of m variables in [-1, 1].

    Range 2 gives ``P(|mean - E| >= t) <= 2 exp(-m t^2 / 2)``, so
    ``t = sqrt(2 ln(2/eps) / m)``. The [0, 1] form would be half as wide and
    would not deliver the stated false-accept probability.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.sqrt(2 * math.log(2 / epsilon) / m)


def play_round(strategy: Strategy, rng: np.random.Generator) -> ChshRound:
    a, b = (int(v) for v in rng.integers(0, 2, size=2))
    if isinstance(strategy, (QuantumIdeal, QuantumNoisy)):
        probs = _setting_table(strategy)[a, b]
        x, y = OUTCOMES[int(rng.choice(4, p=probs))]
    else:
        if isinstance(strategy, ClassicalRandomLHV):
            table = strategy.tables[int(rng.choice(len(strategy.tables), p=strategy.probabilities()))]
        else:
            table = strategy
        x, y = table.f[a], table.g[b]
    return ChshRound(a, b, x, y, x * y * (-1) ** (a * b))


def sample_transcript(strategy: Strategy, m: int, rng: np.random.Generator) -> ChshTranscript:
    """m independent rounds, drawn in bulk."""
    if m < 1:
        raise ValueError("m must be >= 1")
    a = rng.integers(0, 2, size=m)
    b = rng.integers(0, 2, size=m)
    if isinstance(strategy, (QuantumIdeal, QuantumNoisy)):
        cdf = np.cumsum(_setting_table(strategy), axis=-1)
        u = rng.random(m)
        outcome = (u[:, None] >= cdf[a, b][:, :3]).sum(axis=1)
        x, y = _OUT_X[outcome], _OUT_Y[outcome]
    else:
        if isinstance(strategy, ClassicalRandomLHV):
            pick = rng.choice(len(strategy.tables), size=m, p=strategy.probabilities())
            f = np.array([t.f for t in strategy.tables])[pick]
            g = np.array([t.g for t in strategy.tables])[pick]
        else:
            f = np.broadcast_to(np.array(strategy.f), (m, 2))
            g = np.broadcast_to(np.array(strategy.g), (m, 2))
        rows = np.arange(m)
        x, y = f[rows, a], g[rows, b]
    c = x * y * (1 - 2 * (a & b))
    return ChshTranscript(a, b, x, y, c, strategy_tag=strategy.tag)


def estimate(transcript: ChshTranscript, epsilon: float = DEFAULT_EPSILON) -> ChshEstimate:
    """Mean of c, the CHSH parameter from per-setting correlators, and the Hoeffding test."""
    m = transcript.m
    e_hat = float(np.mean(transcript.c))
    s_hat = 0.0
    xy = transcript.x * transcript.y
    for a in (0, 1):
        for b in (0, 1):
            mask = (transcript.a == a) & (transcript.b == b)
            if mask.any():
                s_hat += (-1) ** (a * b) * float(np.mean(xy[mask]))
    width = hoeffding_half_width(m, epsilon)
    return ChshEstimate(e_hat, s_hat, width, e_hat - width > CLASSICAL_BOUND, m)


def setting_balanced_mean(transcript: ChshTranscript) -> float:
    """Mean of c with each of the four settings weighted 1/4."""
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            mask = (transcript.a == a) & (transcript.b == b)
            if mask.any():
                total += float(np.mean(transcript.c[mask])) / 4
    return total


def run_game(strategy: Strategy, m: int, rng: np.random.Generator,
             epsilon: float = DEFAULT_EPSILON):
    transcript = sample_transcript(strategy, m, rng)
    return transcript, estimate(transcript, epsilon)


def expected_c(strategy: Strategy) -> float:
    """Exact E[c] under uniform settings."""
    if isinstance(strategy, ClassicalDeterministic):
        return strategy.expected_c()
    if isinstance(strategy, ClassicalRandomLHV):
        return float(sum(p * t.expected_c() for p, t in zip(strategy.probabilities(), strategy.tables)))
    table = _setting_table(strategy)
    sign = np.array([[1, 1], [1, -1]])
    corr = (table * (_OUT_X * _OUT_Y)).sum(axis=-1)
    return float((sign * corr).sum() / 4)


def lhv_max() -> float:
    """Best E[c] over all 16 deterministic local strategies (exact)."""
    return max(t.expected_c() for t in all_deterministic_strategies())


def lhv_min() -> float:
    return min(t.expected_c() for t in all_deterministic_strategies())


def lhv_maximizers():
    best = lhv_max()
    return [t for t in all_deterministic_strategies() if t.expected_c() == best]


def chsh_value(state, alice_angles, bob_angles) -> float:
    """S = E(a0,b0) + E(a0,b1) + E(a1,b0) - E(a1,b1) for x-z plane observables."""
    A = [Observable.from_angle(t) for t in alice_angles]
    B = [Observable.from_angle(t) for t in bob_angles]
    return (correlator(state, A[0], B[0]) + correlator(state, A[0], B[1])
            + correlator(state, A[1], B[0]) - correlator(state, A[1], B[1]))


def correlator_grid(state, angles) -> np.ndarray:
    obs = [Observable.from_angle(t) for t in angles]
    return np.array([[correlator(state, oa, ob) for ob in obs] for oa in obs])


def tsirelson_scan(angles=None, state=None) -> float:
    """Largest |S| over all Alice/Bob angle pairs drawn from ``angles``.

    Defaults to a 1-degree grid over [0, pi]. Correlators are tabulated once
    via the Born rule; for a fixed Alice pair the Bob maximization splits
    into two independent one-dimensional maxima, so the search is exhaustive.
    """
    if angles is None:
        angles = np.deg2rad(np.arange(0, 181))
    state = epr_state() if state is None else state
    E = correlator_grid(state, angles)
    plus = E[:, None, :] + E[None, :, :]    # [a0, a1, b0]
    minus = E[:, None, :] - E[None, :, :]   # [a0, a1, b1]
    s_max = plus.max(axis=2) + minus.max(axis=2)
    s_min = plus.min(axis=2) + minus.min(axis=2)
    return float(max(s_max.max(), -s_min.min()))


def quantum_advantage_gap(m: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """(2 sqrt2 - 2)/4 less the Hoeffding width, floored at 0."""
    return max((TSIRELSON - 2) / 4 - hoeffding_half_width(m, epsilon), 0.0)


@dataclass(frozen=True)
class VerificationReport:
    accepted: bool
    e_hat: float
    threshold: float
    half_width: float
    m: int
    epsilon: float

    def to_json(self) -> dict:
        return {"accepted": self.accepted, "e_hat": self.e_hat, "threshold": self.threshold,
                "half_width": self.half_width, "m": self.m, "epsilon": self.epsilon}


def verify_session(transcript: ChshTranscript, epsilon: float = DEFAULT_EPSILON) -> VerificationReport:
    bad = transcript.inconsistent_rounds()
    if len(bad):
        raise InconsistentTranscript(
            f"{len(bad)} round(s) have c != x*y*(-1)^(ab); first at index {int(bad[0])}")
    m = transcript.m
    e_hat = float(np.mean(transcript.c))
    width = hoeffding_half_width(m, epsilon)
    return VerificationReport(e_hat - width > CLASSICAL_BOUND, e_hat,
                              CLASSICAL_BOUND + width, width, m, epsilon)
