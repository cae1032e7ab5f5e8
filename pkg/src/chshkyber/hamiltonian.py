"""CHSH rounds as 2-local Hamiltonian terms and exact ground energies.

Round ``(a, b)`` maps to ``H = (I - (-1)**(a*b) A_a (x) B_b) / 2``. Every
round consumes a fresh EPR pair, so the global Hamiltonian is a direct sum
of 4x4 blocks and its ground energy is the sum of per-block minima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chsh import ALICE, BOB, ChshTranscript, epr_state

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class InvalidPromise(ValueError):
    pass


def _check_hermitian(matrix, tol=1e-12):
    if np.max(np.abs(matrix - matrix.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian")


@dataclass(frozen=True, eq=False)
class HermitianOp4:
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex).reshape(4, 4)
        _check_hermitian(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __add__(self, other: "HermitianOp4") -> "HermitianOp4":
        return HermitianOp4(self.matrix + other.matrix)

    def eigh(self):
        return jacobi_eigh(self.matrix)

    def norm(self) -> float:
        vals, _ = self.eigh()
        return float(np.max(np.abs(vals)))

    def expectation(self, state) -> float:
        amp = state.amplitudes
        return float((amp.conj() @ self.matrix @ amp).real)


def jacobi_eigh(matrix, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi for a small Hermitian matrix.

    Each rotation first rephases column q so the pivot ``a_pq`` is real, then
    applies the real symmetric Jacobi rotation that zeroes it. Returns
    ascending eigenvalues and the unitary whose columns are eigenvectors.
    """
    a = np.array(matrix, dtype=complex)
    n = a.shape[0]
    _check_hermitian(a, tol=1e-9)
    v = np.eye(n, dtype=complex)
    scale = max(float(np.max(np.abs(a))), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(abs(a[p, q]) ** 2 for p in range(n) for q in range(n) if p != q))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= tol * scale * 1e-3:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2 * r)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1 + tau * tau)) if tau != 0 else 1.0
                c = 1 / math.sqrt(1 + t * t)
                s = t * c
                # G = diag(.., conj(phase) at q, ..) @ R(p, q; c, s)
                g = np.eye(n, dtype=complex)
                g[p, p] = c
                g[p, q] = s
                g[q, p] = -s * np.conj(phase)
                g[q, q] = c * np.conj(phase)
                a = g.conj().T @ a @ g
                v = v @ g
        a = (a + a.conj().T) / 2
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    vals = np.diag(a).real.copy()
    order = np.argsort(vals)
    return vals[order], v[:, order]


def term_from_settings(a: int, b: int) -> HermitianOp4:
    sign = (-1) ** (a * b)
    corr = np.kron(ALICE[a].matrix, BOB[b].matrix)
    return HermitianOp4((np.eye(4) - sign * corr) / 2)


@dataclass(frozen=True, eq=False)
class HamiltonianInstance:
    terms: tuple  # of (pair_index, HermitianOp4)
    norm_check: float

    @property
    def pair_count(self) -> int:
        return len({idx for idx, _ in self.terms})

    def blocks(self) -> dict:
        """Summed 4x4 block per pair index, in ascending index order."""
        out = {}
        for idx, term in self.terms:
            out[idx] = out[idx] + term.matrix if idx in out else np.array(term.matrix)
        return dict(sorted(out.items()))

    def dense(self) -> np.ndarray:
        """The full 4**pairs dimensional operator (small instances only)."""
        blocks = list(self.blocks().values())
        dim = 4 ** len(blocks)
        if dim > 4 ** 6:
            raise ValueError("dense assembly is limited to 6 pairs")
        total = np.zeros((dim, dim), dtype=complex)
        for i, block in enumerate(blocks):
            left = np.eye(4 ** i)
            right = np.eye(4 ** (len(blocks) - i - 1))
            total += np.kron(np.kron(left, block), right)
        return total


def make_instance(terms: Sequence) -> HamiltonianInstance:
    terms = tuple((int(idx), t if isinstance(t, HermitianOp4) else HermitianOp4(t)) for idx, t in terms)
    if not terms:
        raise ValueError("an instance needs at least one term")
    norm = max(t.norm() for _, t in terms)
    if norm > 1 + 1e-9:
        raise ValueError(f"term operator norm {norm} exceeds 1")
    return HamiltonianInstance(terms, norm)


_TERM_CACHE = {(a, b): term_from_settings(a, b) for a in (0, 1) for b in (0, 1)}
_TERM_NORMS = {key: term.norm() for key, term in _TERM_CACHE.items()}


def instance_from_transcript(transcript: ChshTranscript, pair_index=None) -> HamiltonianInstance:
    """One term per round; round i uses pair i unless ``pair_index`` says otherwise."""
    if pair_index is None:
        pair_index = range(transcript.m)
    terms = tuple((int(idx), _TERM_CACHE[(int(a), int(b))])
                  for idx, a, b in zip(pair_index, transcript.a, transcript.b))
    norm = max(_TERM_NORMS[(int(a), int(b))] for a, b in set(zip(transcript.a, transcript.b)))
    return HamiltonianInstance(terms, norm)


def pair_energies(instance: HamiltonianInstance) -> dict:
    """Minimum eigenvalue of each pair's summed block."""
    cache = {}
    out = {}
    for idx, block in instance.blocks().items():
        key = block.round(14).tobytes()
        if key not in cache:
            vals, vecs = jacobi_eigh(block)
            resid = np.linalg.norm(block @ vecs[:, 0] - vals[0] * vecs[:, 0])
            if resid > 1e-10:
                raise RuntimeError(f"eigen residual {resid:.2e} above 1e-10")
            cache[key] = float(vals[0])
        out[idx] = cache[key]
    return out


def ground_energy(instance: HamiltonianInstance) -> float:
    return float(sum(pair_energies(instance).values()))


@dataclass(frozen=True)
class PromiseInstance:
    hamiltonian: HamiltonianInstance
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise InvalidPromise(f"need alpha < beta, got alpha={self.alpha}, beta={self.beta}")

    @property
    def gap(self) -> float:
        return self.beta - self.alpha


YES, NO, OUTSIDE_PROMISE = "YES", "NO", "outside_promise"


def decide_promise(instance: PromiseInstance) -> str:
    energy = ground_energy(instance.hamiltonian)
    if energy <= instance.alpha:
        return YES
    if energy >= instance.beta:
        return NO
    return OUTSIDE_PROMISE


IDEAL_TERM_ENERGY = (1 - 1 / math.sqrt(2)) / 2


@dataclass(frozen=True)
class CorrelationEnergyReport:
    ideal_term_energy: float
    per_setting_energy: dict
    measured_mean_energy: float
    m: int

    def to_json(self) -> dict:
        return {"ideal_term_energy": self.ideal_term_energy,
                "per_setting_energy": {f"{a}{b}": e for (a, b), e in self.per_setting_energy.items()},
                "measured_mean_energy": self.measured_mean_energy, "m": self.m}


def correlation_energy_link(transcript: ChshTranscript) -> CorrelationEnergyReport:
    """Exact EPR energy of each term against the measured mean of (1 - c)/2."""
    psi = epr_state()
    per_setting = {key: term.expectation(psi) for key, term in _TERM_CACHE.items()}
    spread = max(abs(e - IDEAL_TERM_ENERGY) for e in per_setting.values())
    if spread > 1e-12:
        raise RuntimeError(f"EPR term energies deviate from the ideal value by {spread:.2e}")
    measured = float(np.mean((1 - transcript.c) / 2))
    return CorrelationEnergyReport(IDEAL_TERM_ENERGY, per_setting, measured, transcript.m)
