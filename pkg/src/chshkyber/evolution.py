"""Key-state evolution: keyed PRF updates and the affine Markov chain.

The Markov model moves a secret ``s`` in ``Z_q^n`` by ``s' = M s + e mod q``.
For desk-scale chains (at most ``KERNEL_CAP`` states) the transition kernel
is built exactly and analysed densely: spectrum, spectral gap, stationary
law, irreducibility, aperiodicity and mixing time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import rng as _rng
from .mlwe import Params, ZqMat, ZqVec, cbd_array, center

KERNEL_CAP = 4096


class StateSpaceTooLarge(ValueError):
    pass


class NotStochastic(ValueError):
    pass


class NotInvertible(ValueError):
    pass


# --- PRF evolution -----------------------------------------------------------

@dataclass(frozen=True)
class PrfState:
    key_H: bytes
    key_psi: bytes
    counter: int = 0

    @classmethod
    def from_seed(cls, seed) -> "PrfState":
        return cls(_rng.derive_seed(seed, "prf-key-H"), _rng.derive_seed(seed, "prf-key-psi"), 0)

    def advanced(self) -> "PrfState":
        return PrfState(self.key_H, self.key_psi, self.counter + 1)


@dataclass(frozen=True, eq=False)
class LatticeState:
    """One point ``(s, A, t)`` of the evolving key state."""

    s: ZqVec
    A: ZqMat
    t: ZqVec

    def __eq__(self, other):
        return (isinstance(other, LatticeState) and self.s == other.s
                and self.A == other.A and self.t == other.t)


def expand_zq(domain: bytes, key: bytes, counter: int, data: bytes, count: int, q: int) -> np.ndarray:
    """Keyed XOF output mapped to ``count`` uniform residues by rejection sampling."""
    limit = (1 << 16) - ((1 << 16) % q)
    length = 2 * count + 64
    while True:
        # a longer SHAKE digest extends the shorter one, so retries stay consistent
        words = np.frombuffer(_rng.xof(domain, key, counter, data, length=length), dtype="<u2")
        accepted = words[words < limit]
        if len(accepted) >= count:
            return accepted[:count].astype(np.int64) % q
        length *= 2


def prf_evolve(state: LatticeState, prf: PrfState, params: Params):
    """``s' = H(s)``, ``A' = psi(A)``, ``t' = A' s' + e'``; returns (state', prf')."""
    q = params.q
    s_new = expand_zq(_rng.DOMAIN_PRF_H, prf.key_H, prf.counter, state.s.to_bytes(), len(state.s), q)
    n, k = state.A.shape
    A_new = expand_zq(_rng.DOMAIN_PRF_PSI, prf.key_psi, prf.counter, state.A.to_bytes(), n * k, q).reshape(n, k)
    noise_rng = _rng.rng_from_bytes(_rng.xof(b"prf-noise", prf.key_H, prf.counter, state.t.to_bytes()))
    e_new = cbd_array(params.eta, n, noise_rng)
    t_new = (A_new @ s_new + e_new) % q
    new_state = LatticeState(ZqVec(s_new, q), ZqMat(A_new, q), ZqVec(t_new, q))
    return new_state, prf.advanced()


# --- noise laws and chains -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseLaw:
    """Per-coordinate noise distribution over Z_q as exact probabilities."""

    q: int
    probs: tuple  # Fraction per residue 0..q-1
    label: str = "custom"

    def __post_init__(self):
        probs = tuple(Fraction(p) if not isinstance(p, float) else Fraction(p).limit_denominator(10 ** 15)
                      for p in self.probs)
        if len(probs) != self.q:
            raise ValueError(f"noise table has {len(probs)} entries, expected q={self.q}")
        if any(p < 0 for p in probs):
            raise ValueError("noise probabilities must be non-negative")
        if abs(float(sum(probs)) - 1.0) > 1e-12:
            raise ValueError(f"noise probabilities sum to {float(sum(probs))!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    @property
    def support(self) -> tuple:
        return tuple(i for i, p in enumerate(self.probs) if p > 0)

    def full_support(self) -> bool:
        return len(self.support) == self.q

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.q, size=shape, p=self.array).astype(np.int64)

    @classmethod
    def from_offsets(cls, q: int, weights: dict, label: str = "custom") -> "NoiseLaw":
        probs = [Fraction(0)] * q
        total = sum(Fraction(w) for w in weights.values())
        for offset, w in weights.items():
            probs[offset % q] += Fraction(w) / total
        return cls(q, tuple(probs), label)

    @classmethod
    def cbd(cls, eta: int, q: int) -> "NoiseLaw":
        weights = {x - eta: math.comb(2 * eta, x) for x in range(2 * eta + 1)}
        return cls.from_offsets(q, weights, f"cbd:{eta}")

    @classmethod
    def uniform(cls, q: int) -> "NoiseLaw":
        return cls(q, tuple(Fraction(1, q) for _ in range(q)), "uniform")

    @classmethod
    def uniform_on(cls, q: int, offsets) -> "NoiseLaw":
        return cls.from_offsets(q, {o: 1 for o in offsets}, "uniform-on:" + ",".join(map(str, offsets)))

    @classmethod
    def point(cls, q: int, offset: int = 0) -> "NoiseLaw":
        return cls.from_offsets(q, {offset: 1}, f"point:{offset}")

    def to_json(self) -> dict:
        return {"label": self.label, "probs": [str(p) for p in self.probs]}


@dataclass(frozen=True, eq=False)
class ChainSpec:
    M: ZqMat
    noise: NoiseLaw

    def __post_init__(self):
        M = self.M if isinstance(self.M, ZqMat) else ZqMat(np.asarray(self.M), self.noise.q)
        if M.q != self.noise.q:
            raise ValueError("matrix modulus and noise modulus differ")
        if M.shape[0] != M.shape[1]:
            raise ValueError("transition matrix must be square")
        object.__setattr__(self, "M", M)

    @property
    def q(self) -> int:
        return self.noise.q

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def state_count(self) -> int:
        return self.q ** self.n

    def to_json(self) -> dict:
        return {"n": self.n, "q": self.q, "M": self.M.entries.tolist(), "noise": self.noise.label}


def markov_step(s: ZqVec, spec: ChainSpec, rng: np.random.Generator, e=None) -> ZqVec:
    """``(M s + e) mod q``; ``e`` is drawn from the chain's noise law unless given."""
    if len(s) != spec.n:
        raise ValueError(f"state has length {len(s)}, chain dimension is {spec.n}")
    if e is None:
        e = spec.noise.sample(spec.n, rng)
    return ZqVec(spec.M.entries @ s.entries + np.asarray(e, dtype=np.int64), spec.q)


def simulate_chain(spec: ChainSpec, s0, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Trajectory ``s_0 .. s_steps`` (shape ``(steps + 1, n)``), noise drawn in bulk."""
    q = spec.q
    noise = spec.noise.sample((steps, spec.n), rng)
    traj = np.empty((steps + 1, spec.n), dtype=np.int64)
    traj[0] = np.asarray(s0, dtype=np.int64) % q
    if spec.n == 1:
        mult = int(spec.M.entries[0, 0])
        s = int(traj[0, 0])
        col = noise[:, 0].tolist()
        out = traj[:, 0]
        for i, e in enumerate(col, start=1):
            s = (mult * s + e) % q
            out[i] = s
        return traj
    M = spec.M.entries
    for i in range(steps):
        traj[i + 1] = (M @ traj[i] + noise[i]) % q
    return traj


def matpow_mod(M, power: int, q: int) -> np.ndarray:
    M = np.asarray(M, dtype=np.int64) % q
    result = np.eye(M.shape[0], dtype=np.int64)
    base = M
    while power:
        if power & 1:
            result = (result @ base) % q
        base = (base @ base) % q
        power >>= 1
    return result


@dataclass(frozen=True)
class PrimitivityResult:
    primitive_at: Optional[int]
    k_max: int

    @property
    def primitive(self) -> bool:
        return self.primitive_at is not None

    def to_json(self) -> dict:
        return {"primitive_at": self.primitive_at, "k_max": self.k_max,
                "status": "primitive" if self.primitive else "inconclusive"}


def check_primitive(M, q: int, k_max: Optional[int] = None) -> PrimitivityResult:
    """Smallest k <= k_max with every entry of M^k nonzero mod q."""
    M = np.asarray(M.entries if isinstance(M, ZqMat) else M, dtype=np.int64) % q
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if k_max is None:
        k_max = M.shape[0] * q
    power = np.eye(M.shape[0], dtype=np.int64)
    for k in range(1, k_max + 1):
        power = (power @ M) % q
        if np.all(power != 0):
            return PrimitivityResult(k, k_max)
    return PrimitivityResult(None, k_max)


def integer_det(M) -> int:
    """Exact determinant via fraction-free Bareiss elimination."""
    a = [[int(v) for v in row] for row in np.asarray(M)]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1] if n else 1


def det_mod(M, q: int) -> int:
    return integer_det(np.asarray(M.entries if isinstance(M, ZqMat) else M) % q) % q


def is_invertible_mod(M, q: int) -> bool:
    return math.gcd(det_mod(M, q), q) == 1


# --- exact kernels -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Row-stochastic kernel; state index ``i`` encodes s with base-q digits (s[0] least significant)."""

    rows: np.ndarray
    q: int
    n: int

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    def state(self, index: int) -> np.ndarray:
        return np.array([(index // self.q ** j) % self.q for j in range(self.n)], dtype=np.int64)

    def index(self, s) -> int:
        return int(sum(int(v) * self.q ** j for j, v in enumerate(np.asarray(s) % self.q)))


def _all_states(q: int, n: int) -> np.ndarray:
    idx = np.arange(q ** n)
    return np.stack([(idx // q ** j) % q for j in range(n)], axis=1).astype(np.int64)


def build_kernel(spec: ChainSpec, cap: int = KERNEL_CAP, exact: bool = False) -> KernelMatrix:
    """Exact kernel ``P[s, s'] = prod_j Pr[e_j = (s' - M s)_j mod q]``.

    With ``exact=True`` the entries are ``Fraction`` objects (object array);
    intended for small chains.
    """
    count = spec.state_count
    if count > cap:
        raise StateSpaceTooLarge(f"q^n = {spec.q}^{spec.n} = {count} states exceeds the cap of {cap}")
    q, n = spec.q, spec.n
    states = _all_states(q, n)
    images = (states @ spec.M.entries.T) % q
    if exact:
        probs = spec.noise.probs
        rows = np.empty((count, count), dtype=object)
        for i in range(count):
            for j in range(count):
                diff = (states[j] - images[i]) % q
                rows[i, j] = reduce(lambda acc, d: acc * probs[int(d)], diff, Fraction(1))
        return KernelMatrix(rows, q, n)
    table = spec.noise.array
    rows = np.ones((count, count))
    chunk = max(1, (1 << 22) // count)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        block = np.ones((stop - start, count))
        for j in range(n):
            diff = (states[None, :, j] - images[start:stop, None, j]) % q
            block *= table[diff]
        rows[start:stop] = block
    return KernelMatrix(rows, q, n)


def _period_from(adj: np.ndarray, start: int = 0) -> int:
    """gcd of cycle lengths through ``start`` via BFS levels."""
    level = np.full(adj.shape[0], -1)
    level[start] = 0
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    us, vs = np.nonzero(adj)
    for u, v in zip(us, vs):
        if level[u] >= 0 and level[v] >= 0:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g


def _tv_rows(P: np.ndarray, pi: np.ndarray) -> float:
    return float(0.5 * np.max(np.sum(np.abs(P - pi[None, :]), axis=1)))


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray      # magnitudes, descending
    gap: float
    irreducible: bool
    aperiodic: bool
    period: int
    stationary: np.ndarray
    epsilon: float
    empirical_tau: Optional[int]
    tau_mix: Callable[[float], float] = field(repr=False)

    @property
    def nominal_tau(self) -> float:
        return self.tau_mix(self.epsilon)

    def to_json(self, max_eigenvalues: int = 16) -> dict:
        nominal = self.nominal_tau
        return {
            "states": int(len(self.stationary)),
            "eigenvalue_magnitudes": [float(v) for v in self.eigenvalues[:max_eigenvalues]],
            "lambda_1": float(self.eigenvalues[0]),
            "gap": self.gap,
            "epsilon": self.epsilon,
            "tau_mix_bound": None if math.isinf(nominal) else int(nominal),
            "tau_mix_empirical": self.empirical_tau,
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "period": self.period,
            "stationary": [float(p) for p in self.stationary],
        }


def _nominal_tau(gap: float) -> Callable[[float], float]:
    def tau(eps: float) -> float:
        if not 0 < eps < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if gap <= 0:
            return math.inf
        return float(math.ceil(math.log(1 / eps) / gap))
    return tau


def empirical_mixing_time(P: np.ndarray, pi: np.ndarray, epsilon: float, max_steps: int = 10_000) -> Optional[int]:
    """Smallest t with max over start states of TV(P^t[s], pi) <= epsilon."""
    Pt = np.eye(P.shape[0])
    for t in range(1, max_steps + 1):
        Pt = Pt @ P
        if _tv_rows(Pt, pi) <= epsilon:
            return t
    return None


def spectral_report(kernel: KernelMatrix, epsilon: float = 0.01, empirical: bool = True,
                    max_steps: int = 10_000) -> SpectralReport:
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    P = np.asarray(kernel.rows, dtype=float)
    if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-8:
        raise NotStochastic("kernel rows must be non-negative and sum to 1")
    vals, left = np.linalg.eig(P.T)
    mags = np.sort(np.abs(vals))[::-1]
    if len(mags) == 1:
        gap = 1.0
    else:
        gap = float(min(max(1.0 - max(mags[1], mags[-1]), 0.0), 1.0))
    lead = int(np.argmin(np.abs(vals - 1)))
    pi = np.real(left[:, lead])
    pi = pi / pi.sum()
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    adj = P > 0
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    irreducible = n_comp == 1
    period = _period_from(adj)
    aperiodic = irreducible and period == 1
    emp = empirical_mixing_time(P, pi, epsilon, max_steps) if empirical and gap > 0 else None
    return SpectralReport(mags, gap, irreducible, aperiodic, period, pi, epsilon, emp, _nominal_tau(gap))


@dataclass(frozen=True)
class ErgodicityReport:
    primitive: PrimitivityResult
    full_support: bool
    gap: float
    poly_threshold: float
    gap_ok: bool
    det_mod_q: int
    invertible: bool
    irreducible: bool
    aperiodic: bool

    @property
    def certified(self) -> bool:
        return self.primitive.primitive and self.full_support and self.gap_ok

    def to_json(self) -> dict:
        return {
            "premise_primitive": self.primitive.primitive,
            "primitive_at": self.primitive.primitive_at,
            "premise_full_support": self.full_support,
            "premise_gap": self.gap_ok,
            "gap": self.gap,
            "poly_threshold": self.poly_threshold,
            "det_mod_q": self.det_mod_q,
            "invertible": self.invertible,
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "conclusion": "certified" if self.certified else "not certified",
        }


def verify_ergodicity(spec: ChainSpec, poly_threshold: float, k_max: Optional[int] = None,
                      cap: int = KERNEL_CAP) -> ErgodicityReport:
    """Evaluate the three ergodicity premises: primitive M, full-support noise, gap above threshold."""
    kernel = build_kernel(spec, cap=cap)
    report = spectral_report(kernel, empirical=False)
    prim = check_primitive(spec.M, spec.q, k_max)
    det = det_mod(spec.M, spec.q)
    return ErgodicityReport(
        primitive=prim,
        full_support=spec.noise.full_support(),
        gap=report.gap,
        poly_threshold=poly_threshold,
        gap_ok=report.gap >= poly_threshold,
        det_mod_q=det,
        invertible=math.gcd(det, spec.q) == 1,
        irreducible=report.irreducible,
        aperiodic=report.aperiodic,
    )


# --- noise accumulation ----------------------------------------------------------

@dataclass(frozen=True)
class NoiseAccumulationReport:
    horizon: int
    q: int
    eta: int
    threshold: float
    lift_norms: tuple      # induced inf-norm of center(M^t), t = 1..T
    worst_case: tuple      # lift_norms[t] * eta
    worst_case_pass: bool
    first_failure: Optional[int]
    monte_carlo_max: int
    monte_carlo_pass: bool
    trials: int

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def noise_accumulation_check(M, params: Params, T: int, trials: int = 1000,
                             rng: Optional[np.random.Generator] = None) -> NoiseAccumulationReport:
    """Check ``||M^t e||_inf < q/4`` for t = 1..T, worst case and sampled."""
    q, eta = params.q, params.eta
    M = np.asarray(M.entries if isinstance(M, ZqMat) else M, dtype=np.int64) % q
    if not is_invertible_mod(M, q):
        raise NotInvertible(f"det(M) = {det_mod(M, q)} mod {q}; M is not invertible")
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    threshold = q / 4
    norms, worst = [], []
    powers = []
    for t in range(1, T + 1):
        Mt = matpow_mod(M, t, q)
        powers.append(Mt)
        norm = int(np.max(np.sum(np.abs(center(Mt, q)), axis=1)))
        norms.append(norm)
        worst.append(norm * eta)
    failures = [t for t, w in enumerate(worst, start=1) if w >= threshold]
    if rng is None:
        rng = _rng.make_rng(params.seed, "noise-accumulation")
    e = cbd_array(eta, (trials, M.shape[0]), rng)
    mc_max = 0
    for Mt in powers:
        mc_max = max(mc_max, int(np.max(np.abs(center(e @ Mt.T, q)))))
    return NoiseAccumulationReport(
        horizon=T, q=q, eta=eta, threshold=threshold,
        lift_norms=tuple(norms), worst_case=tuple(worst),
        worst_case_pass=not failures, first_failure=failures[0] if failures else None,
        monte_carlo_max=mc_max, monte_carlo_pass=mc_max < threshold, trials=trials,
    )
