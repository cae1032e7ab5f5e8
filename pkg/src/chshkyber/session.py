"""Two-party session orchestration over a simulated EPR channel.

A session runs the CHSH gate first; only an accepted transcript proceeds to
the KEM. The shared secret comes from an FO-style wrapper (derandomized
encryption, re-encryption check, implicit rejection) and the final key binds
that secret to the hash of the CHSH transcript. Between sessions a separate
evolution register (Markov chain or keyed PRF) advances and feeds the next
session's seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import chsh, evolution, mlwe
from .rng import (DOMAIN_COINS, DOMAIN_KDF, DOMAIN_REJECT, DOMAIN_TRANSCRIPT,
                  derive_seed, make_rng, rng_from_bytes, seed_bytes, xof)

SEED_ENV = "CHSHKYBER_SEED"
NOMINAL_LAMBDA = 128
NOMINAL_LAMBDA_DIM = 256
ETA_CEILING = 4
DEFAULT_CHAIN_M = 2
DEFAULT_CHAIN_Q_MAX = 256
FALLBACK_CHAIN_Q = 97


# --- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class Ideal:
    def strategy(self):
        return chsh.QuantumIdeal()

    def label(self) -> str:
        return "ideal"


@dataclass(frozen=True)
class NoisyVisibility:
    v: float

    def __post_init__(self):
        if not 0.0 <= self.v <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.v}")

    def strategy(self):
        return chsh.QuantumNoisy(self.v)

    def label(self) -> str:
        return f"noisy:{self.v:g}"


@dataclass(frozen=True)
class AdversarialLHV:
    lhv: Union[chsh.ClassicalDeterministic, chsh.ClassicalRandomLHV] = chsh.BEST_LHV

    def strategy(self):
        return self.lhv

    def label(self) -> str:
        return self.lhv.tag


Channel = Union[Ideal, NoisyVisibility, AdversarialLHV]


def parse_channel(text: str) -> Channel:
    if text == "ideal":
        return Ideal()
    if text.startswith("noisy:"):
        return NoisyVisibility(float(text.split(":", 1)[1]))
    if text.startswith("lhv"):
        rest = text.split(":", 1)[1] if ":" in text else "++++"
        return AdversarialLHV(chsh.parse_strategy("lhv:" + rest))
    raise ValueError(f"unknown channel {text!r}")


@dataclass(frozen=True)
class PrfEvolution:
    def label(self) -> str:
        return "prf"


@dataclass(frozen=True)
class MarkovEvolution:
    chain: evolution.ChainSpec

    def label(self) -> str:
        return "markov"


Evolution = Union[PrfEvolution, MarkovEvolution]


def default_chain(params: mlwe.Params) -> evolution.ChainSpec:
    q = params.q if params.q <= DEFAULT_CHAIN_Q_MAX else FALLBACK_CHAIN_Q
    return evolution.ChainSpec(np.array([[DEFAULT_CHAIN_M]]), evolution.NoiseLaw.uniform(q))


def parse_noise(text: str, q: int) -> evolution.NoiseLaw:
    """``cbd:<eta>`` | ``uniform`` | ``point`` | ``table:<file>`` (JSON list of q probabilities)."""
    if text == "uniform":
        return evolution.NoiseLaw.uniform(q)
    if text == "point":
        return evolution.NoiseLaw.point(q)
    if text.startswith("cbd:"):
        return evolution.NoiseLaw.cbd(int(text.split(":", 1)[1]), q)
    if text.startswith("uniform-on:"):
        return evolution.NoiseLaw.uniform_on(q, [int(v) for v in text.split(":", 1)[1].split(",")])
    if text.startswith("table:"):
        with open(text.split(":", 1)[1]) as fh:
            probs = json.load(fh)
        return evolution.NoiseLaw(q, tuple(probs), "table")
    raise ValueError(f"unknown noise law {text!r}")


def parse_matrix(text: str, n: int) -> np.ndarray:
    values = [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    if len(values) != n * n:
        raise ValueError(f"matrix needs {n * n} entries, got {len(values)}")
    return np.array(values, dtype=np.int64).reshape(n, n)


@dataclass(frozen=True)
class SessionConfig:
    params: mlwe.Params
    channel: Channel = field(default_factory=Ideal)
    evolution: Optional[Evolution] = None
    epsilon: float = chsh.DEFAULT_EPSILON
    sessions: int = 1
    seed: bytes = b"\x00" * 32
    secret_bits: int = mlwe.DEFAULT_SECRET_BITS
    poly_threshold: Optional[float] = None
    security_lambda: Optional[float] = None

    def __post_init__(self):
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        object.__setattr__(self, "seed", seed_bytes(self.seed))
        if self.evolution is None:
            object.__setattr__(self, "evolution", MarkovEvolution(default_chain(self.params)))
        if self.poly_threshold is None:
            object.__setattr__(self, "poly_threshold", 1 / self.params.n)
        if self.security_lambda is None:
            object.__setattr__(self, "security_lambda",
                               NOMINAL_LAMBDA * min(self.params.n, NOMINAL_LAMBDA_DIM) / NOMINAL_LAMBDA_DIM)

    def to_json(self) -> dict:
        evo = {"mode": self.evolution.label()}
        if isinstance(self.evolution, MarkovEvolution):
            evo.update(self.evolution.chain.to_json())
        return {
            "params": self.params.to_json(),
            "channel": self.channel.label(),
            "evolution": evo,
            "epsilon": self.epsilon,
            "sessions": self.sessions,
            "seed": self.seed.hex(),
            "secret_bits": self.secret_bits,
            "poly_threshold": self.poly_threshold,
            "security_lambda": self.security_lambda,
        }

    @classmethod
    def from_json(cls, data: dict, seed=None) -> "SessionConfig":
        """Build from the JSON mirror; ``seed`` (or ``$CHSHKYBER_SEED``) overrides the file."""
        if "paramset" in data:
            params = mlwe.paramset(data["paramset"], **data.get("params", {}))
        else:
            params = mlwe.Params.from_json(data["params"])
        env_seed = os.environ.get(SEED_ENV)
        if seed is None and env_seed is not None:
            seed = int(env_seed) if env_seed.lstrip("-").isdigit() else env_seed
        if seed is None:
            seed = data.get("seed", 0)
            if isinstance(seed, str) and len(seed) == 64:
                seed = bytes.fromhex(seed)
        params = params.replace(seed=derive_seed(seed, "params"))
        evo = data.get("evolution", {"mode": "markov"})
        if isinstance(evo, str):
            evo = {"mode": evo}
        if evo.get("mode") == "prf":
            evolution_obj = PrfEvolution()
        elif "M" in evo or "q" in evo or "noise" in evo:
            chain_q = int(evo.get("q", params.q))
            n = int(evo.get("n", 1))
            M = evo.get("M", [[DEFAULT_CHAIN_M]])
            M = parse_matrix(M, n) if isinstance(M, str) else np.array(M, dtype=np.int64)
            noise = parse_noise(evo.get("noise", "uniform"), chain_q)
            evolution_obj = MarkovEvolution(evolution.ChainSpec(M, noise))
        else:
            evolution_obj = None
        return cls(
            params=params,
            channel=parse_channel(data.get("channel", "ideal")),
            evolution=evolution_obj,
            epsilon=float(data.get("epsilon", chsh.DEFAULT_EPSILON)),
            sessions=int(data.get("sessions", 1)),
            seed=seed,
            secret_bits=int(data.get("secret_bits", mlwe.DEFAULT_SECRET_BITS)),
            poly_threshold=data.get("poly_threshold"),
            security_lambda=data.get("security_lambda"),
        )


# --- FO wrapper ----------------------------------------------------------------

def _bits_to_bytes(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def pk_hash(public: mlwe.PublicKey) -> bytes:
    return xof(b"pk", public.to_bytes())


def ct_hash(ct: mlwe.Ciphertext) -> bytes:
    return xof(b"ct", ct.to_bytes())


def kdf(*parts) -> bytes:
    return xof(DOMAIN_KDF, *parts)


def _derandomized(public: mlwe.PublicKey, params: mlwe.Params, bits) -> mlwe.Ciphertext:
    coins = xof(DOMAIN_COINS, _bits_to_bytes(bits), len(bits), pk_hash(public))
    ct, _ = mlwe.encrypt(public, params, bits, rng_from_bytes(coins))
    return ct


def fo_encaps(public: mlwe.PublicKey, params: mlwe.Params, rng: np.random.Generator,
              n_bits: int = mlwe.DEFAULT_SECRET_BITS):
    """Returns ``(ciphertext, shared_secret)``."""
    mu = rng.integers(0, 2, size=n_bits, dtype=np.int64)
    return fo_encaps_message(public, params, mu)


def fo_encaps_message(public: mlwe.PublicKey, params: mlwe.Params, mu):
    ct = _derandomized(public, params, mu)
    return ct, kdf(_bits_to_bytes(mu), len(mu), ct_hash(ct))


def fo_decaps_checked(secret: mlwe.SecretKey, public: mlwe.PublicKey, ct: mlwe.Ciphertext,
                      params: mlwe.Params):
    """Returns ``(shared_secret, reencryption_ok)``; never raises on bad ciphertexts."""
    mu = mlwe.decaps(secret, ct, params)
    if _derandomized(public, params, mu) == ct:
        return kdf(_bits_to_bytes(mu), len(mu), ct_hash(ct)), True
    return xof(DOMAIN_REJECT, secret.z, ct_hash(ct)), False


def fo_decaps(secret: mlwe.SecretKey, public: mlwe.PublicKey, ct: mlwe.Ciphertext,
              params: mlwe.Params) -> bytes:
    return fo_decaps_checked(secret, public, ct, params)[0]


# --- sessions ------------------------------------------------------------------

@dataclass(frozen=True)
class HardnessPremises:
    quantum_verification: bool
    markov_conditions: bool
    mlwe_parameters: bool
    detail: dict

    def to_json(self) -> dict:
        return {"quantum_verification": self.quantum_verification,
                "markov_conditions": self.markov_conditions,
                "mlwe_parameters": self.mlwe_parameters, "detail": self.detail}


def check_premises(config: SessionConfig) -> HardnessPremises:
    """Nominal checks of the dual-hardness premises for a configuration."""
    p = config.params
    m_floor = 2 * p.n
    detail = {"m": p.m, "m_floor": m_floor}
    quantum = p.m >= m_floor
    if isinstance(config.evolution, MarkovEvolution):
        erg = evolution.verify_ergodicity(config.evolution.chain, config.poly_threshold)
        markov = erg.certified and erg.invertible and erg.irreducible
        detail["ergodicity"] = erg.to_json()
    else:
        markov = False
        detail["ergodicity"] = {"conclusion": "not applicable (prf evolution)"}
    n_log_q = p.n * math.log2(p.q)
    lam_sq = config.security_lambda ** 2
    detail.update({"n_log2_q": n_log_q, "lambda": config.security_lambda, "lambda_sq": lam_sq,
                   "q_ge_n_sq": p.q >= p.n ** 2, "eta_le": ETA_CEILING})
    mlwe_ok = n_log_q >= lam_sq and p.q >= p.n ** 2 and p.eta <= ETA_CEILING
    return HardnessPremises(quantum, markov, mlwe_ok, detail)


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """The register carried from one session to the next."""

    vector: Optional[mlwe.ZqVec] = None
    lattice: Optional[evolution.LatticeState] = None
    prf: Optional[evolution.PrfState] = None

    def to_bytes(self) -> bytes:
        if self.vector is not None:
            return b"markov" + self.vector.to_bytes()
        return (b"prf" + self.lattice.s.to_bytes() + self.lattice.A.to_bytes()
                + self.lattice.t.to_bytes() + self.prf.counter.to_bytes(8, "little"))

    def secret_view(self) -> np.ndarray:
        return (self.vector if self.vector is not None else self.lattice.s).entries


def initial_state(config: SessionConfig) -> EvolutionState:
    rng = make_rng(config.seed, "evolution-init")
    if isinstance(config.evolution, MarkovEvolution):
        chain = config.evolution.chain
        return EvolutionState(vector=mlwe.ZqVec(rng.integers(0, chain.q, size=chain.n), chain.q))
    kp = mlwe.keygen(config.params, rng)
    lattice = evolution.LatticeState(kp.secret.s, kp.public.A, kp.public.t)
    return EvolutionState(lattice=lattice, prf=evolution.PrfState.from_seed(derive_seed(config.seed, "prf")))


def evolve(config: SessionConfig, state: EvolutionState, seed: bytes) -> EvolutionState:
    if isinstance(config.evolution, MarkovEvolution):
        nxt = evolution.markov_step(state.vector, config.evolution.chain, make_rng(seed, "evolve"))
        return EvolutionState(vector=nxt)
    lattice, prf = evolution.prf_evolve(state.lattice, state.prf, config.params)
    return EvolutionState(lattice=lattice, prf=prf)


@dataclass(frozen=True, eq=False)
class SessionResult:
    session_id: int
    accepted: bool
    chsh_estimate: chsh.ChshEstimate
    verification: chsh.VerificationReport
    shared_secret_match: bool
    final_key: Optional[bytes]
    hardness_premises: HardnessPremises
    abort_reason: Optional[str]
    transcript: "Transcript"
    state_in: EvolutionState = field(repr=False)
    state_out: EvolutionState = field(repr=False)
    evolution_report: Optional[dict] = None


@dataclass(frozen=True, eq=False)
class Transcript:
    session_id: int
    config: SessionConfig
    chsh: chsh.ChshTranscript
    estimate: chsh.ChshEstimate
    kem: Optional[dict]
    result: dict
    seeds: dict

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "config": self.config.to_json(),
            "chsh": self.chsh.to_json(),
            "estimate": self.estimate.to_json(),
            "kem": self.kem,
            "result": self.result,
            "seeds": self.seeds,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def transcript_hash(t: chsh.ChshTranscript) -> bytes:
    cols = np.stack([t.a, t.b, t.x, t.y, t.c]).astype(np.int8)
    return xof(DOMAIN_TRANSCRIPT, cols.tobytes(), t.m)


def run_session(config: SessionConfig, session_id: int = 0, state: Optional[EvolutionState] = None,
                premises: Optional[HardnessPremises] = None) -> SessionResult:
    """One gated session: CHSH test, then KEM, key binding and evolution."""
    params = config.params
    if state is None:
        state = initial_state(config)
    if premises is None:
        premises = check_premises(config)
    session_seed = derive_seed(config.seed, "session", session_id, state.to_bytes())
    seeds = {name: derive_seed(session_seed, name) for name in ("chsh", "keygen", "encaps", "evolve")}

    transcript_chsh, est = chsh.run_game(config.channel.strategy(), params.m,
                                         make_rng(seeds["chsh"]), config.epsilon)
    verdict = chsh.verify_session(transcript_chsh, config.epsilon)
    seeds_hex = {k: v.hex() for k, v in seeds.items()}

    if not verdict.accepted:
        result = {"accepted": False, "match": False, "abort_reason": "chsh-reject"}
        transcript = Transcript(session_id, config, transcript_chsh, est, None, result, seeds_hex)
        return SessionResult(session_id, False, est, verdict, False, None, premises,
                             "chsh-reject", transcript, state, state)

    kp = mlwe.keygen(params, make_rng(seeds["keygen"]))
    ct, ss_bob = fo_encaps(kp.public, params, make_rng(seeds["encaps"]), config.secret_bits)
    ss_alice, fo_ok = fo_decaps_checked(kp.secret, kp.public, ct, params)
    match = ss_alice == ss_bob
    final_key = kdf(ss_alice, transcript_hash(transcript_chsh)) if match else None
    next_state = evolve(config, state, seeds["evolve"])

    kem = {"pk_hash_hex": pk_hash(kp.public).hex(), "ct_hex": ct.to_bytes().hex(), "fo_ok": fo_ok}
    result = {"accepted": True, "match": match}
    if final_key is not None:
        result["key_hex"] = final_key.hex()
    else:
        result["abort_reason"] = "secret-mismatch"
    transcript = Transcript(session_id, config, transcript_chsh, est, kem, result, seeds_hex)
    return SessionResult(session_id, True, est, verdict, match, final_key, premises,
                         None if match else "secret-mismatch", transcript, state, next_state)


@dataclass(frozen=True, eq=False)
class CampaignResult:
    results: list
    summary: dict

    def summary_rows(self) -> list:
        return [(r.session_id, r.accepted, r.shared_secret_match, r.chsh_estimate.e_hat)
                for r in self.results]


def _lag1_correlation(values: np.ndarray) -> Optional[float]:
    if len(values) < 3:
        return None
    a, b = values[:-1].astype(float), values[1:].astype(float)
    if np.std(a) == 0 or np.std(b) == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def _stationary_lag1(kernel: evolution.KernelMatrix, pi: np.ndarray) -> Optional[float]:
    """Lag-1 correlation of coordinate 0 for a stationary chain with kernel P."""
    x = np.array([kernel.state(i)[0] for i in range(kernel.size)], dtype=float)
    P = np.asarray(kernel.rows, dtype=float)
    mean = float(pi @ x)
    var = float(pi @ x ** 2) - mean ** 2
    if var <= 0:
        return None
    return (float(pi @ (x * (P @ x))) - mean ** 2) / var


def run_campaign(config: SessionConfig, sessions: Optional[int] = None) -> CampaignResult:
    """Sessions chained through the evolution register, with a summary."""
    count = config.sessions if sessions is None else sessions
    if count < 2:
        raise ValueError("a campaign needs at least 2 sessions")
    premises = check_premises(config)
    state = initial_state(config)
    results = []
    states = []
    for sid in range(count):
        res = run_session(config, sid, state, premises)
        results.append(res)
        states.append(res.state_out.secret_view().copy())
        state = res.state_out

    keys = [r.final_key for r in results if r.final_key is not None]
    stacked = np.stack(states)
    frozen = bool(np.all(stacked == stacked[0]))
    summary = {
        "sessions": count,
        "accepted": sum(r.accepted for r in results),
        "matched": sum(r.shared_secret_match for r in results),
        "keys": len(keys),
        "key_collisions": len(keys) - len(set(keys)),
        "frozen_evolution": frozen,
        "serial_correlation": _lag1_correlation(stacked[:, 0]),
        "hardness_premises": premises.to_json(),
    }
    if isinstance(config.evolution, MarkovEvolution):
        chain = config.evolution.chain
        try:
            kernel = evolution.build_kernel(chain)
        except evolution.StateSpaceTooLarge:
            kernel = None
        if kernel is not None:
            report = evolution.spectral_report(kernel, empirical=False)
            warmup = int(min(report.nominal_tau, count // 2)) if report.gap > 0 else count // 2
            idx = np.array([kernel.index(s) for s in stacked[warmup:]])
            empirical = np.bincount(idx, minlength=kernel.size) / max(len(idx), 1)
            summary["stationary_tv"] = float(0.5 * np.abs(empirical - report.stationary).sum())
            summary["serial_correlation_predicted"] = _stationary_lag1(kernel, report.stationary)
            summary["warmup"] = warmup
            summary["spectral_gap"] = report.gap
    return CampaignResult(results, summary)
