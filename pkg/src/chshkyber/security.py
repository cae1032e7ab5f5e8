"""Bit-security model for the Standard, QCS and CHSH variants.

The model is a scaling law, not cryptanalysis: a variant inflates the LWE
noise variance by ``1 + beta`` and the baseline attack cost is scaled by the
same factor (``multiplicative``), or shifted by ``log2(1 + beta)`` bits
(``log_additive``). The per-row inflation factors are stored constants that
reproduce the published comparison table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chsh import ChshTranscript
from .mlwe import Params, ZqVec, center

MULTIPLICATIVE = "multiplicative"
LOG_ADDITIVE = "log_additive"
MODELS = (MULTIPLICATIVE, LOG_ADDITIVE)

STANDARD, QCS, CHSH = "Standard", "QCS", "CHSH"
VARIANT_TAGS = (STANDARD, QCS, CHSH)
DEFAULT_BETA = {STANDARD: 0.0, QCS: 0.20, CHSH: 0.30}

CENTRAL_REDUCTION, BKZ, ENUMERATION = "CentralReduction", "BKZ", "Enumeration"
FAMILIES = (CENTRAL_REDUCTION, BKZ, ENUMERATION)

PARAMSET_NAMES = ("kyber512", "kyber768", "kyber1024")

# Shapes of the named sets (ring degree 256 times module rank); estimator only.
NAMED_SHAPES = {
    "kyber512": dict(n=512, k=2, q=3329, eta=3),
    "kyber768": dict(n=768, k=3, q=3329, eta=2),
    "kyber1024": dict(n=1024, k=4, q=3329, eta=2),
}

# Published baseline bits and reported uncertainties per variant.
BASE_BITS = {"kyber512": 124.7, "kyber768": 185.2, "kyber1024": 250.0}
REPORTED_SIGMA = {
    "kyber512": {STANDARD: 2.5, QCS: 2.8, CHSH: 3.1},
    "kyber768": {STANDARD: 2.5, QCS: 4.7, CHSH: 4.6},
    "kyber1024": {STANDARD: 4.1, QCS: 5.0, CHSH: 6.4},
}
# Per-row inflation factors matching the published percentage gains.
ROW_BETA = {
    "kyber512": {STANDARD: 0.0, QCS: 0.208, CHSH: 0.304},
    "kyber768": {STANDARD: 0.0, QCS: 0.197, CHSH: 0.302},
    "kyber1024": {STANDARD: 0.0, QCS: 0.203, CHSH: 0.301},
}

# Classical gate-count thresholds commonly used for the NIST levels.
NIST_LEVEL_BITS = {"Level 1": 143.0, "Level 3": 207.0, "Level 5": 272.0}


class TranscriptTooShort(ValueError):
    pass


@dataclass(frozen=True)
class Variant:
    tag: str
    beta_tilde: Optional[float] = None

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown variant {self.tag!r}; choose from {VARIANT_TAGS}")
        beta = DEFAULT_BETA[self.tag] if self.beta_tilde is None else float(self.beta_tilde)
        if beta < 0:
            raise ValueError("beta_tilde must be >= 0")
        object.__setattr__(self, "beta_tilde", beta)


@dataclass(frozen=True)
class AttackFamily:
    tag: str
    base_bits: dict = field(default_factory=lambda: dict(BASE_BITS))

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise ValueError(f"unknown attack family {self.tag!r}; choose from {FAMILIES}")
        if any(v <= 0 for v in self.base_bits.values()):
            raise ValueError("baseline bits must be positive")


@dataclass(frozen=True)
class SecurityEstimate:
    bits: float
    sigma_bits: float
    variant: Variant
    family: AttackFamily
    paramset: str
    model: str = MULTIPLICATIVE

    def to_json(self) -> dict:
        return {"paramset": self.paramset, "variant": self.variant.tag,
                "beta_tilde": self.variant.beta_tilde, "family": self.family.tag,
                "model": self.model, "bits": self.bits, "sigma_bits": self.sigma_bits}


@dataclass(frozen=True, eq=False)
class NoiseModulation:
    xi: np.ndarray
    beta_tilde: float
    target_variance: float
    realized_variance: float
    xi_mean: float
    eta_prime: int
    keep_probability: float


def effective_variance(sigma_sq: float, beta_tilde: float) -> float:
    if sigma_sq < 0 or beta_tilde < 0 or not (math.isfinite(sigma_sq) and math.isfinite(beta_tilde)):
        raise ValueError("sigma_sq and beta_tilde must be finite and non-negative")
    return sigma_sq * (1 + beta_tilde)


def modulation_width(beta_tilde: float, sigma_sq: float):
    """CBD width and keep-probability giving Var(z) = beta_tilde * sigma_sq."""
    target = beta_tilde * sigma_sq
    if target == 0:
        return 0, 0.0
    eta_prime = math.ceil(2 * target)
    return eta_prime, target / (eta_prime / 2)


def modulate_noise(e: ZqVec, transcript: ChshTranscript, beta_tilde: float,
                   rng: np.random.Generator, sigma_sq: float):
    """``e'_j = e_j + xi_j * z_j mod q`` with ``xi_j = c_j`` from the transcript.

    ``z`` is a CBD(eta') draw zeroed with probability ``1 - p`` so that
    ``Var(xi z) = beta_tilde * sigma_sq``; the sign modulation keeps mean 0.
    """
    size = len(e)
    if transcript.m < size:
        raise TranscriptTooShort(f"transcript has {transcript.m} rounds, need {size}")
    xi = transcript.c[:size]
    target = beta_tilde * sigma_sq
    eta_prime, keep = modulation_width(beta_tilde, sigma_sq)
    if eta_prime == 0:
        out = e
        z = np.zeros(size, dtype=np.int64)
    else:
        bits = rng.integers(0, 2, size=(size, 2 * eta_prime), dtype=np.int8)
        z = bits.sum(axis=1, dtype=np.int64) - eta_prime
        z = np.where(rng.random(size) < keep, z, 0)
        out = ZqVec(e.entries + xi * z, e.q)
    realized = float(np.var(center(out.entries, e.q)))
    mod = NoiseModulation(xi=xi, beta_tilde=beta_tilde, target_variance=sigma_sq + target,
                          realized_variance=realized, xi_mean=float(np.mean(xi)),
                          eta_prime=eta_prime, keep_probability=keep)
    return out, mod


def enhanced_bits(base_bits: float, beta_tilde: float, model: str = MULTIPLICATIVE,
                  gamma: float = 1.0) -> float:
    if base_bits <= 0:
        raise ValueError("base_bits must be positive")
    if model == MULTIPLICATIVE:
        return base_bits * (1 + beta_tilde * gamma)
    if model == LOG_ADDITIVE:
        return base_bits + math.log2(1 + beta_tilde)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


DELTA_B_CONSTANT = 100.0


def delta_blocksize(beta_tilde: float, c: float = DELTA_B_CONSTANT) -> float:
    """Additive BKZ block-size shift ``c * log2(1 + beta)``."""
    if beta_tilde < 0:
        raise ValueError("beta_tilde must be >= 0")
    return c * math.log2(1 + beta_tilde)


def cca_bound(q_h: int, adv_mlwe: float, adv_chsh: float, negl: float = 0.0) -> float:
    if q_h < 1:
        raise ValueError("q_h must be a positive integer")
    for name, v in (("adv_mlwe", adv_mlwe), ("adv_chsh", adv_chsh)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    if negl < 0:
        raise ValueError("negl must be >= 0")
    return min(max(q_h * (adv_mlwe + adv_chsh) + negl, 0.0), 1.0)


def estimate(paramset: str, variant: Variant, family: AttackFamily,
             model: str = MULTIPLICATIVE, gamma: float = 1.0) -> SecurityEstimate:
    if paramset not in BASE_BITS:
        raise ValueError(f"unknown parameter set {paramset!r}; choose from {PARAMSET_NAMES}")
    base = family.base_bits[paramset]
    bits = enhanced_bits(base, variant.beta_tilde, model, gamma)
    sigma = REPORTED_SIGMA[paramset][variant.tag] * bits / enhanced_bits(
        BASE_BITS[paramset], ROW_BETA[paramset][variant.tag])
    return SecurityEstimate(bits, sigma, variant, family, paramset, model)


@dataclass(frozen=True)
class TableRow:
    paramset: str
    standard_bits: float
    qcs_bits: float
    chsh_bits: float
    qcs_pct: float
    chsh_pct: float
    differential_pct: float
    qcs_log_additive: float
    chsh_log_additive: float

    CSV_COLUMNS = ("paramset", "standard_bits", "qcs_bits", "chsh_bits",
                   "qcs_pct", "chsh_pct", "differential_pct")

    def csv_row(self) -> list:
        return [self.paramset] + [f"{getattr(self, c):.2f}" for c in self.CSV_COLUMNS[1:]]


def table_report() -> list:
    """The three-row comparison table from the stored per-row inflation factors."""
    rows = []
    for name in PARAMSET_NAMES:
        base = BASE_BITS[name]
        beta = ROW_BETA[name]
        qcs = enhanced_bits(base, beta[QCS])
        chsh = enhanced_bits(base, beta[CHSH])
        rows.append(TableRow(
            paramset=name,
            standard_bits=base,
            qcs_bits=qcs,
            chsh_bits=chsh,
            qcs_pct=100 * (qcs / base - 1),
            chsh_pct=100 * (chsh / base - 1),
            differential_pct=100 * (chsh - qcs) / qcs,
            qcs_log_additive=enhanced_bits(base, beta[QCS], LOG_ADDITIVE),
            chsh_log_additive=enhanced_bits(base, beta[CHSH], LOG_ADDITIVE),
        ))
    return rows


def family_curves(paramset: str, betas, base_bits: Optional[dict] = None,
                  model: str = MULTIPLICATIVE) -> dict:
    """Bits against beta for each attack family (baselines overridable per family)."""
    base_bits = base_bits or {}
    out = {}
    for fam in FAMILIES:
        base = base_bits.get(fam, BASE_BITS[paramset])
        out[fam] = np.array([enhanced_bits(base, b, model) for b in betas])
    return out


@dataclass(frozen=True)
class ResourceRow:
    metric: str
    classical: str
    enhanced: str
    value: Optional[float]


LATENCY_ANNOTATIONS = {
    "session_latency_classical": "1-3 ms",
    "session_latency_enhanced": "1.05-3.2 ms (<5% overhead)",
    "hardware_scale": "50-100 qubit device or photonic link",
}


def resource_report(params: Params, m: Optional[int] = None, transcript: Optional[ChshTranscript] = None,
                    coeff_bits: int = 16, secret_bits: int = 256) -> list:
    """Per-session resource accounting; gate counts are exact when a transcript is given."""
    m = params.m if m is None else m
    if m < 0:
        raise ValueError("m must be >= 0")
    if transcript is not None:
        if transcript.m != m:
            raise ValueError("transcript length differs from m")
        rotations = int(np.sum(transcript.a)) + m
    else:
        rotations = 2 * m
    pk_bits = (params.n * params.k + params.n) * coeff_bits
    ct_bits = (params.k + secret_bits) * coeff_bits
    classical = pk_bits + ct_bits
    depth = math.ceil(math.log2(m)) if m > 1 else 0
    return [
        ResourceRow("quantum_comm_qubits", "-", "2m", 2 * m),
        ResourceRow("classical_comm_bits", f"{classical}", "nk + 4m", classical + 4 * m),
        ResourceRow("chsh_classical_bits", "-", "4m", 4 * m),
        ResourceRow("entangling_gates", "-", "m", m),
        ResourceRow("single_qubit_rotations", "-", "<= 2m", rotations),
        ResourceRow("measurements", "-", "2m", 2 * m),
        ResourceRow("circuit_depth_nominal", "-", "ceil(log2 m)", depth),
        ResourceRow("computational_cost", "O(n^2 k)", "O(n^2 k + m)", params.n ** 2 * params.k + m),
        ResourceRow("session_latency", LATENCY_ANNOTATIONS["session_latency_classical"],
                    LATENCY_ANNOTATIONS["session_latency_enhanced"], None),
        ResourceRow("hardware_scale", "CPU", LATENCY_ANNOTATIONS["hardware_scale"], None),
    ]
