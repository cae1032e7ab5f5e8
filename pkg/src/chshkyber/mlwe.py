"""Desk-scale matrix Module-LWE KEM.

Public key ``(A, t = A s + e mod q)`` with ``A`` uniform n x k and ``s, e``
centered-binomial. Bits are encrypted dual-Regev style: ``u = A^T r + e1``
and one scalar ``v = t^T r + e2 + b * floor(q/2)`` per bit. Decryption
rounds ``v - s^T u`` to the nearer of ``0`` and ``floor(q/2)``; it is
correct whenever the accumulated noise stays below ``q/4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .rng import SEED_BYTES, make_rng, seed_bytes

DEFAULT_SECRET_BITS = 256


class ParameterError(ValueError):
    """Raised for parameter sets that violate the KEM invariants."""


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    f = 3
    while f * f <= q:
        if q % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class Params:
    """KEM dimensions, modulus, noise width, EPR count and root seed.

    ``m`` defaults to ``2 * n``. ``eta == 0`` is rejected unless
    ``allow_zero_noise`` is set; that switch exists for exact round-trip
    tests only.
    """

    n: int
    k: int
    q: int
    eta: int
    m: Optional[int] = None
    seed: bytes = b"\x00" * SEED_BYTES
    allow_zero_noise: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m is None:
            object.__setattr__(self, "m", 2 * self.n)
        if not isinstance(self.seed, bytes):
            object.__setattr__(self, "seed", seed_bytes(self.seed))
        if len(self.seed) != SEED_BYTES:
            raise ParameterError(f"seed must be {SEED_BYTES} bytes, got {len(self.seed)}")
        if self.n < 1 or self.k < 1 or self.m < 1:
            raise ParameterError(f"n, k, m must be >= 1 (n={self.n}, k={self.k}, m={self.m})")
        if self.eta < 1 and not (self.eta == 0 and self.allow_zero_noise):
            raise ParameterError(f"eta must be >= 1, got {self.eta}")
        if not is_prime(self.q):
            raise ParameterError(f"q={self.q} is not prime")
        if self.q <= 8 * self.eta:
            raise ParameterError(f"need q > 8*eta, got q={self.q}, eta={self.eta}")
        if self.q >= 1 << 16:
            raise ParameterError("coefficients are serialized as 16-bit words; need q < 2^16")

    def replace(self, **changes) -> "Params":
        values = dict(n=self.n, k=self.k, q=self.q, eta=self.eta, m=self.m,
                      seed=self.seed, allow_zero_noise=self.allow_zero_noise)
        values.update(changes)
        return Params(**values)

    def noiseless(self) -> "Params":
        return self.replace(eta=0, allow_zero_noise=True)

    @property
    def sigma_sq(self) -> float:
        return self.eta / 2

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k, "q": self.q, "eta": self.eta,
                "m": self.m, "seed": self.seed.hex()}

    @classmethod
    def from_json(cls, data: dict) -> "Params":
        seed = data.get("seed", b"\x00" * SEED_BYTES)
        if isinstance(seed, str):
            seed = bytes.fromhex(seed)
        return cls(n=int(data["n"]), k=int(data["k"]), q=int(data["q"]),
                   eta=int(data["eta"]), m=data.get("m"), seed=seed)


PARAMSETS = {
    "toy": dict(n=4, k=4, q=97, eta=2, m=4096),
    "small": dict(n=16, k=16, q=3329, eta=2, m=4096),
}


def paramset(name: str, **overrides) -> Params:
    try:
        values = dict(PARAMSETS[name])
    except KeyError:
        raise ParameterError(f"unknown parameter set {name!r}; choose from {sorted(PARAMSETS)}") from None
    values.update(overrides)
    return Params(**values)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ZqVec:
    entries: np.ndarray
    q: int

    def __post_init__(self):
        arr = _frozen(np.mod(np.asarray(self.entries, dtype=np.int64), self.q))
        if arr.ndim != 1:
            raise ValueError("ZqVec entries must be one-dimensional")
        object.__setattr__(self, "entries", arr)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return (isinstance(other, ZqVec) and self.q == other.q
                and np.array_equal(self.entries, other.entries))

    def centered(self) -> np.ndarray:
        return center(self.entries, self.q)

    def to_bytes(self) -> bytes:
        return self.entries.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, q: int) -> "ZqVec":
        return cls(np.frombuffer(data, dtype="<u2").astype(np.int64), q)


@dataclass(frozen=True, eq=False)
class ZqMat:
    entries: np.ndarray
    q: int

    def __post_init__(self):
        arr = _frozen(np.mod(np.asarray(self.entries, dtype=np.int64), self.q))
        if arr.ndim != 2:
            raise ValueError("ZqMat entries must be two-dimensional")
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self):
        return self.entries.shape

    def __eq__(self, other):
        return (isinstance(other, ZqMat) and self.q == other.q
                and np.array_equal(self.entries, other.entries))

    def to_bytes(self) -> bytes:
        return self.entries.astype("<u2").tobytes()


def center(x, q: int) -> np.ndarray:
    """Lift residues to the centered range (-q/2, q/2]."""
    x = np.mod(np.asarray(x, dtype=np.int64), q)
    return np.where(x > q // 2, x - q, x)


@dataclass(frozen=True, eq=False)
class PublicKey:
    A: ZqMat
    t: ZqVec

    def to_bytes(self) -> bytes:
        n, k = self.A.shape
        header = n.to_bytes(2, "little") + k.to_bytes(2, "little")
        return header + self.A.to_bytes() + self.t.to_bytes()

    def __eq__(self, other):
        return isinstance(other, PublicKey) and self.A == other.A and self.t == other.t


@dataclass(frozen=True, eq=False)
class SecretKey:
    s: ZqVec
    # implicit-rejection secret for the FO wrapper
    z: bytes

    def __eq__(self, other):
        return isinstance(other, SecretKey) and self.s == other.s and self.z == other.z


@dataclass(frozen=True, eq=False)
class KeyPair:
    public: PublicKey
    secret: SecretKey
    # keygen noise, kept only so tests and audits can re-derive t
    e: Optional[ZqVec] = field(default=None, repr=False)

    def __eq__(self, other):
        return (isinstance(other, KeyPair) and self.public == other.public
                and self.secret == other.secret)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    u: ZqVec
    v: ZqVec

    def to_bytes(self) -> bytes:
        return (len(self.u).to_bytes(2, "little") + len(self.v).to_bytes(2, "little")
                + self.u.to_bytes() + self.v.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, q: int) -> "Ciphertext":
        ku = int.from_bytes(data[0:2], "little")
        nv = int.from_bytes(data[2:4], "little")
        body = data[4:]
        if len(body) != 2 * (ku + nv):
            raise ValueError("ciphertext length does not match its header")
        return cls(ZqVec.from_bytes(body[: 2 * ku], q), ZqVec.from_bytes(body[2 * ku:], q))

    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.u.entries, self.v.entries])

    def with_coefficient(self, index: int, value: int) -> "Ciphertext":
        """Copy with flat coefficient ``index`` (u first, then v) replaced."""
        flat = self.coefficients().copy()
        flat[index] = value
        ku = len(self.u)
        return Ciphertext(ZqVec(flat[:ku], self.u.q), ZqVec(flat[ku:], self.v.q))

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and self.u == other.u and self.v == other.v


@dataclass(frozen=True)
class EncapsNoise:
    """The ephemeral vectors of one encryption, for noise audits."""

    r: np.ndarray
    e1: np.ndarray
    e2: np.ndarray


def cbd_from_bits(bits: Sequence[int], eta: int) -> int:
    if len(bits) != 2 * eta:
        raise ValueError(f"need {2 * eta} bits, got {len(bits)}")
    return int(sum(bits)) - eta


def cbd_sample(eta: int, rng: np.random.Generator) -> int:
    """One centered-binomial draw: the sum of 2*eta fair bits, minus eta."""
    return cbd_from_bits(rng.integers(0, 2, size=2 * eta), eta)


def cbd_array(eta: int, shape, rng: np.random.Generator) -> np.ndarray:
    if eta == 0:
        return np.zeros(shape, dtype=np.int64)
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    bits = rng.integers(0, 2, size=shape + (2 * eta,), dtype=np.int8)
    return bits.sum(axis=-1, dtype=np.int64) - eta


def keygen(params: Params, rng: Optional[np.random.Generator] = None) -> KeyPair:
    """Sample ``(A, t = A s + e)``; sub-streams are split off ``rng`` or the params seed."""
    if rng is None:
        rng = make_rng(params.seed, "keygen")
    root = rng.bytes(32)
    A = make_rng(root, "A").integers(0, params.q, size=(params.n, params.k), dtype=np.int64)
    s = cbd_array(params.eta, params.k, make_rng(root, "s"))
    e = cbd_array(params.eta, params.n, make_rng(root, "e"))
    z = make_rng(root, "z").bytes(32)
    t = (A @ s + e) % params.q
    return KeyPair(
        public=PublicKey(ZqMat(A, params.q), ZqVec(t, params.q)),
        secret=SecretKey(ZqVec(s, params.q), z),
        e=ZqVec(e, params.q),
    )


def encrypt(public: PublicKey, params: Params, bits, rng: np.random.Generator):
    """Encrypt an explicit bit-string; returns the ciphertext and its noise."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be a 1-D array of 0/1")
    q = params.q
    A = public.A.entries
    t = public.t.entries
    root = rng.bytes(32)
    r = cbd_array(params.eta, A.shape[0], make_rng(root, "r"))
    e1 = cbd_array(params.eta, A.shape[1], make_rng(root, "e1"))
    e2 = cbd_array(params.eta, len(bits), make_rng(root, "e2"))
    u = (A.T @ r + e1) % q
    v = (int(t @ r) + e2 + bits * (q // 2)) % q
    return Ciphertext(ZqVec(u, q), ZqVec(v, q)), EncapsNoise(r, e1, e2)


def encaps(public: PublicKey, params: Params, rng: np.random.Generator,
           n_bits: int = DEFAULT_SECRET_BITS):
    """Draw ``n_bits`` message bits and encrypt them; returns ``(ct, bits)``."""
    bits = rng.integers(0, 2, size=n_bits, dtype=np.int64)
    ct, _ = encrypt(public, params, bits, rng)
    return ct, bits


def decode(d, q: int) -> np.ndarray:
    """Nearest of {0, floor(q/2)} in cyclic distance."""
    to_zero = np.abs(center(d, q))
    to_half = np.abs(center(np.asarray(d) - q // 2, q))
    return (to_half < to_zero).astype(np.int64)


def decaps(secret: SecretKey, ct: Ciphertext, params: Params) -> np.ndarray:
    q = params.q
    d = (ct.v.entries - int(secret.s.entries @ ct.u.entries)) % q
    return decode(d, q)


def decryption_noise(keypair: KeyPair, noise: EncapsNoise) -> np.ndarray:
    """Per-bit total noise ``e.r - s.e1 + e2`` over the integers (no reduction)."""
    if keypair.e is None:
        raise ValueError("keypair does not carry its keygen noise")
    e = keypair.e.centered()
    s = keypair.secret.s.centered()
    return int(e @ noise.r) - int(s @ noise.e1) + noise.e2
