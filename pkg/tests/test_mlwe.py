"""KEM core: sampler, key generation, encryption round trips, noise audits."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chshkyber import mlwe
from chshkyber.rng import make_rng


def naive_matvec_mod(A, s, e, q):
    """Row-by-row Python-int recomputation of (A s + e) mod q."""
    out = []
    for i, row in enumerate(A.tolist()):
        acc = 0
        for a_ij, s_j in zip(row, s.tolist()):
            acc += a_ij * s_j
        out.append((acc + int(e[i])) % q)
    return out


class TestCbd:
    def test_all_zero_bits_is_minimum(self):
        assert mlwe.cbd_from_bits([0, 0, 0, 0], eta=2) == -2

    def test_all_one_bits_is_maximum(self):
        assert mlwe.cbd_from_bits([1] * 6, eta=3) == 3

    def test_exhaustive_eta3_is_shifted_binomial(self):
        counts = {}
        for bits in itertools.product((0, 1), repeat=6):
            x = mlwe.cbd_from_bits(bits, eta=3)
            counts[x] = counts.get(x, 0) + 1
        assert counts == {k - 3: math.comb(6, k) for k in range(7)}

    def test_single_draws_stay_in_support(self):
        rng = make_rng(1, "cbd")
        draws = [mlwe.cbd_sample(2, rng) for _ in range(2000)]
        assert min(draws) >= -2 and max(draws) <= 2
        assert set(draws) == {-2, -1, 0, 1, 2}

    def test_variance_eta2_million_draws(self):
        n = 10 ** 6
        x = mlwe.cbd_array(2, n, make_rng(2, "cbd-var"))
        assert abs(x.mean()) < 3 * 1.0 / math.sqrt(n)
        assert x.var() == pytest.approx(1.0, abs=0.01)

    @pytest.mark.parametrize("eta", [1, 2, 3, 4])
    def test_variance_within_five_percent(self, eta):
        x = mlwe.cbd_array(eta, 10 ** 6, make_rng(eta, "cbd-var"))
        assert abs(x.var() - eta / 2) < 0.05 * eta / 2


class TestParams:
    def test_presets(self):
        toy = mlwe.paramset("toy")
        assert (toy.n, toy.k, toy.q, toy.eta) == (4, 4, 97, 2)
        assert mlwe.paramset("small").q == 3329

    def test_m_defaults_to_twice_n(self):
        assert mlwe.Params(n=4, k=4, q=97, eta=2).m == 8

    @pytest.mark.parametrize("kwargs", [
        dict(n=4, k=4, q=96, eta=2),     # not prime
        dict(n=4, k=4, q=13, eta=2),     # q <= 8 eta
        dict(n=0, k=4, q=97, eta=2),
        dict(n=4, k=4, q=97, eta=0),     # zero noise without the hook
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(mlwe.ParameterError):
            mlwe.Params(**kwargs)

    def test_json_round_trip(self):
        p = mlwe.paramset("toy", seed=b"\x05" * 32)
        assert mlwe.Params.from_json(p.to_json()) == p


class TestKeygen:
    def test_deterministic(self):
        p = mlwe.paramset("toy")
        assert mlwe.keygen(p, make_rng(9)) == mlwe.keygen(p, make_rng(9))
        assert mlwe.keygen(p) == mlwe.keygen(p)

    def test_different_seeds_differ(self):
        p = mlwe.paramset("toy")
        assert mlwe.keygen(p, make_rng(1)) != mlwe.keygen(p, make_rng(2))

    def test_recompute_public_key_1000_trials(self):
        p = mlwe.paramset("toy")
        for trial in range(1000):
            kp = mlwe.keygen(p, make_rng(trial, "keygen-audit"))
            A = kp.public.A.entries
            s = kp.secret.s.centered()
            e = kp.e.centered()
            assert np.all(np.abs(e) <= p.eta) and np.all(np.abs(s) <= p.eta)
            assert kp.public.t.entries.tolist() == naive_matvec_mod(A, s, e, p.q)
            assert np.all((kp.public.t.entries >= 0) & (kp.public.t.entries < p.q))

    def test_zero_noise_hook(self):
        p = mlwe.paramset("toy").noiseless()
        kp = mlwe.keygen(p, make_rng(3))
        A, s = kp.public.A.entries, kp.secret.s.entries
        assert np.all(s == 0)
        assert np.array_equal(kp.public.t.entries, (A @ s) % p.q)


class TestEncaps:
    def setup_method(self):
        self.p = mlwe.paramset("toy")
        self.kp = mlwe.keygen(self.p, make_rng(11))

    def test_zero_noise_bit0_gives_t_dot_r(self):
        p = self.p.noiseless()
        kp = mlwe.keygen(p, make_rng(4))
        ct, noise = mlwe.encrypt(kp.public, p, [0], make_rng(5))
        assert int(ct.v.entries[0]) == int(kp.public.t.entries @ noise.r) % p.q

    def test_zero_noise_bit1_offset_is_half_q(self):
        # zero noise still needs non-zero r for a meaningful check: force r by hand
        p = self.p.noiseless()
        kp = mlwe.keygen(p, make_rng(4))
        A, t = kp.public.A.entries, kp.public.t.entries
        r = np.array([1, -2, 0, 2])
        u = (A.T @ r) % p.q
        v = (int(t @ r) + p.q // 2) % p.q
        assert (v - int(kp.secret.s.entries @ u)) % p.q == p.q // 2
        ct, _ = mlwe.encrypt(kp.public, p, [1], make_rng(6))
        assert (int(ct.v.entries[0]) - int(kp.secret.s.entries @ ct.u.entries)) % p.q == p.q // 2

    def test_bit1_decodes_to_1(self):
        ct, _ = mlwe.encrypt(self.kp.public, self.p, [1], make_rng(7))
        assert mlwe.decaps(self.kp.secret, ct, self.p).tolist() == [1]

    def test_random_bits_round_trip(self):
        ct, bits = mlwe.encaps(self.kp.public, self.p, make_rng(8))
        assert len(bits) == 256
        assert np.array_equal(mlwe.decaps(self.kp.secret, ct, self.p), bits)

    def test_zero_noise_exact_round_trip(self):
        p = self.p.noiseless()
        kp = mlwe.keygen(p, make_rng(12))
        for trial in range(50):
            ct, bits = mlwe.encaps(kp.public, p, make_rng(trial, "zn"))
            assert np.array_equal(mlwe.decaps(kp.secret, ct, p), bits)

    def test_ciphertext_entries_canonical(self):
        ct, _ = mlwe.encaps(self.kp.public, self.p, make_rng(13))
        flat = ct.coefficients()
        assert np.all((flat >= 0) & (flat < self.p.q))

    def test_ciphertext_deterministic(self):
        a = mlwe.encaps(self.kp.public, self.p, make_rng(14))
        b = mlwe.encaps(self.kp.public, self.p, make_rng(14))
        assert a[0] == b[0] and np.array_equal(a[1], b[1])

    def test_tampered_u_breaks_decoding(self):
        wrong = 0
        for trial in range(20):
            ct, bits = mlwe.encaps(self.kp.public, self.p, make_rng(trial, "tamper"))
            u = ct.u.entries.copy()
            u[0] = (u[0] + self.p.q // 2) % self.p.q
            bad = mlwe.Ciphertext(mlwe.ZqVec(u, self.p.q), ct.v)
            if not np.array_equal(mlwe.decaps(self.kp.secret, bad, self.p), bits):
                wrong += 1
        # s[0] == 0 makes the flip invisible; CBD(2) gives that with prob 3/8 per key
        s0 = int(self.kp.secret.s.centered()[0])
        assert wrong == (0 if s0 == 0 else 20)


class TestDecode:
    def test_nearest_of_zero_and_half(self):
        q = 97
        d = np.arange(q)
        expected = [1 if min(abs(x - 48), q - abs(x - 48)) < min(x, q - x) else 0 for x in range(q)]
        assert mlwe.decode(d, q).tolist() == expected

    def test_threshold_is_quarter_q(self):
        q = 3329
        assert mlwe.decode([q // 4 - 1], q)[0] == 0
        assert mlwe.decode([q // 4 + 2], q)[0] == 1


class TestSerialization:
    def test_ciphertext_round_trip(self):
        p = mlwe.paramset("small")
        kp = mlwe.keygen(p, make_rng(21))
        ct, _ = mlwe.encaps(kp.public, p, make_rng(22))
        raw = ct.to_bytes()
        assert len(raw) == 4 + 2 * (p.k + 256)
        assert mlwe.Ciphertext.from_bytes(raw, p.q) == ct

    def test_little_endian_16bit(self):
        v = mlwe.ZqVec([1, 258], 3329)
        assert v.to_bytes() == b"\x01\x00\x02\x01"


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32), name=st.sampled_from(["toy", "small"]))
def test_round_trip_whenever_noise_below_quarter_q(seed, name):
    p = mlwe.paramset(name)
    kp = mlwe.keygen(p, make_rng(seed, "kp"))
    bits = make_rng(seed, "bits").integers(0, 2, size=64)
    ct, noise = mlwe.encrypt(kp.public, p, bits, make_rng(seed, "enc"))
    total = mlwe.decryption_noise(kp, noise)
    # the audited noise is exactly the decryption offset from the encoded bit
    d = (ct.v.entries - int(kp.secret.s.entries @ ct.u.entries)) % p.q
    assert np.array_equal(d, (total + bits * (p.q // 2)) % p.q)
    ok = np.abs(total) < p.q / 4
    decoded = mlwe.decaps(kp.secret, ct, p)
    assert np.array_equal(decoded[ok], bits[ok])
