import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from anonauth.numtheory import (
    NotInvertible,
    Rng,
    generate_blum_modulus,
    gcd,
    is_prime,
    is_unit,
    jacobi,
    mod_inv,
    mod_pow,
    sample_unit,
)

UNITS_21 = [a for a in range(1, 21) if math.gcd(a, 21) == 1]
QR_21 = sorted({a * a % 21 for a in UNITS_21})


def brute_force_is_residue(a: int, m: int) -> bool:
    return any(x * x % m == a % m for x in range(1, m) if math.gcd(x, m) == 1)


class TestPrimality:
    def test_small_primes(self):
        assert is_prime(3) and is_prime(7) and is_prime(2)
        assert not is_prime(1) and not is_prime(21) and not is_prime(25)

    def test_candidate_pair_3_7_yields_21(self):
        # oracle for the accept branch: both prime, both 3 (mod 4)
        assert is_prime(3) and 3 % 4 == 3
        assert is_prime(7) and 7 % 4 == 3
        assert 3 * 7 == 21

    def test_prime_1_mod_4_rejected_as_factor(self):
        assert is_prime(5) and 5 % 4 != 3

    def test_large_prime_probabilistic_path(self):
        assert is_prime((1 << 61) - 1)
        assert not is_prime((1 << 61) - 3)


class TestBlumModulus:
    def test_determinism(self):
        a = generate_blum_modulus(16, 42)
        b = generate_blum_modulus(16, 42)
        assert (a.m, a.p, a.q) == (b.m, b.p, b.q)

    @pytest.mark.parametrize("bits", [6, 8, 10, 12, 16])
    def test_structure(self, bits):
        mod = generate_blum_modulus(bits, 7)
        assert mod.m == mod.p * mod.q
        assert mod.p % 4 == 3 and mod.q % 4 == 3
        assert mod.m.bit_length() == bits

    @pytest.mark.parametrize("bits", [6, 8, 10, 12, 14, 16])
    def test_minus_one_is_nonresidue_with_jacobi_plus_one(self, bits):
        mod = generate_blum_modulus(bits, 11)
        assert jacobi(mod.m - 1, mod.m) == 1
        assert not brute_force_is_residue(mod.m - 1, mod.m)

    def test_public_copy_drops_factors(self):
        mod = generate_blum_modulus(16, 3)
        pub = mod.public()
        assert pub.m == mod.m and pub.p is None and pub.q is None

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            generate_blum_modulus(5, 1)


class TestJacobi:
    def test_one_is_always_plus(self):
        assert jacobi(1, 21) == 1

    def test_pseudo_residue(self):
        # Jacobi +1 does not imply residue: 20 = m - 1 is not a square mod 21
        assert jacobi(20, 21) == 1
        assert 20 not in QR_21
        assert QR_21 == [1, 4, 16]

    def test_shared_factor_gives_zero(self):
        assert jacobi(7, 21) == 0

    def test_even_modulus_rejected(self):
        with pytest.raises(ValueError):
            jacobi(3, 10)
        with pytest.raises(ValueError):
            jacobi(3, 1)

    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    def test_multiplicative(self, a, b):
        m = 21
        assert jacobi(a * b, m) == jacobi(a, m) * jacobi(b, m)

    @given(
        st.integers(0, 10**9),
        st.integers(1, 10**4).map(lambda v: 2 * v + 1),
    )
    def test_matches_euler_criterion_for_prime_modulus(self, a, m):
        if not is_prime(m):
            return
        e = pow(a, (m - 1) // 2, m)
        expected = -1 if e == m - 1 else e
        assert jacobi(a, m) == expected


class TestModArith:
    def test_mod_pow_examples(self):
        assert mod_pow(2, 0, 21) == 1
        assert mod_pow(2, 5, 21) == 11
        assert mod_pow(20, 2, 21) == 1

    def test_mod_pow_rejects_negative_exponent(self):
        with pytest.raises(ValueError):
            mod_pow(2, -1, 21)

    @given(st.integers(0, 2**16), st.integers(0, 40), st.integers(3, 2**16))
    @settings(max_examples=200)
    def test_mod_pow_matches_naive(self, base, exp, m):
        naive = 1
        for _ in range(exp):
            naive = naive * base % m
        assert mod_pow(base, exp, m) == naive

    def test_mod_inv_examples(self):
        assert mod_inv(1, 21) == 1
        assert mod_inv(13, 21) == 13
        with pytest.raises(NotInvertible):
            mod_inv(7, 21)

    @given(st.integers(1, 10**6), st.integers(2, 10**6))
    def test_mod_inv_involution(self, a, m):
        if math.gcd(a, m) != 1 or a % m == 0:
            return
        assert mod_inv(mod_inv(a % m, m), m) == a % m


class TestSampleUnit:
    def test_m3_only_units(self):
        rng = Rng(1)
        assert all(sample_unit(rng, 3) in (1, 2) for _ in range(200))

    def test_reproducible(self):
        seq1 = [sample_unit(Rng(9), 21) for _ in range(1)]
        a, b = Rng(9), Rng(9)
        assert [sample_unit(a, 21) for _ in range(50)] == [
            sample_unit(b, 21) for _ in range(50)
        ]
        assert seq1[0] == sample_unit(Rng(9), 21)

    def test_uniform_over_units_mod_21(self):
        rng = Rng(5)
        draws = 100_000
        counts = {u: 0 for u in UNITS_21}
        for _ in range(draws):
            counts[sample_unit(rng, 21)] += 1
        expected = draws / len(UNITS_21)
        stat = sum((c - expected) ** 2 / expected for c in counts.values())
        # df = 11; reject only below the 0.1% tail
        assert stat < chi2.ppf(0.999, df=len(UNITS_21) - 1)

    def test_results_are_units(self):
        rng = Rng(2)
        for _ in range(500):
            v = sample_unit(rng, 21)
            assert is_unit(v, 21)


class TestRng:
    def test_split_streams_are_independent_of_parent_consumption(self):
        a = Rng(7)
        child = a.split()
        seq = [child.randbits(16) for _ in range(4)]
        b = Rng(7)
        child2 = b.split()
        assert [child2.randbits(16) for _ in range(4)] == seq

    def test_gcd_agrees_with_math(self):
        for a in range(0, 50):
            for b in range(0, 50):
                assert gcd(a, b) == math.gcd(a, b)
