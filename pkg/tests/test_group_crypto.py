import math
import random

import pytest

from mipp.group_crypto import (
    DegenerateRingError,
    GroupParams,
    MalformedCiphertextError,
    PlaintextRangeError,
    aggregate_and_recover,
    encrypt_vector,
    gen_group_params,
    is_probable_prime,
    params_from_primes,
    params_from_text,
    params_to_text,
    ring_randomness,
)


@pytest.fixture(scope="module")
def tiny_params():
    # p=23, q=11, h=2: small enough to check every step by hand
    return params_from_primes(23, 11, 2)


@pytest.fixture(scope="module")
def test_params():
    return gen_group_params(32, b"unit-test-params")


def test_forced_primes_match_hand_computation(tiny_params):
    # independent oracle: direct modular exponentiation
    assert tiny_params.g1 == pow(2, (23 - 1) // 11, 23) == 4
    assert tiny_params.g2 == pow(4, 23, 23 * 23) == 487


def test_generated_params_invariants():
    for seed in (b"a", b"b", b"c"):
        params = gen_group_params(32, seed)
        assert (params.p - 1) % params.q == 0
        assert params.q.bit_length() == 32
        assert pow(params.g1, params.q, params.p) == 1
        assert params.g1 != 1
        assert params.g2 == pow(params.g1, params.p, params.p_squared)
        assert math.gcd(params.g2, params.p_squared) == 1


def test_generation_is_deterministic():
    a = gen_group_params(32, b"same-seed")
    b = gen_group_params(32, b"same-seed")
    assert a == b
    c = gen_group_params(32, b"other-seed")
    assert a != c


def test_security_bits_floor():
    with pytest.raises(ValueError):
        gen_group_params(8, b"too-small")


def test_miller_rabin_against_sympy_free_oracle():
    # oracle: trial division over a small range
    def slow_prime(n):
        if n < 2:
            return False
        return all(n % d for d in range(2, int(n**0.5) + 1))

    for n in range(2, 2000):
        assert is_probable_prime(n) == slow_prime(n), n


def test_telescoping_cancellation():
    for seed in range(20):
        ring = ring_randomness(q=101, length=3 + seed, seed=str(seed))
        n = len(ring)
        total = sum(
            ring[(i + 1) % n] * ring[i] - ring[i] * ring[(i - 1) % n]
            for i in range(n)
        )
        assert total == 0


def test_ring_randomness_bounds_and_length():
    ring = ring_randomness(q=11, length=50, seed=b"bounds")
    assert len(ring) == 50
    assert all(1 <= r <= 10 for r in ring)
    with pytest.raises(DegenerateRingError):
        ring_randomness(q=11, length=2, seed=b"short")


def test_encrypt_recover_fixture(test_params):
    ct = encrypt_vector(test_params, [3, 5, 7], b"seed-357")
    assert aggregate_and_recover(test_params, ct) == 15


def test_zero_vector(test_params):
    ct = encrypt_vector(test_params, [0, 0, 0], b"seed-zero")
    assert aggregate_and_recover(test_params, ct) == 0


def test_degenerate_ring_rejected(test_params):
    with pytest.raises(DegenerateRingError):
        encrypt_vector(test_params, [1, 2], b"seed")


def test_plaintext_range_enforced(tiny_params):
    with pytest.raises(PlaintextRangeError):
        encrypt_vector(tiny_params, [23, 0, 0], b"seed")
    with pytest.raises(PlaintextRangeError):
        encrypt_vector(tiny_params, [10, 10, 10], b"seed")  # sum 30 >= 23
    with pytest.raises(PlaintextRangeError):
        encrypt_vector(tiny_params, [-1, 0, 2], b"seed")


def test_exact_recovery_property(test_params):
    # oracle: plain integer summation
    rng = random.Random(0xC0FFEE)
    for trial in range(500):
        length = rng.randint(3, 16)
        values = [rng.randint(0, 255) for _ in range(length)]
        ct = encrypt_vector(test_params, values, f"trial-{trial}")
        assert aggregate_and_recover(test_params, ct) == sum(values)


def test_blinding_freshness(test_params):
    values = [7, 7, 7, 7]
    seen = set()
    for trial in range(100):
        ct = encrypt_vector(test_params, values, f"fresh-{trial}")
        assert ct not in seen
        seen.add(ct)


def test_ciphertext_entries_are_units(test_params):
    ct = encrypt_vector(test_params, [1, 2, 3, 4], b"unit-check")
    for c in ct:
        assert math.gcd(c, test_params.p_squared) == 1
        pow(c, -1, test_params.p_squared)  # must not raise


def test_malformed_ciphertext_detected(test_params):
    other = gen_group_params(32, b"mismatched")
    ct = encrypt_vector(test_params, [3, 5, 7], b"seed")
    with pytest.raises(MalformedCiphertextError):
        aggregate_and_recover(other, ct)


def test_params_text_roundtrip(test_params):
    text = params_to_text(test_params)
    assert text.splitlines()[0] == "MIPP-PARAMS-1"
    assert params_from_text(text) == test_params


def test_params_text_rejects_bad_input(test_params):
    with pytest.raises(ValueError):
        params_from_text("NOT-A-HEADER\n1\n2\n3\n4\n5\n")
    mangled = params_to_text(test_params).replace("MIPP", "XIPP")
    with pytest.raises(ValueError):
        params_from_text(mangled)


def test_validate_rejects_inconsistent_params(tiny_params):
    broken = GroupParams(
        p=tiny_params.p,
        q=tiny_params.q,
        g1=tiny_params.g1,
        g2=tiny_params.g2 + 1,
        security_bits=tiny_params.security_bits,
    )
    with pytest.raises(ValueError):
        broken.validate()


def test_params_id_tracks_content(tiny_params, test_params):
    assert tiny_params.params_id != test_params.params_id
    assert tiny_params.params_id == params_from_primes(23, 11, 2).params_id
