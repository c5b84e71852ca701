"""Walk through the ring-blinded secure sum on small numbers.

Each entry of a vector is encrypted with a blinding factor built from a
cyclic ring of secret exponents.  Individually the ciphertexts look like
noise; multiplied together, the blinding cancels and the exact sum pops
out of one division.
"""

from mipp import aggregate_and_recover, encrypt_vector, gen_group_params, params_from_primes

# Tiny textbook-sized parameters so every value is readable.
tiny = params_from_primes(p=23, q=11, h=2)
print("tiny parameters:")
print(f"  p = {tiny.p}, q = {tiny.q} (q divides p-1: {(tiny.p - 1) % tiny.q == 0})")
print(f"  g1 = h^((p-1)/q) mod p   = {tiny.g1}")
print(f"  g2 = g1^p mod p^2        = {tiny.g2}")

values = [3, 5, 7]
ct = encrypt_vector(tiny, values, rng_seed=b"demo")
print(f"\nencrypting {values}:")
for v, c in zip(values, ct):
    print(f"  {v} -> {c}")
print(f"recovered sum: {aggregate_and_recover(tiny, ct)} (expected {sum(values)})")

# Fresh randomness gives a completely different ciphertext for the same
# plaintext, yet recovery is unchanged.
again = encrypt_vector(tiny, values, rng_seed=b"another-day")
print(f"\nsame vector, new seed -> {list(again)}")
print(f"recovered sum is still: {aggregate_and_recover(tiny, again)}")

# Realistic-size parameters are generated from a seed.
params = gen_group_params(security_bits=32, seed=b"demo-params")
big = list(range(100, 180))
ct = encrypt_vector(params, big, rng_seed=b"big")
print(f"\n32-bit parameters, 80-entry vector: sum {aggregate_and_recover(params, ct)}"
      f" (expected {sum(big)})")
print(f"one ciphertext entry, for flavor: {ct[0]}")
