"""Search encrypted features without the cloud seeing entrywise similarity.

The cloud stores, per image, only the recovered sums (s1, s2) of the
encrypted feature and its squared companion.  The sum-based distance is
computable from those four numbers per pair, equals its plaintext
counterpart exactly, and deliberately orders some triples differently
than Euclidean distance would.
"""

import numpy as np

from mipp import (
    CloudNode,
    QueryEnvelope,
    SumPair,
    encrypt_feature_pair,
    euc_dis,
    gen_group_params,
    new_dis,
    recover_sums,
    sim_from_sums,
)

params = gen_group_params(32, b"search-demo")

# Encrypted/plaintext equivalence on a random pair.
rng = np.random.default_rng(1)
f = rng.integers(0, 256, size=80)
q = rng.integers(0, 256, size=80)
fs = recover_sums(params, encrypt_feature_pair(params, f, b"f"))
qs = recover_sums(params, encrypt_feature_pair(params, q, b"q"))
enc_side = sim_from_sums(SumPair(*fs, 80), SumPair(*qs, 80))
print(f"distance from recovered sums: {enc_side:.6f}")
print(f"distance from plaintexts:     {new_dis(f, q):.6f}")

# The two distances do not always agree on order; that is the point.
x, y, z = [4, 0, 0], [4, 2, 0], [2, 2, 0]
print(f"\neuclidean: d(x,y)={euc_dis(x, y):.3f} < d(x,z)={euc_dis(x, z):.3f}"
      "  -> prefers y")
print(f"sum-based: d(x,y)={new_dis(x, y):.3f} > d(x,z)={new_dis(x, z):.3f}"
      "  -> prefers z")

# A small cloud: index rows hold only sums, yet answer top-h queries.
cloud = CloudNode(params)
ak = bytes(32)
vectors = {f"img-{i}": rng.integers(0, 256, size=80) for i in range(8)}
cloud.register_owner(
    "owner-1",
    aul=[("alice", ak)],
    images=[
        (iid, rng.integers(0, 256, size=(16, 16), dtype=np.uint8),
         encrypt_feature_pair(params, vec, iid))
        for iid, vec in vectors.items()
    ],
)
print("\nindex rows (what the cloud actually sees):")
for entry in cloud.index[:4]:
    print(f"  {entry.owner_id}/{entry.image_id}: s1={entry.s1} s2={entry.s2}")

envelope = QueryEnvelope(
    eq=encrypt_feature_pair(params, vectors["img-3"], b"query"),
    uid="alice", ak=ak, h=3,
)
print("\nquery = img-3's own feature vector:")
for rank, r in enumerate(cloud.retrieve_top_h(envelope), 1):
    print(f"top-{rank}: {r.image_id}  distance {r.distance:.2f}")
print("note: the exact stored copy need not lead this list; the sum-based")
print("distance is not a metric (nonzero self-distance), which is what")
print("keeps the cloud's view of similarity scrambled.  the user's local")
print("re-rank after decryption recovers exact ordering (see demo 05).")
