"""Run the complete owner / user / cloud / KMC workflow once.

Setup: owners upload encrypted images and features to the cloud and park
their image keys at the key management center.  A query then travels
through five messages: encrypted query to the cloud, fresh user key to the
KMC, candidate results cloud-to-KMC, re-encrypted results back, and final
delivery.  The user decrypts with their own key and re-ranks locally.
"""

import numpy as np

from mipp import World, gen_group_params
from mipp.protocol_sim import scan_cloud_for_plaintext

rng = np.random.default_rng(42)
params = gen_group_params(32, b"protocol-demo")
world = World(params, seed=b"protocol-demo", top_h=4, max_image_pixels=32 * 32)

world.add_user("alice")
world.add_user("eve")  # never authorized
for owner in ("hospital-a", "hospital-b"):
    world.add_owner(
        owner,
        images=[(f"scan-{i}", rng.integers(0, 256, size=(24, 24), dtype=np.uint8))
                for i in range(4)],
        authorize=["alice"],
    )

print("setup messages (owner upload, key deposit, per owner):")
print(world.setup_transcript.to_text())

query = world.owners["hospital-b"].plain_images["scan-2"]
result = world.run_session("alice", query)
print("query session transcript (steps 3..7):")
print(result.transcript.to_text())

print(f"cloud returned, in its own (sum-based) order: {result.returned}")
print(f"user's local euclidean re-rank:               {result.user_ranking}")
exact = result.images[result.user_ranking[0]]
print(f"top result decrypts to the original, bit-exact: "
      f"{np.array_equal(exact, query)}")

denied = world.run_session("eve", query)
print(f"\nunauthorized user: session authorized = {denied.authorized}, "
      f"transcript stops after steps {denied.transcript.steps()}")

print(f"plaintext visible anywhere cloud-side: "
      f"{scan_cloud_for_plaintext(world) or 'none'}")
