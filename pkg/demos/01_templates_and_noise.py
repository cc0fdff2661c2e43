# Binary templates, the Hamming metric, and the synthetic noise source.
# Run: python demos/01_templates_and_noise.py

import random

import numpy as np

from fese import BinaryTemplate, hamming_distance, perturb_bsc, random_template

rng = random.Random(2024)

print("== fixed-length bit vectors ==")
a = random_template(256, rng)
b = random_template(256, rng)
print(f"two random 256-bit templates differ in {hamming_distance(a, b)} positions")
print(f"a vs itself:      {hamming_distance(a, a)}")
print(f"a vs complement:  {hamming_distance(a, a.complement())}")

print("\n== serialization is bit-exact ==")
blob = a.to_bytes()
print(f"file form: magic {blob[:4]!r}, {len(blob)} bytes")
assert BinaryTemplate.from_bytes(blob) == a

print("\n== a binary symmetric channel models repeated measurements ==")
for flip in (0.01, 0.05, 0.10, 0.25):
    distances = [hamming_distance(a, perturb_bsc(a, flip, rng)) for _ in range(2000)]
    print(
        f"flip={flip:0.2f}: mean distance {np.mean(distances):6.1f} "
        f"(expected {256 * flip:6.1f}), sd {np.std(distances):5.2f}"
    )

print("\n== genuine and impostor distances separate cleanly ==")
genuine = [hamming_distance(a, perturb_bsc(a, 0.05, rng)) for _ in range(2000)]
impostor = [
    hamming_distance(random_template(256, rng), random_template(256, rng))
    for _ in range(2000)
]
print(f"genuine  5% noise: {min(genuine):3d} .. {max(genuine):3d}")
print(f"impostor random:   {min(impostor):3d} .. {max(impostor):3d}")
print("thresholds near=26 far=77 sit inside that gap")
