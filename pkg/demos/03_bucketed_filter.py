# Tag-storing Bloom buckets, alone and composed with LSH.
# Run: python demos/03_bucketed_filter.py

import random

from fese import (
    BucketedFilter,
    CompositeFamily,
    bfs_add,
    bfs_lookup,
    build_family,
    element_indices,
    estimate_eps,
    full_threshold,
    group_threshold,
    intersection_bounds,
    membership_fp_probability,
    perturb_bsc,
    random_template,
)

rng = random.Random(99)
key = bytes(32)

print("== plain layer: membership with a false-positive law ==")
store = BucketedFilter(100)
for name in ("ada", "grace", "edsger"):
    store.add_at(element_indices(key, 3, 100, name.encode()), name)
probes, hits = 50_000, 0
for _ in range(probes):
    hits += store.contains_at(element_indices(key, 3, 100, rng.randbytes(8)))
print(f"foreign members accepted: {hits}/{probes} = {hits / probes:.2e}")
print(f"formula (1-(1-3/100)^3)^3 = {membership_fp_probability(3, 100, 3):.2e}")

print("\n== composed with LSH: lookups tolerate noise ==")
N, T, MU, NU, M = 256, 8, 8, 4, 2048
family = build_family(N, T, MU, rng)
comp = CompositeFamily(family, NU, M, key)
index = BucketedFilter(M)
people = {}
for k in range(40):
    x = random_template(N, rng)
    people[k] = x
    bfs_add(index, comp, x, k)

exact = bfs_lookup(index, comp, people[7], full_threshold(MU, NU))
noisy = bfs_lookup(index, comp, perturb_bsc(people[7], 0.01, rng), full_threshold(MU, NU))
relaxed = bfs_lookup(index, comp, perturb_bsc(people[7], 0.05, rng), group_threshold(2, NU))
stranger = bfs_lookup(index, comp, random_template(N, rng), full_threshold(MU, NU))
print(f"exact copy of #7, full threshold:   {exact}")
print(f"1% noise on #7, full threshold:     {noisy}")
print(f"5% noise on #7, 2-group threshold:  {relaxed}")
print(f"stranger, full threshold:           {stranger}")

print("\n== the two sides of the trade ==")
est = estimate_eps(family, 26, 77, 10_000, rng)
soundness, completeness_failure = intersection_bounds(
    est.eps_near, est.eps_far, M, MU * NU
)
print(f"P[far tag captured at full threshold]  <= {soundness:.3e}")
print(f"P[near tag missed at full threshold]   <= {completeness_failure:.3f}")
print("tight soundness is why the full intersection pairs with a verification step")
