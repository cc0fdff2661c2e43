# The algebra under the encrypted index: ElGamal, shares, bounded dlogs.
# Run: python demos/04_crypto_toolbox.py

import random

from fese import (
    combine_shares,
    discrete_log_small,
    eg_decrypt,
    eg_encrypt,
    eg_mul,
    eg_pow,
    get_group,
    payload_decrypt,
    payload_encrypt,
    split_secret,
)
from fese.crypto import keygen

group = get_group("toy61")  # insecure test group; see modp2048 for real use
rng = random.Random(5)
kp = keygen(group, rng)
print(f"group {group.name}: |q| = {group.order.bit_length()} bits, "
      f"elements encode to {group.element_bytes} bytes")

print("\n== ElGamal multiplies under encryption ==")
x = group.pow(group.gen, 21)
y = group.pow(group.gen, 2)
cx, cy = eg_encrypt(group, kp.public, x, rng), eg_encrypt(group, kp.public, y, rng)
product = eg_decrypt(group, kp.secret, eg_mul(group, cx, cy))
print(f"Dec(Enc(g^21) * Enc(g^2)) == g^23: {product == group.pow(group.gen, 23)}")

print("\n== exponent re-randomization moves the dlog base ==")
c = rng.randrange(1, group.order)
blinded = eg_decrypt(group, kp.secret, eg_pow(group, cx, c))
recovered = discrete_log_small(group, group.pow(group.gen, c), blinded, 1 << 20)
print(f"server blinds with secret c, client recovers 21 against g^c: {recovered}")

print("\n== an identifier split into shares that re-randomize ==")
identifier = 774_411
shares = split_secret(identifier, 8, group, rng)
print(f"8 shares, product = g^{identifier}: "
      f"{combine_shares(group, shares.shares) == group.pow(group.gen, identifier)}")
t = rng.randrange(1, group.order)
powered = [group.pow(a, t) for a in shares.shares]
back = discrete_log_small(group, group.pow(group.gen, t), combine_shares(group, powered), 1 << 20)
print(f"after raising every share to t, recovery against g^t gives: {back}")
partial = combine_shares(group, powered[:7])
print(f"7 of 8 shares decode to anything? "
      f"{discrete_log_small(group, group.pow(group.gen, t), partial, 1 << 20)}")

print("\n== byte payloads ride a hybrid cipher ==")
secret_bytes = b"reference template goes here"
sealed = payload_encrypt(group, kp.public, secret_bytes, rng)
print(f"{len(secret_bytes)} plaintext bytes -> {len(sealed)} ciphertext bytes")
print(f"round trip: {payload_decrypt(group, kp.secret, sealed) == secret_bytes}")
