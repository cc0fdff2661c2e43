"""Prime-order group arithmetic and the ciphers built on it.

Two fixed multiplicative groups are provided: ``modp2048`` (2048-bit
modulus, 256-bit prime-order subgroup, the default) and ``toy61`` (61-bit
order, exhaustively testable, NOT secure — test use only).  On top of
them: ElGamal with homomorphic multiply and component-wise exponent
re-randomization, multiplicative secret splitting with re-randomizable
shares, baby-step giant-step discrete logs over a bounded range, and a
hybrid byte-payload cipher (group KEM + ChaCha20-Poly1305).

Group elements and exponents are plain ints; every randomized operation
takes an explicit ``random.Random``.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import DecryptionError, FormatError, ParameterError

try:
    from gmpy2 import powmod as _powmod
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _powmod = pow


@dataclass(frozen=True)
class PrimeOrderGroup:
    """Order-``q`` subgroup of Z_p*, with two independent generators.

    ``gen2`` is derived by hashing into the group, so its discrete log
    with respect to ``gen`` is unknown to everyone.
    """

    name: str
    modulus: int
    order: int
    gen: int
    gen2: int
    secure: bool

    @property
    def element_bytes(self) -> int:
        return (self.modulus.bit_length() + 7) // 8

    @property
    def identity(self) -> int:
        return 1

    def mul(self, a: int, b: int) -> int:
        return a * b % self.modulus

    def pow(self, base: int, exponent: int) -> int:
        return int(_powmod(base, exponent % self.order, self.modulus))

    def inv(self, a: int) -> int:
        # subgroup elements satisfy a^q = 1, so a^(q-1) inverts
        return int(_powmod(a, self.order - 1, self.modulus))

    def random_exponent(self, rng: random.Random) -> int:
        return rng.randrange(1, self.order)

    def random_element(self, rng: random.Random) -> int:
        return self.pow(self.gen, rng.randrange(self.order))

    def is_element(self, a: int) -> bool:
        return 0 < a < self.modulus and int(_powmod(a, self.order, self.modulus)) == 1

    def encode(self, a: int) -> bytes:
        return a.to_bytes(self.element_bytes, "big")

    def decode(self, data: bytes, check: bool = False) -> int:
        if len(data) != self.element_bytes:
            raise FormatError(
                f"element must be {self.element_bytes} bytes, got {len(data)}"
            )
        a = int.from_bytes(data, "big")
        if check and not self.is_element(a):
            raise FormatError("bytes do not encode a subgroup element")
        return a


def _hash_to_group(modulus: int, order: int, label: bytes) -> int:
    cofactor = (modulus - 1) // order
    counter = 0
    while True:
        h = hashlib.blake2b(
            label + counter.to_bytes(4, "big"), person=b"fese-gen2", digest_size=64
        ).digest()
        candidate = int.from_bytes(h, "big") % modulus
        element = int(_powmod(candidate, cofactor, modulus))
        if element != 1:
            return element
        counter += 1


_MODP2048_P = int(
    "85EDAD1173AF351B6C6D9B5C0234E3D30DC393FC68245243D18A0DA285635DCD"
    "D0B1DB247438EDD59FC0DE0BAF64252BCD47068712B89103BC52033E910A5D34"
    "CFC72E1DD586965331298BA5A0FC1C90F724719512569F56C02AD74B34678493"
    "3A1B2DD96D591DA5B339CF93789B74DCB0655AFED2024EF430B51672683F291F"
    "82DF816DB6CD249C25BAECA94E080BD697F4CE0F0A17E273E476608ABC791F21"
    "8D96B59C437F18C4DC20A80FE241A58CD64C7BE2270F69E9A14E7B04DB9CF913"
    "6026C2B80392BC184DC71030B98E6164F467D6427F58C6C765D0566E40086BB2"
    "D7C6696B665072ED913A5AD3B1B03DF797E217FE0F644397FF5B51BC10464981",
    16,
)
_MODP2048_Q = int(
    "FFBF0870222EFBBD8E2DB92286F06144695F18FC7CC0E78C9C277F74342DCA69", 16
)
_MODP2048_G = int(
    "971B61AA210D502368299943F50DBE4694722D2961322DDC160D6A82D3FD457A"
    "225BF6A50C634831B70746E8390777C826EEEA669B03A16641D0F1778603EA59"
    "ED8CA777FA8D3FD05A6CC826EAE60AA3949839FEA01B68206D1E4B0DF5B73E1F"
    "6D6C37F8834015B5ECA5AC4335867D4ACD516062290F6A3E78CB139153F20616"
    "E48519727F62BD152EA532186005DB3E5205F60C1D6AEA5AEE3294BA01A503DD"
    "81F1847E6D1A7345C2A6E6026AEBEE52FFC2261B19E7A5906D2F4ED1800ECA6F"
    "797B2EF269CB35F9AB0B12A0AC20B672711A9704021AF169781B356AE9F2BDD8"
    "FA812210B3E4691606A3E7B17D85D4817C40C0A22349FFC788F74C471335824",
    16,
)

_TOY61_P = 4611686018427394499
_TOY61_Q = 2305843009213697249
_TOY61_G = 4


def _make_group(name: str, p: int, q: int, g: int, secure: bool) -> PrimeOrderGroup:
    return PrimeOrderGroup(
        name=name,
        modulus=p,
        order=q,
        gen=g,
        gen2=_hash_to_group(p, q, name.encode()),
        secure=secure,
    )


_GROUPS = {
    "modp2048": lambda: _make_group("modp2048", _MODP2048_P, _MODP2048_Q, _MODP2048_G, True),
    "toy61": lambda: _make_group("toy61", _TOY61_P, _TOY61_Q, _TOY61_G, False),
}
_CACHE: dict[str, PrimeOrderGroup] = {}


def get_group(name: str) -> PrimeOrderGroup:
    if name not in _GROUPS:
        raise ParameterError(f"unknown group {name!r}; have {sorted(_GROUPS)}")
    if name not in _CACHE:
        _CACHE[name] = _GROUPS[name]()
    return _CACHE[name]


@dataclass(frozen=True, slots=True)
class Keypair:
    secret: int
    public: int


def keygen(group: PrimeOrderGroup, rng: random.Random) -> Keypair:
    v = group.random_exponent(rng)
    return Keypair(secret=v, public=group.pow(group.gen, v))


@dataclass(frozen=True, slots=True)
class Ciphertext:
    """ElGamal pair ``(g^r, pk^r * x)``."""

    c1: int
    c2: int

    def encode(self, group: PrimeOrderGroup) -> bytes:
        return group.encode(self.c1) + group.encode(self.c2)

    @classmethod
    def decode(cls, group: PrimeOrderGroup, data: bytes, check: bool = False) -> "Ciphertext":
        w = group.element_bytes
        if len(data) != 2 * w:
            raise FormatError(f"ciphertext must be {2 * w} bytes, got {len(data)}")
        return cls(group.decode(data[:w], check), group.decode(data[w:], check))


def eg_encrypt(group: PrimeOrderGroup, public: int, x: int, rng: random.Random) -> Ciphertext:
    if not group.is_element(x):
        raise ParameterError("plaintext is not a subgroup element")
    r = group.random_exponent(rng)
    return Ciphertext(group.pow(group.gen, r), group.mul(group.pow(public, r), x))


def eg_decrypt(group: PrimeOrderGroup, secret: int, ct: Ciphertext) -> int:
    # c2 * c1^(-v), with the inverse folded into one exponentiation
    return group.mul(ct.c2, group.pow(ct.c1, group.order - secret))


def eg_mul(group: PrimeOrderGroup, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return Ciphertext(group.mul(a.c1, b.c1), group.mul(a.c2, b.c2))


def eg_pow(group: PrimeOrderGroup, ct: Ciphertext, exponent: int) -> Ciphertext:
    """Raise both components; the plaintext becomes ``x**exponent``."""
    if exponent % group.order == 0:
        raise ParameterError("exponent is 0 mod group order (degenerate)")
    return Ciphertext(group.pow(ct.c1, exponent), group.pow(ct.c2, exponent))


def eg_rerandomize(
    group: PrimeOrderGroup, public: int, ct: Ciphertext, rng: random.Random
) -> Ciphertext:
    """Fresh-looking ciphertext of the same plaintext (multiply by Enc(1))."""
    r = group.random_exponent(rng)
    return Ciphertext(
        group.mul(ct.c1, group.pow(group.gen, r)),
        group.mul(ct.c2, group.pow(public, r)),
    )


@dataclass(frozen=True, slots=True)
class SecretShares:
    """Multiplicative shares whose product is ``gen**secret``."""

    shares: tuple[int, ...]


def split_secret(
    secret: int, count: int, group: PrimeOrderGroup, rng: random.Random
) -> SecretShares:
    """Split a small exponent into ``count`` re-randomizable group elements.

    The first ``count - 1`` shares are random powers of the generator;
    the last absorbs the remainder so the product is ``gen**secret``.
    Raising every share to a common power t turns the product into
    ``(gen**t)**secret``, recoverable against the shifted base.
    """
    if count < 2:
        raise ParameterError("need at least two shares")
    if not 0 <= secret < group.order:
        raise ParameterError("secret outside exponent range")
    exponents = [rng.randrange(group.order) for _ in range(count - 1)]
    last = (secret - sum(exponents)) % group.order
    shares = tuple(group.pow(group.gen, e) for e in exponents) + (
        group.pow(group.gen, last),
    )
    return SecretShares(shares)


def combine_shares(group: PrimeOrderGroup, shares) -> int:
    out = group.identity
    for s in shares:
        out = group.mul(out, s)
    return out


class DlogTable:
    """Baby-step giant-step solver for one fixed base and bound.

    Build once, solve many: the baby table costs O(sqrt(bound)) space and
    each solve O(sqrt(bound)) group operations.
    """

    def __init__(self, group: PrimeOrderGroup, base: int, bound: int):
        if bound < 1:
            raise ParameterError("bound must be positive")
        self.group = group
        self.base = base
        self.bound = bound
        self.steps = int(bound**0.5) + 1
        self._baby: dict[int, int] = {}
        e = group.identity
        for j in range(self.steps):
            self._baby.setdefault(e, j)
            e = group.mul(e, base)
        self._giant = group.pow(base, group.order - self.steps)

    def solve(self, target: int) -> int | None:
        """The exponent s < bound with base**s == target, or None."""
        gamma = target
        for i in range((self.bound + self.steps - 1) // self.steps):
            j = self._baby.get(gamma)
            if j is not None:
                s = i * self.steps + j
                if s < self.bound:
                    return s
            gamma = self.group.mul(gamma, self._giant)
        return None


def discrete_log_small(
    group: PrimeOrderGroup, base: int, target: int, bound: int
) -> int | None:
    """One-shot bounded discrete log; build a DlogTable for repeated bases."""
    return DlogTable(group, base, bound).solve(target)


def payload_encrypt(
    group: PrimeOrderGroup, public: int, plaintext: bytes, rng: random.Random
) -> bytes:
    """Hybrid encryption: group KEM plus ChaCha20-Poly1305.

    Output is ``g^r || aead(plaintext)``; the AEAD key is hashed from the
    shared element, fresh per call, so a fixed zero nonce is safe.  The
    ciphertext length depends only on the plaintext length.
    """
    r = group.random_exponent(rng)
    epk = group.pow(group.gen, r)
    shared = group.pow(public, r)
    key = hashlib.blake2b(
        group.encode(shared) + group.encode(epk), person=b"fese-kem", digest_size=32
    ).digest()
    sealed = ChaCha20Poly1305(key).encrypt(b"\x00" * 12, plaintext, None)
    return group.encode(epk) + sealed


def payload_decrypt(group: PrimeOrderGroup, secret: int, blob: bytes) -> bytes:
    w = group.element_bytes
    if len(blob) < w + 16:
        raise FormatError("payload ciphertext too short")
    epk = group.decode(blob[:w])
    shared = group.pow(epk, secret)
    key = hashlib.blake2b(
        group.encode(shared) + blob[:w], person=b"fese-kem", digest_size=32
    ).digest()
    try:
        return ChaCha20Poly1305(key).decrypt(b"\x00" * 12, blob[w:], None)
    except InvalidTag as exc:
        raise DecryptionError("payload authentication failed") from exc


def payload_ciphertext_size(group: PrimeOrderGroup, plaintext_size: int) -> int:
    return group.element_bytes + plaintext_size + 16
