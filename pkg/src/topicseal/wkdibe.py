"""Pattern-based encryption and signatures over the pairing groups.

A *pattern* is a fixed-length sequence of slots, each either a nonzero
scalar or free.  Secret keys are bound to a pattern; a key whose pattern
leaves slots free can derive keys for any pattern that fills some of them
in, without the issuer's involvement.  Ciphertexts address one exact
pattern.  The same key material signs scalars under its pattern.

Everything here is algebra on immutable values: no I/O, no policy.  The
higher layers decide which patterns mean what.

Randomized operations accept an ``rng`` hook (a callable returning a
scalar) so tests can replay them deterministically; the default draws from
the OS.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional, Sequence, Tuple, Union

from topicseal.groups import (
    G1Elem,
    G2Elem,
    GROUP_ORDER,
    GTElem,
    MalformedEncoding,
    RandomScalarFn,
    pair,
    random_nonzero_scalar,
    random_scalar,
)

Free = None

_PATTERN_DIGEST_DOMAIN = b"\x02"


class SchemeError(Exception):
    """Base for misuse of the scheme API."""


class InvalidLength(SchemeError):
    pass


class NotAMatch(SchemeError):
    """Key's pattern does not generalize the requested pattern."""


class NotExtendable(SchemeError):
    """Key went through limited delegation and cannot derive further."""


class PatternMismatch(SchemeError):
    """Operation requires identical patterns and they differ."""


class NoSignatureSlot(SchemeError):
    """Key or system lacks the signature slot material."""


class Pattern:
    """Fixed-length slot sequence; ``None`` marks a free slot.

    Fixed entries must be nonzero scalars mod the group order.  Instances
    are immutable and hashable.
    """

    __slots__ = ("slots",)

    def __init__(self, slots: Sequence[Optional[int]]) -> None:
        checked = []
        for v in slots:
            if v is Free:
                checked.append(Free)
            else:
                v = int(v) % GROUP_ORDER
                if v == 0:
                    raise ValueError("fixed slots must be nonzero scalars")
                checked.append(v)
        object.__setattr__(self, "slots", tuple(checked))

    def __setattr__(self, name, value):
        raise AttributeError("Pattern is immutable")

    def __len__(self) -> int:
        return len(self.slots)

    def __getitem__(self, i: int) -> Optional[int]:
        return self.slots[i]

    def __iter__(self) -> Iterator[Optional[int]]:
        return iter(self.slots)

    def __eq__(self, other) -> bool:
        return isinstance(other, Pattern) and self.slots == other.slots

    def __hash__(self) -> int:
        return hash(self.slots)

    def __repr__(self) -> str:
        parts = ["_" if v is Free else hex(v)[:8] for v in self.slots]
        return "Pattern(%s)" % ", ".join(parts)

    def fixed(self) -> Iterator[Tuple[int, int]]:
        """(index, value) for each fixed slot, ascending index."""
        for i, v in enumerate(self.slots):
            if v is not Free:
                yield i, v

    def free_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.slots) if v is Free)

    def matches(self, specific: "Pattern") -> bool:
        """True if every slot this pattern fixes, ``specific`` fixes equally.

        A matching pair means a key for ``self`` can act for ``specific``.
        """
        if len(self.slots) != len(specific.slots):
            return False
        return all(a is Free or a == b
                   for a, b in zip(self.slots, specific.slots))

    def digest(self) -> bytes:
        """Routing digest over the fixed slots (32 bytes)."""
        h = hashlib.sha256(_PATTERN_DIGEST_DOMAIN)
        for i, v in self.fixed():
            h.update(i.to_bytes(2, "big"))
            h.update(v.to_bytes(32, "big"))
        return h.digest()

    def to_bytes(self) -> bytes:
        out = [len(self.slots).to_bytes(2, "big")]
        fixed = list(self.fixed())
        out.append(len(fixed).to_bytes(2, "big"))
        for i, v in fixed:
            out.append(i.to_bytes(2, "big"))
            out.append(v.to_bytes(32, "big"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Tuple["Pattern", int]:
        """Parse a pattern; returns (pattern, bytes consumed)."""
        if len(data) < 4:
            raise MalformedEncoding("truncated pattern")
        length = int.from_bytes(data[:2], "big")
        count = int.from_bytes(data[2:4], "big")
        need = 4 + count * 34
        if count > length or len(data) < need:
            raise MalformedEncoding("truncated pattern")
        slots: list = [Free] * length
        off = 4
        last = -1
        for _ in range(count):
            i = int.from_bytes(data[off:off + 2], "big")
            v = int.from_bytes(data[off + 2:off + 34], "big")
            if i <= last or i >= length or v == 0 or v >= GROUP_ORDER:
                raise MalformedEncoding("bad pattern slot entry")
            slots[i] = v
            last = i
            off += 34
        return cls(slots), off


@dataclass(frozen=True)
class Params:
    """Public parameters of one hierarchy.

    ``pairing_cache`` stores pair(g2, g1) so encryption never pairs.
    """

    g: G2Elem
    g1: G2Elem
    g2: G1Elem
    g3: G1Elem
    h: Tuple[G1Elem, ...]
    h_s: Optional[G1Elem]
    pairing_cache: GTElem

    @property
    def length(self) -> int:
        return len(self.h)

    def to_bytes(self) -> bytes:
        out = [len(self.h).to_bytes(2, "big"),
               b"\x01" if self.h_s is not None else b"\x00",
               self.g.to_bytes(), self.g1.to_bytes(),
               self.g2.to_bytes(), self.g3.to_bytes()]
        out.extend(e.to_bytes() for e in self.h)
        if self.h_s is not None:
            out.append(self.h_s.to_bytes())
        out.append(self.pairing_cache.to_bytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Params":
        if len(data) < 3:
            raise MalformedEncoding("truncated params")
        length = int.from_bytes(data[:2], "big")
        if length == 0 or data[2] not in (0, 1):
            raise MalformedEncoding("bad params header")
        has_sig = data[2] == 1
        need = 3 + 96 * 2 + 48 * (2 + length + (1 if has_sig else 0)) + 576
        if len(data) != need:
            raise MalformedEncoding("params length mismatch")
        off = 3
        g = G2Elem.from_bytes(data[off:off + 96]); off += 96
        g1 = G2Elem.from_bytes(data[off:off + 96]); off += 96
        g2 = G1Elem.from_bytes(data[off:off + 48]); off += 48
        g3 = G1Elem.from_bytes(data[off:off + 48]); off += 48
        h = []
        for _ in range(length):
            h.append(G1Elem.from_bytes(data[off:off + 48])); off += 48
        h_s = None
        if has_sig:
            h_s = G1Elem.from_bytes(data[off:off + 48]); off += 48
        cache = GTElem.from_bytes(data[off:off + 576])
        if cache != pair(g2, g1):
            raise MalformedEncoding("params pairing cache is inconsistent")
        return cls(g, g1, g2, g3, tuple(h), h_s, cache)


@dataclass(frozen=True)
class MasterKey:
    k: G1Elem

    def to_bytes(self) -> bytes:
        return self.k.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MasterKey":
        return cls(G1Elem.from_bytes(data))


@dataclass(frozen=True)
class SecretKey:
    """Decryption/signing key bound to a pattern.

    ``free_elems`` holds the per-free-slot delegation elements; limited
    delegation drops some or all of them, and a dropped slot can never be
    fixed by this key or any descendant.  ``extendable`` False means none
    are left.
    ``resampled`` False marks a derived-without-rerandomization key: it
    works locally but leaks its parent's randomness, so it must never
    leave the process (serialization refuses it).
    """

    k0: G1Elem
    k1: G2Elem
    pattern: Pattern
    free_elems: Dict[int, G1Elem] = field(default_factory=dict)
    sig_elem: Optional[G1Elem] = None
    extendable: bool = True
    resampled: bool = True

    def to_bytes(self) -> bytes:
        if not self.resampled:
            raise SchemeError(
                "refusing to serialize a non-resampled key; "
                "resample_key() it first")
        flags = (1 if self.extendable else 0) \
            | (2 if self.sig_elem is not None else 0)
        out = [bytes([flags]), self.pattern.to_bytes(),
               self.k0.to_bytes(), self.k1.to_bytes(),
               len(self.free_elems).to_bytes(2, "big")]
        for i in sorted(self.free_elems):
            out.append(i.to_bytes(2, "big"))
            out.append(self.free_elems[i].to_bytes())
        if self.sig_elem is not None:
            out.append(self.sig_elem.to_bytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        if len(data) < 1:
            raise MalformedEncoding("truncated key")
        flags = data[0]
        if flags & ~3:
            raise MalformedEncoding("bad key flags")
        pattern, used = Pattern.from_bytes(data[1:])
        off = 1 + used
        try:
            k0 = G1Elem.from_bytes(data[off:off + 48]); off += 48
            k1 = G2Elem.from_bytes(data[off:off + 96]); off += 96
            count = int.from_bytes(data[off:off + 2], "big"); off += 2
            free_elems = {}
            last = -1
            for _ in range(count):
                i = int.from_bytes(data[off:off + 2], "big"); off += 2
                if i <= last or i >= len(pattern) or pattern[i] is not Free:
                    raise MalformedEncoding("free element index invalid")
                free_elems[i] = G1Elem.from_bytes(data[off:off + 48]); off += 48
                last = i
            sig_elem = None
            if flags & 2:
                sig_elem = G1Elem.from_bytes(data[off:off + 48]); off += 48
        except IndexError:
            raise MalformedEncoding("truncated key")
        if off != len(data):
            raise MalformedEncoding("trailing bytes after key")
        extendable = bool(flags & 1)
        if extendable and not free_elems and any(
                True for _ in pattern.free_indices()):
            raise MalformedEncoding("extendable key carries no free elements")
        return cls(k0, k1, pattern, free_elems, sig_elem, extendable, True)


@dataclass(frozen=True)
class WkdCiphertext:
    """Encryption of one target-group element under one exact pattern."""

    X: GTElem
    Y: G2Elem
    Z: G1Elem
    pattern_digest: bytes

    CORE_LEN = 576 + 96 + 48
    WIRE_LEN = 32 + CORE_LEN

    def to_bytes(self) -> bytes:
        return (self.pattern_digest + self.X.to_bytes()
                + self.Y.to_bytes() + self.Z.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "WkdCiphertext":
        if len(data) != cls.WIRE_LEN:
            raise MalformedEncoding("ciphertext must be %d bytes"
                                    % cls.WIRE_LEN)
        return cls(GTElem.from_bytes(data[32:608]),
                   G2Elem.from_bytes(data[608:704]),
                   G1Elem.from_bytes(data[704:752]),
                   bytes(data[:32]))


@dataclass(frozen=True)
class Signature:
    s0: G1Elem
    s1: G2Elem

    WIRE_LEN = 48 + 96

    def to_bytes(self) -> bytes:
        return self.s0.to_bytes() + self.s1.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        if len(data) != cls.WIRE_LEN:
            raise MalformedEncoding("signature must be %d bytes"
                                    % cls.WIRE_LEN)
        return cls(G1Elem.from_bytes(data[:48]),
                   G2Elem.from_bytes(data[48:]))


@dataclass(frozen=True)
class Precomputed:
    """Cached attribute product for a pattern; reusable across messages."""

    q: G1Elem
    pattern: Pattern


# ---------------------------------------------------------------------------
# operations

def _check_length(params: Params, pattern: Pattern) -> None:
    if len(pattern) != params.length:
        raise ValueError("pattern length %d does not fit system length %d"
                         % (len(pattern), params.length))


def _attr_product(params: Params, pattern: Pattern) -> G1Elem:
    # g3 * prod h_i^{a_i} over the fixed slots
    q = params.g3
    for i, a in pattern.fixed():
        q = q * params.h[i] ** a
    return q


def setup(length: int, enable_signature_slot: bool = True,
          rng: Optional[RandomScalarFn] = None) -> Tuple[Params, MasterKey]:
    """Create a hierarchy: public params plus the master key.

    The master exponent is used once here and discarded.
    """
    if length < 1:
        raise InvalidLength("need at least one slot")
    alpha = random_nonzero_scalar(rng)
    g = G2Elem.generator() ** random_nonzero_scalar(rng)
    g1 = g ** alpha
    base = G1Elem.generator()
    g2 = base ** random_nonzero_scalar(rng)
    g3 = base ** random_nonzero_scalar(rng)
    h = tuple(base ** random_nonzero_scalar(rng) for _ in range(length))
    h_s = base ** random_nonzero_scalar(rng) if enable_signature_slot else None
    params = Params(g, g1, g2, g3, h, h_s, pair(g2, g1))
    return params, MasterKey(g2 ** alpha)


def key_der(params: Params, key: Union[MasterKey, SecretKey],
            target: Pattern, rng: Optional[RandomScalarFn] = None
            ) -> SecretKey:
    """Derive a fresh extendable key for ``target``.

    From the master key, any target works.  From a secret key, the key's
    pattern must match the target (every fixed slot preserved) and the key
    must still be extendable.  The output is rerandomized, so it reveals
    nothing about which parent produced it.
    """
    _check_length(params, target)
    r = random_scalar(rng)
    if isinstance(key, MasterKey):
        k0 = key.k * _attr_product(params, target) ** r
        k1 = params.g ** r
        free_elems = {j: params.h[j] ** r for j in target.free_indices()}
        sig_elem = params.h_s ** r if params.h_s is not None else None
        return SecretKey(k0, k1, target, free_elems, sig_elem, True, True)
    if not key.extendable:
        raise NotExtendable("parent key went through limited delegation")
    if not key.pattern.matches(target):
        raise NotAMatch("parent pattern does not cover the target")
    k0 = key.k0 * _attr_product(params, target) ** r
    for i, a in target.fixed():
        if key.pattern[i] is Free:
            b = key.free_elems.get(i)
            if b is None:
                raise NotExtendable("slot %d is not delegable in this key"
                                    % i)
            k0 = k0 * b ** a
    k1 = key.k1 * params.g ** r
    # a slot the parent cannot fix stays unfixable in every descendant
    free_elems = {j: key.free_elems[j] * params.h[j] ** r
                  for j in target.free_indices() if j in key.free_elems}
    sig_elem = None
    if key.sig_elem is not None and params.h_s is not None:
        sig_elem = key.sig_elem * params.h_s ** r
    return SecretKey(k0, k1, target, free_elems, sig_elem, True, True)


def limit(key: SecretKey, slots: Optional[Iterable[int]] = None
          ) -> SecretKey:
    """Strip delegation material.

    Called with no slot list, the result decrypts ciphertexts for its
    exact pattern and can do nothing else.  With a slot list, only those
    slots' extension elements are dropped: the key (and every key later
    derived from it) can never fix them, but keeps its other freedoms.
    """
    if slots is None:
        return SecretKey(key.k0, key.k1, key.pattern, {}, None, False,
                         key.resampled)
    drop = set(slots)
    free_elems = {j: b for j, b in key.free_elems.items() if j not in drop}
    return SecretKey(key.k0, key.k1, key.pattern, free_elems, key.sig_elem,
                     bool(free_elems), key.resampled)


def encrypt(params: Params, pattern: Pattern, m: GTElem,
            rng: Optional[RandomScalarFn] = None) -> WkdCiphertext:
    """Encrypt a target-group element to everyone holding a key matching
    ``pattern`` (free slots allowed; they simply go unused)."""
    _check_length(params, pattern)
    s = random_scalar(rng)
    return WkdCiphertext(params.pairing_cache ** s * m,
                         params.g ** s,
                         _attr_product(params, pattern) ** s,
                         pattern.digest())


def decrypt(key: SecretKey, c: WkdCiphertext) -> GTElem:
    """Invert encrypt; the key's pattern must equal the ciphertext's.

    Exactly two pairings.
    """
    if key.pattern.digest() != c.pattern_digest:
        raise PatternMismatch("key pattern differs from ciphertext pattern")
    return c.X * pair(c.Z, key.k1) * pair(key.k0, c.Y).inverse()


def precompute(params: Params, pattern: Pattern) -> Precomputed:
    """Do the per-pattern part of encryption once, for many messages."""
    _check_length(params, pattern)
    return Precomputed(_attr_product(params, pattern), pattern)


def adjust_precomputed(params: Params, qs: Precomputed,
                       target: Pattern) -> Precomputed:
    """Move a precomputed value to a nearby pattern.

    One G1 exponentiation per slot where the patterns differ; between
    consecutive time slices that is a single slot.
    """
    _check_length(params, target)
    q = qs.q
    for i, (old, new) in enumerate(zip(qs.pattern, target)):
        if old == new:
            continue
        if old is Free:
            q = q * params.h[i] ** new
        elif new is Free:
            q = q * params.h[i] ** (-old)
        else:
            q = q * params.h[i] ** (new - old)
    return Precomputed(q, target)


def encrypt_prepared(params: Params, q: Precomputed, m: GTElem,
                     rng: Optional[RandomScalarFn] = None) -> WkdCiphertext:
    """Encrypt using a precomputed attribute product; output is
    distributed identically to plain encrypt (bitwise equal for equal
    randomness)."""
    s = random_scalar(rng)
    return WkdCiphertext(params.pairing_cache ** s * m,
                         params.g ** s,
                         q.q ** s,
                         q.pattern.digest())


def _sign_core(params: Params, key: SecretKey, q_times_hs_m: G1Elem,
               base_k0: G1Elem, m: int, t: int) -> Signature:
    if key.sig_elem is None:
        raise NoSignatureSlot("key carries no signature material")
    s0 = base_k0 * q_times_hs_m ** t * key.sig_elem ** m
    s1 = params.g ** t * key.k1
    return Signature(s0, s1)


def sign(params: Params, key: SecretKey, m: int,
         rng: Optional[RandomScalarFn] = None) -> Signature:
    """Sign a scalar under the key's own pattern."""
    if key.sig_elem is None:
        raise NoSignatureSlot("key carries no signature material")
    if not key.extendable:
        raise NotExtendable("limited keys cannot sign")
    if params.h_s is None:
        raise NoSignatureSlot("system has no signature slot")
    m = m % GROUP_ORDER
    t = random_scalar(rng)
    q = _attr_product(params, key.pattern) * params.h_s ** m
    return _sign_core(params, key, q, key.k0, m, t)


def generalized_sign(params: Params, key: SecretKey, target: Pattern,
                     m: int, rng: Optional[RandomScalarFn] = None
                     ) -> Signature:
    """Sign a scalar under any pattern the key's pattern matches."""
    _check_length(params, target)
    if key.sig_elem is None:
        raise NoSignatureSlot("key carries no signature material")
    if params.h_s is None:
        raise NoSignatureSlot("system has no signature slot")
    if not key.pattern.matches(target):
        raise NotAMatch("key pattern does not cover the signing pattern")
    m = m % GROUP_ORDER
    t = random_scalar(rng)
    k0 = key.k0
    for i, a in target.fixed():
        if key.pattern[i] is Free:
            b = key.free_elems.get(i)
            if b is None:
                raise NotExtendable("slot %d is not delegable in this key" % i)
            k0 = k0 * b ** a
    q = _attr_product(params, target) * params.h_s ** m
    return _sign_core(params, key, q, k0, m, t)


def verify(params: Params, pattern: Pattern, sig: Signature, m: int) -> bool:
    """Check a signature against a pattern and scalar message.

    Exactly three pairings (the equation is checked literally; the cached
    pairing value is deliberately not consulted here so a damaged cache
    cannot skew verification).
    """
    _check_length(params, pattern)
    if params.h_s is None:
        raise NoSignatureSlot("system has no signature slot")
    m = m % GROUP_ORDER
    q = _attr_product(params, pattern) * params.h_s ** m
    lhs = pair(sig.s0, params.g)
    rhs = pair(params.g2, params.g1) * pair(q, sig.s1)
    return lhs == rhs


def non_delegable_key_der(key: SecretKey, target: Pattern) -> SecretKey:
    """Specialize a key without rerandomizing.

    Cheap (no fresh randomness, no product over the whole pattern), but
    the result shares its parent's randomness: keep it private, or run
    resample_key before sharing.  The result cannot derive further.
    """
    if not key.extendable:
        raise NotExtendable("parent key went through limited delegation")
    if not key.pattern.matches(target):
        raise NotAMatch("parent pattern does not cover the target")
    k0 = key.k0
    for i, a in target.fixed():
        if key.pattern[i] is Free:
            b = key.free_elems.get(i)
            if b is None:
                raise NotExtendable("slot %d is not delegable in this key"
                                    % i)
            k0 = k0 * b ** a
    return SecretKey(k0, key.k1, target, {}, key.sig_elem, False, False)


def resample_key(params: Params, key: SecretKey,
                 rng: Optional[RandomScalarFn] = None) -> SecretKey:
    """Rerandomize a key in place (same pattern, same capabilities)."""
    t = random_scalar(rng)
    k0 = key.k0 * _attr_product(params, key.pattern) ** t
    k1 = key.k1 * params.g ** t
    free_elems = {j: b * params.h[j] ** t for j, b in key.free_elems.items()}
    sig_elem = None
    if key.sig_elem is not None and params.h_s is not None:
        sig_elem = key.sig_elem * params.h_s ** t
    return SecretKey(k0, k1, key.pattern, free_elems, sig_elem,
                     key.extendable, True)


def adjust_non_delegable(parent: SecretKey, child: SecretKey,
                         target: Pattern) -> SecretKey:
    """Slide a non-rerandomized child key to a sibling pattern.

    ``child`` must have come from non_delegable_key_der(parent, ...); the
    move costs one exponentiation per differing slot instead of a full
    derivation.  Deterministic: the result equals
    non_delegable_key_der(parent, target) exactly.
    """
    if not parent.extendable:
        raise NotExtendable("parent key went through limited delegation")
    if not parent.pattern.matches(target):
        raise NotAMatch("parent pattern does not cover the target")
    if len(child.pattern) != len(target):
        raise NotAMatch("child pattern length differs from target")
    k0 = child.k0
    for i, (old, new) in enumerate(zip(child.pattern, target)):
        if old == new:
            continue
        b = parent.free_elems.get(i)
        if b is None:
            raise NotAMatch("differing slot %d is not free in the parent" % i)
        if old is Free:
            k0 = k0 * b ** new
        elif new is Free:
            k0 = k0 * b ** (-old)
        else:
            k0 = k0 * b ** (new - old)
    return SecretKey(k0, child.k1, target, {}, child.sig_elem, False, False)


def sign_prepared(params: Params, key: SecretKey, q: Precomputed, m: int,
                  rng: Optional[RandomScalarFn] = None) -> Signature:
    """Sign using a precomputed attribute product for the key's pattern.

    Equals plain sign bitwise under the same randomness.
    """
    if key.sig_elem is None:
        raise NoSignatureSlot("key carries no signature material")
    if params.h_s is None:
        raise NoSignatureSlot("system has no signature slot")
    if q.pattern != key.pattern:
        raise PatternMismatch("precomputed value is for a different pattern")
    m = m % GROUP_ORDER
    t = random_nonzero_scalar(rng)
    return _sign_core(params, key, q.q * params.h_s ** m, key.k0, m, t)
