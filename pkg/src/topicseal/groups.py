"""Pairing-group arithmetic on BLS12-381.

Wraps the compiled backend in three immutable element types, written
multiplicatively: ``G1Elem`` (48-byte encodings, the cheap group),
``G2Elem`` (96-byte), and ``GTElem`` (576-byte pairing targets).  Scalars
are plain ints reduced mod ``GROUP_ORDER``.

Elements of the two expensive groups that get exponentiated repeatedly
(hierarchy generators, the cached pairing value) lazily build a fixed-base
nibble table so later exponentiations cost window lookups instead of a
full double-and-add.  G1 exponentiation is cheap enough that tables are
not worth their memory there.

Module-level operation counters record pairings and per-group
exponentiations for the complexity-budget tests; they are diagnostic and
meant for single-threaded measurement.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from topicseal import _pairing

_lib = _pairing.lib
_ffi = _pairing.ffi

if _lib.bls_init() != 0:
    raise ImportError("pairing backend failed its self-test during init")

# r: the prime order shared by all three groups.  p: the base field modulus.
GROUP_ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
FIELD_MODULUS = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB

SCALAR_LEN = 32
G1_LEN = 48
G2_LEN = 96
GT_LEN = 576

_G1_LIMBS = 18
_G2_LIMBS = 36
_GT_LIMBS = 72

# Exponentiations on one element before it earns a fixed-base table.
_TABLE_AFTER = 3
_NIBBLES = 64
_G1_TABLES = False      # G1 exps are cheap; combs there buy little per 140KB


class MalformedEncoding(Exception):
    """Byte string is not a valid canonical encoding of a group element."""


@dataclass
class OpCount:
    pairings: int = 0
    g1_exps: int = 0
    g2_exps: int = 0
    gt_exps: int = 0

    def total_exps(self) -> int:
        return self.g1_exps + self.g2_exps + self.gt_exps


_counts = OpCount()
_counts_lock = threading.Lock()
_local_counts = threading.local()


def _bump(field: str) -> None:
    with _counts_lock:
        setattr(_counts, field, getattr(_counts, field) + 1)
    for tally in getattr(_local_counts, "stack", ()):
        setattr(tally, field, getattr(tally, field) + 1)


def op_counts() -> OpCount:
    """Snapshot of the global counters since process start."""
    with _counts_lock:
        return OpCount(_counts.pairings, _counts.g1_exps,
                       _counts.g2_exps, _counts.gt_exps)


@contextmanager
def count_ops() -> Iterator[OpCount]:
    """Context manager filling an OpCount with the ops performed inside
    it.  Windows are per-thread: ops on other threads never leak in, so
    concurrent actors can each keep their own tally."""
    tally = OpCount()
    stack = getattr(_local_counts, "stack", None)
    if stack is None:
        stack = _local_counts.stack = []
    stack.append(tally)
    try:
        yield tally
    finally:
        stack.pop()                  # windows nest, so LIFO holds


# ---------------------------------------------------------------------------
# scalars

RandomScalarFn = Callable[[], int]


def scalar_to_bytes(s: int) -> bytes:
    return (s % GROUP_ORDER).to_bytes(SCALAR_LEN, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_LEN:
        raise MalformedEncoding("scalar must be %d bytes" % SCALAR_LEN)
    v = int.from_bytes(data, "big")
    if v >= GROUP_ORDER:
        raise MalformedEncoding("scalar out of range")
    return v


def random_scalar(rng: Optional[RandomScalarFn] = None) -> int:
    if rng is not None:
        return rng() % GROUP_ORDER
    return secrets.randbelow(GROUP_ORDER)


def random_nonzero_scalar(rng: Optional[RandomScalarFn] = None) -> int:
    while True:
        s = random_scalar(rng)
        if s != 0:
            return s


class DeterministicScalars:
    """Reproducible scalar stream; for tests and golden-file generation."""

    def __init__(self, seed: bytes) -> None:
        self._seed = seed
        self._ctr = 0

    def __call__(self) -> int:
        while True:
            block = hashlib.sha256(
                self._seed + self._ctr.to_bytes(8, "big")).digest()
            self._ctr += 1
            v = int.from_bytes(block, "big") % GROUP_ORDER
            if v != 0:
                return v


def hash_to_scalar(data: bytes) -> int:
    """Map arbitrary bytes to a nonzero scalar mod the group order.

    Domain byte 0x01 prefixes the input; on the (never observed) event of a
    zero residue the domain byte is incremented and the hash retried.
    """
    domain = 1
    while True:
        digest = hashlib.sha256(bytes([domain]) + data).digest()
        v = int.from_bytes(digest, "big") % GROUP_ORDER
        if v != 0:
            return v
        domain += 1


# ---------------------------------------------------------------------------
# group elements

def _scalar_nibbles(s: int) -> list:
    return [(s >> (4 * i)) & 0xF for i in range(_NIBBLES)]


class _Elem:
    """Shared plumbing for the three wrapper types (not exported)."""

    __slots__ = ("_raw", "_pow_uses", "_table")

    _limbs = 0
    _ser_len = 0
    _count_field = ""
    _tables_enabled = True

    def __init__(self, raw) -> None:
        self._raw = raw
        self._pow_uses = 0
        self._table = None

    @classmethod
    def _alloc(cls):
        return _ffi.new("uint64_t[%d]" % cls._limbs)

    # subclasses bind the C entry points
    _c_op = None        # group operation (add / mul)
    _c_exp = None       # scalar multiplication / exponentiation
    _c_inv = None       # negation / inversion
    _c_eq = None
    _c_ser = None
    _c_deser = None
    _c_in_group = None

    def __mul__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        out = self._alloc()
        type(self)._c_op(out, self._raw, other._raw)
        return type(self)(out)

    def inverse(self):
        out = self._alloc()
        type(self)._c_inv(out, self._raw)
        return type(self)(out)

    def __truediv__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self * other.inverse()

    def __pow__(self, exponent: int):
        s = exponent % GROUP_ORDER
        _bump(type(self)._count_field)
        if self._table is None and type(self)._tables_enabled:
            self._pow_uses += 1
            if self._pow_uses >= _TABLE_AFTER:
                self._build_table()
        if self._table is not None:
            return self._table_pow(s)
        out = self._alloc()
        type(self)._c_exp(out, self._raw, scalar_to_bytes(s), SCALAR_LEN)
        return type(self)(out)

    def _build_table(self) -> None:
        # table[i][d-1] holds self^(d * 16^i); 64 rows cover a 256-bit scalar
        op = type(self)._c_op
        rows = []
        base = self._raw
        for _ in range(_NIBBLES):
            row = [base]
            for _ in range(14):
                nxt = self._alloc()
                op(nxt, row[-1], base)
                row.append(nxt)
            rows.append(row)
            nxt_base = self._alloc()
            op(nxt_base, row[-1], base)    # 16*x = 15*x + x
            base = nxt_base
        self._table = rows

    def _table_pow(self, s: int):
        acc = self._identity_raw()
        op = type(self)._c_op
        table = self._table
        for i, nib in enumerate(_scalar_nibbles(s)):
            if nib:
                op(acc, acc, table[i][nib - 1])
        return type(self)(acc)

    @classmethod
    def _identity_raw(cls):
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return bool(type(self)._c_eq(self._raw, other._raw))

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.to_bytes()))

    def to_bytes(self) -> bytes:
        out = _ffi.new("uint8_t[%d]" % type(self)._ser_len)
        type(self)._c_ser(out, self._raw)
        return bytes(_ffi.buffer(out))

    @classmethod
    def from_bytes(cls, data: bytes):
        if len(data) != cls._ser_len:
            raise MalformedEncoding(
                "%s encoding must be %d bytes, got %d"
                % (cls.__name__, cls._ser_len, len(data)))
        out = cls._alloc()
        if cls._c_deser(out, bytes(data)) != 0:
            raise MalformedEncoding("invalid %s encoding" % cls.__name__)
        if cls._c_in_group is not None and not cls._c_in_group(out):
            raise MalformedEncoding("%s point outside the prime-order subgroup"
                                    % cls.__name__)
        return cls(out)

    def __repr__(self) -> str:
        return "%s(%s...)" % (type(self).__name__, self.to_bytes()[:8].hex())


class G1Elem(_Elem):
    """Element of the 48-byte source group."""

    __slots__ = ()
    _limbs = _G1_LIMBS
    _ser_len = G1_LEN
    _count_field = "g1_exps"
    _tables_enabled = _G1_TABLES

    _c_op = staticmethod(_lib.bls_g1_add)
    _c_exp = staticmethod(_lib.bls_g1_mul)
    _c_inv = staticmethod(_lib.bls_g1_neg)
    _c_eq = staticmethod(_lib.bls_g1_eq)
    _c_ser = staticmethod(_lib.bls_g1_to_bytes)
    _c_deser = staticmethod(_lib.bls_g1_from_bytes)
    _c_in_group = staticmethod(_lib.bls_g1_in_group)

    @classmethod
    def generator(cls) -> "G1Elem":
        out = cls._alloc()
        _lib.bls_g1_gen(out)
        return cls(out)

    @classmethod
    def identity(cls) -> "G1Elem":
        return cls(cls._identity_raw())

    @classmethod
    def _identity_raw(cls):
        out = cls._alloc()
        _lib.bls_g1_identity(out)
        return out

    def is_identity(self) -> bool:
        return bool(_lib.bls_g1_is_identity(self._raw))


class G2Elem(_Elem):
    """Element of the 96-byte source group."""

    __slots__ = ()
    _limbs = _G2_LIMBS
    _ser_len = G2_LEN
    _count_field = "g2_exps"

    _c_op = staticmethod(_lib.bls_g2_add)
    _c_exp = staticmethod(_lib.bls_g2_mul)
    _c_inv = staticmethod(_lib.bls_g2_neg)
    _c_eq = staticmethod(_lib.bls_g2_eq)
    _c_ser = staticmethod(_lib.bls_g2_to_bytes)
    _c_deser = staticmethod(_lib.bls_g2_from_bytes)
    _c_in_group = staticmethod(_lib.bls_g2_in_group)

    @classmethod
    def generator(cls) -> "G2Elem":
        out = cls._alloc()
        _lib.bls_g2_gen(out)
        return cls(out)

    @classmethod
    def identity(cls) -> "G2Elem":
        return cls(cls._identity_raw())

    @classmethod
    def _identity_raw(cls):
        out = cls._alloc()
        _lib.bls_g2_identity(out)
        return out

    def is_identity(self) -> bool:
        return bool(_lib.bls_g2_is_identity(self._raw))


class GTElem(_Elem):
    """Element of the 576-byte target group (pairing outputs)."""

    __slots__ = ()
    _limbs = _GT_LIMBS
    _ser_len = GT_LEN
    _count_field = "gt_exps"

    _c_op = staticmethod(_lib.bls_gt_mul)
    _c_exp = staticmethod(_lib.bls_gt_exp)
    _c_inv = staticmethod(_lib.bls_gt_inv)
    _c_eq = staticmethod(_lib.bls_gt_eq)
    _c_ser = staticmethod(_lib.bls_gt_to_bytes)
    _c_deser = staticmethod(_lib.bls_gt_from_bytes)
    _c_in_group = None      # deserializer already enforces order r

    @classmethod
    def one(cls) -> "GTElem":
        return cls(cls._identity_raw())

    @classmethod
    def _identity_raw(cls):
        out = cls._alloc()
        _lib.bls_gt_one(out)
        return out

    def is_one(self) -> bool:
        return bool(_lib.bls_gt_is_one(self._raw))


def pair(p: G1Elem, q: G2Elem) -> GTElem:
    """Bilinear pairing of a 48-byte-group element with a 96-byte-group one."""
    if not isinstance(p, G1Elem) or not isinstance(q, G2Elem):
        raise TypeError("pair() wants (G1Elem, G2Elem)")
    _bump("pairings")
    out = GTElem._alloc()
    _lib.bls_pairing(out, p._raw, q._raw)
    return GTElem(out)
