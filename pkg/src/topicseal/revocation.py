"""Delegable revocation over a complete binary tree of leaves.

Every delegation is tagged with a contiguous range of leaves.  A
publisher excludes revoked leaves by encrypting once per subtree of the
complete-subtree cover of the surviving leaves; a recipient decrypts
with whichever of their keys lines up with one cover subtree.

The tree rides in the last log2(n) pattern slots: each bit of a node's
root path occupies one slot (scalar 1 for a left turn, 2 for a right
turn), so "node v is an ancestor of node w" becomes "v's pattern can be
specialized to w's", and ordinary key qualification walks the tree.

A range holder carries two kinds of keys: extendable ones at the roots
of the range's canonical tiling (these qualify downward), and stripped
ones at every strict ancestor of those roots (usable directly when the
cover subtree is larger than the holder's range, but unable to reach
any leaf outside it).
"""

from __future__ import annotations

import bisect
import struct
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from topicseal import containers, wkdibe
from topicseal.groups import GTElem, hash_to_scalar
from topicseal.pattern import Uri, matches_uri

DEFAULT_LEAVES = 2 ** 16

BIT_SCALARS = (1, 2)                 # left turn, right turn

_PROOF_TAG = b"REVOKE"


class OutOfRange(Exception):
    """Requested subrange is not contained in the granting key's range."""


class Revoked(Exception):
    """Every leaf the holder owns is excluded from the ciphertext cover."""


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


@dataclass(frozen=True)
class LeafRange:
    """Inclusive run of leaves, 1-indexed, in a tree of n leaves."""

    first: int
    last: int
    n: int = DEFAULT_LEAVES

    def __post_init__(self):
        if not _is_pow2(self.n):
            raise ValueError("leaf count must be a power of two")
        if not 1 <= self.first <= self.last <= self.n:
            raise ValueError("need 1 <= first <= last <= n")

    @classmethod
    def full(cls, n: int = DEFAULT_LEAVES) -> "LeafRange":
        return cls(1, n, n)

    def __len__(self) -> int:
        return self.last - self.first + 1

    def contains_leaf(self, leaf: int) -> bool:
        return self.first <= leaf <= self.last

    def contains(self, other: "LeafRange") -> bool:
        return self.n == other.n and self.first <= other.first \
            and other.last <= self.last

    def overlaps(self, other: "LeafRange") -> bool:
        return self.n == other.n and self.first <= other.last \
            and other.first <= self.last

    def to_bytes(self) -> bytes:
        return struct.pack(">III", self.first, self.last, self.n)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LeafRange":
        if len(data) != 12:
            raise ValueError("leaf range encodes to 12 bytes")
        return cls(*struct.unpack(">III", data))


@dataclass(frozen=True)
class NodeId:
    """Root path of a tree node: 0 descends left, 1 descends right.

    The empty path is the root; prefixes are exactly the ancestors.
    """

    bits: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("path bits must be 0 or 1")

    @property
    def depth(self) -> int:
        return len(self.bits)

    def child(self, bit: int) -> "NodeId":
        return NodeId(self.bits + (bit,))

    def parent(self) -> "NodeId":
        if not self.bits:
            raise ValueError("root has no parent")
        return NodeId(self.bits[:-1])

    def is_ancestor_of(self, other: "NodeId") -> bool:
        """Strict-or-equal prefix relation."""
        return self.bits == other.bits[:self.depth]

    def ancestors(self) -> Iterable["NodeId"]:
        """Strict ancestors, root first."""
        for d in range(self.depth):
            yield NodeId(self.bits[:d])

    def span(self, n: int) -> LeafRange:
        width = n >> self.depth
        if width == 0:
            raise ValueError("path deeper than the tree")
        value = 0
        for b in self.bits:
            value = value * 2 + b
        first = value * width + 1
        return LeafRange(first, first + width - 1, n)

    @classmethod
    def for_leaf(cls, leaf: int, n: int) -> "NodeId":
        if not 1 <= leaf <= n or not _is_pow2(n):
            raise ValueError("leaf out of tree")
        depth = n.bit_length() - 1
        value = leaf - 1
        return cls(tuple((value >> (depth - 1 - i)) & 1
                         for i in range(depth)))

    def __str__(self) -> str:
        return "".join(map(str, self.bits)) or "(root)"

    def to_bytes(self) -> bytes:
        packed = bytearray((self.depth + 7) // 8)
        for i, b in enumerate(self.bits):
            if b:
                packed[i // 8] |= 0x80 >> (i % 8)
        return bytes([self.depth]) + bytes(packed)

    @classmethod
    def from_bytes(cls, data: bytes) -> Tuple["NodeId", int]:
        if not data:
            raise ValueError("empty node encoding")
        depth = data[0]
        nbytes = (depth + 7) // 8
        if len(data) < 1 + nbytes:
            raise ValueError("truncated node encoding")
        bits = tuple((data[1 + i // 8] >> (7 - i % 8)) & 1
                     for i in range(depth))
        return cls(bits), 1 + nbytes


def node_pattern(base: wkdibe.Pattern, node: NodeId,
                 n: int) -> wkdibe.Pattern:
    """Fill the trailing tree slots of ``base`` with the node's path
    bits; deeper slots stay free so descendants remain reachable."""
    depth = n.bit_length() - 1
    start = len(base) - depth
    if start < 0:
        raise ValueError("pattern too short for the tree depth")
    vals = list(base)
    for j, b in enumerate(node.bits):
        if vals[start + j] is not wkdibe.Free:
            raise ValueError("tree slot %d already fixed" % (start + j))
        vals[start + j] = BIT_SCALARS[b]
    return wkdibe.Pattern(vals)


# ---------------------------------------------------------------------------
# covers

def node_cover(rng: LeafRange) -> Tuple[List[NodeId], List[NodeId]]:
    """Canonical tiling of a range: the maximal aligned subtrees that
    exactly tile it, plus every strict ancestor of those roots."""
    roots: List[NodeId] = []

    def descend(node: NodeId) -> None:
        span = node.span(rng.n)
        if span.last < rng.first or span.first > rng.last:
            return
        if rng.contains(span):
            roots.append(node)
            return
        descend(node.child(0))
        descend(node.child(1))

    descend(NodeId())
    seen = set()
    ancestors: List[NodeId] = []
    for r in roots:
        for a in r.ancestors():
            if a not in seen:
                seen.add(a)
                ancestors.append(a)
    return roots, ancestors


class _IntervalSet:
    """Merged sorted leaf intervals for overlap queries."""

    def __init__(self, ranges: Iterable[LeafRange]):
        spans = sorted((r.first, r.last) for r in ranges)
        merged: List[Tuple[int, int]] = []
        for lo, hi in spans:
            if merged and lo <= merged[-1][1] + 1:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        self.spans = merged
        self._starts = [s[0] for s in merged]

    def overlaps(self, lo: int, hi: int) -> bool:
        # spans are disjoint and sorted, so only the rightmost span
        # starting at or before hi can reach back to lo
        i = bisect.bisect_right(self._starts, hi) - 1
        return i >= 0 and self.spans[i][1] >= lo

    def covers(self, lo: int, hi: int) -> bool:
        i = bisect.bisect_right(self._starts, lo) - 1
        return i >= 0 and self.spans[i][1] >= hi


def subset_cover(n: int, revoked: Iterable[LeafRange]) -> List[NodeId]:
    """Disjoint subtrees containing every unrevoked leaf and none of the
    revoked ones; the classic greedy descent, so the result is the
    minimal aligned tiling."""
    if not _is_pow2(n):
        raise ValueError("leaf count must be a power of two")
    bad = _IntervalSet(r for r in revoked if r.n == n)
    out: List[NodeId] = []

    def descend(node: NodeId) -> None:
        span = node.span(n)
        if not bad.overlaps(span.first, span.last):
            out.append(node)
            return
        if bad.covers(span.first, span.last):
            return
        descend(node.child(0))
        descend(node.child(1))

    descend(NodeId())
    return out


# ---------------------------------------------------------------------------
# key bundles

@dataclass
class RangeKeyBundle:
    """Keys granting decryption for every leaf in one range.

    ``qualifiable`` keys sit at the tiling roots and can delegate or
    specialize downward; ``unqualifiable`` keys sit at strict ancestors
    and only decrypt at exactly their own node.
    """

    range: LeafRange
    qualifiable: Dict[NodeId, wkdibe.SecretKey]
    unqualifiable: Dict[NodeId, wkdibe.SecretKey]

    def all_keys(self) -> Iterable[Tuple[NodeId, wkdibe.SecretKey]]:
        yield from self.qualifiable.items()
        yield from self.unqualifiable.items()


def _tree_limit(key: wkdibe.SecretKey, node: NodeId,
                n: int) -> wkdibe.SecretKey:
    """Make the key unqualifiable within the leaf tree: drop the
    extension elements of every tree slot below the node, leaving its
    URI and time freedoms intact (the drop is hereditary)."""
    depth = n.bit_length() - 1
    start = len(key.pattern) - depth
    return wkdibe.limit(key, range(start + node.depth, len(key.pattern)))


def derive_range_bundle(params: wkdibe.Params,
                        parent: Union[wkdibe.MasterKey, RangeKeyBundle],
                        base_pattern: wkdibe.Pattern, sub: LeafRange,
                        rng=None) -> RangeKeyBundle:
    """Build the key bundle for ``sub``.

    From the master key any range is reachable.  From a parent bundle
    the subrange must be contained in the parent's range; ancestor keys
    shallower than the enclosing parent tiling root are re-derived from
    the parent's own ancestor keys, whose tree freedoms are already
    gone, so the child can never outgrow the parent's leaves.
    """
    roots, ancestors = node_cover(sub)
    qualifiable: Dict[NodeId, wkdibe.SecretKey] = {}
    unqualifiable: Dict[NodeId, wkdibe.SecretKey] = {}

    if isinstance(parent, wkdibe.MasterKey):
        for node in roots:
            qualifiable[node] = wkdibe.key_der(
                params, parent, node_pattern(base_pattern, node, sub.n), rng)
        for node in ancestors:
            unqualifiable[node] = _tree_limit(wkdibe.key_der(
                params, parent, node_pattern(base_pattern, node, sub.n),
                rng), node, sub.n)
        return RangeKeyBundle(sub, qualifiable, unqualifiable)

    if not parent.range.contains(sub):
        raise OutOfRange("subrange %d..%d outside granted %d..%d"
                         % (sub.first, sub.last,
                            parent.range.first, parent.range.last))

    def enclosing_root(node: NodeId) -> Optional[NodeId]:
        for cand in parent.qualifiable:
            if cand.is_ancestor_of(node):
                return cand
        return None

    for node in roots:
        src = enclosing_root(node)
        if src is None:
            raise OutOfRange("no extendable parent key above %s" % node)
        qualifiable[node] = wkdibe.key_der(
            params, parent.qualifiable[src],
            node_pattern(base_pattern, node, sub.n), rng)
    for node in ancestors:
        src = enclosing_root(node)
        if src is not None:
            unqualifiable[node] = _tree_limit(wkdibe.key_der(
                params, parent.qualifiable[src],
                node_pattern(base_pattern, node, sub.n), rng), node, sub.n)
        elif node in parent.unqualifiable:
            # tree freedoms are already stripped; re-derivation can
            # still narrow URI/time and rerandomizes along the way
            unqualifiable[node] = wkdibe.key_der(
                params, parent.unqualifiable[node],
                node_pattern(base_pattern, node, sub.n), rng)
        else:
            raise wkdibe.NotExtendable(
                "ancestor %s unreachable from the parent bundle" % node)
    return RangeKeyBundle(sub, qualifiable, unqualifiable)


# ---------------------------------------------------------------------------
# revocation list

@dataclass(frozen=True)
class RevocationEntry:
    uri_text: str
    leaves: LeafRange
    expiry: Optional[datetime] = None


class RevocationList:
    """Per-URI revoked leaf ranges with a change epoch.

    Readers may snapshot concurrently; writers serialize and bump the
    epoch, which publishers watch to rotate symmetric keys.
    """

    def __init__(self, n: int = DEFAULT_LEAVES,
                 entries: Iterable[RevocationEntry] = (), epoch: int = 0):
        if not _is_pow2(n):
            raise ValueError("leaf count must be a power of two")
        self.n = n
        self._entries: List[RevocationEntry] = list(entries)
        self._epoch = epoch
        self._lock = threading.RLock()

    @property
    def epoch(self) -> int:
        with self._lock:
            return self._epoch

    def entries(self) -> List[RevocationEntry]:
        with self._lock:
            return list(self._entries)

    def revoke(self, uri, leaves: LeafRange,
               expiry: Optional[datetime] = None) -> None:
        if leaves.n != self.n:
            raise ValueError("range tree size differs from the list's")
        entry = RevocationEntry(str(uri), leaves, expiry)
        with self._lock:
            if any(e.uri_text == entry.uri_text and e.leaves == leaves
                   for e in self._entries):
                return               # idempotent, no epoch churn
            self._entries.append(entry)
            self._epoch += 1

    def unrevoke(self, uri, leaves: LeafRange) -> None:
        text = str(uri)
        with self._lock:
            kept = [e for e in self._entries
                    if not (e.uri_text == text and e.leaves == leaves)]
            if len(kept) != len(self._entries):
                self._entries = kept
                self._epoch += 1

    def cull(self, now: datetime) -> int:
        """Drop entries whose key expiry has passed; returns the count."""
        with self._lock:
            kept = [e for e in self._entries
                    if e.expiry is None or e.expiry > now]
            dropped = len(self._entries) - len(kept)
            if dropped:
                self._entries = kept
                self._epoch += 1
            return dropped

    def revoked_for(self, uri) -> List[LeafRange]:
        """Ranges whose URI filter matches the given concrete URI."""
        concrete = uri if isinstance(uri, Uri) else Uri.parse(str(uri))
        out = []
        with self._lock:
            for e in self._entries:
                filt = Uri.parse(e.uri_text)
                if filt == concrete or matches_uri(filt, concrete):
                    out.append(e.leaves)
        return out

    def to_bytes(self) -> bytes:
        with self._lock:
            sections = [struct.pack(">IQ", self.n, self._epoch)]
            for e in self._entries:
                uri_b = e.uri_text.encode()
                exp = b"" if e.expiry is None else \
                    e.expiry.strftime("%Y-%m-%dT%H").encode()
                sections.append(struct.pack(">H", len(uri_b)) + uri_b +
                                e.leaves.to_bytes() +
                                struct.pack(">H", len(exp)) + exp)
        return containers.pack(containers.TYPE_REVLIST, sections)

    @classmethod
    def from_bytes(cls, data: bytes) -> "RevocationList":
        sections = containers.unpack(data, containers.TYPE_REVLIST)
        if not sections:
            raise containers.ContainerError("revocation list header missing")
        n, epoch = struct.unpack(">IQ", sections[0])
        entries = []
        for raw in sections[1:]:
            (ulen,) = struct.unpack(">H", raw[:2])
            uri_text = raw[2:2 + ulen].decode()
            off = 2 + ulen
            leaves = LeafRange.from_bytes(raw[off:off + 12])
            off += 12
            (elen,) = struct.unpack(">H", raw[off:off + 2])
            off += 2
            exp_raw = raw[off:off + elen].decode()
            expiry = datetime.strptime(exp_raw, "%Y-%m-%dT%H") \
                if exp_raw else None
            entries.append(RevocationEntry(uri_text, leaves, expiry))
        return cls(n, entries, epoch)


# ---------------------------------------------------------------------------
# revocation-aware encryption

@dataclass(frozen=True)
class CoverCiphertext:
    """One cover subtree's ciphertext; the node id is public routing
    information, like the topic name itself."""

    node: NodeId
    body: wkdibe.WkdCiphertext

    def to_bytes(self) -> bytes:
        return self.node.to_bytes() + self.body.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> Tuple["CoverCiphertext", int]:
        node, off = NodeId.from_bytes(data)
        body = wkdibe.WkdCiphertext.from_bytes(
            data[off:off + wkdibe.WkdCiphertext.WIRE_LEN])
        return cls(node, body), off + wkdibe.WkdCiphertext.WIRE_LEN


def encrypt_revocable(params: wkdibe.Params, base_pattern: wkdibe.Pattern,
                      rl: RevocationList, uri, m: GTElem, rng=None,
                      prepared: Optional[wkdibe.Precomputed] = None
                      ) -> List[CoverCiphertext]:
    """Encrypt ``m`` once per cover subtree of the unrevoked leaves.

    The cover patterns differ only in the trailing tree slots, so one
    full precomputation is shared and adjusted from node to node.  A
    caller that already holds a precomputation for a nearby pattern can
    pass it in to skip the full computation entirely.
    """
    cover = subset_cover(rl.n, rl.revoked_for(uri))
    out: List[CoverCiphertext] = []
    for node in cover:
        pat = node_pattern(base_pattern, node, rl.n)
        if prepared is None:
            prepared = wkdibe.precompute(params, pat)
        else:
            prepared = wkdibe.adjust_precomputed(params, prepared, pat)
        out.append(CoverCiphertext(
            node, wkdibe.encrypt_prepared(params, prepared, m, rng)))
    return out


def decrypt_revocable(bundle: RangeKeyBundle,
                      cs: Sequence[CoverCiphertext]) -> GTElem:
    """Decrypt with whichever bundle key lines up with a cover subtree.

    Cases, tried per ciphertext: the bundle holds the node itself
    (either kind); or an extendable key sits above the node and is
    specialized down without touching the pairing.  Exactly one
    decryption is performed.
    """
    tree_depth = bundle.range.n.bit_length() - 1
    for cc in cs:
        key = bundle.qualifiable.get(cc.node) or \
            bundle.unqualifiable.get(cc.node)
        if key is None:
            for node, cand in bundle.qualifiable.items():
                if node.is_ancestor_of(cc.node):
                    # extend the key's own node bits down to the
                    # ciphertext's; its pattern already holds the prefix
                    start = len(cand.pattern) - tree_depth
                    vals = list(cand.pattern)
                    for j in range(node.depth, cc.node.depth):
                        vals[start + j] = BIT_SCALARS[cc.node.bits[j]]
                    key = wkdibe.non_delegable_key_der(
                        cand, wkdibe.Pattern(vals))
                    break
        if key is not None:
            return wkdibe.decrypt(key, cc.body)
    raise Revoked("no cover subtree is reachable from this key bundle")


# ---------------------------------------------------------------------------
# revocation proofs

@dataclass(frozen=True)
class RevocationProof:
    """Self-signed consent to revoke: the key being revoked signs a
    fixed statement derived from the hierarchy and range."""

    leaves: LeafRange
    key_pattern: wkdibe.Pattern
    signature: wkdibe.Signature

    def to_bytes(self) -> bytes:
        pat = self.key_pattern.to_bytes()
        return self.leaves.to_bytes() + struct.pack(">H", len(pat)) + pat + \
            self.signature.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RevocationProof":
        leaves = LeafRange.from_bytes(data[:12])
        (plen,) = struct.unpack(">H", data[12:14])
        pat, used = wkdibe.Pattern.from_bytes(data[14:14 + plen])
        if used != plen:
            raise ValueError("pattern length mismatch")
        sig = wkdibe.Signature.from_bytes(data[14 + plen:])
        return cls(leaves, pat, sig)


def proof_statement(hierarchy_id: bytes, leaves: LeafRange) -> int:
    return hash_to_scalar(_PROOF_TAG + hierarchy_id + leaves.to_bytes())


def make_revocation_proof(params: wkdibe.Params, key: wkdibe.SecretKey,
                          hierarchy_id: bytes, leaves: LeafRange,
                          rng=None) -> RevocationProof:
    m = proof_statement(hierarchy_id, leaves)
    sig = wkdibe.sign(params, key, m, rng)
    return RevocationProof(leaves, key.pattern, sig)


def verify_revocation_proof(params: wkdibe.Params, hierarchy_id: bytes,
                            proof: RevocationProof) -> bool:
    m = proof_statement(hierarchy_id, proof.leaves)
    return wkdibe.verify(params, proof.key_pattern, proof.signature, m)
