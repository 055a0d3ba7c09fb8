"""Principal-facing layer: hierarchies, key stores, delegation, hybrid
publish/subscribe encryption, and hourly epoch integrity.

A hierarchy is one independent encryption universe (public parameters
plus slot budgets for the URI, time, and revocation-tree regions).
Principals keep their authority in a KeyStore, hand slices of it to each
other as KeySets, and exchange messages whose symmetric payload key is
wrapped under the message's (URI, hour) pattern.
"""

import hashlib
import hmac
import os
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from dataclasses import field as dc_field
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Sequence, Tuple, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from topicseal import containers, revocation, wkdibe
from topicseal.groups import (
    GTElem,
    MalformedEncoding,
    hash_to_scalar,
    pair,
    random_scalar,
)
from topicseal.pattern import (
    DEFAULT_SPEC,
    TimePath,
    TimeRange,
    Uri,
    encode_key_pattern,
    encode_message_pattern,
    floor_hour,
    get_spec,
    path_covers,
    spec_for_depth,
    time_range_cover,
    truncate_spec,
    uri_covers,
    uri_key_accepts,
)

_KDF_DOMAIN = b"\x03"
_CHAIN_DOMAIN = b"\x04"
_NONCE_LEN = 12
_LEN32 = struct.Struct(">I")


class ProtocolError(Exception):
    pass


class InvalidConfig(ProtocolError):
    pass


class InsufficientAuthority(ProtocolError):
    """The store cannot produce the requested grant; ``uncovered`` names
    the time subtrees (or the URI) nothing in the store reaches."""

    def __init__(self, msg: str, uncovered: Sequence[str] = ()):
        super().__init__(msg)
        self.uncovered = tuple(uncovered)


class MalformedKey(ProtocolError):
    pass


class NoMatchingKey(ProtocolError):
    pass


class AuthFailure(ProtocolError):
    pass


class MalformedCiphertext(ProtocolError):
    pass


class NoSigningAuthority(ProtocolError):
    pass


class ChainExhausted(ProtocolError):
    pass


class IndexOutOfOrder(ProtocolError):
    pass


def _symmetric_key(gt: GTElem) -> bytes:
    return hashlib.sha256(_KDF_DOMAIN + gt.to_bytes()).digest()


def _chain_hash(k: bytes) -> bytes:
    return hashlib.sha256(_CHAIN_DOMAIN + k).digest()


class _RWLock:
    """Many concurrent readers, one exclusive writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


# ---------------------------------------------------------------------------
# hierarchies

@dataclass(frozen=True)
class Hierarchy:
    """One encryption universe and the slot layout of its patterns."""

    params: wkdibe.Params
    id: bytes
    label: str
    uri_slots: int
    time_slots: int
    tree_slots: int
    timespec: str

    @property
    def spec(self):
        return get_spec(self.timespec)

    @property
    def leaf_count(self) -> int:
        return 1 << self.tree_slots

    def message_pattern(self, uri: Uri, leaf: TimePath) -> wkdibe.Pattern:
        return encode_message_pattern(uri, leaf, self.uri_slots,
                                      self.time_slots, self.params.length)

    def to_bytes(self) -> bytes:
        return containers.pack(containers.TYPE_PARAMS, [
            self.params.to_bytes(),
            self.label.encode(),
            struct.pack("!HHH", self.uri_slots, self.time_slots,
                        self.tree_slots),
            self.timespec.encode(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Hierarchy":
        sections = containers.unpack(data, containers.TYPE_PARAMS)
        if len(sections) != 4:
            raise containers.ContainerError("hierarchy needs 4 sections")
        params = wkdibe.Params.from_bytes(sections[0])
        us, ts, zs = struct.unpack("!HHH", sections[2])
        spec_name = sections[3].decode()
        h = cls(params, hashlib.sha256(sections[0]).digest(),
                sections[1].decode(), us, ts, zs, spec_name)
        _check_hierarchy_shape(h)
        return h


def _check_hierarchy_shape(h: Hierarchy) -> None:
    if h.uri_slots + h.time_slots + h.tree_slots != h.params.length:
        raise InvalidConfig("slot budgets do not add up to the "
                            "parameter length")
    if get_spec(h.timespec).depth != h.time_slots:
        raise InvalidConfig("time-tree depth does not match the time "
                            "slot budget")


def _default_timespec(time_slots: int) -> str:
    try:
        return spec_for_depth(time_slots).name
    except ValueError:
        pass
    if time_slots < DEFAULT_SPEC.depth:
        return truncate_spec(DEFAULT_SPEC, time_slots).name
    raise InvalidConfig("no time-tree layout of depth %d" % time_slots)


def create_hierarchy(store: "KeyStore", label: str, uri_slots: int = 14,
                     time_slots: int = 6, tree_slots: int = 0,
                     signature_slot: bool = True,
                     timespec: Optional[str] = None,
                     rng=None) -> Hierarchy:
    """Set up a fresh hierarchy and install its master key in ``store``."""
    if uri_slots < 1:
        raise InvalidConfig("at least one URI slot is required")
    if time_slots < 1:
        raise InvalidConfig("at least one time slot is required")
    if tree_slots < 0 or tree_slots > 16:
        raise InvalidConfig("revocation-tree depth out of range")
    if uri_slots + time_slots + tree_slots < 2:
        raise InvalidConfig("pattern needs at least two slots")
    name = timespec if timespec is not None else _default_timespec(time_slots)
    if get_spec(name).depth != time_slots:
        raise InvalidConfig("time-tree depth does not match the time "
                            "slot budget")
    params, master = wkdibe.setup(uri_slots + time_slots + tree_slots,
                                  signature_slot, rng)
    h = Hierarchy(params, hashlib.sha256(params.to_bytes()).digest(),
                  label, uri_slots, time_slots, tree_slots, name)
    with store._lock.write():
        store.hierarchies[h.id] = h
        store.masters[h.id] = master
    return h


# ---------------------------------------------------------------------------
# key stores and delegation

@dataclass(frozen=True)
class KeyGrant:
    """One delegated key with the name-level scope it decrypts."""

    key: wkdibe.SecretKey
    uri: Uri
    time: TimePath
    leaf_range: Optional[revocation.LeafRange] = None


@dataclass(frozen=True)
class KeySet:
    """The unit of delegation: every grant shares one hierarchy and one
    URI.  ``chain_blob`` is an opaque certificate chain for transports
    that want one; this layer never interprets it."""

    hierarchy_id: bytes
    grants: Tuple[KeyGrant, ...]
    chain_blob: bytes = b""

    def to_bytes(self) -> bytes:
        sections = [self.hierarchy_id, self.chain_blob]
        sections += [_pack_grant(g) for g in self.grants]
        return containers.pack(containers.TYPE_KEYSET, sections)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeySet":
        try:
            sections = containers.unpack(data, containers.TYPE_KEYSET)
            if len(sections) < 2 or len(sections[0]) != 32:
                raise containers.ContainerError("bad key set layout")
            grants = tuple(_unpack_grant(s) for s in sections[2:])
        except (containers.ContainerError, MalformedEncoding, ValueError,
                struct.error) as e:
            raise MalformedKey(str(e))
        return cls(sections[0], grants, sections[1])


def _pack_grant(g: KeyGrant) -> bytes:
    uri_b = str(g.uri).encode()
    time_b = "/".join(g.time.labels).encode()
    lr_b = g.leaf_range.to_bytes() if g.leaf_range is not None else b""
    key_b = g.key.to_bytes()
    return struct.pack("!H", len(uri_b)) + uri_b \
        + struct.pack("!H", len(time_b)) + time_b \
        + struct.pack("!B", len(lr_b)) + lr_b + key_b


def _unpack_grant(data: bytes) -> KeyGrant:
    off = 0
    (n,) = struct.unpack_from("!H", data, off)
    off += 2
    uri = Uri.parse(data[off:off + n].decode())
    off += n
    (n,) = struct.unpack_from("!H", data, off)
    off += 2
    time_text = data[off:off + n].decode()
    off += n
    time = TimePath(tuple(time_text.split("/")) if time_text else ())
    (n,) = struct.unpack_from("!B", data, off)
    off += 1
    leaf_range = None
    if n:
        leaf_range = revocation.LeafRange.from_bytes(data[off:off + n])
        off += n
    key = wkdibe.SecretKey.from_bytes(data[off:])
    return KeyGrant(key, uri, time, leaf_range)


@dataclass(frozen=True)
class StoreEntry:
    hierarchy_id: bytes
    key: wkdibe.SecretKey
    uri: Uri
    time: TimePath
    leaf_range: Optional[revocation.LeafRange] = None

    def fingerprint(self) -> bytes:
        lr = self.leaf_range.to_bytes() if self.leaf_range else b""
        return hashlib.sha256(
            self.hierarchy_id + self.key.to_bytes()
            + str(self.uri).encode() + b"\x00"
            + "/".join(self.time.labels).encode() + b"\x00" + lr).digest()


class KeyStore:
    """A principal's keys: masters for owned hierarchies plus delegated
    entries.  Reads run concurrently; delegation, accept, and ratchet
    take the exclusive write side."""

    def __init__(self):
        self._lock = _RWLock()
        self.hierarchies: Dict[bytes, Hierarchy] = {}
        self.masters: Dict[bytes, wkdibe.MasterKey] = {}
        self._entries: List[StoreEntry] = []
        self._fingerprints = set()

    def add_hierarchy(self, h: Hierarchy) -> None:
        _check_hierarchy_shape(h)
        with self._lock.write():
            self.hierarchies[h.id] = h

    def entries(self, hierarchy_id: Optional[bytes] = None
                ) -> List[StoreEntry]:
        with self._lock.read():
            if hierarchy_id is None:
                return list(self._entries)
            return [e for e in self._entries
                    if e.hierarchy_id == hierarchy_id]

    def _add(self, entries: Sequence[StoreEntry]) -> None:
        # callers hold the write lock
        for e in entries:
            fp = e.fingerprint()
            if fp not in self._fingerprints:
                self._fingerprints.add(fp)
                self._entries.append(e)

    def to_bytes(self) -> bytes:
        with self._lock.read():
            hiers = [h.to_bytes() for h in self.hierarchies.values()]
            masters = [hid + mk.to_bytes()
                       for hid, mk in self.masters.items()]
            entries = [e.hierarchy_id + _pack_grant(
                KeyGrant(e.key, e.uri, e.time, e.leaf_range))
                for e in self._entries]
        head = struct.pack("!HHH", len(hiers), len(masters), len(entries))
        return containers.pack(containers.TYPE_KEYSTORE,
                               [head] + hiers + masters + entries)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyStore":
        try:
            sections = containers.unpack(data, containers.TYPE_KEYSTORE)
            nh, nm, ne = struct.unpack("!HHH", sections[0])
            if len(sections) != 1 + nh + nm + ne:
                raise containers.ContainerError("section count mismatch")
            store = cls()
            off = 1
            for s in sections[off:off + nh]:
                h = Hierarchy.from_bytes(s)
                store.hierarchies[h.id] = h
            off += nh
            for s in sections[off:off + nm]:
                store.masters[s[:32]] = wkdibe.MasterKey.from_bytes(s[32:])
            off += nm
            for s in sections[off:off + ne]:
                g = _unpack_grant(s[32:])
                entry = StoreEntry(s[:32], g.key, g.uri, g.time,
                                   g.leaf_range)
                store._fingerprints.add(entry.fingerprint())
                store._entries.append(entry)
        except (containers.ContainerError, MalformedEncoding, InvalidConfig,
                ValueError, struct.error) as e:
            raise MalformedKey(str(e))
        return store


def _subtree_end(h: Hierarchy, time: TimePath) -> datetime:
    if any(l == "+" for l in time.labels):
        return datetime.min
    return h.spec.path_bounds(time)[1]


def _entry_node(pattern: wkdibe.Pattern, tree_slots: int) -> revocation.NodeId:
    """Recover the tree node a bundle key sits at from its trailing
    slots: a run of bit scalars, then only free slots."""
    start = len(pattern) - tree_slots
    bits = []
    fixed_done = False
    for j in range(start, len(pattern)):
        v = pattern[j]
        if v is wkdibe.Free:
            fixed_done = True
        elif fixed_done:
            raise ValueError("tree bits are not a contiguous prefix")
        elif v not in revocation.BIT_SCALARS:
            raise ValueError("tree slot holds a non-bit value")
        else:
            bits.append(revocation.BIT_SCALARS.index(v))
    return revocation.NodeId(tuple(bits))


def _group_bundle(entries: Sequence[StoreEntry],
                  tree_slots: int) -> revocation.RangeKeyBundle:
    """Reassemble a flattened bundle: keys that can still fix the tree
    slot just below their node are the qualifiable half."""
    qualifiable = {}
    unqualifiable = {}
    for e in entries:
        node = _entry_node(e.key.pattern, tree_slots)
        below = len(e.key.pattern) - tree_slots + node.depth
        if node.depth == tree_slots or below in e.key.free_elems:
            qualifiable[node] = e.key
        else:
            unqualifiable[node] = e.key
    return revocation.RangeKeyBundle(entries[0].leaf_range, qualifiable,
                                     unqualifiable)


def delegate(store: KeyStore, hierarchy: Hierarchy, uri_prefix: Uri,
             time_range: TimeRange,
             leaf_range: Optional[revocation.LeafRange] = None,
             rng=None) -> KeySet:
    """Produce the key set granting ``uri_prefix`` over ``time_range``.

    One qualified key (or key bundle, for revocation-enabled
    hierarchies) is derived per subtree of the range cover.  Raises
    InsufficientAuthority naming every subtree the store cannot reach.
    """
    if isinstance(uri_prefix, str):
        uri_prefix = Uri.parse(uri_prefix)
    h = hierarchy
    spec = h.spec
    cover = time_range_cover(time_range, spec)
    if leaf_range is not None:
        if h.tree_slots == 0:
            raise InvalidConfig("hierarchy has no revocation tree")
        if leaf_range.n != h.leaf_count:
            raise InvalidConfig("leaf range sized for a different tree")

    with store._lock.write():
        master = store.masters.get(h.id)
        entries = [e for e in store._entries if e.hierarchy_id == h.id]
        grants: List[KeyGrant] = []
        uncovered: List[str] = []
        for t in cover:
            base = encode_key_pattern(uri_prefix, t, h.uri_slots,
                                      h.time_slots, h.params.length)
            made = None
            if master is not None:
                if leaf_range is not None:
                    bundle = revocation.derive_range_bundle(
                        h.params, master, base, leaf_range, rng)
                    made = [KeyGrant(k, uri_prefix, t, leaf_range)
                            for _, k in bundle.all_keys()]
                else:
                    made = [KeyGrant(
                        wkdibe.key_der(h.params, master, base, rng),
                        uri_prefix, t)]
            else:
                made = _delegate_from_entries(h, entries, uri_prefix, t,
                                              base, leaf_range, rng)
            if made is None:
                uncovered.append(spec.format(t))
            else:
                grants.extend(made)
        if uncovered:
            raise InsufficientAuthority(
                "store cannot grant %s over: %s"
                % (uri_prefix, ", ".join(uncovered)), uncovered)
        return KeySet(h.id, tuple(grants))


def _delegate_from_entries(h: Hierarchy, entries: Sequence[StoreEntry],
                           uri_prefix: Uri, t: TimePath,
                           base: wkdibe.Pattern,
                           leaf_range: Optional[revocation.LeafRange],
                           rng) -> Optional[List[KeyGrant]]:
    """One cover subtree's worth of keys from delegated entries, or None
    when nothing in the store reaches it."""
    candidates = [e for e in entries
                  if uri_covers(e.uri, uri_prefix)
                  and path_covers(e.time, t)]
    candidates.sort(key=lambda e: (len(e.uri.components),
                                   _subtree_end(h, e.time)), reverse=True)
    plain = [e for e in candidates if e.leaf_range is None]
    for e in plain:
        try:
            if leaf_range is not None:
                bundle = revocation.derive_range_bundle(
                    h.params,
                    revocation.RangeKeyBundle(
                        revocation.LeafRange.full(h.leaf_count),
                        {revocation.NodeId(()): e.key}, {}),
                    base, leaf_range, rng)
                return [KeyGrant(k, uri_prefix, t, leaf_range)
                        for _, k in bundle.all_keys()]
            return [KeyGrant(wkdibe.key_der(h.params, e.key, base, rng),
                             uri_prefix, t)]
        except wkdibe.NotExtendable:
            continue
    # bundle-restricted sources: regroup the flattened keys, then narrow
    groups: Dict[Tuple, List[StoreEntry]] = {}
    for e in candidates:
        if e.leaf_range is None:
            continue
        k = (str(e.uri), e.time.labels, e.leaf_range)
        groups.setdefault(k, []).append(e)
    for group in groups.values():
        eff = leaf_range if leaf_range is not None else group[0].leaf_range
        if not group[0].leaf_range.contains(eff):
            continue
        try:
            bundle = revocation.derive_range_bundle(
                h.params, _group_bundle(group, h.tree_slots), base, eff,
                rng)
        except (wkdibe.NotExtendable, revocation.OutOfRange, ValueError):
            continue
        return [KeyGrant(k, uri_prefix, t, eff)
                for _, k in bundle.all_keys()]
    return None


def _key_well_formed(params: wkdibe.Params, key: wkdibe.SecretKey) -> bool:
    """Pairing checks tying every component of a received key to the
    same blinding factor; a tampered component cannot pass."""
    q = params.g3
    for i, a in key.pattern.fixed():
        q = q * params.h[i] ** a
    if pair(key.k0, params.g) != params.pairing_cache * pair(q, key.k1):
        return False
    for i, b in key.free_elems.items():
        if key.pattern[i] is not wkdibe.Free:
            return False
        if pair(b, params.g) != pair(params.h[i], key.k1):
            return False
    if key.sig_elem is not None:
        if params.h_s is None:
            return False
        if pair(key.sig_elem, params.g) != pair(params.h_s, key.k1):
            return False
    return True


def _check_grant_shape(h: Hierarchy, g: KeyGrant) -> None:
    expected = encode_key_pattern(g.uri, g.time, h.uri_slots, h.time_slots,
                                  h.params.length)
    if g.leaf_range is None:
        if g.key.pattern != expected:
            raise MalformedKey("key pattern does not encode its stated "
                               "URI and time")
        return
    if h.tree_slots == 0:
        raise MalformedKey("leaf range in a hierarchy without a "
                           "revocation tree")
    if g.leaf_range.n != h.leaf_count:
        raise MalformedKey("leaf range sized for a different tree")
    try:
        node = _entry_node(g.key.pattern, h.tree_slots)
    except ValueError as e:
        raise MalformedKey(str(e))
    if g.key.pattern != revocation.node_pattern(expected, node,
                                                g.leaf_range.n):
        raise MalformedKey("key pattern does not encode its stated "
                           "URI and time")
    if not node.span(g.leaf_range.n).overlaps(g.leaf_range):
        raise MalformedKey("key node lies outside its stated leaf range")


def accept_delegation(store: KeyStore, ks: KeySet) -> KeyStore:
    """Validate a received key set and fold it into the store.

    Every key is checked structurally against its stated scope and
    cryptographically by pairing; accepting the same set twice is a
    no-op.
    """
    h = store.hierarchies.get(ks.hierarchy_id)
    if h is None:
        raise MalformedKey("key set names an unknown hierarchy")
    for i, g in enumerate(ks.grants):
        if len(g.key.pattern) != h.params.length:
            raise MalformedKey("grant %d has the wrong pattern length" % i)
        _check_grant_shape(h, g)
        if not _key_well_formed(h.params, g.key):
            raise MalformedKey("grant %d failed well-formedness checks" % i)
    with store._lock.write():
        store._add([StoreEntry(ks.hierarchy_id, g.key, g.uri, g.time,
                               g.leaf_range) for g in ks.grants])
    return store


# ---------------------------------------------------------------------------
# hybrid messages

@dataclass(frozen=True)
class HybridCiphertext:
    """A published message: the payload key wrapped once per live cover
    subtree, and the AEAD payload itself.  URI and time ride along in
    plaintext; they are routing metadata, not secrets."""

    hierarchy_id: bytes
    uri: Uri
    time: TimePath
    wrapped: Tuple[revocation.CoverCiphertext, ...]
    nonce: bytes
    payload: bytes
    epoch: Optional[int] = None
    # serialization of ``wrapped``, filled on first use; excluded from
    # init so dataclasses.replace never carries a stale copy
    _wrapped_blob: Optional[bytes] = dc_field(
        default=None, init=False, compare=False, repr=False)

    def wrapped_bytes(self) -> bytes:
        blob = self._wrapped_blob
        if blob is None:
            blob = b"".join(cc.to_bytes() for cc in self.wrapped)
            object.__setattr__(self, "_wrapped_blob", blob)
        return blob

    def to_bytes(self) -> bytes:
        epoch_b = b"" if self.epoch is None \
            else struct.pack("!Q", self.epoch)
        return containers.pack(containers.TYPE_MESSAGE, [
            self.hierarchy_id,
            str(self.uri).encode(),
            "/".join(self.time.labels).encode(),
            epoch_b,
            self.wrapped_bytes(),
            self.nonce,
            self.payload,
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "HybridCiphertext":
        try:
            sections, uri, time, epoch = _message_sections(data)
            wrapped = []
            blob, off = sections[4], 0
            while off < len(blob):
                cc, used = revocation.CoverCiphertext.from_bytes(blob[off:])
                wrapped.append(cc)
                off += used
            if not wrapped:
                raise containers.ContainerError("message wraps no key")
        except (containers.ContainerError, MalformedEncoding,
                ValueError, struct.error) as e:
            raise MalformedCiphertext(str(e))
        c = cls(sections[0], uri, time, tuple(wrapped), sections[5],
                sections[6], epoch)
        object.__setattr__(c, "_wrapped_blob", sections[4])
        return c


def _message_sections(data: bytes):
    """Split a serialized message into its sections and decode the cheap
    fields, leaving the wrapped keys as raw bytes."""
    sections = containers.unpack(data, containers.TYPE_MESSAGE)
    if len(sections) != 7 or len(sections[0]) != 32:
        raise containers.ContainerError("bad message layout")
    uri = Uri.parse(sections[1].decode())
    time_text = sections[2].decode()
    time = TimePath(tuple(time_text.split("/")) if time_text else ())
    if len(sections[3]) not in (0, 8):
        raise containers.ContainerError("bad epoch tag")
    epoch = None if not sections[3] \
        else struct.unpack("!Q", sections[3])[0]
    if len(sections[5]) != _NONCE_LEN:
        raise containers.ContainerError("bad nonce length")
    return sections, uri, time, epoch


def message_routing_info(data: bytes
                         ) -> Tuple[Uri, TimePath, Optional[int]]:
    """The plaintext routing fields of a serialized message, decoded
    without touching the wrapped keys."""
    try:
        _, uri, time, epoch = _message_sections(data)
    except (containers.ContainerError, MalformedEncoding, ValueError,
            struct.error) as e:
        raise MalformedCiphertext(str(e))
    return uri, time, epoch


def _routing_aad(hid: bytes, uri: Uri, leaf: TimePath,
                 epoch: Optional[int]) -> bytes:
    epoch_b = b"" if epoch is None else struct.pack("!Q", epoch)
    return hashlib.sha256(hid + str(uri).encode() + b"\x00"
                          + "/".join(leaf.labels).encode() + b"\x00"
                          + epoch_b).digest()


@dataclass
class _PublishState:
    """Everything reusable between two messages of one key epoch."""

    uri_obj: Uri
    uri_text: str
    hour: datetime
    hour_end: datetime
    epoch: Optional[int]
    leaf: TimePath
    key: bytes
    wrapped: Tuple[revocation.CoverCiphertext, ...]
    wrapped_blob: bytes
    aead: ChaCha20Poly1305
    aad: bytes
    wire_prefix: bytes
    # the key above is exclusive to this state, so a counter nonce can
    # never repeat under it; rotation swaps in a fresh key anyway
    nonce_ctr: int = 0

    def next_nonce(self) -> bytes:
        n = self.nonce_ctr
        self.nonce_ctr = n + 1
        return n.to_bytes(_NONCE_LEN, "big")


class PublisherSession:
    """Per-(publisher, URI-stream) encryption state: the current wrapped
    key, the sliding precomputation, and the live epoch chain.  Single
    owner; hand it between threads, never share it."""

    def __init__(self, hierarchy: Hierarchy,
                 store: Optional[KeyStore] = None,
                 revocations: Optional[revocation.RevocationList] = None,
                 clock=datetime.utcnow, rng=None):
        if revocations is None and hierarchy.tree_slots:
            revocations = revocation.RevocationList(n=hierarchy.leaf_count)
        if revocations is not None and \
                revocations.n != hierarchy.leaf_count:
            raise InvalidConfig("revocation list sized for a different "
                                "tree")
        self.hierarchy = hierarchy
        self.store = store
        self.revocations = revocations
        self.clock = clock
        self.rng = rng
        self.wkd_encrypts = 0
        self.precompute_count = 0
        self.adjust_count = 0
        self._state: Optional[_PublishState] = None
        self._prepared: Optional[wkdibe.Precomputed] = None
        self._epoch_walker: Optional[_ChainWalker] = None
        self._epoch_header: Optional[EpochIntegrityHeader] = None
        self._epoch_last = -1


def _publish_state(session: PublisherSession, uri: Uri,
                   now: Optional[datetime]) -> _PublishState:
    """Current epoch state, rotating the wrapped key first if the URI,
    the hour, or the revocation epoch moved.  An hour tick costs a
    single one-slot adjustment of the cached precomputation."""
    if now is None:
        now = session.clock()
    rl = session.revocations
    epoch = rl.epoch if rl is not None else None
    state = session._state
    if state is not None and state.epoch == epoch \
            and state.hour <= now < state.hour_end \
            and (uri is state.uri_obj or str(uri) == state.uri_text):
        return state
    if not uri.is_concrete():
        raise ValueError("publishing needs a concrete URI")
    h = session.hierarchy
    hour = floor_hour(now)
    leaf = h.spec.leaf_path(hour)
    base = h.message_pattern(uri, leaf)
    if session._prepared is None:
        session._prepared = wkdibe.precompute(h.params, base)
        session.precompute_count += 1
    elif session._prepared.pattern != base:
        session._prepared = wkdibe.adjust_precomputed(
            h.params, session._prepared, base)
        session.adjust_count += 1
    gt = h.params.pairing_cache ** random_scalar(session.rng)
    if rl is None:
        wrapped = (revocation.CoverCiphertext(
            revocation.NodeId(()),
            wkdibe.encrypt_prepared(h.params, session._prepared, gt,
                                    session.rng)),)
    else:
        wrapped = tuple(revocation.encrypt_revocable(
            h.params, base, rl, uri, gt, session.rng,
            prepared=session._prepared))
    session.wkd_encrypts += len(wrapped)
    key = _symmetric_key(gt)
    blob = b"".join(cc.to_bytes() for cc in wrapped)
    epoch_b = b"" if epoch is None else struct.pack("!Q", epoch)
    prefix = containers.pack_prefix(containers.TYPE_MESSAGE, [
        h.id, str(uri).encode(), "/".join(leaf.labels).encode(),
        epoch_b, blob], 7) + _LEN32.pack(_NONCE_LEN)
    state = _PublishState(uri, str(uri), hour, hour + timedelta(hours=1),
                          epoch, leaf, key, wrapped, blob,
                          ChaCha20Poly1305(key),
                          _routing_aad(h.id, uri, leaf, epoch), prefix)
    session._state = state
    return state


def publish_encrypt(session: PublisherSession, uri: Union[Uri, str],
                    now: Optional[datetime],
                    plaintext: bytes) -> HybridCiphertext:
    """Encrypt one message.  The wrapped key is reused until the URI,
    the hour, or the revocation epoch moves; only then does the session
    touch the pairing group again."""
    if isinstance(uri, str):
        uri = Uri.parse(uri)
    state = _publish_state(session, uri, now)
    nonce = state.next_nonce()
    payload = state.aead.encrypt(nonce, bytes(plaintext), state.aad)
    c = HybridCiphertext(session.hierarchy.id, uri, state.leaf,
                         state.wrapped, nonce, payload, state.epoch)
    object.__setattr__(c, "_wrapped_blob", state.wrapped_blob)
    return c


def publish_encrypt_wire(session: PublisherSession, uri: Union[Uri, str],
                         now: Optional[datetime],
                         plaintext: bytes) -> bytes:
    """Encrypt one message straight to its wire encoding; bitwise what
    ``publish_encrypt(...).to_bytes()`` yields for the same randomness.

    The container prefix is cached per epoch, so the steady-state cost
    here is one AEAD seal and two joins.
    """
    if isinstance(uri, str):
        uri = Uri.parse(uri)
    state = _publish_state(session, uri, now)
    nonce = state.next_nonce()
    sealed = state.aead.encrypt(nonce, plaintext if type(plaintext) is bytes
                                else bytes(plaintext), state.aad)
    return b"".join((state.wire_prefix, nonce, _LEN32.pack(len(sealed)),
                     sealed))


_HOT_LIMIT = 16


class DecryptionCache:
    """Maps a wrapped key (by digest) to the symmetric key it carries,
    so repeat wrappings skip the pairing entirely.

    On top of that it keeps a handful of hot wire prefixes.  Every byte
    before the nonce is constant within a key epoch, so an exact prefix
    match proves the routing fields are the very bytes that produced
    the cached key and AAD; the per-message authentication tag still
    gets checked.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._keys: Dict[bytes, bytes] = {}
        self._hot: List[Tuple[bytes, ChaCha20Poly1305, bytes]] = []
        self.hits = 0
        self.misses = 0
        self.wkd_decrypts = 0

    def get(self, digest: bytes) -> Optional[bytes]:
        with self._lock:
            k = self._keys.get(digest)
            if k is None:
                self.misses += 1
            else:
                self.hits += 1
            return k

    def put(self, digest: bytes, key: bytes) -> None:
        with self._lock:
            self._keys[digest] = key

    def hot_open(self, data: bytes) -> Optional[bytes]:
        """Decrypt against a cached epoch prefix, or None to say the
        caller must take the parsing path."""
        for prefix, aead, aad in self._hot:
            if not data.startswith(prefix):
                continue
            off = len(prefix)
            end = off + _NONCE_LEN
            if len(data) < end + 4:
                return None
            (plen,) = _LEN32.unpack_from(data, end)
            if end + 4 + plen != len(data):
                return None
            self.hits += 1        # informational; a race only undercounts
            try:
                return aead.decrypt(data[off:end], data[end + 4:], aad)
            except InvalidTag:
                raise AuthFailure("payload failed authentication")
        return None

    def hot_install(self, prefix: bytes, key: bytes, aad: bytes) -> None:
        aead = ChaCha20Poly1305(key)
        with self._lock:
            if any(p == prefix for p, _, _ in self._hot):
                return
            self._hot.append((prefix, aead, aad))
            if len(self._hot) > _HOT_LIMIT:
                self._hot.pop(0)


def _open_payload(key: bytes, c: HybridCiphertext) -> bytes:
    aad = _routing_aad(c.hierarchy_id, c.uri, c.time, c.epoch)
    try:
        return ChaCha20Poly1305(key).decrypt(c.nonce, c.payload, aad)
    except InvalidTag:
        raise AuthFailure("payload failed authentication")


def subscribe_decrypt(store: KeyStore, cache: DecryptionCache,
                      c: HybridCiphertext) -> bytes:
    """Decrypt a received message with whatever store entry covers it.

    The store search is structural (no pairings); one WKD-IBE
    decryption runs per fresh wrapped key, and none at all when the
    cache already knows it.
    """
    h = store.hierarchies.get(c.hierarchy_id)
    if h is None:
        raise NoMatchingKey("message belongs to an unknown hierarchy")
    if len(c.nonce) != _NONCE_LEN or not c.uri.is_concrete() \
            or len(c.time) != h.time_slots:
        raise MalformedCiphertext("message fields are inconsistent")
    digest = hashlib.sha256(c.hierarchy_id + c.wrapped_bytes()).digest()
    known = cache.get(digest)
    if known is not None:
        return _open_payload(known, c)

    try:
        base = h.message_pattern(c.uri, c.time)
    except ValueError as e:
        raise MalformedCiphertext(str(e))
    if any(cc.node.depth > h.tree_slots for cc in c.wrapped):
        raise MalformedCiphertext("cover node deeper than the tree")
    candidates = [e for e in store.entries(c.hierarchy_id)
                  if uri_key_accepts(e.uri, c.uri)
                  and path_covers(e.time, c.time)]
    candidates.sort(key=lambda e: (len(e.uri.components),
                                   _subtree_end(h, e.time)), reverse=True)
    for entry in candidates:
        for cc in c.wrapped:
            if h.tree_slots:
                target = revocation.node_pattern(base, cc.node,
                                                 h.leaf_count)
            else:
                target = base
            try:
                dk = wkdibe.non_delegable_key_der(entry.key, target)
                gt = wkdibe.decrypt(dk, cc.body)
            except (wkdibe.NotAMatch, wkdibe.NotExtendable,
                    wkdibe.PatternMismatch):
                continue
            cache.wkd_decrypts += 1
            key = _symmetric_key(gt)
            cache.put(digest, key)
            return _open_payload(key, c)
    if candidates and h.tree_slots:
        raise revocation.Revoked(
            "keys cover the name but not the message's tree nodes")
    raise NoMatchingKey("no store entry covers %s at %s"
                        % (c.uri, "/".join(c.time.labels)))


def subscribe_decrypt_wire(store: KeyStore, cache: DecryptionCache,
                           data: bytes) -> bytes:
    """Decrypt a message straight from its wire encoding.

    Messages from a wire prefix seen before skip parsing outright; a
    fresh prefix with a cached wrapped key still skips deserializing
    the group elements.  Only a genuinely new wrapped key pays for a
    full parse and a WKD-IBE decryption.
    """
    hot = cache.hot_open(data)
    if hot is not None:
        return hot
    try:
        sections, uri, time, epoch = _message_sections(data)
    except (containers.ContainerError, MalformedEncoding, ValueError,
            struct.error) as e:
        raise MalformedCiphertext(str(e))
    digest = hashlib.sha256(sections[0] + sections[4]).digest()
    known = cache.get(digest)
    if known is None:
        plain = subscribe_decrypt(store, cache,
                                  HybridCiphertext.from_bytes(data))
        known = cache.get(digest)
    else:
        shell = HybridCiphertext(sections[0], uri, time, (), sections[5],
                                 sections[6], epoch)
        plain = _open_payload(known, shell)
    if known is not None:
        # the successful open above vouches for these exact bytes
        prefix = data[:len(data) - _NONCE_LEN - 4 - len(sections[6])]
        cache.hot_install(prefix, known,
                          _routing_aad(sections[0], uri, time, epoch))
    return plain


# ---------------------------------------------------------------------------
# epoch integrity

@dataclass(frozen=True)
class EpochIntegrityHeader:
    """Commits one hour's MAC chain: the chain tail, the pattern it was
    signed under, and the anonymous signature itself."""

    chain_commitment: bytes
    pattern_digest: bytes
    wkd_signature: wkdibe.Signature
    chain_length: int
    uri: Uri
    time: TimePath

    def to_bytes(self) -> bytes:
        return containers.pack(containers.TYPE_EPOCH, [
            self.chain_commitment,
            self.pattern_digest,
            struct.pack("!I", self.chain_length),
            self.wkd_signature.to_bytes(),
            str(self.uri).encode(),
            "/".join(self.time.labels).encode(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "EpochIntegrityHeader":
        try:
            sections = containers.unpack(data, containers.TYPE_EPOCH)
            if len(sections) != 6 or len(sections[0]) != 32 \
                    or len(sections[1]) != 32:
                raise containers.ContainerError("bad epoch header layout")
            (length,) = struct.unpack("!I", sections[2])
            sig = wkdibe.Signature.from_bytes(sections[3])
            uri = Uri.parse(sections[4].decode())
            time_text = sections[5].decode()
            time = TimePath(tuple(time_text.split("/")) if time_text
                            else ())
        except (containers.ContainerError, MalformedEncoding,
                ValueError, struct.error) as e:
            raise MalformedCiphertext(str(e))
        return cls(sections[0], sections[1], sig, length, uri, time)


@dataclass(frozen=True)
class MacTag:
    index: int
    mac: bytes
    key_reveal: bytes

    def to_bytes(self) -> bytes:
        return struct.pack("!I", self.index) + self.mac + self.key_reveal

    @classmethod
    def from_bytes(cls, data: bytes) -> "MacTag":
        if len(data) != 4 + 32 + 32:
            raise MalformedCiphertext("bad MAC tag length")
        (index,) = struct.unpack("!I", data[:4])
        return cls(index, data[4:36], data[36:68])


class _ChainWalker:
    """Forward walk over the keys of a hash chain, storing spaced
    checkpoints instead of the whole chain and re-deriving one segment
    at a time."""

    def __init__(self, seed: bytes, length: int):
        self.length = length
        self.spacing = max(1, -(-length // 10))
        self.max_stored = 0
        checkpoints = {length: seed}
        cur = seed
        idx = length
        while idx > 0:
            idx -= 1
            cur = _chain_hash(cur)
            if idx and idx % self.spacing == 0:
                checkpoints[idx] = cur
        self.commitment = cur
        self.checkpoints = checkpoints
        self.window: Dict[int, bytes] = {}
        self._track()

    def _track(self) -> None:
        n = len(self.checkpoints) + len(self.window)
        if n > self.max_stored:
            self.max_stored = n

    def key(self, index: int) -> bytes:
        """The chain key at ``index`` (1-based; the commitment is index
        0).  Indices must be requested in increasing order."""
        if not 1 <= index <= self.length:
            raise ValueError("chain index out of range")
        self.window = {i: v for i, v in self.window.items() if i >= index}
        self.checkpoints = {i: v for i, v in self.checkpoints.items()
                            if i >= index}
        if index in self.window:
            return self.window[index]
        if index in self.checkpoints:
            return self.checkpoints[index]
        above = min(i for i in self.checkpoints if i > index)
        cur = self.checkpoints[above]
        for j in range(above - 1, index - 1, -1):
            cur = _chain_hash(cur)
            self.window[j] = cur
        self._track()
        return cur


def start_epoch_integrity(session: PublisherSession, uri: Union[Uri, str],
                          hour: datetime, chain_length: int,
                          seed: Optional[bytes] = None
                          ) -> EpochIntegrityHeader:
    """Open a MAC epoch: build the hash chain, commit to its tail, and
    sign the commitment anonymously under the (URI, hour) pattern."""
    if isinstance(uri, str):
        uri = Uri.parse(uri)
    if chain_length < 1:
        raise ValueError("chain length must be positive")
    h = session.hierarchy
    if h.params.h_s is None:
        raise NoSigningAuthority("hierarchy has no signature slot")
    if session.store is None:
        raise NoSigningAuthority("session has no key store to sign with")
    leaf = h.spec.leaf_path(floor_hour(hour))
    epat = h.message_pattern(uri, leaf)
    walker = _ChainWalker(seed if seed is not None else os.urandom(32),
                          chain_length)
    m = hash_to_scalar(walker.commitment)

    sig = None
    master = session.store.masters.get(h.id)
    if master is not None:
        ek = wkdibe.key_der(h.params, master, epat, session.rng)
        sig = wkdibe.sign(h.params, ek, m, session.rng)
    else:
        candidates = [e for e in session.store.entries(h.id)
                      if e.key.sig_elem is not None
                      and uri_key_accepts(e.uri, uri)
                      and path_covers(e.time, leaf)]
        candidates.sort(key=lambda e: (len(e.uri.components),
                                       _subtree_end(h, e.time)),
                        reverse=True)
        for e in candidates:
            try:
                sig = wkdibe.generalized_sign(h.params, e.key, epat, m,
                                              session.rng)
                break
            except (wkdibe.NotAMatch, wkdibe.NotExtendable,
                    wkdibe.NoSignatureSlot):
                continue
    if sig is None:
        raise NoSigningAuthority("no signing-capable key covers %s at %s"
                                 % (uri, "/".join(leaf.labels)))
    header = EpochIntegrityHeader(walker.commitment, epat.digest(), sig,
                                  chain_length, uri, leaf)
    session._epoch_walker = walker
    session._epoch_header = header
    session._epoch_last = -1
    return header


def verify_epoch_header(hierarchy: Hierarchy, header: EpochIntegrityHeader,
                        uri: Union[Uri, str],
                        at: Union[datetime, TimePath]) -> bool:
    """Check the header's signature against the pattern the verifier
    expects for (uri, hour); a header minted for any other name or hour
    fails."""
    if isinstance(uri, str):
        uri = Uri.parse(uri)
    leaf = at if isinstance(at, TimePath) \
        else hierarchy.spec.leaf_path(floor_hour(at))
    try:
        epat = hierarchy.message_pattern(uri, leaf)
    except ValueError:
        return False
    if epat.digest() != header.pattern_digest:
        return False
    return wkdibe.verify(hierarchy.params, epat, header.wkd_signature,
                         hash_to_scalar(header.chain_commitment))


def mac_message(session: PublisherSession, index: int,
                payload: bytes) -> MacTag:
    """Authenticate one message of the current epoch with its chain key.
    Indices are strictly increasing within the epoch."""
    walker = session._epoch_walker
    if walker is None:
        raise ProtocolError("no epoch is active; start one first")
    if index >= walker.length:
        raise ChainExhausted("index %d exceeds the %d-key chain"
                             % (index, walker.length))
    if index <= session._epoch_last:
        raise IndexOutOfOrder("index %d not above %d"
                              % (index, session._epoch_last))
    key = walker.key(index + 1)
    session._epoch_last = index
    return MacTag(index,
                  hmac.new(key, payload, hashlib.sha256).digest(), key)


def verify_mac(header: EpochIntegrityHeader, tag: MacTag, payload: bytes,
               prev_index: int = -1) -> bool:
    """Check one message against its epoch commitment: the revealed key
    must hash forward to the committed tail and the MAC must match."""
    if tag.index >= header.chain_length:
        raise ChainExhausted("index %d exceeds the %d-key chain"
                             % (tag.index, header.chain_length))
    if tag.index <= prev_index:
        raise IndexOutOfOrder("index %d not above %d"
                              % (tag.index, prev_index))
    cur = tag.key_reveal
    for _ in range(tag.index + 1):
        cur = _chain_hash(cur)
    if not hmac.compare_digest(cur, header.chain_commitment):
        return False
    want = hmac.new(tag.key_reveal, payload, hashlib.sha256).digest()
    return hmac.compare_digest(want, tag.mac)


# ---------------------------------------------------------------------------
# forward secrecy

def ratchet_forward(store: KeyStore, now: datetime) -> KeyStore:
    """Advance the store to ``now``: drop keys for elapsed subtrees and
    re-qualify straddling ones to begin at the current hour, so old
    messages become undecryptable even if the store later leaks."""
    cutoff = floor_hour(now)
    with store._lock.write():
        kept: List[StoreEntry] = []
        fingerprints = set()

        def add(e: StoreEntry) -> None:
            fp = e.fingerprint()
            if fp not in fingerprints:
                fingerprints.add(fp)
                kept.append(e)

        for e in store._entries:
            h = store.hierarchies.get(e.hierarchy_id)
            if h is None or any(l == "+" for l in e.time.labels):
                add(e)
                continue
            lo, hi = h.spec.path_bounds(e.time)
            if hi < cutoff:
                continue
            if lo >= cutoff:
                add(e)
                continue
            node_bits = None
            if e.leaf_range is not None:
                node_bits = _entry_node(e.key.pattern, h.tree_slots)
            for t in time_range_cover(TimeRange(cutoff, hi), h.spec):
                target = encode_key_pattern(e.uri, t, h.uri_slots,
                                            h.time_slots, h.params.length)
                if node_bits is not None:
                    target = revocation.node_pattern(target, node_bits,
                                                     e.leaf_range.n)
                try:
                    nk = wkdibe.key_der(h.params, e.key, target)
                except wkdibe.NotExtendable:
                    continue
                add(StoreEntry(e.hierarchy_id, nk, e.uri, t, e.leaf_range))
        store._entries = kept
        store._fingerprints = fingerprints
    return store
