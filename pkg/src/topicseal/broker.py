"""In-process publish-subscribe simulation and benchmark harness.

A Broker routes serialized ciphertext by topic filter and never holds a
key, so its whole observable state is what an attacker inside it would
see; scenario tests check that this view contains no plaintext.  Actors
(publishers, subscribers) run on their own threads against a scripted
virtual clock; only latencies use the wall clock.

``run_scenario`` executes a declarative scenario and returns a
Transcript of per-actor counters and latencies.  The scenario schema is
a JSON object:

    seed           int, default 0: drives every RNG in the run
    mode           "protocol" (default) or "baseline"; baseline replaces
                   the whole key machinery with one pre-shared AEAD key
    hierarchy      {label, uri_slots, time_slots, tree_slots,
                   signature_slot, timespec} (protocol mode)
    principals     list of names; "authority" exists implicitly and
                   holds the master key
    delegations    [{from, to, uri, start, end, leaves?}], applied in
                   order ("from": "authority" or a prior grantee;
                   leaves: [first, last] bounds a revocable grant)
    subscriptions  [{principal, filter}]
    publishes      [{principal, uri, start, messages, interval_minutes,
                   payload_bytes, integrity?, chain_length?}]
    revocations    [{stream, at_message, uri, leaves}], applied by the
                   owning publish stream just before that message index

Timestamps are ISO-8601 UTC, hour or minute granularity
(YYYY-MM-DDTHH[:MM]).
"""

import csv
import hashlib
import json
import math
import queue
import random
import statistics
import struct
import threading
import time as _time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from topicseal import protocol, revocation, wkdibe
from topicseal.groups import DeterministicScalars, count_ops, hash_to_scalar
from topicseal.pattern import TimeRange, Uri, floor_hour, matches_uri


class ScenarioConfigError(Exception):
    """The scenario description is inconsistent or incomplete."""


# ---------------------------------------------------------------------------
# the router

class Broker:
    """Topic router: delivers opaque frames to matching subscribers.

    Holds no keys and never parses past the routing name.  Every frame
    that passes through is also appended to a log so tests can scan the
    broker's entire observable state.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._subs: List[Tuple[str, Uri]] = []
        self._queues: Dict[str, "queue.Queue"] = {}
        self.published = 0
        self.routed = 0
        self.dropped = 0
        self.bytes_on_wire = 0
        self._frames: List[bytes] = []

    def subscribe(self, sub_id: str, filt: Union[Uri, str]) -> "queue.Queue":
        if isinstance(filt, str):
            filt = Uri.parse(filt)
        with self._lock:
            q = self._queues.setdefault(sub_id, queue.Queue())
            self._subs.append((sub_id, filt))
            return q

    def publish(self, uri: Union[Uri, str], wire: bytes,
                attachment: bytes = b"") -> int:
        """Route one frame; returns the number of copies delivered."""
        if isinstance(uri, str):
            uri = Uri.parse(uri)
        wire = bytes(wire)
        attachment = bytes(attachment)
        with self._lock:
            self._frames.append(wire)
            if attachment:
                self._frames.append(attachment)
            self.published += 1
            targets = {sid for sid, f in self._subs if matches_uri(f, uri)}
            if not targets:
                self.dropped += 1
            for sid in targets:
                self._queues[sid].put((wire, attachment))
                self.routed += 1
                self.bytes_on_wire += len(wire) + len(attachment)
            return len(targets)

    def close(self) -> None:
        """Send every subscriber the end-of-stream sentinel."""
        with self._lock:
            for q in self._queues.values():
                q.put(None)

    def observable_bytes(self) -> bytes:
        """Everything the broker has ever seen, as one byte string."""
        with self._lock:
            return b"".join(self._frames)


def subscribe(broker: Broker, sub_id: str,
              filt: Union[Uri, str]) -> "queue.Queue":
    return broker.subscribe(sub_id, filt)


def publish(broker: Broker, msg: "protocol.HybridCiphertext",
            attachment: bytes = b"") -> int:
    return broker.publish(msg.uri, msg.to_bytes(), attachment)


# ---------------------------------------------------------------------------
# transcripts

@dataclass
class ActorStats:
    """Counters one actor accumulates over a scenario run.

    Latencies are end-to-end wall-clock seconds, split into the first
    message of each key epoch (pays the wrapping) and the rest.
    """

    role: str
    messages: int = 0
    rotations: int = 0
    wkd_encrypts: int = 0
    wkd_decrypts: int = 0
    pairings: int = 0
    aead_seals: int = 0
    aead_opens: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    delivered: int = 0
    undecryptable: int = 0
    integrity_ok: int = 0
    integrity_failed: int = 0
    first_latencies: List[float] = field(default_factory=list)
    usual_latencies: List[float] = field(default_factory=list)
    usual_pairings: int = 0


@dataclass
class Transcript:
    """Merged result of one scenario run."""

    mode: str
    actors: Dict[str, ActorStats]
    published: int
    routed: int
    dropped: int
    bytes_on_wire: int
    wall_seconds: float
    unit_wkd_encrypt_ms: float
    unit_wkd_decrypt_ms: float
    plaintexts: List[bytes]

    def total(self, name: str) -> int:
        return sum(getattr(s, name) for s in self.actors.values())

    def latencies(self, role: str = "subscriber"
                  ) -> Tuple[List[float], List[float]]:
        """(first, usual) wall-clock latencies pooled over a role."""
        first: List[float] = []
        usual: List[float] = []
        for s in self.actors.values():
            if s.role == role:
                first.extend(s.first_latencies)
                usual.extend(s.usual_latencies)
        return first, usual


def _pack_attachment(cost: float, header_b: bytes, tag_b: bytes) -> bytes:
    # cost: seconds the publisher spent producing this message, so the
    # subscriber can report path cost without counting queue backlog
    return struct.pack("!dHH", cost, len(header_b), len(tag_b)) \
        + header_b + tag_b


def _unpack_attachment(data: bytes) -> Tuple[float, bytes, bytes]:
    cost, hlen, tlen = struct.unpack_from("!dHH", data)
    off = struct.calcsize("!dHH")
    return cost, data[off:off + hlen], data[off + hlen:off + hlen + tlen]


# ---------------------------------------------------------------------------
# scenario parsing

_TOP_KEYS = {"seed", "mode", "hierarchy", "principals", "delegations",
             "subscriptions", "publishes", "revocations"}
_HIER_KEYS = {"label", "uri_slots", "time_slots", "tree_slots",
              "signature_slot", "timespec"}
_DELEG_KEYS = {"from", "to", "uri", "start", "end", "leaves"}
_SUB_KEYS = {"principal", "filter"}
_PUB_KEYS = {"principal", "uri", "start", "messages", "interval_minutes",
             "payload_bytes", "integrity", "chain_length"}
_REV_KEYS = {"stream", "at_message", "uri", "leaves"}


def _parse_instant(text) -> datetime:
    if not isinstance(text, str):
        raise ScenarioConfigError("timestamp must be a string, got %r"
                                  % (text,))
    for fmt in ("%Y-%m-%dT%H", "%Y-%m-%dT%H:%M"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ScenarioConfigError("bad timestamp %r; use YYYY-MM-DDTHH[:MM]"
                              % text)


def _check_keys(obj: dict, allowed: set, what: str) -> None:
    if not isinstance(obj, dict):
        raise ScenarioConfigError("%s must be an object" % what)
    extra = set(obj) - allowed
    if extra:
        raise ScenarioConfigError("%s has unknown keys: %s"
                                  % (what, ", ".join(sorted(extra))))


def _int_field(obj: dict, key: str, what: str, default=None,
               minimum: Optional[int] = None) -> int:
    v = obj.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ScenarioConfigError("%s.%s must be an integer" % (what, key))
    if minimum is not None and v < minimum:
        raise ScenarioConfigError("%s.%s must be >= %d" % (what, key,
                                                           minimum))
    return v


@dataclass
class _PublishPlan:
    principal: str
    uri: Uri
    start: datetime
    messages: int
    interval: timedelta
    payload_bytes: int
    integrity: bool
    chain_length: int
    revocations: Dict[int, List[Tuple[Uri, revocation.LeafRange]]]

    def instant(self, i: int) -> datetime:
        return self.start + i * self.interval


@dataclass
class _Plan:
    seed: int
    mode: str
    hierarchy_cfg: dict
    principals: List[str]
    delegations: List[dict]
    subscriptions: List[Tuple[str, Uri]]
    publishes: List[_PublishPlan]


def _parse_scenario(spec) -> _Plan:
    if isinstance(spec, (str, bytes)):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as e:
            raise ScenarioConfigError("scenario is not valid JSON: %s" % e)
    _check_keys(spec, _TOP_KEYS, "scenario")
    seed = _int_field(spec, "seed", "scenario", default=0)
    mode = spec.get("mode", "protocol")
    if mode not in ("protocol", "baseline"):
        raise ScenarioConfigError("mode must be 'protocol' or 'baseline'")

    hier = spec.get("hierarchy", {})
    _check_keys(hier, _HIER_KEYS, "hierarchy")
    hier_cfg = {
        "label": hier.get("label", "scenario"),
        "uri_slots": _int_field(hier, "uri_slots", "hierarchy", 8, 1),
        "time_slots": _int_field(hier, "time_slots", "hierarchy", 6, 1),
        "tree_slots": _int_field(hier, "tree_slots", "hierarchy", 0, 0),
        "signature_slot": bool(hier.get("signature_slot", True)),
        "timespec": hier.get("timespec"),
    }

    principals = spec.get("principals", [])
    if not isinstance(principals, list) or \
            not all(isinstance(p, str) for p in principals):
        raise ScenarioConfigError("principals must be a list of names")
    known = set(principals) | {"authority"}

    delegations = spec.get("delegations", [])
    for i, d in enumerate(delegations):
        _check_keys(d, _DELEG_KEYS, "delegations[%d]" % i)
        for k in ("from", "to", "uri", "start", "end"):
            if k not in d:
                raise ScenarioConfigError("delegations[%d] needs %r"
                                          % (i, k))
        if d["from"] not in known or d["to"] not in known:
            raise ScenarioConfigError("delegations[%d] names an unknown "
                                      "principal" % i)

    subscriptions = []
    for i, s in enumerate(spec.get("subscriptions", [])):
        _check_keys(s, _SUB_KEYS, "subscriptions[%d]" % i)
        p = s.get("principal")
        if p not in known:
            raise ScenarioConfigError("subscriptions[%d] names an unknown "
                                      "principal" % i)
        try:
            subscriptions.append((p, Uri.parse(s["filter"])))
        except (KeyError, ValueError) as e:
            raise ScenarioConfigError("subscriptions[%d]: %s" % (i, e))

    publishes = []
    for i, p in enumerate(spec.get("publishes", [])):
        where = "publishes[%d]" % i
        _check_keys(p, _PUB_KEYS, where)
        if p.get("principal") not in known:
            raise ScenarioConfigError("%s names an unknown principal"
                                      % where)
        try:
            uri = Uri.parse(p["uri"])
        except (KeyError, ValueError) as e:
            raise ScenarioConfigError("%s: %s" % (where, e))
        if not uri.is_concrete():
            raise ScenarioConfigError("%s publishes to a wildcard name"
                                      % where)
        plan = _PublishPlan(
            principal=p["principal"],
            uri=uri,
            start=_parse_instant(p.get("start")),
            messages=_int_field(p, "messages", where, minimum=1,
                                default=p.get("messages")),
            interval=timedelta(
                minutes=_int_field(p, "interval_minutes", where, 1, 0)),
            payload_bytes=_int_field(p, "payload_bytes", where, 64, 1),
            integrity=bool(p.get("integrity", False)),
            chain_length=_int_field(p, "chain_length", where, 0, 0),
            revocations={},
        )
        if plan.integrity:
            busiest = max(_hour_counts(plan).values())
            if plan.chain_length == 0:
                plan.chain_length = busiest
            elif plan.chain_length < busiest:
                raise ScenarioConfigError(
                    "%s: chain_length %d is shorter than the busiest "
                    "hour (%d messages)" % (where, plan.chain_length,
                                            busiest))
        publishes.append(plan)

    tagged = [p.uri for p in publishes if p.integrity]
    if len(tagged) != len({str(u) for u in tagged}):
        raise ScenarioConfigError("at most one integrity-tagged stream "
                                  "per name")

    for i, r in enumerate(spec.get("revocations", [])):
        where = "revocations[%d]" % i
        _check_keys(r, _REV_KEYS, where)
        stream = _int_field(r, "stream", where, default=r.get("stream"))
        if not 0 <= stream < len(publishes):
            raise ScenarioConfigError("%s.stream out of range" % where)
        at = _int_field(r, "at_message", where,
                        default=r.get("at_message"), minimum=0)
        if at >= publishes[stream].messages:
            raise ScenarioConfigError("%s.at_message beyond the stream"
                                      % where)
        leaves = r.get("leaves")
        if not (isinstance(leaves, list) and len(leaves) == 2):
            raise ScenarioConfigError("%s.leaves must be [first, last]"
                                      % where)
        try:
            uri = Uri.parse(r["uri"])
            lr = revocation.LeafRange(leaves[0], leaves[1],
                                      1 << hier_cfg["tree_slots"])
        except (KeyError, ValueError) as e:
            raise ScenarioConfigError("%s: %s" % (where, e))
        publishes[stream].revocations.setdefault(at, []).append((uri, lr))

    if mode == "baseline":
        if delegations or spec.get("revocations"):
            raise ScenarioConfigError("baseline scenarios take no "
                                      "delegations or revocations")
        if any(p.integrity for p in publishes):
            raise ScenarioConfigError("baseline scenarios cannot tag "
                                      "integrity chains")

    return _Plan(seed, mode, hier_cfg, principals, delegations,
                 subscriptions, publishes)


def _hour_counts(plan: _PublishPlan) -> Dict[datetime, int]:
    counts: Dict[datetime, int] = {}
    for i in range(plan.messages):
        h = floor_hour(plan.instant(i))
        counts[h] = counts.get(h, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# scenario execution

def run_scenario(spec, broker: Optional[Broker] = None) -> Transcript:
    """Execute a scenario (dict or JSON text) and return its Transcript.

    Pass a Broker to route through (and inspect afterwards); a fresh one
    is used otherwise.
    """
    plan = _parse_scenario(spec)
    if broker is None:
        broker = Broker()
    if plan.mode == "baseline":
        return _run_baseline(plan, broker)
    return _run_protocol(plan, broker)


def _actor_rng(plan: _Plan, kind: str, idx) -> DeterministicScalars:
    return DeterministicScalars(b"scenario:%d:%s:%s"
                                % (plan.seed, kind.encode(),
                                   str(idx).encode()))


def _payload_rng(plan: _Plan, idx: int) -> random.Random:
    return random.Random("scenario:%d:payload:%d" % (plan.seed, idx))


def _run_protocol(plan: _Plan, broker: Broker) -> Transcript:
    t_run = _time.perf_counter()
    authority = protocol.KeyStore()
    h = protocol.create_hierarchy(
        authority, plan.hierarchy_cfg["label"],
        uri_slots=plan.hierarchy_cfg["uri_slots"],
        time_slots=plan.hierarchy_cfg["time_slots"],
        tree_slots=plan.hierarchy_cfg["tree_slots"],
        signature_slot=plan.hierarchy_cfg["signature_slot"],
        timespec=plan.hierarchy_cfg["timespec"],
        rng=_actor_rng(plan, "setup", 0))

    stores: Dict[str, protocol.KeyStore] = {"authority": authority}
    for name in plan.principals:
        if name == "authority":
            continue
        st = protocol.KeyStore()
        st.add_hierarchy(h)
        stores[name] = st

    for i, d in enumerate(plan.delegations):
        try:
            lr = None
            if d.get("leaves") is not None:
                first, last = d["leaves"]
                lr = revocation.LeafRange(first, last, h.leaf_count)
            rng = _actor_rng(plan, "delegate", i)
            tr = TimeRange(floor_hour(_parse_instant(d["start"])),
                           floor_hour(_parse_instant(d["end"])))
            ks = protocol.delegate(stores[d["from"]], h,
                                   Uri.parse(d["uri"]), tr, lr, rng)
            wire = protocol.KeySet.from_bytes(ks.to_bytes())
            protocol.accept_delegation(stores[d["to"]], wire)
        except ScenarioConfigError:
            raise
        except (protocol.ProtocolError, ValueError) as e:
            raise ScenarioConfigError("delegations[%d]: %s" % (i, e))

    rl = revocation.RevocationList(n=h.leaf_count) if h.tree_slots else None
    for i, p in enumerate(plan.publishes):
        try:
            h.message_pattern(p.uri, h.spec.leaf_path(floor_hour(p.start)))
        except ValueError as e:
            raise ScenarioConfigError("publishes[%d]: %s" % (i, e))
        if p.revocations and rl is None:
            raise ScenarioConfigError("publishes[%d] revokes but the "
                                      "hierarchy has no tree" % i)

    actors: Dict[str, ActorStats] = {}
    plaintexts: List[bytes] = []
    pt_lock = threading.Lock()
    errors: List[BaseException] = []
    threads: List[threading.Thread] = []
    sub_threads: List[threading.Thread] = []

    for i, (principal, filt) in enumerate(plan.subscriptions):
        actor_id = "%s.sub%d" % (principal, i)
        stats = actors[actor_id] = ActorStats(role="subscriber")
        q = broker.subscribe(actor_id, filt)
        t = threading.Thread(
            target=_protocol_subscriber,
            args=(q, stores[principal], h, stats, errors),
            name=actor_id)
        sub_threads.append(t)

    for i, p in enumerate(plan.publishes):
        actor_id = "%s.pub%d" % (p.principal, i)
        stats = actors[actor_id] = ActorStats(role="publisher")
        sess = protocol.PublisherSession(h, store=stores[p.principal],
                                         revocations=rl,
                                         rng=_actor_rng(plan, "pub", i))
        t = threading.Thread(
            target=_protocol_publisher,
            args=(broker, sess, p, rl, _payload_rng(plan, i), stats,
                  plaintexts, pt_lock, errors),
            name=actor_id)
        threads.append(t)

    for t in sub_threads:
        t.start()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    broker.close()
    for t in sub_threads:
        t.join()
    if errors:
        raise errors[0]

    unit_enc, unit_dec = _unit_costs(h, authority, plan)
    return Transcript(
        mode="protocol", actors=actors, published=broker.published,
        routed=broker.routed, dropped=broker.dropped,
        bytes_on_wire=broker.bytes_on_wire,
        wall_seconds=_time.perf_counter() - t_run,
        unit_wkd_encrypt_ms=unit_enc, unit_wkd_decrypt_ms=unit_dec,
        plaintexts=plaintexts)


def _protocol_publisher(broker: Broker, sess: "protocol.PublisherSession",
                        plan: _PublishPlan,
                        rl: Optional[revocation.RevocationList],
                        payload_rng: random.Random, stats: ActorStats,
                        plaintexts: List[bytes], pt_lock: threading.Lock,
                        errors: List[BaseException]) -> None:
    try:
        with count_ops() as ops:
            epoch_hour = None
            chain_index = 0
            for i in range(plan.messages):
                for uri, leaves in plan.revocations.get(i, ()):
                    rl.revoke(uri, leaves)
                now = plan.instant(i)
                payload = payload_rng.randbytes(plan.payload_bytes)
                t0 = _time.perf_counter()
                enc_before = sess.wkd_encrypts
                header_b = b""
                if plan.integrity and floor_hour(now) != epoch_hour:
                    header = protocol.start_epoch_integrity(
                        sess, plan.uri, now, plan.chain_length)
                    epoch_hour = floor_hour(now)
                    chain_index = 0
                    header_b = header.to_bytes()
                wire = protocol.publish_encrypt_wire(sess, plan.uri, now,
                                                     payload)
                tag_b = b""
                if plan.integrity:
                    tag_b = protocol.mac_message(sess, chain_index,
                                                 wire).to_bytes()
                    chain_index += 1
                cost = _time.perf_counter() - t0
                att = _pack_attachment(cost, header_b, tag_b)
                broker.publish(plan.uri, wire, att)
                dt = _time.perf_counter() - t0
                rotated = sess.wkd_encrypts != enc_before
                if rotated:
                    stats.rotations += 1
                if rotated or header_b:
                    stats.first_latencies.append(dt)
                else:
                    stats.usual_latencies.append(dt)
                with pt_lock:
                    plaintexts.append(payload)
                stats.messages += 1
                stats.aead_seals += 1
                stats.bytes_sent += len(wire) + len(att)
            stats.wkd_encrypts = sess.wkd_encrypts
        stats.pairings = ops.pairings
    except BaseException as e:         # noqa: B036 - surfaced after join
        errors.append(e)


def _protocol_subscriber(q: "queue.Queue", store: "protocol.KeyStore",
                         h: "protocol.Hierarchy", stats: ActorStats,
                         errors: List[BaseException]) -> None:
    cache = protocol.DecryptionCache()
    headers: Dict[Tuple, List] = {}
    try:
        with count_ops() as ops:
            while True:
                item = q.get()
                if item is None:
                    break
                wire, att = item
                t0 = _time.perf_counter()
                pub_cost, header_b, tag_b = _unpack_attachment(att)
                stats.messages += 1
                stats.bytes_received += len(wire) + len(att)
                dec_before = cache.wkd_decrypts
                with count_ops() as msg_ops:
                    try:
                        pt = cache.hot_open(wire)
                        if pt is None:
                            pt = protocol.subscribe_decrypt_wire(
                                store, cache, wire)
                    except (protocol.NoMatchingKey, protocol.AuthFailure,
                            protocol.MalformedCiphertext,
                            revocation.Revoked):
                        stats.undecryptable += 1
                        continue
                    stats.delivered += 1
                    stats.aead_opens += 1
                    _verify_attached(h, wire, header_b, tag_b, headers,
                                     stats)
                # path cost: sender work plus own work, no queue wait
                dt = pub_cost + (_time.perf_counter() - t0)
                if cache.wkd_decrypts != dec_before:
                    stats.rotations += 1
                    stats.first_latencies.append(dt)
                else:
                    stats.usual_latencies.append(dt)
                    stats.usual_pairings += msg_ops.pairings
            stats.wkd_decrypts = cache.wkd_decrypts
        stats.pairings = ops.pairings
    except BaseException as e:         # noqa: B036 - surfaced after join
        errors.append(e)


def _verify_attached(h: "protocol.Hierarchy", wire: bytes, header_b: bytes,
                     tag_b: bytes, headers: Dict[Tuple, List],
                     stats: ActorStats) -> None:
    """Process a message's integrity attachment, if it carries one."""
    if header_b:
        try:
            hd = protocol.EpochIntegrityHeader.from_bytes(header_b)
            if protocol.verify_epoch_header(h, hd, hd.uri, hd.time):
                headers[(str(hd.uri), hd.time.labels)] = [hd, -1]
            else:
                stats.integrity_failed += 1
        except protocol.MalformedCiphertext:
            stats.integrity_failed += 1
    if not tag_b:
        return
    try:
        uri, tpath, _ = protocol.message_routing_info(wire)
        ent = headers.get((str(uri), tpath.labels))
        if ent is None:
            stats.integrity_failed += 1
            return
        tag = protocol.MacTag.from_bytes(tag_b)
        ok = protocol.verify_mac(ent[0], tag, wire, ent[1])
        ent[1] = tag.index
    except protocol.ProtocolError:
        stats.integrity_failed += 1
        return
    if ok:
        stats.integrity_ok += 1
    else:
        stats.integrity_failed += 1


def _unit_costs(h: "protocol.Hierarchy", authority: "protocol.KeyStore",
                plan: _Plan) -> Tuple[float, float]:
    """Single-threaded floor cost, in ms, of the WKD work one rotation
    adds: (fresh wrapping given the precomputation, fresh unwrapping)."""
    if not plan.publishes:
        return 0.0, 0.0
    p = plan.publishes[0]
    pat = h.message_pattern(p.uri, h.spec.leaf_path(floor_hour(p.start)))
    master = authority.masters[h.id]
    rng = _actor_rng(plan, "unit", 0)
    prepared = wkdibe.precompute(h.params, pat)
    key = wkdibe.key_der(h.params, master, pat, rng)
    gt = h.params.pairing_cache ** 7
    c = wkdibe.encrypt(h.params, pat, gt, rng)

    def one_encrypt():
        wkdibe.encrypt_prepared(h.params, prepared,
                                h.params.pairing_cache ** 7, rng)

    def one_decrypt():
        wkdibe.decrypt(wkdibe.non_delegable_key_der(key, pat), c)

    return _best_ms(one_encrypt), _best_ms(one_decrypt)


def _best_ms(fn, rounds: int = 5) -> float:
    fn()                               # warm up
    best = math.inf
    for _ in range(rounds):
        t0 = _time.perf_counter()
        fn()
        best = min(best, _time.perf_counter() - t0)
    return best * 1000.0


# ---------------------------------------------------------------------------
# baseline mode

def _run_baseline(plan: _Plan, broker: Broker) -> Transcript:
    """Same scenario shape with one pre-shared AEAD key and no WKD-IBE;
    the floor any end-to-end encryption layer pays."""
    t_run = _time.perf_counter()
    shared = hashlib.sha256(b"baseline:%d" % plan.seed).digest()
    actors: Dict[str, ActorStats] = {}
    plaintexts: List[bytes] = []
    pt_lock = threading.Lock()
    errors: List[BaseException] = []
    threads: List[threading.Thread] = []
    sub_threads: List[threading.Thread] = []

    for i, (principal, filt) in enumerate(plan.subscriptions):
        actor_id = "%s.sub%d" % (principal, i)
        stats = actors[actor_id] = ActorStats(role="subscriber")
        q = broker.subscribe(actor_id, filt)
        sub_threads.append(threading.Thread(
            target=_baseline_subscriber, args=(q, shared, stats, errors),
            name=actor_id))

    for i, p in enumerate(plan.publishes):
        actor_id = "%s.pub%d" % (p.principal, i)
        stats = actors[actor_id] = ActorStats(role="publisher")
        threads.append(threading.Thread(
            target=_baseline_publisher,
            args=(broker, p, shared, _payload_rng(plan, i), stats,
                  plaintexts, pt_lock, errors),
            name=actor_id))

    for t in sub_threads:
        t.start()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    broker.close()
    for t in sub_threads:
        t.join()
    if errors:
        raise errors[0]

    return Transcript(
        mode="baseline", actors=actors, published=broker.published,
        routed=broker.routed, dropped=broker.dropped,
        bytes_on_wire=broker.bytes_on_wire,
        wall_seconds=_time.perf_counter() - t_run,
        unit_wkd_encrypt_ms=0.0, unit_wkd_decrypt_ms=0.0,
        plaintexts=plaintexts)


def _baseline_publisher(broker: Broker, plan: _PublishPlan, key: bytes,
                        payload_rng: random.Random, stats: ActorStats,
                        plaintexts: List[bytes], pt_lock: threading.Lock,
                        errors: List[BaseException]) -> None:
    try:
        aead = ChaCha20Poly1305(key)
        sys_rng = random.SystemRandom()
        for i in range(plan.messages):
            payload = payload_rng.randbytes(plan.payload_bytes)
            t0 = _time.perf_counter()
            nonce = sys_rng.randbytes(12)
            wire = nonce + aead.encrypt(nonce, payload, None)
            cost = _time.perf_counter() - t0
            att = _pack_attachment(cost, b"", b"")
            broker.publish(plan.uri, wire, att)
            stats.usual_latencies.append(_time.perf_counter() - t0)
            with pt_lock:
                plaintexts.append(payload)
            stats.messages += 1
            stats.aead_seals += 1
            stats.bytes_sent += len(wire) + len(att)
    except BaseException as e:         # noqa: B036 - surfaced after join
        errors.append(e)


def _baseline_subscriber(q: "queue.Queue", key: bytes, stats: ActorStats,
                         errors: List[BaseException]) -> None:
    # mirrors the protocol subscriber's instrumentation so the two
    # modes pay the same harness cost per message
    try:
        aead = ChaCha20Poly1305(key)
        with count_ops() as ops:
            while True:
                item = q.get()
                if item is None:
                    break
                wire, att = item
                t0 = _time.perf_counter()
                pub_cost, _, _ = _unpack_attachment(att)
                stats.messages += 1
                stats.bytes_received += len(wire) + len(att)
                with count_ops() as msg_ops:
                    try:
                        aead.decrypt(wire[:12], wire[12:], None)
                    except InvalidTag:
                        stats.undecryptable += 1
                        continue
                    stats.delivered += 1
                    stats.aead_opens += 1
                stats.usual_latencies.append(
                    pub_cost + (_time.perf_counter() - t0))
                stats.usual_pairings += msg_ops.pairings
        stats.pairings = ops.pairings
    except BaseException as e:         # noqa: B036 - surfaced after join
        errors.append(e)


# ---------------------------------------------------------------------------
# operation benchmarks

_BENCH_OPS = ("encrypt", "decrypt", "key_der", "non_delegable_key_der",
              "sign", "verify", "precompute", "adjust_precomputed",
              "encrypt_prepared")


def bench_operations(slot_counts: Sequence[int] = (5, 10, 15, 20),
                     iterations: int = 20, rng=None,
                     operations: Optional[Iterable[str]] = None
                     ) -> List[dict]:
    """Time each core operation at several pattern lengths.

    Returns one row per (operation, slots): {"operation", "slots",
    "mean_ms", "p95_ms"}.  Patterns are fully fixed, the worst case for
    encryption.
    """
    wanted = tuple(operations) if operations is not None else _BENCH_OPS
    unknown = set(wanted) - set(_BENCH_OPS)
    if unknown:
        raise ValueError("unknown operations: %s"
                         % ", ".join(sorted(unknown)))
    rows: List[dict] = []
    for slots in slot_counts:
        params, master = wkdibe.setup(slots, True, rng)
        pat = wkdibe.Pattern(tuple(
            hash_to_scalar(b"bench:%d:%d" % (slots, i))
            for i in range(slots)))
        alt = wkdibe.Pattern(
            (hash_to_scalar(b"bench-alt"),) + pat.slots[1:])
        half = wkdibe.Pattern(
            pat.slots[:(slots + 1) // 2]
            + (wkdibe.Free,) * (slots // 2))
        key = wkdibe.key_der(params, master, pat, rng)
        half_key = wkdibe.key_der(params, master, half, rng)
        prepared = wkdibe.precompute(params, pat)
        gt = params.pairing_cache ** 5
        c = wkdibe.encrypt(params, pat, gt, rng)
        m = hash_to_scalar(b"bench-message")
        sig = wkdibe.sign(params, key, m, rng)

        ops = {
            "encrypt": lambda: wkdibe.encrypt(params, pat, gt, rng),
            "decrypt": lambda: wkdibe.decrypt(key, c),
            "key_der": lambda: wkdibe.key_der(params, master, pat, rng),
            "non_delegable_key_der":
                lambda: wkdibe.non_delegable_key_der(half_key, pat),
            "sign": lambda: wkdibe.sign(params, key, m, rng),
            "verify": lambda: wkdibe.verify(params, pat, sig, m),
            "precompute": lambda: wkdibe.precompute(params, pat),
            "adjust_precomputed":
                lambda: wkdibe.adjust_precomputed(params, prepared, alt),
            "encrypt_prepared":
                lambda: wkdibe.encrypt_prepared(params, prepared, gt, rng),
        }
        for name in wanted:
            fn = ops[name]
            fn()                       # warm up
            times = []
            for _ in range(iterations):
                t0 = _time.perf_counter()
                fn()
                times.append((_time.perf_counter() - t0) * 1000.0)
            times.sort()
            p95 = times[max(0, math.ceil(0.95 * len(times)) - 1)]
            rows.append({"operation": name, "slots": slots,
                         "mean_ms": statistics.fmean(times),
                         "p95_ms": p95})
    return rows


# ---------------------------------------------------------------------------
# reports

def _mean_ms(values: List[float]) -> Optional[float]:
    return statistics.fmean(values) * 1000.0 if values else None


def write_transcript_report(transcript: Transcript, csv_path,
                            figure_path=None) -> None:
    """Emit a transcript as a CSV table, and optionally a figure
    contrasting first-message and usual-path latencies."""
    cols = ["actor", "role", "messages", "rotations", "wkd_encrypts",
            "wkd_decrypts", "pairings", "aead_seals", "aead_opens",
            "bytes_sent", "bytes_received", "delivered", "undecryptable",
            "integrity_ok", "integrity_failed", "first_path_ms",
            "usual_path_ms"]
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for name in sorted(transcript.actors):
            s = transcript.actors[name]
            first = _mean_ms(s.first_latencies)
            usual = _mean_ms(s.usual_latencies)
            w.writerow([name, s.role, s.messages, s.rotations,
                        s.wkd_encrypts, s.wkd_decrypts, s.pairings,
                        s.aead_seals, s.aead_opens, s.bytes_sent,
                        s.bytes_received, s.delivered, s.undecryptable,
                        s.integrity_ok, s.integrity_failed,
                        "" if first is None else "%.4f" % first,
                        "" if usual is None else "%.4f" % usual])
        w.writerow(["broker", "broker", transcript.published, "", "", "",
                    "", "", "", transcript.bytes_on_wire, "",
                    transcript.routed, transcript.dropped, "", "", "",
                    ""])
    if figure_path is not None:
        _transcript_figure(transcript, figure_path)


def _transcript_figure(transcript: Transcript, figure_path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    subs = [(n, s) for n, s in sorted(transcript.actors.items())
            if s.role == "subscriber"]
    if subs:
        idx = range(len(subs))
        first = [(_mean_ms(s.first_latencies) or 0.0) for _, s in subs]
        usual = [(_mean_ms(s.usual_latencies) or 0.0) for _, s in subs]
        width = 0.38
        ax1.bar([i - width / 2 for i in idx], first, width,
                label="first message of epoch")
        ax1.bar([i + width / 2 for i in idx], usual, width,
                label="usual path")
        unit = transcript.unit_wkd_encrypt_ms + transcript.unit_wkd_decrypt_ms
        if unit:
            ax1.axhline(unit, linestyle="--", linewidth=1, color="gray",
                        label="one wrap + unwrap")
        ax1.set_xticks(list(idx))
        ax1.set_xticklabels([n for n, _ in subs], rotation=20, ha="right")
        ax1.set_ylabel("end-to-end latency (ms)")
        if any(v > 0 for v in first + usual):
            ax1.set_yscale("log")
        ax1.legend(fontsize=8)
    ax1.set_title("critical path, %s mode" % transcript.mode)

    names = sorted(transcript.actors)
    enc = [transcript.actors[n].wkd_encrypts for n in names]
    dec = [transcript.actors[n].wkd_decrypts for n in names]
    idx = range(len(names))
    width = 0.38
    ax2.bar([i - width / 2 for i in idx], enc, width, label="wrappings")
    ax2.bar([i + width / 2 for i in idx], dec, width, label="unwrappings")
    ax2.set_xticks(list(idx))
    ax2.set_xticklabels(names, rotation=20, ha="right")
    ax2.set_ylabel("operations")
    ax2.set_title("key wrappings per actor")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)


def write_bench_report(rows: Sequence[dict], csv_path,
                       figure_path=None) -> None:
    """Emit benchmark rows as CSV (operation, slots, mean-latency, p95)
    and optionally a latency-vs-slots figure."""
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["operation", "slots", "mean-latency", "p95"])
        for r in rows:
            w.writerow([r["operation"], r["slots"],
                        "%.4f" % r["mean_ms"], "%.4f" % r["p95_ms"]])
    if figure_path is None:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_op: Dict[str, List[Tuple[int, float]]] = {}
    for r in rows:
        by_op.setdefault(r["operation"], []).append(
            (r["slots"], r["mean_ms"]))
    for op, pts in sorted(by_op.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, label=op)
    ax.set_xlabel("pattern slots")
    ax.set_ylabel("mean latency (ms)")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)
