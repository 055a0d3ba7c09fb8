"""Principal-layer tests: hierarchies, delegation, hybrid messaging,
epoch integrity, and the forward-secrecy ratchet."""

import threading
from dataclasses import fields, replace
from datetime import datetime, timedelta

import pytest

from topicseal import protocol as P
from topicseal import revocation as R
from topicseal import wkdibe
from topicseal.groups import DeterministicScalars, count_ops
from topicseal.pattern import TimePath, TimeRange, Uri, floor_hour


@pytest.fixture(scope="module")
def authority():
    rng = DeterministicScalars(b"protocol-authority")
    store = P.KeyStore()
    h = P.create_hierarchy(store, "plant", uri_slots=4, time_slots=4,
                           rng=rng)
    return store, h, rng


@pytest.fixture(scope="module")
def tree_authority():
    rng = DeterministicScalars(b"protocol-tree-authority")
    store = P.KeyStore()
    h = P.create_hierarchy(store, "campus", uri_slots=3, time_slots=4,
                           tree_slots=3, rng=rng)
    return store, h, rng


MAY = TimeRange(datetime(2015, 5, 1, 0), datetime(2015, 5, 31, 23))


def subscriber_with(store, h, keyset):
    sub = P.KeyStore()
    sub.add_hierarchy(h)
    P.accept_delegation(sub, keyset)
    return sub


class TestCreateHierarchy:
    def test_default_budget(self):
        rng = DeterministicScalars(b"default-budget")
        store = P.KeyStore()
        h = P.create_hierarchy(store, "dflt", rng=rng)
        assert h.params.length == 20
        assert (h.uri_slots, h.time_slots, h.tree_slots) == (14, 6, 0)
        assert h.timespec == "depth6"
        assert store.masters[h.id] is not None

    def test_minimal_hierarchy_roundtrips(self):
        rng = DeterministicScalars(b"minimal")
        store = P.KeyStore()
        h = P.create_hierarchy(store, "tiny", uri_slots=2, time_slots=1,
                               tree_slots=0, signature_slot=False, rng=rng)
        assert h.params.length == 3
        whole_year = TimeRange(datetime(2015, 1, 1, 0),
                               datetime(2015, 12, 31, 23))
        ks = P.delegate(store, h, Uri.parse("a"), whole_year, rng=rng)
        assert len(ks.grants) == 1
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "a", datetime(2015, 7, 4, 12), b"hi")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"hi"

    def test_bad_budgets_rejected(self):
        rng = DeterministicScalars(b"bad-budget")
        with pytest.raises(P.InvalidConfig):
            P.create_hierarchy(P.KeyStore(), "x", uri_slots=0,
                               time_slots=4, rng=rng)
        with pytest.raises(P.InvalidConfig):
            P.create_hierarchy(P.KeyStore(), "x", uri_slots=4,
                               time_slots=0, rng=rng)
        with pytest.raises(P.InvalidConfig):
            P.create_hierarchy(P.KeyStore(), "x", uri_slots=2,
                               time_slots=2, timespec="depth4", rng=rng)

    def test_id_binds_params(self, authority):
        _, h, _ = authority
        import hashlib
        assert h.id == hashlib.sha256(h.params.to_bytes()).digest()

    def test_serialization_roundtrip(self, authority):
        _, h, _ = authority
        h2 = P.Hierarchy.from_bytes(h.to_bytes())
        assert h2.id == h.id
        assert h2.label == h.label
        assert (h2.uri_slots, h2.time_slots, h2.tree_slots) == \
            (h.uri_slots, h.time_slots, h.tree_slots)
        assert h2.params.to_bytes() == h.params.to_bytes()


class TestDelegation:
    def test_aligned_subtree_single_key(self, authority):
        store, h, rng = authority
        year = TimeRange(datetime(2014, 1, 1, 0),
                         datetime(2014, 12, 31, 23))
        ks = P.delegate(store, h, Uri.parse("buildingA/*"), year, rng=rng)
        assert len(ks.grants) == 1
        assert ks.grants[0].time.labels == ("2014",)

    def test_two_partial_days_month_and_hour(self, authority):
        # the worked late-October to early-December range: exactly
        # seven subtrees
        store, h, rng = authority
        r = TimeRange.from_instants(datetime(2014, 10, 29, 22),
                                    datetime(2014, 12, 2, 1))
        ks = P.delegate(store, h, Uri.parse("a/b/*"), r, rng=rng)
        got = {h.spec.format(g.time) for g in ks.grants}
        assert got == {
            "2014/Oct/29/23", "2014/Oct/29/24", "2014/Oct/30/*",
            "2014/Oct/31/*", "2014/Nov/*", "2014/Dec/01/*",
            "2014/Dec/02/01",
        }
        assert len(ks.grants) == 7

    def test_chain_narrowing(self, authority):
        store, h, rng = authority
        mid = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("a/*"), MAY, rng=rng))
        day = TimeRange(datetime(2015, 5, 10, 0), datetime(2015, 5, 10, 23))
        leafset = P.delegate(mid, h, Uri.parse("a/b/*"), day, rng=rng)
        sub = subscriber_with(store, h, leafset)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "a/b/c",
                              datetime(2015, 5, 10, 14, 5), b"deep")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"deep"

    def test_uncovered_time_listed(self, authority):
        store, h, rng = authority
        nov = TimeRange(datetime(2014, 11, 1, 0),
                        datetime(2014, 11, 30, 23))
        mid = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("a/b/*"), nov, rng=rng))
        dec = TimeRange(datetime(2014, 12, 1, 0),
                        datetime(2014, 12, 31, 23))
        with pytest.raises(P.InsufficientAuthority) as ei:
            P.delegate(mid, h, Uri.parse("a/b/c"), dec, rng=rng)
        assert ei.value.uncovered == ("2014/Dec/*",)

    def test_uncovered_uri(self, authority):
        store, h, rng = authority
        mid = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("a/*"), MAY, rng=rng))
        with pytest.raises(P.InsufficientAuthority):
            P.delegate(mid, h, Uri.parse("b/*"), MAY, rng=rng)

    def test_plus_source_covers_fixed_component(self, authority):
        store, h, rng = authority
        mid = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("a/+/c"), MAY, rng=rng))
        ks = P.delegate(mid, h, Uri.parse("a/b/c"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "a/b/c",
                              datetime(2015, 5, 3, 9, 0), b"via plus")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"via plus"

    def test_keyset_serialization_roundtrip(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("s/t/*"), MAY, rng=rng)
        ks2 = P.KeySet.from_bytes(ks.to_bytes())
        assert ks2.hierarchy_id == ks.hierarchy_id
        assert len(ks2.grants) == len(ks.grants)
        for a, b in zip(ks.grants, ks2.grants):
            assert a.key.to_bytes() == b.key.to_bytes()
            assert str(a.uri) == str(b.uri)
            assert a.time.labels == b.time.labels


class TestAcceptDelegation:
    def test_idempotent(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("idem/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        before = len(sub.entries())
        P.accept_delegation(sub, ks)
        assert len(sub.entries()) == before

    def test_tampered_key_rejected(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("tamper/*"), MAY, rng=rng)
        g = ks.grants[0]
        bad_key = wkdibe.SecretKey(g.key.k0 * h.params.g2, g.key.k1,
                                   g.key.pattern, g.key.free_elems,
                                   g.key.sig_elem, g.key.extendable,
                                   g.key.resampled)
        bad = P.KeySet(ks.hierarchy_id, (replace(g, key=bad_key),))
        sub = P.KeyStore()
        sub.add_hierarchy(h)
        with pytest.raises(P.MalformedKey):
            P.accept_delegation(sub, bad)
        assert not sub.entries()

    def test_mislabeled_scope_rejected(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("real/*"), MAY, rng=rng)
        lie = P.KeySet(ks.hierarchy_id,
                       (replace(ks.grants[0], uri=Uri.parse("fake/*")),))
        sub = P.KeyStore()
        sub.add_hierarchy(h)
        with pytest.raises(P.MalformedKey):
            P.accept_delegation(sub, lie)

    def test_unknown_hierarchy_rejected(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("u/*"), MAY, rng=rng)
        with pytest.raises(P.MalformedKey):
            P.accept_delegation(P.KeyStore(), ks)


class TestPublishSubscribe:
    def test_same_hour_shares_wrapped_key(self, authority):
        _, h, rng = authority
        sess = P.PublisherSession(h, rng=rng)
        c1 = P.publish_encrypt(sess, "p/q", datetime(2015, 5, 2, 8, 0),
                               b"one")
        c2 = P.publish_encrypt(sess, "p/q", datetime(2015, 5, 2, 8, 59),
                               b"two")
        assert c1.wrapped_bytes() == c2.wrapped_bytes()
        assert c1.nonce != c2.nonce
        assert sess.wkd_encrypts == 1

    def test_hour_boundary_single_slot_adjust(self, authority,
                                              monkeypatch):
        _, h, rng = authority
        sess = P.PublisherSession(h, rng=rng)
        P.publish_encrypt(sess, "p/q", datetime(2015, 5, 2, 8, 30), b"a")
        real = wkdibe.adjust_precomputed
        calls = []

        def spy(params, qs, target):
            calls.append(sum(1 for o, n in zip(qs.pattern, target)
                             if o != n))
            return real(params, qs, target)

        monkeypatch.setattr(wkdibe, "adjust_precomputed", spy)
        P.publish_encrypt(sess, "p/q", datetime(2015, 5, 2, 9, 1), b"b")
        assert calls == [1]
        assert sess.adjust_count == 1
        assert sess.precompute_count == 1

    def test_empty_plaintext(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("e/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "e/f", datetime(2015, 5, 2, 8, 0), b"")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b""

    def test_cache_hit_needs_no_pairings(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("c/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        cache = P.DecryptionCache()
        c1 = P.publish_encrypt(sess, "c/d", datetime(2015, 5, 2, 8, 1),
                               b"first")
        c2 = P.publish_encrypt(sess, "c/d", datetime(2015, 5, 2, 8, 2),
                               b"second")
        P.subscribe_decrypt(sub, cache, c1)
        with count_ops() as ops:
            assert P.subscribe_decrypt(sub, cache, c2) == b"second"
        assert ops.pairings == 0
        assert cache.hits == 1
        assert cache.wkd_decrypts == 1

    def test_subtree_key_decrypts_deeper_uri(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("g/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "g/h/i", datetime(2015, 5, 9, 4, 0),
                              b"below")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"below"

    def test_out_of_range_hour_no_key(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("x/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "x/y", datetime(2015, 6, 1, 0, 0),
                              b"late")
        with pytest.raises(P.NoMatchingKey):
            P.subscribe_decrypt(sub, P.DecryptionCache(), c)

    def test_unrelated_uri_no_key(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("x/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "z/z", datetime(2015, 5, 2, 0, 0),
                              b"off")
        with pytest.raises(P.NoMatchingKey):
            P.subscribe_decrypt(sub, P.DecryptionCache(), c)

    def test_tampered_payload_fails_auth(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("t/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "t/u", datetime(2015, 5, 2, 8, 0),
                              b"payload")
        flipped = bytes([c.payload[0] ^ 1]) + c.payload[1:]
        bad = replace(c, payload=flipped)
        with pytest.raises(P.AuthFailure):
            P.subscribe_decrypt(sub, P.DecryptionCache(), bad)

    def test_message_serialization_roundtrip(self, authority):
        _, h, rng = authority
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "r/s", datetime(2015, 5, 2, 8, 0),
                              b"wire")
        c2 = P.HybridCiphertext.from_bytes(c.to_bytes())
        assert c2 == c

    def test_garbage_rejected(self):
        with pytest.raises(P.MalformedCiphertext):
            P.HybridCiphertext.from_bytes(b"JEDI garbage here")
        with pytest.raises(P.MalformedKey):
            P.KeySet.from_bytes(b"\x00" * 40)

    def test_transcript_counts_follow_hours(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("n/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, rng=rng)
        cache = P.DecryptionCache()
        start = datetime(2015, 5, 4, 6, 0)
        for i in range(100):
            at = start + timedelta(minutes=i * 2)  # spans 4 hours
            c = P.publish_encrypt(sess, "n/m", at, b"%d" % i)
            assert P.subscribe_decrypt(sub, cache, c) == b"%d" % i
        hours = 100 * 2 // 60 + 1
        assert sess.wkd_encrypts == hours
        assert cache.wkd_decrypts == hours


class TestRevocationIntegration:
    def test_epoch_tag_rotates_wrapping(self, tree_authority):
        store, h, rng = tree_authority
        rl = R.RevocationList(n=h.leaf_count)
        sess = P.PublisherSession(h, revocations=rl, rng=rng)
        c1 = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 2, 8, 0),
                               b"one")
        rl.revoke(Uri.parse("other/uri"), R.LeafRange(5, 5, h.leaf_count))
        c2 = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 2, 8, 1),
                               b"two")
        assert c1.epoch != c2.epoch
        assert c1.wrapped_bytes() != c2.wrapped_bytes()

    def test_revoked_subscriber_locked_out(self, tree_authority):
        store, h, rng = tree_authority
        ks = P.delegate(store, h, Uri.parse("a/*"), MAY,
                        leaf_range=R.LeafRange(1, 2, h.leaf_count),
                        rng=rng)
        sub = subscriber_with(store, h, ks)
        rl = R.RevocationList(n=h.leaf_count)
        sess = P.PublisherSession(h, revocations=rl, rng=rng)
        c = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 2, 8, 0),
                              b"before")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"before"
        rl.revoke(Uri.parse("a/x"), R.LeafRange(1, 2, h.leaf_count))
        c2 = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 2, 8, 1),
                               b"after")
        with pytest.raises(R.Revoked):
            P.subscribe_decrypt(sub, P.DecryptionCache(), c2)
        # an unrelated URI still reaches the same subscriber
        c3 = P.publish_encrypt(sess, "a/y", datetime(2015, 5, 2, 8, 2),
                               b"fine")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c3) == b"fine"

    def test_bundle_redelegation_narrows(self, tree_authority):
        store, h, rng = tree_authority
        mid = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("a/*"), MAY,
            leaf_range=R.LeafRange(1, 4, h.leaf_count), rng=rng))
        day = TimeRange(datetime(2015, 5, 10, 0),
                        datetime(2015, 5, 10, 23))
        ks = P.delegate(mid, h, Uri.parse("a/x"), day,
                        leaf_range=R.LeafRange(2, 3, h.leaf_count),
                        rng=rng)
        assert all(g.leaf_range == R.LeafRange(2, 3, h.leaf_count)
                   for g in ks.grants)
        sub = subscriber_with(store, h, ks)
        rl = R.RevocationList(n=h.leaf_count)
        sess = P.PublisherSession(h, revocations=rl, rng=rng)
        c = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 10, 8, 0),
                              b"narrow")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"narrow"
        rl.revoke(Uri.parse("a/x"), R.LeafRange(2, 3, h.leaf_count))
        c2 = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 10, 8, 1),
                               b"gone")
        with pytest.raises(R.Revoked):
            P.subscribe_decrypt(sub, P.DecryptionCache(), c2)


class TestEpochIntegrity:
    def test_header_verifies_and_binds_hour(self, authority):
        store, h, rng = authority
        sess = P.PublisherSession(h, store=store, rng=rng)
        at = datetime(2015, 5, 2, 8)
        hdr = P.start_epoch_integrity(sess, "i/j", at, 60)
        assert P.verify_epoch_header(h, hdr, "i/j", at)
        assert not P.verify_epoch_header(h, hdr, "i/j",
                                         at + timedelta(hours=1))
        assert not P.verify_epoch_header(h, hdr, "i/k", at)

    def test_delegated_signer(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("i/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, store=sub, rng=rng)
        at = datetime(2015, 5, 2, 8)
        hdr = P.start_epoch_integrity(sess, "i/j", at, 10)
        assert P.verify_epoch_header(h, hdr, "i/j", at)

    def test_no_signing_authority(self, authority):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse("i/*"), MAY, rng=rng)
        sub = subscriber_with(store, h, ks)
        sess = P.PublisherSession(h, store=sub, rng=rng)
        with pytest.raises(P.NoSigningAuthority):
            P.start_epoch_integrity(sess, "elsewhere",
                                    datetime(2015, 5, 2, 8), 10)

    def test_chain_walker_storage_bound(self, authority):
        store, h, rng = authority
        sess = P.PublisherSession(h, store=store, rng=rng)
        hdr = P.start_epoch_integrity(sess, "i/j", datetime(2015, 5, 2, 9),
                                      60, seed=b"\x07" * 32)
        prev = -1
        for i in range(60):
            tag = P.mac_message(sess, i, b"m%d" % i)
            assert P.verify_mac(hdr, tag, b"m%d" % i, prev)
            prev = tag.index
        assert sess._epoch_walker.max_stored <= 15

    def test_mac_rejects_replay_and_overrun(self, authority):
        store, h, rng = authority
        sess = P.PublisherSession(h, store=store, rng=rng)
        hdr = P.start_epoch_integrity(sess, "i/j",
                                      datetime(2015, 5, 2, 10), 5)
        tag0 = P.mac_message(sess, 0, b"zero")
        tag2 = P.mac_message(sess, 2, b"two")
        with pytest.raises(P.IndexOutOfOrder):
            P.mac_message(sess, 2, b"again")
        with pytest.raises(P.ChainExhausted):
            P.mac_message(sess, 5, b"over")
        assert P.verify_mac(hdr, tag0, b"zero")
        with pytest.raises(P.IndexOutOfOrder):
            P.verify_mac(hdr, tag0, b"zero", prev_index=0)
        assert not P.verify_mac(hdr, tag2, b"tampered")

    def test_skipped_indices_still_verify(self, authority):
        store, h, rng = authority
        sess = P.PublisherSession(h, store=store, rng=rng)
        hdr = P.start_epoch_integrity(sess, "i/j",
                                      datetime(2015, 5, 2, 11), 40)
        prev = -1
        for i in (0, 7, 8, 23, 39):
            tag = P.mac_message(sess, i, b"x")
            assert P.verify_mac(hdr, tag, b"x", prev)
            prev = i

    def test_header_serialization_roundtrip(self, authority):
        store, h, rng = authority
        sess = P.PublisherSession(h, store=store, rng=rng)
        hdr = P.start_epoch_integrity(sess, "i/j",
                                      datetime(2015, 5, 2, 12), 8)
        hdr2 = P.EpochIntegrityHeader.from_bytes(hdr.to_bytes())
        assert hdr2 == hdr

    def test_chains_structurally_alike(self, authority):
        # one signer is the authority, the other holds a delegated key;
        # nothing in the headers says which is which
        store, h, rng = authority
        at = datetime(2015, 5, 2, 13)
        direct = P.PublisherSession(h, store=store, rng=rng)
        hdr_a = P.start_epoch_integrity(direct, "i/j", at, 12)
        sub = subscriber_with(store, h, P.delegate(
            store, h, Uri.parse("i/*"), MAY, rng=rng))
        via = P.PublisherSession(h, store=sub, rng=rng)
        hdr_b = P.start_epoch_integrity(via, "i/j", at, 12)
        assert P.verify_epoch_header(h, hdr_a, "i/j", at)
        assert P.verify_epoch_header(h, hdr_b, "i/j", at)
        names = [f.name for f in fields(P.EpochIntegrityHeader)]
        assert [f.name for f in fields(hdr_a)] == names
        assert [f.name for f in fields(hdr_b)] == names
        assert hdr_a.pattern_digest == hdr_b.pattern_digest
        assert len(hdr_a.wkd_signature.to_bytes()) == \
            len(hdr_b.wkd_signature.to_bytes())


class TestRatchet:
    def _sub(self, authority, uri="w/*"):
        store, h, rng = authority
        ks = P.delegate(store, h, Uri.parse(uri), MAY, rng=rng)
        return subscriber_with(store, h, ks)

    def test_past_messages_unreachable(self, authority):
        _, h, rng = authority
        sub = self._sub(authority)
        sess = P.PublisherSession(h, rng=rng)
        old = P.publish_encrypt(sess, "w/v", datetime(2015, 5, 10, 9, 30),
                                b"past")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), old) == b"past"
        P.ratchet_forward(sub, datetime(2015, 5, 20, 6, 0))
        with pytest.raises(P.NoMatchingKey):
            P.subscribe_decrypt(sub, P.DecryptionCache(), old)

    def test_future_messages_survive(self, authority):
        _, h, rng = authority
        sub = self._sub(authority)
        P.ratchet_forward(sub, datetime(2015, 5, 20, 6, 0))
        sess = P.PublisherSession(h, rng=rng)
        c = P.publish_encrypt(sess, "w/v", datetime(2015, 5, 20, 6, 0),
                              b"now")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"now"
        c2 = P.publish_encrypt(sess, "w/v", datetime(2015, 5, 28, 23, 59),
                               b"later")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c2) == b"later"

    def test_boundary_hour_split(self, authority):
        _, h, rng = authority
        sub = self._sub(authority)
        cut = datetime(2015, 5, 20, 6, 0)
        P.ratchet_forward(sub, cut)
        sess = P.PublisherSession(h, rng=rng)
        prev = P.publish_encrypt(sess, "w/v", cut - timedelta(hours=1),
                                 b"prev hour")
        with pytest.raises(P.NoMatchingKey):
            P.subscribe_decrypt(sub, P.DecryptionCache(), prev)
        cur = P.publish_encrypt(sess, "w/v", cut + timedelta(minutes=30),
                                b"cur hour")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), cur) == \
            b"cur hour"

    def test_current_store_is_noop(self, authority):
        store, h, rng = authority
        june = TimeRange(datetime(2015, 6, 1, 0),
                         datetime(2015, 6, 30, 23))
        ks = P.delegate(store, h, Uri.parse("w/*"), june, rng=rng)
        sub = subscriber_with(store, h, ks)
        before = [e.fingerprint() for e in sub.entries()]
        P.ratchet_forward(sub, datetime(2015, 5, 20, 6, 0))
        assert [e.fingerprint() for e in sub.entries()] == before

    def test_elapsed_entries_dropped(self, authority):
        _, h, rng = authority
        sub = self._sub(authority)
        P.ratchet_forward(sub, datetime(2015, 7, 1, 0, 0))
        assert not sub.entries()

    def test_bundle_entries_ratchet(self, tree_authority):
        store, h, rng = tree_authority
        ks = P.delegate(store, h, Uri.parse("a/*"), MAY,
                        leaf_range=R.LeafRange(1, 2, h.leaf_count),
                        rng=rng)
        sub = subscriber_with(store, h, ks)
        P.ratchet_forward(sub, datetime(2015, 5, 20, 6, 0))
        rl = R.RevocationList(n=h.leaf_count)
        sess = P.PublisherSession(h, revocations=rl, rng=rng)
        c = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 25, 8, 0),
                              b"kept")
        assert P.subscribe_decrypt(sub, P.DecryptionCache(), c) == b"kept"
        rl.revoke(Uri.parse("a/x"), R.LeafRange(1, 2, h.leaf_count))
        c2 = P.publish_encrypt(sess, "a/x", datetime(2015, 5, 25, 8, 1),
                               b"cut")
        with pytest.raises(R.Revoked):
            P.subscribe_decrypt(sub, P.DecryptionCache(), c2)


class TestKeyStoreSerialization:
    def test_roundtrip_with_masters_and_bundles(self, tree_authority):
        store, h, rng = tree_authority
        holder = P.KeyStore()
        holder.add_hierarchy(h)
        P.accept_delegation(holder, P.delegate(
            store, h, Uri.parse("a/*"), MAY,
            leaf_range=R.LeafRange(1, 4, h.leaf_count), rng=rng))
        back = P.KeyStore.from_bytes(holder.to_bytes())
        assert set(back.hierarchies) == set(holder.hierarchies)
        assert {e.fingerprint() for e in back.entries()} == \
            {e.fingerprint() for e in holder.entries()}
        # a restored store still delegates
        day = TimeRange(datetime(2015, 5, 10, 0),
                        datetime(2015, 5, 10, 23))
        ks = P.delegate(back, h, Uri.parse("a/x"), day,
                        leaf_range=R.LeafRange(1, 2, h.leaf_count),
                        rng=rng)
        assert ks.grants

    def test_authority_roundtrip_keeps_master(self, authority):
        store, h, rng = authority
        back = P.KeyStore.from_bytes(store.to_bytes())
        assert h.id in back.masters
        ks = P.delegate(back, h, Uri.parse("m/*"), MAY, rng=rng)
        assert len(ks.grants) == 1

    def test_garbage_rejected(self):
        with pytest.raises(P.MalformedKey):
            P.KeyStore.from_bytes(b"not a container")


class TestConcurrency:
    def test_readers_and_writers_make_progress(self, authority):
        store, h, rng = authority
        sub = P.KeyStore()
        sub.add_hierarchy(h)
        stop = threading.Event()
        errors = []

        def reader():
            try:
                while not stop.is_set():
                    sub.entries(h.id)
            except Exception as e:  # pragma: no cover
                errors.append(e)

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        try:
            for name in ("ca", "cb", "cc"):
                ks = P.delegate(store, h, Uri.parse(name + "/*"), MAY,
                                rng=rng)
                P.accept_delegation(sub, ks)
        finally:
            stop.set()
            for t in threads:
                t.join(timeout=10)
        assert not errors
        assert len(sub.entries()) == 3
