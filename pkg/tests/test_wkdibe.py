"""Scheme-level tests: derivation, encryption, signatures, fast paths.

The expensive randomized properties run few hypothesis examples (each
example costs multiple group exponentiations); the acceptance suite runs
the high-volume versions.
"""

import pytest
from hypothesis import given, settings, strategies as st

from topicseal import wkdibe as w
from topicseal.groups import (
    DeterministicScalars,
    GROUP_ORDER,
    GTElem,
    MalformedEncoding,
    count_ops,
    pair,
)

SLOTS = 8


@pytest.fixture(scope="module")
def system():
    rng = DeterministicScalars(b"wkdibe-system")
    params, msk = w.setup(SLOTS, True, rng)
    return params, msk


@pytest.fixture(scope="module")
def gt_msg(system):
    params, _ = system
    return params.pairing_cache ** 0xDECAF


def rand_pattern(rng, length=SLOTS, density=0.6):
    vals = []
    for _ in range(length):
        pick = rng()
        vals.append(pick if pick % 100 < density * 100 else None)
    return w.Pattern(vals)


def well_formed(params, key):
    q = w._attr_product(params, key.pattern)
    if pair(key.k0, params.g) != params.pairing_cache * pair(q, key.k1):
        return False
    for j, b in key.free_elems.items():
        if pair(b, params.g) != pair(params.h[j], key.k1):
            return False
    if key.sig_elem is not None:
        if pair(key.sig_elem, params.g) != pair(params.h_s, key.k1):
            return False
    return True


opt_scalar = st.one_of(st.none(), st.integers(1, GROUP_ORDER - 1))
pattern8 = st.lists(opt_scalar, min_size=SLOTS, max_size=SLOTS).map(w.Pattern)


class TestPattern:
    def test_matches_semantics(self):
        a = w.Pattern([1, None, 3])
        assert a.matches(w.Pattern([1, 2, 3]))
        assert a.matches(w.Pattern([1, None, 3]))
        assert not a.matches(w.Pattern([1, 2, 4]))
        assert not a.matches(w.Pattern([None, 2, 3]))   # fixed must stay
        assert not a.matches(w.Pattern([1, 2]))

    @given(pattern8)
    def test_matches_reflexive(self, p):
        assert p.matches(p)

    @given(pattern8, st.data())
    def test_specialization_matches(self, p, data):
        filled = [v if v is not None else
                  data.draw(opt_scalar) for v in p.slots]
        assert p.matches(w.Pattern(filled))

    def test_fixed_free_partition(self):
        p = w.Pattern([5, None, 7, None])
        assert dict(p.fixed()) == {0: 5, 2: 7}
        assert p.free_indices() == (1, 3)

    def test_zero_slot_rejected(self):
        with pytest.raises(ValueError):
            w.Pattern([0, None])
        with pytest.raises(ValueError):
            w.Pattern([GROUP_ORDER, None])

    def test_digest_distinguishes(self):
        a = w.Pattern([1, None]).digest()
        b = w.Pattern([None, 1]).digest()
        c = w.Pattern([1, 1]).digest()
        assert len({a, b, c}) == 3 and len(a) == 32

    @given(pattern8)
    def test_serialization_roundtrip(self, p):
        parsed, used = w.Pattern.from_bytes(p.to_bytes())
        assert parsed == p and used == len(p.to_bytes())

    def test_malformed_rejected(self):
        with pytest.raises(MalformedEncoding):
            w.Pattern.from_bytes(b"\x00")
        enc = bytearray(w.Pattern([1, 2]).to_bytes())
        enc[3] = 9          # claims more fixed slots than the length holds
        with pytest.raises(MalformedEncoding):
            w.Pattern.from_bytes(bytes(enc))

    def test_immutable(self):
        p = w.Pattern([1, None])
        with pytest.raises(AttributeError):
            p.slots = (2,)


class TestSetup:
    def test_rejects_zero_length(self):
        with pytest.raises(w.InvalidLength):
            w.setup(0)

    def test_master_key_relation(self, system):
        params, msk = system
        assert pair(msk.k, params.g) == params.pairing_cache

    def test_minimal_system_roundtrip(self):
        params, msk = w.setup(1, False)
        m = params.pairing_cache ** 7
        S = w.Pattern([123])
        key = w.key_der(params, msk, S)
        assert w.decrypt(key, w.encrypt(params, S, m)) == m

    def test_shape(self, system):
        params, _ = system
        assert params.length == SLOTS and len(params.h) == SLOTS
        assert params.h_s is not None
        assert params.pairing_cache == pair(params.g2, params.g1)


class TestKeyDer:
    def test_root_key_decrypts_everything_derivable(self, system, gt_msg):
        params, msk = system
        root = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        S = w.Pattern([11, 22, None, 33, None, None, 44, 55])
        leaf = w.key_der(params, root, S)
        assert w.decrypt(leaf, w.encrypt(params, S, gt_msg)) == gt_msg

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_chain_equals_direct(self, system, gt_msg, seed):
        params, msk = system
        rng = DeterministicScalars(b"chain-%d" % seed)
        S = rand_pattern(rng, density=0.9)
        # walk msk -> P1 -> ... -> S freeing progressively fewer slots
        chain_key = msk
        for keep in (2, 4, 6):
            part = [v if i < keep else None for i, v in enumerate(S.slots)]
            chain_key = w.key_der(params, chain_key, w.Pattern(part), rng)
        final = w.key_der(params, chain_key, S, rng)
        direct = w.key_der(params, msk, S, rng)
        c = w.encrypt(params, S, gt_msg, rng)
        assert w.decrypt(final, c) == gt_msg
        assert w.decrypt(direct, c) == gt_msg
        assert well_formed(params, final) and well_formed(params, direct)

    def test_conflicting_fixed_slot_rejected(self, system):
        params, msk = system
        parent = w.key_der(params, msk,
                           w.Pattern([77] + [None] * (SLOTS - 1)))
        with pytest.raises(w.NotAMatch):
            w.key_der(params, parent,
                      w.Pattern([78] + [None] * (SLOTS - 1)))

    def test_freeing_a_fixed_slot_rejected(self, system):
        params, msk = system
        parent = w.key_der(params, msk,
                           w.Pattern([77] + [None] * (SLOTS - 1)))
        with pytest.raises(w.NotAMatch):
            w.key_der(params, parent, w.Pattern([None] * SLOTS))

    def test_well_formedness(self, system):
        params, msk = system
        key = w.key_der(params, msk, w.Pattern([None, 9] + [None] * 6))
        assert well_formed(params, key)
        assert well_formed(params, w.resample_key(params, key))

    def test_length_mismatch(self, system):
        params, msk = system
        with pytest.raises(ValueError):
            w.key_der(params, msk, w.Pattern([1]))


class TestLimit:
    def test_limited_still_decrypts_exact_pattern(self, system, gt_msg):
        params, msk = system
        S = w.Pattern([5, None, 6, None, None, None, None, 7])
        lim = w.limit(w.key_der(params, msk, S))
        assert w.decrypt(lim, w.encrypt(params, S, gt_msg)) == gt_msg

    def test_limited_cannot_derive_or_sign(self, system):
        params, msk = system
        S = w.Pattern([5] + [None] * (SLOTS - 1))
        lim = w.limit(w.key_der(params, msk, S))
        with pytest.raises(w.NotExtendable):
            w.key_der(params, lim, S)
        with pytest.raises(w.NoSignatureSlot):
            w.sign(params, lim, 1)

    def test_limited_key_is_smaller(self, system):
        params, msk = system
        S = w.Pattern([5] + [None] * (SLOTS - 1))
        key = w.key_der(params, msk, S)
        assert len(w.limit(key).to_bytes()) < len(key.to_bytes())


class TestEncryptDecrypt:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_roundtrip(self, system, seed):
        params, msk = system
        rng = DeterministicScalars(b"rt-%d" % seed)
        S = rand_pattern(rng)
        m = params.pairing_cache ** rng()
        key = w.key_der(params, msk, S, rng)
        assert w.decrypt(key, w.encrypt(params, S, m, rng)) == m

    def test_mismatched_pattern_raises(self, system, gt_msg):
        params, msk = system
        S = w.Pattern([1] + [None] * (SLOTS - 1))
        T = w.Pattern([2] + [None] * (SLOTS - 1))
        key = w.key_der(params, msk, T)
        with pytest.raises(w.PatternMismatch):
            w.decrypt(key, w.encrypt(params, S, gt_msg))

    def test_wrong_key_wrong_plaintext(self, system, gt_msg):
        # even with a forged digest the algebra must not recover the message
        params, msk = system
        S = w.Pattern([1] + [None] * (SLOTS - 1))
        T = w.Pattern([2] + [None] * (SLOTS - 1))
        key = w.key_der(params, msk, T)
        c = w.encrypt(params, S, gt_msg)
        forged = w.WkdCiphertext(c.X, c.Y, c.Z, T.digest())
        assert w.decrypt(key, forged) != gt_msg

    def test_two_pairings(self, system, gt_msg):
        params, msk = system
        S = w.Pattern([3] * SLOTS)
        key = w.key_der(params, msk, S)
        c = w.encrypt(params, S, gt_msg)
        with count_ops() as ops:
            w.decrypt(key, c)
        assert ops.pairings == 2

    def test_free_slot_ciphertext(self, system, gt_msg):
        # encryption under a pattern with free slots binds only the fixed ones
        params, msk = system
        S = w.Pattern([None, 42] + [None] * 6)
        key = w.key_der(params, msk, S)
        assert w.decrypt(key, w.encrypt(params, S, gt_msg)) == gt_msg


class TestPrecompute:
    def test_all_free_is_base(self, system):
        params, _ = system
        assert w.precompute(params, w.Pattern([None] * SLOTS)).q == params.g3

    def test_adjust_equals_fresh(self, system, rng):
        params, _ = system
        for _ in range(10):
            S, T = rand_pattern(rng), rand_pattern(rng)
            qS = w.precompute(params, S)
            assert w.adjust_precomputed(params, qS, T).q == \
                w.precompute(params, T).q

    def test_adjust_identity(self, system, rng):
        params, _ = system
        S = rand_pattern(rng)
        qS = w.precompute(params, S)
        with count_ops() as ops:
            q2 = w.adjust_precomputed(params, qS, S)
        assert q2.q == qS.q and ops.g1_exps == 0

    def test_adjust_frees_slot(self, system, rng):
        params, _ = system
        a = rng()
        S = w.Pattern([None] * 5 + [a, None, None])
        T = w.Pattern([None] * SLOTS)
        qT = w.adjust_precomputed(params, w.precompute(params, S), T)
        assert qT.q == params.g3
        # and the reverse direction multiplies the slot element back in
        back = w.adjust_precomputed(params, qT, S)
        assert back.q == params.h[5] ** a * params.g3

    def test_single_slot_costs_one_exp(self, system, rng):
        params, _ = system
        S = rand_pattern(rng, density=1.0)
        vals = list(S.slots)
        vals[-1] = rng()
        T = w.Pattern(vals)
        qS = w.precompute(params, S)
        with count_ops() as ops:
            w.adjust_precomputed(params, qS, T)
        assert ops.g1_exps == 1

    def test_encrypt_prepared_bitwise(self, system, gt_msg, rng):
        params, _ = system
        S = rand_pattern(rng)
        a = w.encrypt(params, S, gt_msg, DeterministicScalars(b"s"))
        b = w.encrypt_prepared(params, w.precompute(params, S), gt_msg,
                               DeterministicScalars(b"s"))
        assert a.to_bytes() == b.to_bytes()

    def test_prepared_roundtrip(self, system, gt_msg, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        c = w.encrypt_prepared(params, w.precompute(params, S), gt_msg)
        assert w.decrypt(key, c) == gt_msg


class TestSignatures:
    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_sign_verify(self, system, seed):
        params, msk = system
        rng = DeterministicScalars(b"sig-%d" % seed)
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S, rng)
        m = rng()
        assert w.verify(params, S, w.sign(params, key, m, rng), m)

    def test_wrong_message_fails(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        m = rng()
        sig = w.sign(params, key, m)
        assert not w.verify(params, S, sig, m + 1)

    def test_wrong_pattern_fails(self, system, rng):
        params, msk = system
        S, T = rand_pattern(rng), rand_pattern(rng)
        key = w.key_der(params, msk, S)
        m = rng()
        sig = w.sign(params, key, m)
        assert not w.verify(params, T, sig, m)

    def test_tampered_signature_fails(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        m = rng()
        sig = w.sign(params, key, m)
        flip0 = w.Signature(sig.s0 * params.g2, sig.s1)
        flip1 = w.Signature(sig.s0, sig.s1 * params.g)
        assert not w.verify(params, S, flip0, m)
        assert not w.verify(params, S, flip1, m)

    def test_degenerate_signature_fails(self, system, rng):
        from topicseal.groups import G1Elem, G2Elem
        params, _ = system
        sig = w.Signature(G1Elem.identity(), G2Elem.identity())
        assert not w.verify(params, rand_pattern(rng), sig, 5)

    def test_generalized_sign(self, system, rng):
        params, msk = system
        root = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        S = rand_pattern(rng, density=1.0)
        m = rng()
        sig = w.generalized_sign(params, root, S, m)
        assert w.verify(params, S, sig, m)
        assert not w.verify(params, root.pattern, sig, m)

    def test_generalized_sign_reduces_to_sign(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        m = rng()
        a = w.sign(params, key, m, DeterministicScalars(b"t"))
        b = w.generalized_sign(params, key, S, m, DeterministicScalars(b"t"))
        assert a.to_bytes() == b.to_bytes()

    def test_generalized_sign_requires_match(self, system, rng):
        params, msk = system
        key = w.key_der(params, msk,
                        w.Pattern([9] + [None] * (SLOTS - 1)))
        with pytest.raises(w.NotAMatch):
            w.generalized_sign(params, key,
                               w.Pattern([8] + [None] * (SLOTS - 1)), 1)

    def test_sign_prepared_bitwise(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        q = w.precompute(params, S)
        m = rng()
        a = w.sign(params, key, m, DeterministicScalars(b"tt"))
        b = w.sign_prepared(params, key, q, m, DeterministicScalars(b"tt"))
        assert a.to_bytes() == b.to_bytes()

    def test_sign_prepared_pattern_mismatch(self, system, rng):
        params, msk = system
        S, T = rand_pattern(rng), rand_pattern(rng)
        key = w.key_der(params, msk, S)
        with pytest.raises(w.PatternMismatch):
            w.sign_prepared(params, key, w.precompute(params, T), 1)

    def test_three_pairings(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        m = rng()
        sig = w.sign(params, key, m)
        with count_ops() as ops:
            w.verify(params, S, sig, m)
        assert ops.pairings == 3

    def test_no_signature_slot(self):
        params, msk = w.setup(2, enable_signature_slot=False)
        key = w.key_der(params, msk, w.Pattern([1, None]))
        with pytest.raises(w.NoSignatureSlot):
            w.sign(params, key, 1)


class TestNonDelegable:
    def test_decrypts_without_resampling(self, system, gt_msg, rng):
        params, msk = system
        parent = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        S = rand_pattern(rng, density=1.0)
        nd = w.non_delegable_key_der(parent, S)
        assert w.decrypt(nd, w.encrypt(params, S, gt_msg)) == gt_msg

    def test_same_pattern_keeps_k0(self, system, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        assert w.non_delegable_key_der(key, S).k0 == key.k0

    def test_serialization_refused_until_resampled(self, system, rng):
        params, msk = system
        parent = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        nd = w.non_delegable_key_der(parent, rand_pattern(rng))
        with pytest.raises(w.SchemeError):
            nd.to_bytes()
        rs = w.resample_key(params, nd)
        assert well_formed(params, rs)
        w.SecretKey.from_bytes(rs.to_bytes())

    def test_resample_reproducible_and_equivalent(self, system, gt_msg, rng):
        params, msk = system
        S = rand_pattern(rng)
        key = w.key_der(params, msk, S)
        a = w.resample_key(params, key, DeterministicScalars(b"r"))
        b = w.resample_key(params, key, DeterministicScalars(b"r"))
        assert a.to_bytes() == b.to_bytes()
        c = w.encrypt(params, S, gt_msg)
        assert w.decrypt(a, c) == gt_msg
        double = w.resample_key(params, a)
        assert well_formed(params, double)
        assert w.decrypt(double, c) == gt_msg

    def test_adjust_oracle(self, system, rng):
        params, msk = system
        parent = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        for _ in range(8):
            S, T = rand_pattern(rng), rand_pattern(rng)
            nd = w.non_delegable_key_der(parent, S)
            adj = w.adjust_non_delegable(parent, nd, T)
            fresh = w.non_delegable_key_der(parent, T)
            assert adj.k0 == fresh.k0 and adj.k1 == fresh.k1
            assert adj.pattern == T

    def test_adjust_same_pattern_unchanged(self, system, rng):
        params, msk = system
        parent = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        S = rand_pattern(rng)
        nd = w.non_delegable_key_der(parent, S)
        adj = w.adjust_non_delegable(parent, nd, S)
        assert adj.k0 == nd.k0

    def test_adjust_single_slot_single_exp(self, system, rng):
        params, msk = system
        parent = w.key_der(params, msk, w.Pattern([None] * SLOTS))
        S = rand_pattern(rng, density=1.0)
        nd = w.non_delegable_key_der(parent, S)
        vals = list(S.slots)
        vals[-1] = rng()
        with count_ops() as ops:
            w.adjust_non_delegable(parent, nd, w.Pattern(vals))
        assert ops.g1_exps == 1

    def test_adjust_requires_match(self, system, rng):
        params, msk = system
        anchor = w.Pattern([13] + [None] * (SLOTS - 1))
        parent = w.key_der(params, msk, anchor)
        nd = w.non_delegable_key_der(parent, anchor)
        with pytest.raises(w.NotAMatch):
            w.adjust_non_delegable(parent, nd,
                                   w.Pattern([14] + [None] * (SLOTS - 1)))


class TestSerialization:
    def test_params_roundtrip(self, system):
        params, _ = system
        again = w.Params.from_bytes(params.to_bytes())
        assert again.to_bytes() == params.to_bytes()

    def test_params_cache_checked(self, system):
        params, _ = system
        raw = bytearray(params.to_bytes())
        # double the cache: valid GT element, wrong value
        bad = w.Params(params.g, params.g1, params.g2, params.g3, params.h,
                       params.h_s, params.pairing_cache ** 2)
        with pytest.raises(MalformedEncoding):
            w.Params.from_bytes(bad.to_bytes())
        raw[-1] ^= 1
        with pytest.raises(MalformedEncoding):
            w.Params.from_bytes(bytes(raw))

    def test_secret_key_roundtrip(self, system, rng):
        params, msk = system
        key = w.key_der(params, msk, rand_pattern(rng))
        again = w.SecretKey.from_bytes(key.to_bytes())
        assert again.to_bytes() == key.to_bytes()
        assert again.pattern == key.pattern
        assert again.extendable and again.resampled

    def test_secret_key_trailing_rejected(self, system, rng):
        params, msk = system
        key = w.key_der(params, msk, rand_pattern(rng))
        with pytest.raises(MalformedEncoding):
            w.SecretKey.from_bytes(key.to_bytes() + b"\x00")

    def test_ciphertext_roundtrip_and_size(self, system, gt_msg, rng):
        params, _ = system
        c = w.encrypt(params, rand_pattern(rng), gt_msg)
        enc = c.to_bytes()
        assert len(enc) - 32 == 720
        assert w.WkdCiphertext.from_bytes(enc).to_bytes() == enc

    def test_signature_roundtrip_and_size(self, system, rng):
        params, msk = system
        key = w.key_der(params, msk, rand_pattern(rng))
        sig = w.sign(params, key, 99)
        assert len(sig.to_bytes()) == 144
        assert w.Signature.from_bytes(sig.to_bytes()).to_bytes() == \
            sig.to_bytes()

    def test_master_key_roundtrip(self, system):
        _, msk = system
        assert w.MasterKey.from_bytes(msk.to_bytes()).k == msk.k
