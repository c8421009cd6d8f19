from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magiq.crypto.chain import (ChainVerifier, NextTok, chain_build, chain_verify_first,
                                chain_verify_seed, chain_verify_step)
from magiq.crypto.hashing import Digest, hash, hmac, hmac_verify
from magiq.crypto.lamport import ots_keygen, ots_sign, ots_verify
from magiq.crypto.merkle import MerkleProof, merkle_build, merkle_prove, merkle_verify
from magiq.crypto.signatures import (decode_public, sig_keygen, sig_sign, sig_verify,
                                     signature_size)
from magiq.errors import (EmptyKey, EmptyLeaves, IndexOutOfRange, KeyExhausted, KeyReuse,
                          UnknownScheme, ZeroLength)

SID = b"\x11" * 32
KEY = b"\x22" * 32


def _leaves(k):
    return [hash(i.to_bytes(2, "big")) for i in range(k)]


def _flip_byte(b: bytes, i: int) -> bytes:
    return b[:i] + bytes([b[i] ^ 0x80]) + b[i + 1:]


# -- hash chains ----------------------------------------------------------------

def test_chain_links_verify_top_down():
    ch = chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 5)
    for j in range(5):
        assert chain_verify_step(ch.links[j + 1], ch.token(j), SID, "b@y.org:r")


def test_chain_is_personalized():
    base = chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 4)
    assert chain_build(KEY, b"\x12" * 32, "a@x.org:i", "b@y.org:r", 0, 4).terminal != base.terminal
    assert chain_build(KEY, SID, "a@x.org:i", "c@y.org:r", 0, 4).terminal != base.terminal
    assert chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 1, 4).terminal != base.terminal
    tok = base.token(2)
    assert not chain_verify_step(base.links[3], tok, SID, "c@y.org:r")
    assert not chain_verify_step(base.links[3], tok, b"\x12" * 32, "b@y.org:r")


def test_chain_zero_length_rejected():
    with pytest.raises(ZeroLength):
        chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 0)


def test_first_token_carries_terminal_and_verifier_counts_down():
    ch = chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 3)
    first = ch.first_token()
    assert first.terminal == ch.terminal and chain_verify_first(first, SID, "b@y.org:r")
    assert NextTok.decode(first.encode()) == first
    v = ChainVerifier(SID, "b@y.org:r", ch.terminal, 3)
    assert v.remaining == 3
    for j in (2, 1, 0):
        assert v.accept(ch.token(j))
    assert v.remaining == 0
    assert chain_verify_seed(ch.links[0], ch.links[1], SID, "b@y.org:r", prf_key=KEY,
                             owner_aid="a@x.org:i")


def test_verifier_rejects_skip_and_replay():
    ch = chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 4)
    v = ChainVerifier(SID, "b@y.org:r", ch.terminal, 4)
    assert not v.accept(ch.token(2))  # skipped link 3
    assert v.accept(ch.token(3))
    assert not v.accept(ch.token(3))  # replay
    assert v.remaining == 3


def test_forget_above_deletes_revealed_links():
    ch = chain_build(KEY, SID, "a@x.org:i", "b@y.org:r", 0, 4)
    ch.forget_above(2)
    assert ch.retained() == [0, 1, 2]
    with pytest.raises(IndexError):
        ch.token(3)


# -- hmac -----------------------------------------------------------------------

def test_hmac_roundtrip_and_empty_key():
    tag = hmac(KEY, b"m")
    assert hmac_verify(KEY, b"m", tag)
    assert not hmac_verify(KEY, b"n", tag)
    with pytest.raises(EmptyKey):
        hmac(b"", b"m")


# -- merkle ---------------------------------------------------------------------

@pytest.mark.parametrize("k", range(1, 17))
def test_every_proof_verifies_and_every_single_mutation_fails(k):
    leaves = _leaves(k)
    tree = merkle_build(leaves)
    for i in range(k):
        proof = merkle_prove(tree, i)
        assert merkle_verify(tree.root, leaves[i], proof)
        assert MerkleProof.decode(proof.encode()) == proof
        assert not merkle_verify(tree.root, _flip_byte(leaves[i], 0), proof)
        assert not merkle_verify(_flip_byte(tree.root, 31), leaves[i], proof)
        for j, (sib, side) in enumerate(proof.siblings):
            sibs = list(proof.siblings)
            sibs[j] = (Digest(_flip_byte(sib, 5)), side)
            assert not merkle_verify(tree.root, leaves[i], MerkleProof(i, tuple(sibs)))
            sibs[j] = (sib, 1 - side)
            assert not merkle_verify(tree.root, leaves[i], MerkleProof(i, tuple(sibs)))
        if proof.siblings:
            wrong = MerkleProof(i ^ 1, proof.siblings)
            assert not merkle_verify(tree.root, leaves[i], wrong)
            short = MerkleProof(i, proof.siblings[:-1])
            assert not merkle_verify(tree.root, leaves[i], short)


def test_leaf_and_node_domains_are_separated():
    a, b = _leaves(2)
    tree = merkle_build([a, b])
    # an internal node presented as a leaf must not verify at the next level
    fake_leaf = tree.nodes[0][0] + tree.nodes[0][1]
    assert merkle_build([fake_leaf]).root != tree.root


def test_merkle_errors():
    with pytest.raises(EmptyLeaves):
        merkle_build([])
    with pytest.raises(IndexOutOfRange):
        merkle_prove(merkle_build(_leaves(3)), 3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=16), min_size=1, max_size=20), st.data())
def test_merkle_property(leaves, data):
    tree = merkle_build(leaves)
    i = data.draw(st.integers(0, len(leaves) - 1))
    assert merkle_verify(tree.root, leaves[i], merkle_prove(tree, i))


# -- lamport and the stateful scheme ------------------------------------------------

def test_lamport_sign_once():
    kp = ots_keygen()
    sig = ots_sign(kp, b"hello")
    assert ots_verify(kp.public, b"hello", sig)
    assert not ots_verify(kp.public, b"hellp", sig)
    assert not ots_verify(kp.public, b"hello", _flip_byte(sig, 100))
    with pytest.raises(KeyReuse):
        ots_sign(kp, b"again")


def test_height_four_key_signs_exactly_sixteen_times():
    kp = sig_keygen(height=4, seed=b"\x05" * 32)
    assert kp.capacity == 16
    sigs = [sig_sign(kp, f"m{i}".encode()) for i in range(16)]
    assert kp.uses_remaining == 0
    with pytest.raises(KeyExhausted):
        sig_sign(kp, b"m16")
    for i, s in enumerate(sigs):
        assert sig_verify(kp.public, f"m{i}".encode(), s)
        assert len(s) == signature_size(4)


def test_signature_rejects_mutations_and_wrong_key():
    kp = sig_keygen(height=2, seed=b"\x06" * 32)
    other = sig_keygen(height=2, seed=b"\x07" * 32)
    s = sig_sign(kp, b"msg")
    assert sig_verify(kp.public, b"msg", s)
    assert not sig_verify(kp.public, b"msh", s)
    assert not sig_verify(other.public, b"msg", s)
    for pos in (20, 5000, 9000, len(s) - 3):
        assert not sig_verify(kp.public, b"msg", _flip_byte(s, pos))
    assert not sig_verify(kp.public, b"msg", s[:-1])
    assert decode_public(kp.public)[1] == 2


def test_unknown_scheme():
    with pytest.raises(UnknownScheme):
        sig_keygen("rsa")
