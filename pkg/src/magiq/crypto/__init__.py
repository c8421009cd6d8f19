"""Hash, MAC, PRF, hash chains, Merkle trees and hash-based signatures."""

from .chain import (ChainVerifier, NextTok, PersonalizedHashChain, chain_build,
                    chain_verify_first, chain_verify_seed, chain_verify_step, link_hash)
from .hashing import DIGEST_SIZE, Digest, ct_equal, hash, hash_fields, hmac, hmac_verify, prf
from .lamport import OTSKeyPair, OTSPublicKey, ots_keygen, ots_sign, ots_verify
from .merkle import MerkleProof, MerkleTree, merkle_build, merkle_prove, merkle_verify
from .signatures import (DEFAULT_HEIGHT, MSS_LAMPORT, SignatureKeyPair, sig_keygen, sig_sign,
                         sig_verify)

__all__ = [
    "ChainVerifier", "NextTok", "PersonalizedHashChain", "chain_build", "chain_verify_first",
    "chain_verify_seed", "chain_verify_step", "link_hash",
    "DIGEST_SIZE", "Digest", "ct_equal", "hash", "hash_fields", "hmac", "hmac_verify", "prf",
    "OTSKeyPair", "OTSPublicKey", "ots_keygen", "ots_sign", "ots_verify",
    "MerkleProof", "MerkleTree", "merkle_build", "merkle_prove", "merkle_verify",
    "DEFAULT_HEIGHT", "MSS_LAMPORT", "SignatureKeyPair", "sig_keygen", "sig_sign", "sig_verify",
]
