"""Binary Merkle tree with leaf/internal domain separation.

Leaf nodes are ``H(0x00 || leaf)`` and internal nodes ``H(0x01 || left || right)``.
A level with an odd number of nodes duplicates its last node.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..encoding import decode, encode, to_int
from ..errors import EmptyLeaves, IndexOutOfRange
from .hashing import Digest, ct_equal, hash

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

LEFT = 0
RIGHT = 1


def leaf_node(leaf: bytes) -> Digest:
    return hash(LEAF_PREFIX + leaf)


def internal_node(left: bytes, right: bytes) -> Digest:
    return hash(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[bytes, ...]
    nodes: tuple[tuple[Digest, ...], ...]

    @property
    def root(self) -> Digest:
        return self.nodes[-1][0]

    @property
    def height(self) -> int:
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.leaves)


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[tuple[Digest, int], ...]

    def encode(self) -> bytes:
        return encode(self.leaf_index, [encode(s, side) for s, side in self.siblings])

    @classmethod
    def decode(cls, data: bytes) -> "MerkleProof":
        idx, sibs = decode(data)
        siblings = []
        for item in decode(sibs):
            s, side = decode(item)
            siblings.append((Digest(s), to_int(side)))
        return cls(to_int(idx), tuple(siblings))


def merkle_build(leaves) -> MerkleTree:
    leaves = tuple(bytes(x) for x in leaves)
    if not leaves:
        raise EmptyLeaves("a Merkle tree needs at least one leaf")
    level = tuple(leaf_node(x) for x in leaves)
    nodes = [level]
    while len(level) > 1:
        if len(level) % 2:
            level = level + (level[-1],)
        level = tuple(internal_node(level[i], level[i + 1]) for i in range(0, len(level), 2))
        nodes.append(level)
    return MerkleTree(leaves, tuple(nodes))


def merkle_prove(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexOutOfRange(f"leaf index {index} not in [0, {len(tree.leaves)})")
    siblings = []
    i = index
    for level in tree.nodes[:-1]:
        if i % 2:
            siblings.append((level[i - 1], LEFT))
        else:
            sib = level[i + 1] if i + 1 < len(level) else level[i]
            siblings.append((sib, RIGHT))
        i //= 2
    return MerkleProof(index, tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    if proof.leaf_index < 0 or proof.leaf_index >> len(proof.siblings):
        return False
    node = leaf_node(leaf)
    i = proof.leaf_index
    for sib, side in proof.siblings:
        # side flags must agree with the path encoded in leaf_index
        if side != (LEFT if i % 2 else RIGHT):
            return False
        node = internal_node(sib, node) if side == LEFT else internal_node(node, sib)
        i //= 2
    return ct_equal(node, root)
