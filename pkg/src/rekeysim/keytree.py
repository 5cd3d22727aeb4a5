"""Degree-k key tree with closed-form integer node addressing.

Node 0 is the root and holds the group key.  A node m >= 1 has parent
(m-1)//k and children k*m+1 .. k*m+k, so parent/child lookups need no stored
links.  The tree tracks which leaf each member occupies; leaves left behind
by departures stay in the structure as vacancies and are reused by later
arrivals (their retired keys are never reused).

In cluster mode a leaf holds up to ``max_leaf_members`` members; everywhere
else occupancy is one member per leaf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    AlreadyMember,
    EmptyGroup,
    MemberNotFound,
    NodeNotFound,
    RootHasNoParent,
)
from .terms import KeyTerm

KIND_ROOT = "tek-root"
KIND_KEK = "kek"
KIND_LEAF = "leaf"
KIND_CLUSTER = "cluster-leaf"


def parent_id(m: int, k: int) -> int:
    if m == 0:
        raise RootHasNoParent("node 0 is the root")
    return (m - 1) // k


def child_ids(m: int, k: int) -> list[int]:
    return list(range(k * m + 1, k * m + k + 1))


def node_depth(m: int, k: int) -> int:
    depth = 0
    while m != 0:
        m = (m - 1) // k
        depth += 1
    return depth


def level_start(depth: int, k: int) -> int:
    # First node id at a given depth: (k^depth - 1) / (k - 1).
    return (k**depth - 1) // (k - 1)


def node_label(m: int, k: int) -> str:
    """Two-index label K_{depth,position} (root is K_0)."""
    if m == 0:
        return "K_0"
    d = node_depth(m, k)
    return f"K_{{{d},{m - level_start(d, k) + 1}}}"


def min_height(n_leaves: int, k: int) -> int:
    """Smallest h with k**h >= n_leaves."""
    h = 0
    while k**h < n_leaves:
        h += 1
    return h


@dataclass
class KeyNode:
    id: int
    kind: str
    key: KeyTerm | None = None
    key_version: int = 0

    def set_key(self, term: KeyTerm | None) -> None:
        self.key = term
        self.key_version += 1


@dataclass
class InsertResult:
    leaf: int
    split_node: int | None = None
    relocated: dict[str, int] = field(default_factory=dict)
    created: list[int] = field(default_factory=list)


@dataclass
class KeyTree:
    degree: int
    nodes: dict[int, KeyNode] = field(default_factory=dict)
    placement: dict[str, int] = field(default_factory=dict)
    max_leaf_members: int = 1
    version: int = 0

    # -- queries ------------------------------------------------------------

    def node(self, m: int) -> KeyNode:
        try:
            return self.nodes[m]
        except KeyError:
            raise NodeNotFound(f"node {m} not in tree") from None

    def is_leaf(self, m: int) -> bool:
        return self.node(m).kind in (KIND_LEAF, KIND_CLUSTER) or not any(
            c in self.nodes for c in child_ids(m, self.degree)
        )

    def leaves(self) -> list[int]:
        return sorted(
            m
            for m, node in self.nodes.items()
            if node.kind in (KIND_LEAF, KIND_CLUSTER)
            or not any(c in self.nodes for c in child_ids(m, self.degree))
        )

    def height(self) -> int:
        if not self.nodes:
            return 0
        return max(node_depth(m, self.degree) for m in self.nodes)

    def member_leaf(self, member: str) -> int:
        try:
            return self.placement[member]
        except KeyError:
            raise MemberNotFound(f"{member} is not in the group") from None

    def occupants(self, leaf: int) -> list[str]:
        return sorted(m for m, l in self.placement.items() if l == leaf)

    def occupancy(self, leaf: int) -> int:
        return sum(1 for l in self.placement.values() if l == leaf)

    def vacant_leaves(self) -> list[int]:
        """Leaves with spare capacity, shallowest first, then smallest id."""
        out = [
            m for m in self.leaves() if self.occupancy(m) < self.max_leaf_members
        ]
        out.sort(key=lambda m: (node_depth(m, self.degree), m))
        return out

    def path_from_node(self, m: int) -> list[int]:
        path = [m]
        while m != 0:
            m = parent_id(m, self.degree)
            path.append(m)
        return path

    def path_to_root(self, member: str) -> list[int]:
        return self.path_from_node(self.member_leaf(member))

    def subtree_members(self, m: int) -> set[str]:
        self.node(m)
        return {
            member
            for member, leaf in self.placement.items()
            if m in self.path_from_node(leaf)
        }

    # -- construction and mutation -------------------------------------------

    @classmethod
    def build_balanced(
        cls, members: list[str], k: int, max_leaf_members: int = 1
    ) -> "KeyTree":
        """Full tree of minimal height with members packed left to right.

        Group sizes that do not fill the bottom level leave trailing vacant
        leaves rather than producing an irregular tree.
        """
        if not members:
            raise EmptyGroup("cannot build a tree for zero members")
        if k < 2:
            raise ValueError("tree degree must be >= 2")
        n_leaves = -(-len(members) // max_leaf_members)
        h = min_height(n_leaves, k)
        tree = cls(degree=k, max_leaf_members=max_leaf_members)
        leaf_kind = KIND_CLUSTER if max_leaf_members > 1 else KIND_LEAF
        for d in range(h + 1):
            start = level_start(d, k)
            for m in range(start, start + k**d):
                if d == 0:
                    kind = KIND_ROOT
                elif d == h:
                    kind = leaf_kind
                else:
                    kind = KIND_KEK
                tree.nodes[m] = KeyNode(id=m, kind=kind)
        first_leaf = level_start(h, k)
        for i, member in enumerate(members):
            tree.placement[member] = first_leaf + i // max_leaf_members
        tree.version += 1
        return tree

    def insert_member(self, member: str) -> InsertResult:
        """Place a member on the shallowest vacant leaf, splitting if full.

        With no vacancy the shallowest leaf is split: its occupants move to
        the first child slot and the newcomer takes the second, so the height
        grows by one along exactly one path.
        """
        if member in self.placement:
            raise AlreadyMember(f"{member} is already in the group")
        k = self.degree
        if not self.nodes:
            kind = KIND_ROOT
            self.nodes[0] = KeyNode(id=0, kind=kind)
            self.placement[member] = 0
            self.version += 1
            return InsertResult(leaf=0, created=[0])
        vacancies = self.vacant_leaves()
        if vacancies:
            leaf = vacancies[0]
            self.placement[member] = leaf
            self.version += 1
            return InsertResult(leaf=leaf)
        leaf_kind = KIND_CLUSTER if self.max_leaf_members > 1 else KIND_LEAF
        split = min(
            self.leaves(), key=lambda m: (node_depth(m, self.degree), m)
        )
        node = self.node(split)
        node.kind = KIND_ROOT if split == 0 else KIND_KEK
        node.set_key(None)
        created = []
        for c in child_ids(split, k):
            self.nodes[c] = KeyNode(id=c, kind=leaf_kind)
            created.append(c)
        occupant_leaf, newcomer_leaf = created[0], created[1]
        relocated = {}
        for occupant in self.occupants(split):
            self.placement[occupant] = occupant_leaf
            relocated[occupant] = occupant_leaf
        self.placement[member] = newcomer_leaf
        self.version += 1
        return InsertResult(
            leaf=newcomer_leaf,
            split_node=split,
            relocated=relocated,
            created=created,
        )

    def remove_member(self, member: str) -> list[int]:
        """Vacate the member's leaf; return the path nodes needing rekey.

        The returned list is the leaf-to-root path excluding the leaf itself,
        deepest node first.  Removing the last member empties the tree.
        The vacated leaf's key is retired for good; reuse gets a fresh one.
        """
        leaf = self.member_leaf(member)
        del self.placement[member]
        if not self.placement:
            self.nodes.clear()
            self.version += 1
            return []
        if self.occupancy(leaf) == 0:
            self.node(leaf).set_key(None)
        self.version += 1
        return self.path_from_node(leaf)[1:]
