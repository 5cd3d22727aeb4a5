"""Shared machinery for the rekeying schemes.

Every scheme works against the same controller-side ``GroupState`` (tree plus
key map) and produces ``RekeyPlan`` values: an ordered list of key-carrying
messages plus the bookkeeping members need to update themselves.  Planning
mutates the controller state in place; members are pure values updated by
``apply_plan_member``.

Message recipients are always derived from wrapping-key coverage (who holds
the key right now), never stated independently, and messages are ordered
bottom-up by the depth of the node they rekey so a member can process a plan
in a single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from ..errors import AlreadyMember, InvalidParams, MemberNotFound
from ..keytree import KeyTree, node_depth, node_label, parent_id
from ..terms import Ciphertext, KeyTerm, TermFactory, xor_terms

UNICAST = "unicast"
MULTICAST = "multicast"


class SchemeId(str, Enum):
    SIMPLE = "simple"
    GKMP = "gkmp"
    LKH = "lkh"
    OFC = "ofc"
    IHC = "ihc"
    SDLKH = "sdlkh"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class SchemeParams:
    """Tree degree, plus the cluster size for the hybrid scheme."""

    degree: int = 2
    cluster_size: int | None = None


@dataclass(frozen=True)
class RekeyMessage:
    ct: Ciphertext
    kind: str
    recipients: frozenset[str]
    enc_node: int | None
    enc_label: str
    destination_node: int | None = None
    new_position: int | None = None

    @property
    def payload_key_count(self) -> int:
        return len(self.ct.payload)


@dataclass
class RekeyPlan:
    scheme: SchemeId
    kind: str
    degree: int
    messages: list[RekeyMessage] = field(default_factory=list)
    new_group_key: KeyTerm | None = None
    dirtied_nodes: list[int] = field(default_factory=list)
    placements: dict[str, int] = field(default_factory=dict)
    removed: tuple[str, ...] = ()
    factor: KeyTerm | None = None
    rename: dict[int, int] | None = None

    @property
    def payload_keys(self) -> int:
        return sum(m.payload_key_count for m in self.messages)


@dataclass
class GroupState:
    """Controller view: the tree with all current keys plus side secrets."""

    scheme_id: SchemeId
    params: SchemeParams
    tree: KeyTree
    factory: TermFactory
    aux: dict[str, KeyTerm] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    event_count: int = 0
    msg_seq: int = 0

    @property
    def group_key(self) -> KeyTerm | None:
        node = self.tree.nodes.get(0)
        return node.key if node else None

    def members(self) -> list[str]:
        return sorted(self.tree.placement)


@dataclass
class MemberState:
    """One member's view: its leaf position and the keys it holds."""

    member: str
    leaf: int
    degree: int
    keys: dict[int, KeyTerm] = field(default_factory=dict)
    aux: dict[str, KeyTerm] = field(default_factory=dict)

    def known_terms(self) -> set[KeyTerm]:
        return set(self.keys.values()) | set(self.aux.values())

    def key_count(self) -> int:
        return len(self.keys) + len(self.aux)


class Scheme:
    """Base class: one subclass per rekeying scheme."""

    id: SchemeId

    def __init__(self, params: SchemeParams) -> None:
        self.params = params

    # -- group construction ---------------------------------------------------

    def init_group(
        self, members: list[str]
    ) -> tuple[GroupState, dict[str, MemberState]]:
        """Build the balanced tree and hand every member its path keys.

        Initial key distribution is out of band (registration), so it sends
        no rekey messages and costs nothing.
        """
        if not members:
            raise InvalidParams("initial membership must be non-empty")
        if len(set(members)) != len(members):
            raise InvalidParams("duplicate member in initial list")
        state = self._build_state(list(members))
        member_states = {
            m: self._full_member_state(state, m) for m in members
        }
        return state, member_states

    def _build_state(self, members: list[str]) -> GroupState:
        factory = TermFactory()
        tree = KeyTree.build_balanced(members, self.params.degree)
        state = GroupState(
            scheme_id=self.id, params=self.params, tree=tree, factory=factory
        )
        for m in sorted(tree.nodes):
            node = tree.nodes[m]
            if tree.is_leaf(m) and m != 0:
                occupants = tree.occupants(m)
                if occupants:
                    node.set_key(factory.fresh(f"k[{occupants[0]}]"))
            else:
                node.set_key(factory.fresh("k"))
        if len(members) == 1:
            # Single node doubles as group key and individual key.
            tree.nodes[0].set_key(factory.fresh(f"k[{members[0]}]"))
        return state

    def _full_member_state(self, state: GroupState, member: str) -> MemberState:
        keys, aux = self.expected_member_keys(state, member)
        return MemberState(
            member=member,
            leaf=state.tree.member_leaf(member),
            degree=state.tree.degree,
            keys=dict(keys),
            aux=dict(aux),
        )

    def new_member_state(
        self, state: GroupState, member: str, plan: RekeyPlan
    ) -> MemberState:
        """Joiner's starting point: just the pre-shared individual key."""
        leaf = plan.placements[member]
        term = state.tree.nodes[leaf].key
        keys = {leaf: term} if term is not None else {}
        ms = MemberState(
            member=member, leaf=leaf, degree=plan.degree, keys=keys
        )
        if not plan.messages:
            # Joining an empty group is a re-initialisation: out of band.
            keys, aux = self.expected_member_keys(state, member)
            ms.keys = dict(keys)
            ms.aux = dict(aux)
        return ms

    # -- planning (implemented by subclasses) ----------------------------------

    def plan_leave(self, state: GroupState, member: str) -> RekeyPlan:
        raise NotImplementedError

    def plan_join(self, state: GroupState, member: str) -> RekeyPlan:
        raise NotImplementedError

    # -- member-side application ------------------------------------------------

    def apply_plan_member(self, ms: MemberState, plan: RekeyPlan) -> MemberState:
        """Decrypt what the member can, extend by the scheme rule, drop the rest.

        Undecryptable messages are skipped silently (multicast reception).
        Afterwards the member holds exactly its new path keys.
        """
        out = replace(
            ms, degree=plan.degree, keys=dict(ms.keys), aux=dict(ms.aux)
        )
        if plan.rename is not None:
            out.keys = {
                plan.rename.get(n, n): t for n, t in out.keys.items()
            }
            out.leaf = plan.placements.get(
                out.member, plan.rename.get(out.leaf, out.leaf)
            )
        elif (
            out.member in plan.placements
            and plan.placements[out.member] != out.leaf
        ):
            # A split moved this member's leaf down: the individual key
            # follows, and its old value stays as the new parent's old key.
            new_leaf = plan.placements[out.member]
            if out.leaf in out.keys:
                out.keys[new_leaf] = out.keys[out.leaf]
            out.leaf = new_leaf
        path = self._member_path(out)
        for msg in plan.messages:
            if msg.ct.enc_key not in out.known_terms():
                continue
            if msg.ct.target_node not in path:
                continue
            if plan.factor is not None and msg.ct.payload == (plan.factor,):
                for node in self._path_tail(path, msg.ct.target_node):
                    if node in out.keys:
                        out.keys[node] = xor_terms(out.keys[node], plan.factor)
                continue
            self._install(out, msg.ct.target_node, msg.ct.payload)
            self._extend_chain(out, path, msg.ct.target_node)
        out.keys = {n: t for n, t in out.keys.items() if n in path}
        return out

    def _member_path(self, ms: MemberState) -> list[int]:
        path = [ms.leaf]
        m = ms.leaf
        while m != 0:
            m = parent_id(m, ms.degree)
            path.append(m)
        return path

    @staticmethod
    def _path_tail(path: list[int], start: int) -> list[int]:
        return path[path.index(start):]

    def _install(
        self, ms: MemberState, target: int, payload: tuple[KeyTerm, ...]
    ) -> None:
        ms.keys[target] = payload[0]

    def _extend_chain(
        self, ms: MemberState, path: list[int], target: int
    ) -> None:
        """Hook for schemes whose members derive ancestor keys themselves."""

    # -- coverage, accounting and validation -------------------------------------

    def expected_member_keys(
        self, state: GroupState, member: str
    ) -> tuple[dict[int, KeyTerm], dict[str, KeyTerm]]:
        keys = {}
        for n in state.tree.path_to_root(member):
            term = state.tree.nodes[n].key
            if term is not None:
                keys[n] = term
        return keys, {}

    def controller_key_count(self, state: GroupState) -> int:
        stored = sum(1 for n in state.tree.nodes.values() if n.key is not None)
        return stored + len(state.aux)

    # -- plan-construction helpers ------------------------------------------------

    def _emit(
        self,
        state: GroupState,
        plan: RekeyPlan,
        payload: KeyTerm | tuple[KeyTerm, ...],
        enc_key: KeyTerm,
        target: int,
        recipients: set[str],
        enc_node: int | None,
        enc_label: str | None = None,
        kind: str | None = None,
        destination_node: int | None = None,
        new_position: int | None = None,
    ) -> None:
        if not isinstance(payload, tuple):
            payload = (payload,)
        if kind is None:
            kind = MULTICAST
            if enc_node is not None:
                node = state.tree.nodes.get(enc_node)
                if node is not None and node.kind == "leaf":
                    kind = UNICAST
        if enc_label is None:
            enc_label = (
                node_label(enc_node, state.tree.degree)
                if enc_node is not None
                else "?"
            )
        ct = Ciphertext(
            payload=payload,
            enc_key=enc_key,
            target_node=target,
            seq=state.msg_seq,
        )
        state.msg_seq += 1
        plan.messages.append(
            RekeyMessage(
                ct=ct,
                kind=kind,
                recipients=frozenset(recipients),
                enc_node=enc_node,
                enc_label=enc_label,
                destination_node=destination_node,
                new_position=new_position,
            )
        )

    def _new_plan(self, state: GroupState, kind: str) -> RekeyPlan:
        state.event_count += 1
        return RekeyPlan(
            scheme=self.id, kind=kind, degree=state.tree.degree or self.params.degree
        )

    def _require_absent(self, state: GroupState, member: str) -> None:
        if member in state.tree.placement:
            raise AlreadyMember(f"{member} is already in the group")

    def _require_present(self, state: GroupState, member: str) -> None:
        if member not in state.tree.placement:
            raise MemberNotFound(f"{member} is not in the group")

    def _fresh_individual(self, state: GroupState, member: str) -> KeyTerm:
        return state.factory.fresh(f"k[{member}]")

    @staticmethod
    def _sorted_bottom_up(tree: KeyTree, nodes: list[int]) -> list[int]:
        return sorted(nodes, key=lambda n: (-node_depth(n, tree.degree), n))


def recipients_of(msg: RekeyMessage, state: GroupState) -> set[str]:
    """Members that currently hold the message's wrapping key."""
    from ..errors import InternalInconsistency

    term = msg.ct.enc_key
    for n in sorted(state.tree.nodes):
        if state.tree.nodes[n].key == term:
            return set(state.tree.subtree_members(n))
    for label, aux_term in state.aux.items():
        if aux_term == term:
            if label.startswith("personal:"):
                return {label.split(":", 1)[1]}
            return set(state.tree.placement)
    raise InternalInconsistency("wrapping key is not held anywhere")
