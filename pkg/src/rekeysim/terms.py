"""Symbolic key-term algebra.

Keys are modeled as structural terms rather than byte strings, so "who can
compute what" is an exact, decidable question.  Terms are immutable and the
constructors keep them in a canonical normal form:

* repeated hashing collapses into a single iteration count,
* XOR is flattened, sorted, and self-cancelling (``a ^ a = 0``),
* the two halves of the doubling function G are distinct opaque terms that
  never reveal their input.

Equality is structural on canonical forms.  An optional concrete mode maps
any term to key-length bytes for size realism; it never participates in
secrecy analysis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import NotDecryptable


@dataclass(frozen=True)
class Fresh:
    """An independently drawn random key, identified by tag and draw index."""

    tag: str
    index: int


@dataclass(frozen=True)
class HashIter:
    """``count`` applications of the public hash H to ``base``."""

    base: "KeyTerm"
    count: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("hash iteration count must be >= 1")
        if isinstance(self.base, HashIter):
            raise ValueError("nested HashIter is not canonical")


@dataclass(frozen=True)
class GLeft:
    """Left half of G(base), where G doubles the size of its input."""

    base: "KeyTerm"


@dataclass(frozen=True)
class GRight:
    """Right half of G(base)."""

    base: "KeyTerm"


@dataclass(frozen=True)
class Xor:
    """Canonical XOR of two or more distinct non-Xor operands."""

    operands: tuple["KeyTerm", ...]

    def __post_init__(self) -> None:
        if len(self.operands) < 2:
            raise ValueError("canonical Xor needs at least two operands")
        for op in self.operands:
            if isinstance(op, (Xor, Zero)):
                raise ValueError("Xor operands must be flattened non-zero terms")


@dataclass(frozen=True)
class Zero:
    """The empty XOR."""


ZERO = Zero()

KeyTerm = Union[Fresh, HashIter, GLeft, GRight, Xor, Zero]


def _rank(term: KeyTerm) -> tuple:
    # Total order used for canonical Xor operand sorting.
    if isinstance(term, Zero):
        return (0,)
    if isinstance(term, Fresh):
        return (1, term.tag, term.index)
    if isinstance(term, HashIter):
        return (2, _rank(term.base), term.count)
    if isinstance(term, GLeft):
        return (3, _rank(term.base))
    if isinstance(term, GRight):
        return (4, _rank(term.base))
    return (5, tuple(_rank(op) for op in term.operands))


def hash_h(term: KeyTerm) -> KeyTerm:
    """One application of the public hash H, normalized."""
    return hash_iter(term, 1)


def hash_iter(term: KeyTerm, count: int) -> KeyTerm:
    """``count`` applications of H; count 0 returns the term unchanged."""
    if count < 0:
        raise ValueError("hash iteration count must be >= 0")
    if count == 0:
        return term
    if isinstance(term, HashIter):
        return HashIter(term.base, term.count + count)
    return HashIter(term, count)


def owf_g(term: KeyTerm) -> tuple[KeyTerm, KeyTerm]:
    """Both halves of G(term): (left, right)."""
    return GLeft(term), GRight(term)


def xor_terms(*terms: KeyTerm) -> KeyTerm:
    """Canonical XOR: flattened, sorted, identical pairs cancelled."""
    parity: dict[KeyTerm, int] = {}

    def visit(t: KeyTerm) -> None:
        if isinstance(t, Zero):
            return
        if isinstance(t, Xor):
            for op in t.operands:
                visit(op)
            return
        parity[t] = parity.get(t, 0) ^ 1

    for t in terms:
        visit(t)
    live = sorted((t for t, odd in parity.items() if odd), key=_rank)
    if not live:
        return ZERO
    if len(live) == 1:
        return live[0]
    return Xor(tuple(live))


class TermFactory:
    """Deterministic source of fresh keys, one counter per tag."""

    def __init__(self) -> None:
        self._counters: dict[str, int] = {}

    def fresh(self, tag: str) -> Fresh:
        index = self._counters.get(tag, 0)
        self._counters[tag] = index + 1
        return Fresh(tag, index)


@dataclass(frozen=True)
class Ciphertext:
    """Key material wrapped under one existing key.

    ``payload`` is a tuple so a single record can carry a key packet of more
    than one key; all counting is done in payload keys.  ``target_node`` is
    the tree node whose key the payload rekeys (the deepest one, for messages
    that let receivers derive further keys themselves).
    """

    payload: tuple[KeyTerm, ...]
    enc_key: KeyTerm
    target_node: int
    seq: int


def encrypt(
    payload: KeyTerm | Iterable[KeyTerm],
    key: KeyTerm,
    target_node: int,
    seq: int = 0,
) -> Ciphertext:
    if isinstance(payload, (Fresh, HashIter, GLeft, GRight, Xor, Zero)):
        payload = (payload,)
    else:
        payload = tuple(payload)
    return Ciphertext(payload=payload, enc_key=key, target_node=target_node, seq=seq)


def decrypt(ct: Ciphertext, known: Iterable[KeyTerm]) -> tuple[KeyTerm, ...]:
    """Return the payload iff ``known`` contains the wrapping key."""
    if ct.enc_key not in set(known):
        raise NotDecryptable(f"wrapping key not held for message {ct.seq}")
    return ct.payload


def render(term: KeyTerm) -> str:
    """Stable, human-readable rendering used in traces and reports."""
    if isinstance(term, Zero):
        return "0"
    if isinstance(term, Fresh):
        return f"{term.tag}{term.index}"
    if isinstance(term, HashIter):
        if term.count == 1:
            return f"H({render(term.base)})"
        return f"H^{term.count}({render(term.base)})"
    if isinstance(term, GLeft):
        return f"L({render(term.base)})"
    if isinstance(term, GRight):
        return f"R({render(term.base)})"
    return "(" + " (+) ".join(render(op) for op in term.operands) + ")"


@dataclass(frozen=True)
class CryptoParams:
    """Key length in bytes (for byte accounting) and evaluation mode."""

    key_length: int = 16
    mode: str = "symbolic"

    def __post_init__(self) -> None:
        if self.key_length <= 0:
            raise ValueError("key_length must be positive")
        if self.mode not in ("symbolic", "concrete"):
            raise ValueError(f"unknown mode {self.mode!r}")


def concrete_bytes(term: KeyTerm, params: CryptoParams, salt: bytes = b"") -> bytes:
    """Map a term to ``key_length`` bytes, preserving the term algebra.

    H is a keyed hash truncated to the key length; G is two keyed-hash
    invocations with distinct domain-separation tags, so its output doubles
    the input as required.  XOR is bytewise.
    """
    n = params.key_length

    def h(domain: bytes, data: bytes) -> bytes:
        return hashlib.blake2b(data, digest_size=n, person=domain[:16]).digest()

    def ev(t: KeyTerm) -> bytes:
        if isinstance(t, Zero):
            return bytes(n)
        if isinstance(t, Fresh):
            return h(b"fresh", salt + t.tag.encode() + t.index.to_bytes(8, "big"))
        if isinstance(t, HashIter):
            out = ev(t.base)
            for _ in range(t.count):
                out = h(b"hash-h", out)
            return out
        if isinstance(t, GLeft):
            return h(b"owf-g-left", ev(t.base))
        if isinstance(t, GRight):
            return h(b"owf-g-right", ev(t.base))
        out = bytes(n)
        for op in t.operands:
            out = bytes(a ^ b for a, b in zip(out, ev(op)))
        return out

    return ev(term)
