"""Circular (Morgan-style) fingerprints and Tanimoto similarity.

Bit positions come from a stable 64-bit blake2b hash of the atom-environment
tuples, so fingerprints are reproducible across runs and platforms.  The
hash scheme is frozen; changing it would invalidate cached similarities.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .molgraph import BondOrder, Molecule

DEFAULT_RADIUS = 2
DEFAULT_NBITS = 2048


@dataclass(frozen=True)
class Fingerprint:
    bits: int  # bitmask, little-endian bit i = position i
    nbits: int
    radius: int

    def popcount(self) -> int:
        return self.bits.bit_count()

    def positions(self) -> list[int]:
        return [i for i in range(self.nbits) if self.bits >> i & 1]


def _stable_hash(obj) -> int:
    digest = hashlib.blake2b(repr(obj).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _bond_key(order: BondOrder) -> int:
    return 4 if order is BondOrder.AROMATIC else order.value


def morgan_fingerprint(mol: Molecule, radius: int = DEFAULT_RADIUS,
                       nbits: int = DEFAULT_NBITS) -> Fingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if nbits <= 0 or nbits & (nbits - 1):
        raise ValueError("nbits must be a positive power of two")

    n = len(mol.atoms)
    nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for a, b, order in mol.bonds:
        k = _bond_key(order)
        nbrs[a].append((b, k))
        nbrs[b].append((a, k))

    invariants = [
        _stable_hash((a.element, len(nbrs[i]), a.formal_charge, a.total_h,
                      a.aromatic))
        for i, a in enumerate(mol.atoms)
    ]

    bits = 0
    for i in range(n):
        bits |= 1 << (invariants[i] % nbits)
    for r in range(1, radius + 1):
        invariants = [
            _stable_hash((r, invariants[i],
                          tuple(sorted((k, invariants[j]) for j, k in nbrs[i]))))
            for i in range(n)
        ]
        for i in range(n):
            bits |= 1 << (invariants[i] % nbits)
    return Fingerprint(bits=bits, nbits=nbits, radius=radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|A&B| / |A|B|; two empty fingerprints count as identical (1.0)."""
    if a.nbits != b.nbits:
        raise ValueError(f"fingerprint width mismatch: {a.nbits} != {b.nbits}")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    return 1.0 - tanimoto(a, b)
