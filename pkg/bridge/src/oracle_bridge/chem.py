"""Minimal SMILES reading and descriptor computation for the bridge oracles.

This is intentionally a small, dependency-free reader: enough structure
(atoms, bonds, rings, aromatic flags, implicit hydrogens) to compute the
property descriptors the scoring functions need.  It does not kekulize or
enforce valence rules; strings it cannot read raise ParseError.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_OK = {"b", "c", "n", "o", "p", "s"}

DEFAULT_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2,
                   "F": 1, "Cl": 1, "Br": 1, "I": 1}

ATOMIC_WEIGHT = {
    "H": 1.008, "B": 10.811, "C": 12.011, "N": 14.007, "O": 15.999,
    "F": 18.998, "Si": 28.086, "P": 30.974, "S": 32.065, "Cl": 35.453,
    "Se": 78.971, "Br": 79.904, "I": 126.904,
}


class ParseError(ValueError):
    pass


@dataclass
class Atom:
    element: str
    aromatic: bool = False
    charge: int = 0
    explicit_h: int | None = None
    h_count: int = 0
    in_ring: bool = False


@dataclass
class Mol:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[tuple[int, int, float]] = field(default_factory=list)

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        out = []
        for a, b, order in self.bonds:
            if a == i:
                out.append((b, order))
            elif b == i:
                out.append((a, order))
        return out


_BRACKET_RE = re.compile(
    r"\[(?P<iso>\d*)(?P<sym>[A-Za-z][a-z]?|\*)(?P<chir>@{0,2})"
    r"(?P<h>H\d*)?(?P<chg>[+-]+\d*|[+-]\d*)?(?::\d+)?\]")

_BOND_ORDER = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5, "/": 1.0, "\\": 1.0}


def parse(smiles: str) -> Mol:
    if not smiles or smiles != smiles.strip():
        raise ParseError("empty or padded SMILES")
    mol = Mol()
    prev: list[int | None] = [None]
    pending_order: float | None = None
    ring_open: dict[str, tuple[int, float | None]] = {}
    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch in "()":
            if ch == "(":
                prev.append(prev[-1])
            else:
                if len(prev) == 1:
                    raise ParseError("unmatched ')'")
                prev.pop()
            i += 1
            continue
        if ch in _BOND_ORDER:
            pending_order = _BOND_ORDER[ch]
            i += 1
            continue
        if ch == ".":
            prev[-1] = None
            pending_order = None
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                label = smiles[i:i + 3]
                if len(label) != 3 or not label[1:].isdigit():
                    raise ParseError("bad %nn ring label")
                i += 3
            else:
                label = ch
                i += 1
            if prev[-1] is None:
                raise ParseError("ring label before any atom")
            if label in ring_open:
                j, order = ring_open.pop(label)
                order = order if order is not None else pending_order
                if order is None:
                    a, b = mol.atoms[j], mol.atoms[prev[-1]]
                    order = 1.5 if a.aromatic and b.aromatic else 1.0
                mol.bonds.append((j, prev[-1], order))
                mol.atoms[j].in_ring = True
                mol.atoms[prev[-1]].in_ring = True
            else:
                ring_open[label] = (prev[-1], pending_order)
            pending_order = None
            continue
        atom = None
        if ch == "[":
            end = smiles.find("]", i)
            if end < 0:
                raise ParseError("unclosed bracket atom")
            m = _BRACKET_RE.fullmatch(smiles[i:end + 1])
            if m is None:
                raise ParseError(f"unreadable bracket atom {smiles[i:end+1]!r}")
            sym = m.group("sym")
            aromatic = sym[0].islower()
            element = sym.capitalize() if aromatic else sym
            h = m.group("h")
            explicit_h = 0 if h is None else (1 if h == "H" else int(h[1:]))
            chg_text = m.group("chg") or ""
            charge = 0
            if chg_text:
                sign = 1 if chg_text[0] == "+" else -1
                digits = chg_text.lstrip("+-")
                charge = sign * (int(digits) if digits else len(chg_text))
            atom = Atom(element, aromatic, charge, explicit_h)
            i = end + 1
        else:
            two = smiles[i:i + 2]
            if two in ("Cl", "Br"):
                atom = Atom(two)
                i += 2
            elif ch in ORGANIC:
                atom = Atom(ch)
                i += 1
            elif ch in AROMATIC_OK:
                atom = Atom(ch.upper(), aromatic=True)
                i += 1
            else:
                raise ParseError(f"unexpected character {ch!r} at {i}")
        idx = len(mol.atoms)
        mol.atoms.append(atom)
        if prev[-1] is not None:
            order = pending_order
            if order is None:
                a, b = mol.atoms[prev[-1]], atom
                order = 1.5 if a.aromatic and b.aromatic else 1.0
            mol.bonds.append((prev[-1], idx, order))
        pending_order = None
        prev[-1] = idx
    if ring_open:
        raise ParseError(f"unclosed ring labels: {sorted(ring_open)}")
    if len(prev) != 1:
        raise ParseError("unmatched '('")
    if not mol.atoms:
        raise ParseError("no atoms")
    _mark_rings(mol)
    _assign_hydrogens(mol)
    return mol


def _mark_rings(mol: Mol) -> None:
    """Flag every atom on a cycle by pruning to the graph's 2-core."""
    degree = [0] * len(mol.atoms)
    adj: list[set[int]] = [set() for _ in mol.atoms]
    for a, b, _ in mol.bonds:
        adj[a].add(b)
        adj[b].add(a)
        degree[a] += 1
        degree[b] += 1
    leaves = [i for i, d in enumerate(degree) if d <= 1]
    while leaves:
        i = leaves.pop()
        degree[i] = 0
        for j in adj[i]:
            if degree[j] > 0:
                degree[j] -= 1
                if degree[j] == 1:
                    leaves.append(j)
        adj[i] = set()
    for i, d in enumerate(degree):
        if d >= 2:
            mol.atoms[i].in_ring = True


def _assign_hydrogens(mol: Mol) -> None:
    for i, atom in enumerate(mol.atoms):
        if atom.explicit_h is not None:
            atom.h_count = atom.explicit_h
            continue
        default = DEFAULT_VALENCE.get(atom.element)
        if default is None:
            atom.h_count = 0
            continue
        bondsum = sum(order for _, order in mol.neighbors(i))
        atom.h_count = max(0, default - math.ceil(bondsum))


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

# Crippen-style single-atom logP contributions, heavily simplified.
_LOGP_CONTRIB = {"C": 0.15, "N": -0.65, "O": -0.70, "S": 0.30, "P": -0.40,
                 "F": 0.25, "Cl": 0.65, "Br": 0.85, "I": 1.05, "B": -0.20}


def descriptors(mol: Mol) -> dict:
    heavy = len(mol.atoms)
    mw = sum(ATOMIC_WEIGHT.get(a.element, 0.0) + a.h_count * ATOMIC_WEIGHT["H"]
             for a in mol.atoms)
    hba = sum(1 for a in mol.atoms if a.element in ("N", "O"))
    hbd = sum(1 for a in mol.atoms
              if a.element in ("N", "O") and a.h_count > 0)
    aromatic_atoms = sum(1 for a in mol.atoms if a.aromatic)
    components = _component_count(mol)
    rings = len(mol.bonds) - heavy + components
    degree = [0] * heavy
    for a, b, _ in mol.bonds:
        degree[a] += 1
        degree[b] += 1
    rotatable = sum(
        1 for a, b, order in mol.bonds
        if order == 1.0 and degree[a] > 1 and degree[b] > 1
        and not (mol.atoms[a].in_ring and mol.atoms[b].in_ring))
    logp = sum(_LOGP_CONTRIB.get(a.element, 0.0) for a in mol.atoms)
    logp += 0.5 * (rings - aromatic_atoms / 6.0) - 0.1 * hbd
    return {
        "mw": mw, "heavy_atoms": heavy, "hba": hba, "hbd": hbd,
        "aromatic_atoms": aromatic_atoms, "rings": rings,
        "rotatable": rotatable, "logp": logp,
        "charge": sum(a.charge for a in mol.atoms),
    }


def _component_count(mol: Mol) -> int:
    n = len(mol.atoms)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in mol.bonds:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i in range(n)})


def environment_keys(mol: Mol, radius: int = 2) -> set[str]:
    """Circular atom-environment strings used by the surrogate classifiers."""
    labels = [f"{a.element}{'a' if a.aromatic else ''}"
              f"d{len(mol.neighbors(i))}h{a.h_count}"
              for i, a in enumerate(mol.atoms)]
    keys = set(labels)
    current = list(labels)
    for _ in range(radius):
        nxt = []
        for i in range(len(mol.atoms)):
            env = sorted(f"{order:g}:{current[j]}"
                         for j, order in mol.neighbors(i))
            nxt.append(current[i] + "(" + ",".join(env) + ")")
        keys.update(nxt)
        current = nxt
    return keys
