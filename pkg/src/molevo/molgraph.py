"""Molecular graph model: SMILES parsing/writing, valence checking, formulas.

The graph is a plain attributed multigraph-free structure: atoms plus a list
of (i, j, order) bonds.  Aromaticity is normalized on construction: input is
kekulized for valence accounting, then rings are re-perceived, so any two
encodings of the same molecule canonicalize to the same string.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import networkx as nx

ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ELEMENTS = {"B", "C", "N", "O", "P", "S"}

# Base valences per element; a formal charge of c widens the allowed set to
# {v + c, v - c} (clipped at 0), which covers the usual organic ions
# (N+ -> 4, O- -> 1, C- -> 3) without chasing isoelectronic tables.
VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    # bracket-only extras from periods 2-4
    "Si": (4,),
    "Se": (2, 4, 6),
    "As": (3, 5),
    "Ge": (4,),
    "Al": (3,),
}

ATOMIC_WEIGHT_H = 1  # only used for heavy+H totals in formula maps


class MolError(ValueError):
    """Base error for molecular graph operations."""


class SmilesSyntaxError(MolError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ValenceError(MolError):
    pass


class UnsupportedFeatureError(MolError):
    pass


class KekulizationError(MolError):
    pass


class BondOrder(enum.Enum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


@dataclass
class Atom:
    element: str
    formal_charge: int = 0
    explicit_h: int | None = None  # None => implicit, computed from valence
    aromatic: bool = False
    isotope: int | None = None
    implicit_h: int = 0  # filled by finalize

    @property
    def total_h(self) -> int:
        return (self.explicit_h or 0) + self.implicit_h


@dataclass
class Molecule:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[tuple[int, int, BondOrder]] = field(default_factory=list)
    # integer order (1/2/3) per bond after kekulization; parallel to bonds
    kekule: list[int] = field(default_factory=list)

    def num_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> list[tuple[int, int, int]]:
        """(neighbor, bond index, kekule order) triples for atom i."""
        out = []
        for b, (a1, a2, _) in enumerate(self.bonds):
            if a1 == i:
                out.append((a2, b, self.kekule[b]))
            elif a2 == i:
                out.append((a1, b, self.kekule[b]))
        return out

    def bond_order_sum(self, i: int) -> int:
        return sum(k for _, _, k in self.neighbors(i))

    def ring_count(self) -> int:
        return len(self.bonds) - len(self.atoms) + 1 if self.atoms else 0

    def permuted(self, order: list[int]) -> "Molecule":
        """Copy with atoms rearranged; order[k] is the old index of the
        atom placed at new position k."""
        import copy

        inverse = [0] * len(order)
        for new, old in enumerate(order):
            inverse[old] = new
        atoms = [copy.deepcopy(self.atoms[old]) for old in order]
        bonds = [(inverse[a], inverse[b], o) for a, b, o in self.bonds]
        return Molecule(atoms, bonds, list(self.kekule))


@dataclass
class ValidityReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def allowed_valences(element: str, charge: int) -> tuple[int, ...]:
    base = VALENCES.get(element)
    if base is None:
        raise UnsupportedFeatureError(f"unsupported element {element!r}")
    if charge == 0:
        return base
    c = abs(charge)
    vals = sorted({v + s for v in base for s in (c, -c) if v + s >= 0})
    return tuple(vals)


# ---------------------------------------------------------------------------
# SMILES tokenizer / parser
# ---------------------------------------------------------------------------

_BOND_CHARS = {"-": 1, "=": 2, "#": 3, ":": 4, "/": 1, "\\": 1}

_TWO_LETTER = {"Cl", "Br", "Si", "Se", "As", "Ge", "Al"}


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a normalized Molecule.

    Stereo markers are skipped with a warning.  Multi-fragment input keeps
    only the largest fragment (warning).  Raises SmilesSyntaxError /
    ValenceError / UnsupportedFeatureError on bad input.
    """
    if not text:
        raise SmilesSyntaxError("empty SMILES", 0)
    if not text.isascii():
        raise SmilesSyntaxError("non-ASCII SMILES", 0)

    atoms: list[Atom] = []
    bonds: list[tuple[int, int, int | None]] = []  # order or None (=default)
    frag_of: list[int] = []
    frag = 0
    prev: int | None = None
    pending_bond: int | None = None
    ring_open: dict[str, tuple[int, int | None, int]] = {}
    stack: list[tuple[int | None, int | None]] = []
    stereo_seen = False

    i = 0
    n = len(text)

    def add_atom(atom: Atom) -> int:
        nonlocal prev, pending_bond
        atoms.append(atom)
        frag_of.append(frag)
        idx = len(atoms) - 1
        if prev is not None:
            bonds.append((prev, idx, pending_bond))
        pending_bond = None
        prev = idx
        return idx

    def open_or_close_ring(label: str, pos: int) -> None:
        nonlocal pending_bond
        if prev is None:
            raise SmilesSyntaxError("ring bond before any atom", pos)
        if label in ring_open:
            a, b_open, _ = ring_open.pop(label)
            order = pending_bond if pending_bond is not None else b_open
            if b_open is not None and pending_bond is not None and b_open != pending_bond:
                raise SmilesSyntaxError(f"conflicting ring bond orders for %{label}", pos)
            if a == prev:
                raise SmilesSyntaxError("ring closure to the same atom", pos)
            bonds.append((a, prev, order))
            pending_bond = None
        else:
            ring_open[label] = (prev, pending_bond, pos)
            pending_bond = None

    while i < n:
        ch = text[i]
        if ch in _BOND_CHARS:
            if ch in ("/", "\\"):
                stereo_seen = True
            if pending_bond is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", i)
            pending_bond = _BOND_CHARS[ch]
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesSyntaxError("branch before any atom", i)
            stack.append((prev, pending_bond))
            pending_bond = None
            i += 1
        elif ch == ")":
            if not stack:
                raise SmilesSyntaxError("unmatched ')'", i)
            prev, pending_bond = stack.pop()
            i += 1
        elif ch == ".":
            if pending_bond is not None:
                raise SmilesSyntaxError("bond before fragment separator", i)
            frag += 1
            prev = None
            i += 1
        elif ch.isdigit():
            open_or_close_ring(ch, i)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not text[i + 1 : i + 3].isdigit():
                raise SmilesSyntaxError("'%' needs two digits", i)
            open_or_close_ring(text[i + 1 : i + 3], i)
            i += 3
        elif ch == "[":
            j = text.find("]", i)
            if j < 0:
                raise SmilesSyntaxError("unclosed bracket atom", i)
            atom, had_stereo = _parse_bracket(text[i + 1 : j], i + 1)
            stereo_seen = stereo_seen or had_stereo
            add_atom(atom)
            i = j + 1
        else:
            sym = None
            if text[i : i + 2] in _TWO_LETTER:
                sym = text[i : i + 2]
            elif ch.upper() in VALENCES and len(ch.upper()) == 1:
                sym = ch
            if sym is None:
                raise SmilesSyntaxError(f"unexpected character {ch!r}", i)
            aromatic = sym[0].islower()
            element = sym[0].upper() + sym[1:]
            if element not in ORGANIC_SUBSET:
                raise SmilesSyntaxError(f"element {element!r} requires brackets", i)
            if aromatic and element not in AROMATIC_ELEMENTS:
                raise SmilesSyntaxError(f"{element!r} cannot be aromatic", i)
            add_atom(Atom(element=element, aromatic=aromatic))
            i += len(sym)

    if stack:
        raise SmilesSyntaxError("unclosed branch", n)
    if ring_open:
        label, (_, _, pos) = next(iter(ring_open.items()))
        raise SmilesSyntaxError(f"unclosed ring bond {label}", pos)
    if pending_bond is not None:
        raise SmilesSyntaxError("dangling bond symbol", n)
    if stereo_seen:
        warnings.warn("stereochemistry markers ignored", stacklevel=2)

    if frag > 0:
        atoms, bonds = _largest_fragment(atoms, bonds, frag_of)

    return finalize(atoms, bonds)


def _parse_bracket(body: str, pos: int) -> tuple[Atom, bool]:
    import re

    m = re.match(r"(\d*)([A-Za-z][a-z]?)", body)
    if not m or not m.group(2):
        raise SmilesSyntaxError("bracket atom missing element", pos)
    sym = m.group(2)
    if sym.capitalize() not in VALENCES and len(sym) == 2:
        sym = sym[0]  # e.g. [CH4]: 'Ch' is not an element
    isotope = int(m.group(1)) if m.group(1) else None
    i = len(m.group(1)) + len(sym)
    n = len(body)
    stereo = False
    aromatic = sym[0].islower()
    element = sym.capitalize() if len(sym) == 2 else sym.upper()
    if element not in VALENCES:
        raise UnsupportedFeatureError(f"unsupported element {element!r}")
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise SmilesSyntaxError(f"{element!r} cannot be aromatic", pos)

    hcount = 0
    charge = 0
    while i < n:
        c = body[i]
        if c == "@":
            stereo = True
            i += 1
        elif c == "H":
            i += 1
            start = i
            while i < n and body[i].isdigit():
                i += 1
            hcount = int(body[start:i]) if i > start else 1
        elif c in "+-":
            sign = 1 if c == "+" else -1
            i += 1
            start = i
            while i < n and body[i].isdigit():
                i += 1
            if i > start:
                charge = sign * int(body[start:i])
            else:
                charge = sign
                while i < n and body[i] == c:
                    charge += sign
                    i += 1
        elif c == ":":
            i += 1
            while i < n and body[i].isdigit():  # atom class: ignored
                i += 1
        else:
            raise SmilesSyntaxError(f"unexpected {c!r} in bracket atom", pos + i)

    return Atom(element=element, formal_charge=charge, explicit_h=hcount,
                aromatic=aromatic, isotope=isotope), stereo


def _largest_fragment(atoms, bonds, frag_of):
    sizes: dict[int, int] = {}
    for f in frag_of:
        sizes[f] = sizes.get(f, 0) + 1
    keep = max(sizes, key=lambda f: (sizes[f], -f))
    warnings.warn("multi-fragment SMILES: keeping largest fragment", stacklevel=3)
    remap = {}
    new_atoms = []
    for idx, (a, f) in enumerate(zip(atoms, frag_of)):
        if f == keep:
            remap[idx] = len(new_atoms)
            new_atoms.append(a)
    new_bonds = [(remap[a], remap[b], o) for a, b, o in bonds
                 if a in remap and b in remap]
    return new_atoms, new_bonds


# ---------------------------------------------------------------------------
# Finalization: kekulize, implicit hydrogens, aromaticity perception
# ---------------------------------------------------------------------------

def finalize(atoms: list[Atom], raw_bonds: list[tuple[int, int, int | None]]) -> Molecule:
    """Build a normalized Molecule from atoms and (i, j, order-or-None) bonds.

    Order None means "default": aromatic between two aromatic atoms, else
    single.  Order 4 marks an explicit aromatic bond.  Raises on valence or
    kekulization failure.
    """
    na = len(atoms)
    seen_pairs = set()
    bonds: list[tuple[int, int, BondOrder]] = []
    for a, b, o in raw_bonds:
        if a == b or not (0 <= a < na and 0 <= b < na):
            raise MolError(f"bad bond endpoints ({a},{b})")
        key = (min(a, b), max(a, b))
        if key in seen_pairs:
            raise MolError(f"duplicate bond between {a} and {b}")
        seen_pairs.add(key)
        if o is None:
            o = 4 if (atoms[a].aromatic and atoms[b].aromatic) else 1
        bonds.append((a, b, BondOrder(o)))

    if na == 0:
        return Molecule([], [], [])

    g = nx.Graph()
    g.add_nodes_from(range(na))
    g.add_edges_from((a, b) for a, b, _ in bonds)
    if not nx.is_connected(g):
        raise MolError("disconnected molecular graph")

    kekule = _kekulize(atoms, bonds)
    _assign_implicit_h(atoms, bonds, kekule)
    mol = Molecule(list(atoms), bonds, kekule)
    _perceive_aromaticity(mol)
    return mol


def try_finalize(atoms, raw_bonds) -> Molecule | None:
    """finalize() returning None instead of raising; used by mutation ops."""
    try:
        return finalize(atoms, raw_bonds)
    except MolError:
        return None


def _target_valence(atom: Atom) -> int:
    base = {"C": 4, "N": 3, "O": 2, "S": 2, "P": 3, "B": 3}[atom.element]
    return base + (atom.formal_charge if atom.element != "B" else -atom.formal_charge)


def _kekulize(atoms: list[Atom], bonds) -> list[int]:
    """Resolve aromatic bonds to alternating single/double orders."""
    arom_bond_idx = [i for i, (_, _, o) in enumerate(bonds) if o is BondOrder.AROMATIC]
    kekule = [o.value if o is not BondOrder.AROMATIC else 1 for _, _, o in bonds]
    if not arom_bond_idx:
        for a in atoms:
            if a.aromatic:
                raise KekulizationError("aromatic atom with no aromatic bonds")
        return kekule

    adj: dict[int, list[tuple[int, int]]] = {}
    fixed_sum = [0] * len(atoms)
    for i, (a, b, o) in enumerate(bonds):
        if o is BondOrder.AROMATIC:
            if not (atoms[a].aromatic and atoms[b].aromatic):
                raise KekulizationError("aromatic bond on non-aromatic atom")
            adj.setdefault(a, []).append((b, i))
            adj.setdefault(b, []).append((a, i))
            fixed_sum[a] += 1
            fixed_sum[b] += 1
        else:
            fixed_sum[a] += o.value
            fixed_sum[b] += o.value

    needs = {}
    for idx in adj:
        atom = atoms[idx]
        h = atom.explicit_h or 0
        target = _target_valence(atom)
        total = fixed_sum[idx] + h
        if total > target and atom.element in ("N", "P", "S") and atom.formal_charge == 0:
            target = max(allowed_valences(atom.element, 0))
        needs[idx] = 1 if total < target else 0

    need_atoms = [a for a, v in needs.items() if v]
    sub = nx.Graph()
    sub.add_nodes_from(need_atoms)
    for a in need_atoms:
        for b, _ in adj[a]:
            if needs.get(b):
                sub.add_edge(a, b)
    matching = nx.max_weight_matching(sub, maxcardinality=True)
    matched = {a for pair in matching for a in pair}
    if matched != set(need_atoms):
        raise KekulizationError("no kekulization exists for aromatic system")
    matched_pairs = {frozenset(p) for p in matching}
    for i, (a, b, o) in enumerate(bonds):
        if o is BondOrder.AROMATIC and frozenset((a, b)) in matched_pairs:
            kekule[i] = 2
    return kekule


def _assign_implicit_h(atoms: list[Atom], bonds, kekule) -> None:
    bond_sum = [0] * len(atoms)
    for (a, b, _), k in zip(bonds, kekule):
        bond_sum[a] += k
        bond_sum[b] += k
    for idx, atom in enumerate(atoms):
        allowed = allowed_valences(atom.element, atom.formal_charge)
        if atom.explicit_h is None:
            fits = [v for v in allowed if v >= bond_sum[idx]]
            if not fits:
                raise ValenceError(
                    f"atom {idx} ({atom.element}) bond order sum {bond_sum[idx]} "
                    f"exceeds allowed valences {allowed}")
            atom.implicit_h = min(fits) - bond_sum[idx]
        else:
            atom.implicit_h = 0
            if bond_sum[idx] + atom.explicit_h not in allowed:
                raise ValenceError(
                    f"atom {idx} ({atom.element}) valence "
                    f"{bond_sum[idx] + atom.explicit_h} not in {allowed}")


def _perceive_aromaticity(mol: Molecule) -> None:
    """Re-derive aromatic flags from the kekulized graph (Hückel-lite)."""
    for a in mol.atoms:
        a.aromatic = False

    g = nx.Graph()
    g.add_nodes_from(range(len(mol.atoms)))
    bond_idx = {}
    for i, (a, b, _) in enumerate(mol.bonds):
        g.add_edge(a, b)
        bond_idx[frozenset((a, b))] = i
    rings = [r for r in nx.cycle_basis(g) if len(r) in (5, 6)]
    ring_atoms = {a for r in nx.cycle_basis(g) for a in r}

    double_partner: dict[int, list[int]] = {}
    has_triple = set()
    for (a, b, _), k in zip(mol.bonds, mol.kekule):
        if k == 2:
            double_partner.setdefault(a, []).append(b)
            double_partner.setdefault(b, []).append(a)
        elif k == 3:
            has_triple.update((a, b))

    aromatic_atoms: set[int] = set()
    aromatic_bonds: set[int] = set()
    for ring in rings:
        rset = set(ring)
        pi = 0
        ok = True
        for idx in ring:
            atom = mol.atoms[idx]
            if atom.element not in AROMATIC_ELEMENTS or idx in has_triple:
                ok = False
                break
            partners = double_partner.get(idx, [])
            if len(partners) > 1:
                ok = False
                break
            if partners:
                p = partners[0]
                if p in rset or p in ring_atoms:
                    pi += 1
                else:
                    ok = False  # exocyclic double bond (e.g. quinone C=O)
                    break
            else:
                el, ch = atom.element, atom.formal_charge
                if el in ("N", "P") and ch <= 0:
                    pi += 2
                elif el in ("O", "S") and ch == 0:
                    pi += 2
                elif el == "C" and ch == -1:
                    pi += 2
                elif el == "B" and ch == 0:
                    pi += 0
                else:
                    ok = False
                    break
        if ok and pi % 4 == 2:
            aromatic_atoms.update(rset)
            for k in range(len(ring)):
                a, b = ring[k], ring[(k + 1) % len(ring)]
                aromatic_bonds.add(bond_idx[frozenset((a, b))])

    for idx in aromatic_atoms:
        mol.atoms[idx].aromatic = True
    new_bonds = []
    for i, (a, b, o) in enumerate(mol.bonds):
        if i in aromatic_bonds:
            new_bonds.append((a, b, BondOrder.AROMATIC))
        else:
            new_bonds.append((a, b, BondOrder(mol.kekule[i])))
    mol.bonds = new_bonds


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(mol: Molecule) -> ValidityReport:
    """Structural and valence validation; empty report means valid."""
    report = ValidityReport()
    na = len(mol.atoms)
    if na == 0:
        return report  # degenerate empty molecule
    seen = set()
    for a, b, o in mol.bonds:
        if a == b or not (0 <= a < na and 0 <= b < na):
            report.violations.append(f"bad bond endpoints ({a},{b})")
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            report.violations.append(f"duplicate bond between {a} and {b}")
        seen.add(key)
        if o is BondOrder.AROMATIC and not (
                mol.atoms[a].aromatic and mol.atoms[b].aromatic):
            report.violations.append(f"aromatic bond {a}-{b} on non-aromatic atom")

    g = nx.Graph()
    g.add_nodes_from(range(na))
    g.add_edges_from((a, b) for a, b, _ in mol.bonds)
    if not nx.is_connected(g):
        report.violations.append("disconnected molecular graph")

    bond_sum = [0] * na
    for (a, b, _), k in zip(mol.bonds, mol.kekule):
        bond_sum[a] += k
        bond_sum[b] += k
    for idx, atom in enumerate(mol.atoms):
        try:
            allowed = allowed_valences(atom.element, atom.formal_charge)
        except UnsupportedFeatureError:
            report.violations.append(f"atom {idx}: unsupported element {atom.element}")
            continue
        v = bond_sum[idx] + atom.total_h
        if v not in allowed:
            report.violations.append(
                f"atom {idx} ({atom.element}{atom.formal_charge:+d}) valence {v} "
                f"not in {allowed}")
    return report


def molecular_formula(mol: Molecule) -> dict[str, int]:
    """Element -> count map including implicit and explicit hydrogens."""
    counts: dict[str, int] = {}
    h = 0
    for atom in mol.atoms:
        counts[atom.element] = counts.get(atom.element, 0) + 1
        h += atom.total_h
    if h:
        counts["H"] = counts.get("H", 0) + h
    return counts


def formula_to_string(counts: dict[str, int]) -> str:
    """Hill order: C, H, then alphabetical."""
    parts = []
    for el in ["C", "H"] + sorted(k for k in counts if k not in ("C", "H")):
        if counts.get(el):
            parts.append(el + (str(counts[el]) if counts[el] > 1 else ""))
    return "".join(parts)


def parse_formula(text: str) -> dict[str, int]:
    """Parse 'C7H8N2O2' into an element-count map."""
    import re

    counts: dict[str, int] = {}
    pos = 0
    for m in re.finditer(r"([A-Z][a-z]?)(\d*)", text):
        if not m.group(0):
            continue
        if m.start() != pos:
            raise MolError(f"bad formula {text!r}")
        pos = m.end()
        counts[m.group(1)] = counts.get(m.group(1), 0) + int(m.group(2) or 1)
    if pos != len(text) or not counts:
        raise MolError(f"bad formula {text!r}")
    return counts


# ---------------------------------------------------------------------------
# Canonical SMILES writer
# ---------------------------------------------------------------------------

_BRANCH_LIMIT = 5000


def write_smiles(mol: Molecule) -> str:
    """Deterministic canonical SMILES; invariant to atom-order permutation."""
    if not mol.atoms:
        return ""
    ranks = _canonical_ranks(mol)
    return _write_from_ranks(mol, ranks)


def same_graph(a: Molecule, b: Molecule) -> bool:
    return write_smiles(a) == write_smiles(b)


def _bond_key(mol: Molecule, b: int) -> int:
    o = mol.bonds[b][2]
    return 4 if o is BondOrder.AROMATIC else o.value


def _initial_invariants(mol: Molecule):
    inv = []
    for i, a in enumerate(mol.atoms):
        deg = len(mol.neighbors(i))
        inv.append((a.element, deg, a.formal_charge, a.total_h,
                    a.aromatic, a.isotope or 0))
    return inv


def _refine(mol: Molecule, ranks: list[int]) -> list[int]:
    n = len(ranks)
    nbrs = [[(j, _bond_key(mol, b)) for j, b, _ in mol.neighbors(i)]
            for i in range(n)]
    while True:
        keys = [(ranks[i], tuple(sorted((bk, ranks[j]) for j, bk in nbrs[i])))
                for i in range(n)]
        order = sorted(set(keys))
        new = [order.index(k) for k in keys]
        if new == ranks:
            return ranks
        ranks = new


def _canonical_ranks(mol: Molecule) -> list[int]:
    inv = _initial_invariants(mol)
    order = sorted(set(inv))
    ranks = [order.index(v) for v in inv]
    ranks = _refine(mol, ranks)
    if len(set(ranks)) == len(ranks):
        return ranks
    budget = [_BRANCH_LIMIT]
    best = _break_ties(mol, ranks, budget)
    return best


def _break_ties(mol: Molecule, ranks: list[int], budget: list[int]) -> list[int]:
    n = len(ranks)
    if len(set(ranks)) == n:
        return ranks
    # smallest tied rank class
    from collections import Counter

    counts = Counter(ranks)
    tied = min(r for r, c in counts.items() if c > 1)
    members = [i for i, r in enumerate(ranks) if r == tied]
    best_string = None
    best_ranks = None
    for m in members:
        if budget[0] <= 0 and best_ranks is not None:
            break
        budget[0] -= 1
        trial = [r + (1 if r > tied or (r == tied and i != m) else 0)
                 for i, r in enumerate(ranks)]
        trial = _refine(mol, trial)
        full = _break_ties(mol, trial, budget)
        s = _write_from_ranks(mol, full)
        if best_string is None or s < best_string:
            best_string = s
            best_ranks = full
    return best_ranks


def _atom_token(mol: Molecule, i: int) -> str:
    a = mol.atoms[i]
    sym = a.element.lower() if a.aromatic else a.element
    bond_sum = mol.bond_order_sum(i)
    plain_ok = (a.formal_charge == 0 and a.isotope is None
                and a.element in ORGANIC_SUBSET
                # a bare aromatic heteroatom never reads back with hydrogens
                and (not a.aromatic or a.element == "C" or a.total_h == 0))
    if plain_ok:
        fits = [v for v in allowed_valences(a.element, 0) if v >= bond_sum]
        reader_h = (min(fits) - bond_sum) if fits else -1
        if reader_h == a.total_h:
            return sym
    body = ""
    if a.isotope is not None:
        body += str(a.isotope)
    body += sym
    if a.total_h == 1:
        body += "H"
    elif a.total_h > 1:
        body += f"H{a.total_h}"
    c = a.formal_charge
    if c == 1:
        body += "+"
    elif c == -1:
        body += "-"
    elif c > 1:
        body += f"+{c}"
    elif c < -1:
        body += f"-{-c}"
    return f"[{body}]"


def _bond_token(mol: Molecule, b: int) -> str:
    a1, a2, o = mol.bonds[b]
    if o is BondOrder.SINGLE:
        if mol.atoms[a1].aromatic and mol.atoms[a2].aromatic:
            return "-"  # e.g. biphenyl bridge
        return ""
    if o is BondOrder.DOUBLE:
        return "="
    if o is BondOrder.TRIPLE:
        return "#"
    return ""  # aromatic bond between aromatic atoms is the default


def _write_from_ranks(mol: Molecule, ranks: list[int]) -> str:
    n = len(mol.atoms)
    nbr = [sorted(((ranks[j], j, b) for j, b, _ in mol.neighbors(i)))
           for i in range(n)]
    root = min(range(n), key=lambda i: ranks[i])

    # First DFS: find back (ring-closure) edges.  Each back edge is opened at
    # the endpoint visited first and closed at the one visited later; the walk
    # below repeats the exact same traversal order.
    pending_open: dict[int, list[int]] = {}
    back_seen: set[int] = set()
    tmp_visited = [False] * n

    def classify(i: int, from_bond: int | None) -> None:
        tmp_visited[i] = True
        for _, j, b in nbr[i]:
            if b == from_bond:
                continue
            if tmp_visited[j]:
                if b not in back_seen:
                    back_seen.add(b)
                    pending_open.setdefault(j, []).append(b)
            else:
                classify(j, b)

    visited = [False] * n
    closure_num: dict[int, int] = {}
    next_num = [1]
    free_nums: list[int] = []

    def closure_label(num: int) -> str:
        return str(num) if num < 10 else f"%{num:02d}"

    def walk(i: int, from_bond: int | None) -> str:
        visited[i] = True
        out = []
        if from_bond is not None:
            out.append(_bond_token(mol, from_bond))
        out.append(_atom_token(mol, i))
        closing = []
        children = []
        for _, j, b in nbr[i]:
            if b == from_bond or b in pending_open.get(i, ()):
                continue
            if b in closure_num:
                closing.append(b)
            else:
                children.append((j, b))
        for b in closing:
            num = closure_num.pop(b)
            free_nums.append(num)
            out.append(closure_label(num))
        for b in pending_open.get(i, ()):
            num = free_nums.pop() if free_nums else next_num[0]
            if num >= next_num[0]:
                next_num[0] = num + 1
            closure_num[b] = num
            out.append(_bond_token(mol, b))
            out.append(closure_label(num))
        while True:
            remaining = [(j, b) for j, b in children if not visited[j]]
            if not remaining:
                break
            j, b = remaining[0]
            if len(remaining) > 1:
                out.append("(")
                out.append(walk(j, b))
                out.append(")")
            else:
                out.append(walk(j, b))
        return "".join(out)

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * n + 100))
    try:
        classify(root, None)
        result = walk(root, None)
    finally:
        sys.setrecursionlimit(old_limit)
    return result
