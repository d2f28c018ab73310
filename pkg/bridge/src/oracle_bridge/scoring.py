"""Scoring functions served by the bridge.

All scores are deterministic functions of the SMILES text, so repeated calls
and restarted processes always agree bit-for-bit.
"""

from __future__ import annotations

import hashlib
import math

from . import chem


def echo(smiles: str) -> float:
    """Protocol-conformance oracle: every molecule scores 0.0."""
    return 0.0


def _gaussian(x: float, mu: float, sigma: float) -> float:
    return math.exp(-((x - mu) ** 2) / (2.0 * sigma * sigma))


# Desirability centers for a drug-like profile: molecular weight, logP,
# H-bond donors/acceptors, rotatable bonds, aromatic atoms.
_QED_PROFILE = (
    ("mw", 300.0, 120.0),
    ("logp", 2.0, 2.0),
    ("hbd", 1.5, 2.0),
    ("hba", 4.0, 3.0),
    ("rotatable", 4.0, 4.0),
    ("aromatic_atoms", 8.0, 5.0),
)


def qed(smiles: str) -> float:
    """Drug-likeness estimate in [0, 1]: geometric mean of Gaussian
    desirability terms over simple physicochemical descriptors."""
    mol = chem.parse(smiles)
    d = chem.descriptors(mol)
    log_sum = 0.0
    for key, mu, sigma in _QED_PROFILE:
        value = max(_gaussian(d[key], mu, sigma), 1e-12)
        log_sum += math.log(value)
    score = math.exp(log_sum / len(_QED_PROFILE))
    if d["charge"] != 0:
        score *= 0.7 ** abs(d["charge"])
    return score


def sa(smiles: str) -> float:
    """Synthetic-accessibility heuristic in [1, 10]; lower is easier."""
    mol = chem.parse(smiles)
    d = chem.descriptors(mol)
    penalty = 0.0
    penalty += 0.04 * max(0, d["heavy_atoms"] - 20)
    penalty += 0.6 * max(0, d["rings"] - 3)
    penalty += 0.15 * d["rotatable"]
    penalty += 0.3 * abs(d["charge"])
    exotic = sum(1 for a in mol.atoms
                 if a.element not in ("C", "N", "O", "H"))
    penalty += 0.25 * exotic
    return min(10.0, 1.0 + penalty)


def logp(smiles: str) -> float:
    return chem.descriptors(chem.parse(smiles))["logp"]


def activity(smiles: str, target: str = "jnk3") -> float:
    """Deterministic stand-in for a bioactivity classifier.

    The target name seeds a reference key set; the score is a weighted match
    fraction of the molecule's circular environments against that set,
    squashed to (0, 1).
    """
    if not target:
        raise ValueError("activity oracle needs a target name")
    mol = chem.parse(smiles)
    keys = chem.environment_keys(mol)
    if not keys:
        return 0.0
    total = 0.0
    for key in sorted(keys):
        digest = hashlib.blake2b(f"{target}|{key}".encode(),
                                 digest_size=8).digest()
        unit = int.from_bytes(digest, "big") / float(1 << 64)
        total += unit - 0.5
    raw = total / math.sqrt(len(keys))
    return 1.0 / (1.0 + math.exp(-2.0 * raw))


ORACLES = {
    "echo": lambda params: echo,
    "qed": lambda params: qed,
    "sa": lambda params: sa,
    "logp": lambda params: logp,
    "activity": lambda params: (
        lambda smiles: activity(smiles, params.get("target", "jnk3"))),
}


def make_oracle(name: str, params: dict):
    factory = ORACLES.get(name)
    if factory is None:
        raise KeyError(name)
    return factory(params)
