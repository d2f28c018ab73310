"""Individuals and the append-only evaluation record of a run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .molgraph import Molecule


@dataclass
class ScoreVector:
    raw: tuple[float, ...]
    normalized: tuple[float, ...]
    scalar: float  # weighted sum of normalized maximized scores


@dataclass
class Individual:
    molecule: Molecule
    smiles: str  # canonical
    scores: Optional[ScoreVector] = None
    generation: int = 0
    provenance: str = "seed"

    @property
    def fitness(self) -> float:
        if self.scores is None:
            raise ValueError(f"individual {self.smiles} not yet evaluated")
        return self.scores.scalar


@dataclass
class RecordEntry:
    call_index: int
    smiles: str
    raw: tuple[float, ...]
    normalized: tuple[float, ...]
    scalar: float
    generation: int

    def to_json(self) -> str:
        return json.dumps({
            "call_index": self.call_index,
            "smiles": self.smiles,
            "raw": list(self.raw),
            "normalized": list(self.normalized),
            "scalar": self.scalar,
            "generation": self.generation,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RecordEntry":
        d = json.loads(line)
        return cls(d["call_index"], d["smiles"], tuple(d["raw"]),
                   tuple(d["normalized"]), d["scalar"], d["generation"])


class CorruptRecordError(ValueError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"{message} (line {line_number})")
        self.line_number = line_number


@dataclass
class RunRecord:
    entries: list[RecordEntry] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    operator_stats: dict = field(default_factory=dict)
    termination_reason: str = ""

    def append(self, entry: RecordEntry) -> None:
        if self.entries and entry.call_index <= self.entries[-1].call_index:
            raise ValueError("call indices must be strictly increasing")
        self.entries.append(entry)

    def scalars(self) -> list[float]:
        return [e.scalar for e in self.entries]

    def per_objective(self, i: int) -> list[float]:
        return [e.normalized[i] for e in self.entries]

    @classmethod
    def load_jsonl(cls, path) -> "RunRecord":
        rec = cls()
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    entry = RecordEntry.from_json(line)
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CorruptRecordError(f"unreadable record entry: {exc}", ln)
                try:
                    rec.append(entry)
                except ValueError as exc:
                    raise CorruptRecordError(str(exc), ln)
        return rec
