"""Objective evaluation: task specs, budget ledger, caching, built-in oracles
and the child-process bridge client.

Every *new* molecule evaluation consumes one budget unit per objective; a
cache hit by canonical SMILES is free.  The budget check-and-increment is a
single locked step, so concurrent workers can never overshoot the budget.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass, field

from . import molgraph
from .fingerprint import morgan_fingerprint, tanimoto
from .molgraph import Molecule
from .records import Individual, RecordEntry, RunRecord, ScoreVector


class BudgetExhausted(RuntimeError):
    pass


class BridgeFailure(RuntimeError):
    """Retryable failure of an external oracle bridge process."""


class OracleError(RuntimeError):
    pass


@dataclass
class Objective:
    name: str
    oracle_id: str
    direction: str = "maximize"
    weight: float = 1.0
    params: dict = field(default_factory=dict)
    bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.weight <= 0:
            raise ValueError("objective weights must be > 0")
        lo, hi = self.bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"bad bounds {self.bounds}")


@dataclass
class TaskSpec:
    name: str
    objectives: list[Objective]
    aggregation: str = "sum"
    # prompt slots (paper-template text per task)
    task_text: str = ""
    objective_text: str = ""
    objective_definition: str = ""
    mutation_objective_text: str = ""
    caption_text: str = ""

    def __post_init__(self):
        if not self.objectives:
            raise ValueError("a task needs at least one objective")
        if self.aggregation not in ("sum", "pareto"):
            raise ValueError(f"bad aggregation {self.aggregation!r}")

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(o.weight for o in self.objectives)


@dataclass
class BudgetLedger:
    budget: int
    used: int = 0
    per_objective: dict[str, int] = field(default_factory=dict)

    @property
    def remaining(self) -> int:
        return self.budget - self.used


def transform_direction(raw: float, direction: str,
                        bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"bad bounds {bounds}")
    x = min(max(raw, lo), hi)
    x = (x - lo) / (hi - lo)
    return 1.0 - x if direction == "minimize" else x


# ---------------------------------------------------------------------------
# built-in pure oracles
# ---------------------------------------------------------------------------

def isomer_score(mol: Molecule, target: dict[str, int]) -> float:
    """Gaussian-per-element geometric mean against a target formula.

    Terms: one per element in the union of both formulas plus one for the
    total atom count (heavy + H); each term is exp(-d^2 / 2).
    """
    if not target:
        raise ValueError("empty target formula")
    have = molgraph.molecular_formula(mol)
    elements = sorted(set(target) | set(have))
    log_sum = 0.0
    terms = 0
    for el in elements:
        d = have.get(el, 0) - target.get(el, 0)
        log_sum += -(d * d) / 2.0
        terms += 1
    d = sum(have.values()) - sum(target.values())
    log_sum += -(d * d) / 2.0
    terms += 1
    return math.exp(log_sum / terms)


def similarity_score(mol: Molecule, target: Molecule) -> float:
    return tanimoto(morgan_fingerprint(mol), morgan_fingerprint(target))


def fp_landscape_score(mol: Molecule, seed: int, n_probes: int = 48) -> float:
    """Synthetic multimodal landscape over fingerprint bits: engine testing
    without chemistry.  Deterministic in (molecule, seed)."""
    import random as _random

    rng = _random.Random(seed)
    nbits = 512
    probes = rng.sample(range(nbits), n_probes)
    weights = [rng.random() for _ in probes]
    # deceptive decoy: a second, lower-paying bit set
    decoys = rng.sample(range(nbits), n_probes)
    fp = morgan_fingerprint(mol, radius=2, nbits=nbits)
    main = sum(w for p, w in zip(probes, weights) if fp.bits >> p & 1)
    side = sum(0.4 * w for p, w in zip(decoys, weights) if fp.bits >> p & 1)
    return max(main, side) / sum(weights)


# ---------------------------------------------------------------------------
# bridge client (line-delimited JSON over a child process)
# ---------------------------------------------------------------------------

class BridgeClient:
    """Client side of the oracle bridge protocol.

    Handshake: one line {"oracle": name, "version": 1} from the child.
    Requests {"id": n, "smiles": s}; responses {"id": n, "score": x} or
    {"id": n, "error": msg}.
    """

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()
        self.oracle_name = ""

    def start(self) -> None:
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        threading.Thread(target=self._pump, daemon=True).start()
        hello = self._read_line()
        if hello is None:
            raise BridgeFailure("bridge died before handshake")
        try:
            data = json.loads(hello)
        except json.JSONDecodeError:
            raise BridgeFailure(f"bad handshake line: {hello!r}")
        if "error" in data:
            raise BridgeFailure(f"bridge startup error: {data['error']}")
        if data.get("version") != 1:
            raise BridgeFailure(f"unsupported bridge version: {data}")
        self.oracle_name = data.get("oracle", "")

    def _pump(self) -> None:
        proc = self._proc
        assert proc is not None and proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_line(self) -> str | None:
        try:
            return self._lines.get(timeout=self.timeout)
        except queue.Empty:
            return None

    def score(self, smiles: str) -> float:
        with self._lock:
            if self._proc is None:
                self.start()
            self._next_id += 1
            req_id = self._next_id
            try:
                self._proc.stdin.write(
                    json.dumps({"id": req_id, "smiles": smiles}) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._reset()
                raise BridgeFailure(f"bridge pipe broken: {exc}")
            line = self._read_line()
            if line is None:
                self._reset()
                raise BridgeFailure("bridge timed out or died mid-request")
            try:
                data = json.loads(line)
            except json.JSONDecodeError:
                self._reset()
                raise BridgeFailure(f"bad bridge response: {line!r}")
            if data.get("id") != req_id:
                self._reset()
                raise BridgeFailure(f"bridge answered wrong id: {data}")
            if "error" in data:
                raise OracleError(f"bridge oracle error: {data['error']}")
            return float(data["score"])

    def _reset(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
        self._proc = None
        self._lines = queue.Queue()
        self._next_id = 0

    def close(self) -> None:
        if self._proc is not None and self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        self._proc = None


def _make_scorer(obj: Objective):
    """Resolve an oracle id to a raw-score callable(mol, smiles)."""
    p = obj.params
    if obj.oracle_id == "isomer":
        target = molgraph.parse_formula(p["formula"])
        return lambda mol, smi: isomer_score(mol, target)
    if obj.oracle_id == "similarity":
        target = molgraph.parse_smiles(p["target"])
        return lambda mol, smi: similarity_score(mol, target)
    if obj.oracle_id == "fp_landscape":
        seed = int(p.get("seed", 0))
        return lambda mol, smi: fp_landscape_score(mol, seed)
    if obj.oracle_id == "constant":
        value = float(p.get("value", 0.5))
        return lambda mol, smi: value
    if obj.oracle_id == "bridge":
        client = BridgeClient(p["command"], timeout=float(p.get("timeout", 30.0)))
        return lambda mol, smi: client.score(smi)
    raise OracleError(f"unknown oracle id {obj.oracle_id!r}")


class OracleHandle:
    """Scoring facade with budget ledger, canonical-SMILES cache and record.

    count_cached=True (strict mode) charges budget for cache hits too.
    """

    def __init__(self, task: TaskSpec, budget: int,
                 record: RunRecord | None = None, count_cached: bool = False):
        self.task = task
        self.ledger = BudgetLedger(budget=budget)
        self.record = record if record is not None else RunRecord()
        self.count_cached = count_cached
        self.cache: dict[str, ScoreVector] = {}
        self.current_generation = 0
        self._lock = threading.Lock()
        self._scorers = [_make_scorer(o) for o in task.objectives]
        self._call_index = 0

    def preload_cache(self, entries: list[RecordEntry]) -> None:
        """Rebuild cache/ledger state from a persisted record (resume)."""
        with self._lock:
            for e in entries:
                if e.smiles not in self.cache:
                    self.cache[e.smiles] = ScoreVector(e.raw, e.normalized, e.scalar)
                    self.ledger.used += len(self.task.objectives)
                    for o in self.task.objectives:
                        self.ledger.per_objective[o.name] = \
                            self.ledger.per_objective.get(o.name, 0) + 1
                self._call_index = max(self._call_index, e.call_index)

    def evaluate(self, mol: Molecule, smiles: str | None = None) -> ScoreVector:
        smi = smiles if smiles is not None else molgraph.write_smiles(mol)
        cost = len(self.task.objectives)
        with self._lock:
            hit = self.cache.get(smi)
            if hit is not None and not self.count_cached:
                return hit
            if self.ledger.used + cost > self.ledger.budget:
                raise BudgetExhausted(
                    f"oracle budget {self.ledger.budget} exhausted")
            # reserve budget inside the lock; scoring happens outside
            self.ledger.used += cost
            for o in self.task.objectives:
                self.ledger.per_objective[o.name] = \
                    self.ledger.per_objective.get(o.name, 0) + 1
            if hit is not None:
                return hit

        try:
            raw = tuple(scorer(mol, smi) for scorer in self._scorers)
        except Exception:
            with self._lock:  # refund the reservation on scorer failure
                self.ledger.used -= cost
                for o in self.task.objectives:
                    self.ledger.per_objective[o.name] -= 1
            raise
        normalized = tuple(
            transform_direction(r, o.direction, o.bounds)
            for r, o in zip(raw, self.task.objectives))
        scalar = sum(w * s for w, s in zip(self.task.weights, normalized))
        sv = ScoreVector(raw, normalized, scalar)
        with self._lock:
            self.cache[smi] = sv
            self._call_index += 1
            self.record.append(RecordEntry(
                self._call_index, smi, raw, normalized, scalar,
                self.current_generation))
        return sv

    def evaluate_individual(self, ind: Individual) -> Individual:
        ind.scores = self.evaluate(ind.molecule, ind.smiles)
        return ind
