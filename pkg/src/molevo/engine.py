"""Generational optimization loop: seeded initialization, crossover plus
probabilistic mutation, optional LLM mutation of the fittest members,
similarity pruning of offspring, elitist or Pareto survivor selection, and
budget/early-stop termination.

Determinism contract: every random draw comes from a stream derived from
(seed, generation, slot, role), so the run record is a pure function of
(config, seed, oracle, mock endpoints) regardless of worker timing.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

from . import genetic_ops, llm_ops, molgraph
from .fingerprint import morgan_fingerprint, tanimoto
from .genetic_ops import MutationTable, derive_rng
from .metrics import topk_auc
from .oracle import BudgetExhausted, OracleHandle, TaskSpec
from .pareto import ObjectivePoint, select_pareto_survivors
from .records import Individual, RunRecord

WIRINGS = ("graphga", "gpt4-style", "biot5-style")


@dataclass
class EngineConfig:
    n_c: int = 120            # population size
    num_crossovers: int = 70  # children proposed per generation
    p_m: float = 0.067        # per-child mutation probability
    y_top: int = 30           # fittest members LLM-mutated per generation
    n_o: int = 70             # offspring kept after similarity pruning
    budget: int = 10000
    early_stop_window: int = 5
    early_stop_threshold: float = 1e-3
    wiring: str = "graphga"
    seed: int = 0
    workers: int = 4          # concurrent LLM requests

    def __post_init__(self):
        if self.n_c <= 0:
            raise ValueError("n_c must be > 0")
        if not 0.0 <= self.p_m <= 1.0:
            raise ValueError("p_m must be within [0, 1]")
        if self.n_o > self.num_crossovers + self.y_top:
            raise ValueError("n_o cannot exceed num_crossovers + y_top")
        if self.wiring not in WIRINGS:
            raise ValueError(f"unknown wiring {self.wiring!r}")
        if self.budget <= 0:
            raise ValueError("budget must be > 0")
        if self.early_stop_window <= 0:
            raise ValueError("early_stop_window must be > 0")
        if self.workers <= 0:
            raise ValueError("workers must be > 0")


def load_seed_pool(path) -> list[Individual]:
    """Parse a SMILES-per-line pool file, skipping invalid lines loudly."""
    pool: list[Individual] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    mol = molgraph.parse_smiles(text)
                smi = molgraph.write_smiles(mol)
            except molgraph.MolError as exc:
                warnings.warn(f"seed pool line {ln} skipped: {exc}")
                continue
            if not molgraph.validate(mol).ok or smi in seen:
                continue
            seen.add(smi)
            pool.append(Individual(mol, smi, provenance="seed"))
    return pool


def check_early_stop(history: list[float], window: int = 5,
                     threshold: float = 1e-3) -> bool:
    """True when the top-score statistic failed to improve by at least
    `threshold` over the last `window` generations."""
    if len(history) < window + 1:
        return False
    base = history[-(window + 1)]
    return max(history[-window:]) - base < threshold


class Engine:
    def __init__(self, config: EngineConfig, task: TaskSpec,
                 oracle: OracleHandle, llm_client=None,
                 mutation_table: MutationTable | None = None,
                 run_dir=None):
        if config.wiring != "graphga" and llm_client is None:
            raise ValueError(f"wiring {config.wiring!r} needs an LLM client")
        self.config = config
        self.task = task
        self.oracle = oracle
        self.llm = llm_client
        self.table = mutation_table if mutation_table is not None \
            else MutationTable()
        self.run_dir = run_dir
        self.population: list[Individual] = []
        self.generation = 0
        self.history: list[float] = []   # per-generation top-100 mean
        self.stats = llm_ops.OperatorStats()
        self.termination_reason = ""
        self._persisted_entries = 0

    # ------------------------------------------------------------------
    # initialization / resume
    # ------------------------------------------------------------------

    def initialize(self, seed_pool_path) -> None:
        pool = load_seed_pool(seed_pool_path)
        if len(pool) < self.config.n_c:
            raise ValueError(
                f"seed pool has {len(pool)} valid molecules, "
                f"need {self.config.n_c}")
        rng = derive_rng(self.config.seed, "init")
        chosen = rng.sample(pool, self.config.n_c)
        self.oracle.current_generation = 0
        for ind in chosen:
            self.oracle.evaluate_individual(ind)
        self.population = chosen
        self._note_generation_score()
        self._persist_generation()

    def resume(self, run_dir) -> None:
        """Rebuild engine state from a persisted run directory."""
        record = RunRecord.load_jsonl(os.path.join(run_dir, "record.jsonl"))
        self.oracle.preload_cache(record.entries)
        self.oracle.record.entries = list(record.entries)
        self._persisted_entries = len(record.entries)
        with open(os.path.join(run_dir, "state.json"), encoding="utf-8") as fh:
            state = json.load(fh)
        self.generation = state["generation"]
        self.history = list(state["history"])
        self.population = []
        for smi in state["population"]:
            mol = molgraph.parse_smiles(smi)
            ind = Individual(mol, smi, generation=self.generation)
            self.oracle.evaluate_individual(ind)  # cache hit, budget-free
            self.population.append(ind)
        self.run_dir = run_dir

    # ------------------------------------------------------------------
    # one generation
    # ------------------------------------------------------------------

    def _propose_crossovers(self) -> list[Individual]:
        cfg = self.config
        gen = self.generation

        def one_slot(slot: int):
            # local stats per slot so threaded slots never race on counters
            local = llm_ops.OperatorStats()
            rng_p = derive_rng(cfg.seed, gen, slot, "p")
            rng_x = derive_rng(cfg.seed, gen, slot, "x")
            rng_m = derive_rng(cfg.seed, gen, slot, "m")
            a, b = genetic_ops.sample_parents(self.population, rng_p)
            provenance = "crossover"
            if cfg.wiring == "gpt4-style":
                child = llm_ops.llm_crossover(self.llm, self.task, a, b,
                                              rng_x, local)
                if local.fallbacks == 0:
                    provenance = "llm_crossover"
            else:
                child = genetic_ops.crossover(a.molecule, b.molecule, rng_x)
            if child is None:
                return None, local
            if rng_m.random() < cfg.p_m:
                mutated = genetic_ops.mutate(child, self.table, rng_m)
                if mutated is not None:
                    child = mutated
                    provenance += "+mutation"
            ind = Individual(child, molgraph.write_smiles(child),
                             generation=gen, provenance=provenance)
            return ind, local

        slots = range(cfg.num_crossovers)
        if cfg.wiring == "gpt4-style" and cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(one_slot, slots))
        else:
            results = [one_slot(s) for s in slots]
        out = []
        for ind, local in results:
            self.stats.queries += local.queries
            self.stats.invalid += local.invalid
            self.stats.fallbacks += local.fallbacks
            if ind is not None:
                out.append(ind)
        return out

    def _propose_llm_mutations(self) -> list[Individual]:
        if self.config.wiring != "biot5-style" or self.config.y_top == 0:
            return []
        ranked = sorted(self.population, key=lambda i: i.fitness, reverse=True)
        targets = ranked[:self.config.y_top]

        def one(ind):
            local = llm_ops.OperatorStats()
            mol = llm_ops.llm_mutate(self.llm, self.task, ind, local)
            if mol is None or mol.num_atoms() == 0:
                return None, local
            child = Individual(mol, molgraph.write_smiles(mol),
                               generation=self.generation,
                               provenance="llm_mutation")
            return child, local

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(one, targets))
        else:
            results = [one(t) for t in targets]
        out = []
        for child, local in results:
            self.stats.queries += local.queries
            self.stats.invalid += local.invalid
            if child is not None:
                out.append(child)
        return out

    def _prune_offspring(self, offspring: list[Individual]) -> list[Individual]:
        """Keep the n_o offspring structurally closest to the current best."""
        if len(offspring) <= self.config.n_o:
            return offspring
        best = max(self.population, key=lambda i: i.fitness)
        ref = morgan_fingerprint(best.molecule)
        ranked = sorted(
            enumerate(offspring),
            key=lambda p: (1.0 - tanimoto(morgan_fingerprint(p[1].molecule),
                                          ref), p[0]))
        kept = [p for p in ranked[:self.config.n_o]]
        kept.sort(key=lambda p: p[0])
        return [ind for _, ind in kept]

    def step(self) -> bool:
        """Run one generation; False when the budget ran out mid-step."""
        self.generation += 1
        self.oracle.current_generation = self.generation
        offspring = self._propose_crossovers() + self._propose_llm_mutations()

        seen = {ind.smiles for ind in self.population}
        unique: list[Individual] = []
        for ind in offspring:
            if ind.smiles not in seen:
                seen.add(ind.smiles)
                unique.append(ind)
        unique = self._prune_offspring(unique)

        evaluated: list[Individual] = []
        exhausted = False
        for ind in unique:
            try:
                self.oracle.evaluate_individual(ind)
                evaluated.append(ind)
            except BudgetExhausted:
                exhausted = True
                break

        pool = self.population + evaluated
        if self.task.aggregation == "pareto":
            points = [ObjectivePoint(ind.scores.normalized, owner=i)
                      for i, ind in enumerate(pool)]
            survivors = select_pareto_survivors(
                points, min(self.config.n_c, len(points)),
                weights=self.task.weights)
            self.population = [pool[p.owner] for p in survivors]
        else:
            pool.sort(key=lambda i: i.fitness, reverse=True)
            self.population = pool[:self.config.n_c]
        self._note_generation_score()
        self._persist_generation()
        return not exhausted

    # ------------------------------------------------------------------
    # bookkeeping
    # ------------------------------------------------------------------

    def _note_generation_score(self) -> None:
        scores = sorted(self.oracle.record.scalars(), reverse=True)
        top = scores[:100]
        self.history.append(sum(top) / len(top) if top else 0.0)

    def _persist_generation(self) -> None:
        if self.run_dir is None:
            return
        entries = self.oracle.record.entries
        path = os.path.join(self.run_dir, "record.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            for e in entries[self._persisted_entries:]:
                fh.write(e.to_json() + "\n")
        self._persisted_entries = len(entries)
        state = {
            "generation": self.generation,
            "history": self.history,
            "population": [ind.smiles for ind in self.population],
        }
        tmp = os.path.join(self.run_dir, "state.json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh, sort_keys=True)
        os.replace(tmp, os.path.join(self.run_dir, "state.json"))

    def summary(self) -> dict:
        scalars = self.oracle.record.scalars()
        out = {
            "task": self.task.name,
            "wiring": self.config.wiring,
            "seed": self.config.seed,
            "generations": self.generation,
            "oracle_calls": self.oracle.ledger.used,
            "budget": self.config.budget,
            "termination_reason": self.termination_reason,
            "best_fitness": max(scalars) if scalars else None,
            "best_smiles": None,
            "operator_stats": self.stats.as_dict(),
        }
        if scalars:
            best = max(self.oracle.record.entries, key=lambda e: e.scalar)
            out["best_smiles"] = best.smiles
            for k in (1, 10, 100):
                if k <= self.config.budget:
                    out[f"top{k}_auc"] = topk_auc(scalars, k,
                                                  self.config.budget)
        return out

    # ------------------------------------------------------------------
    # full run
    # ------------------------------------------------------------------

    def run(self, seed_pool_path=None) -> RunRecord:
        cfg = self.config
        if not self.population:
            if seed_pool_path is None:
                raise ValueError("no population and no seed pool given")
            try:
                self.initialize(seed_pool_path)
            except BudgetExhausted:
                self.termination_reason = "budget"
        while not self.termination_reason:
            if self.oracle.ledger.remaining < len(self.task.objectives):
                self.termination_reason = "budget"
                break
            if check_early_stop(self.history, cfg.early_stop_window,
                                cfg.early_stop_threshold):
                self.termination_reason = "early_stop"
                break
            if not self.step():
                self.termination_reason = "budget"
        record = self.oracle.record
        record.termination_reason = self.termination_reason
        record.operator_stats = self.stats.as_dict()
        record.config = asdict(cfg)
        if self.run_dir is not None:
            path = os.path.join(self.run_dir, "summary.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.summary(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        return record
