"""End-to-end acceptance gate.

Each test exercises one headline contract at full scale and prints a single
PASS/FAIL line (run with -s to see them live).  Tolerances are pinned in the
assertions, not configurable.
"""

import json
import random
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from molevo import molgraph, selfies_codec
from molevo.engine import Engine, EngineConfig
from molevo.genetic_ops import MutationTable, crossover, mutate
from molevo.llm_ops import LlmClient, LlmEndpoint, render_prompt
from molevo.metrics import (objective_diversity, structural_diversity,
                            topk_auc)
from molevo.oracle import (BridgeClient, BridgeFailure, Objective,
                           OracleHandle, TaskSpec)
from molevo.pareto import (ObjectivePoint, hypervolume, pareto_frontier,
                           strictly_dominates)

from conftest import DRUG_SMILES


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} - {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def isomer_task():
    return TaskSpec("iso", [Objective("iso", "isomer",
                                      params={"formula": "C7H8N2O2"})],
                    task_text="isomer scores",
                    objective_text="has a higher isomer score",
                    mutation_objective_text="is an isomer of C7H8N2O2")


def test_hypervolume_exactness_against_monte_carlo():
    start = time.time()
    rng = random.Random(0)
    fixture_ok = abs(hypervolume([(0.6, 0.4), (0.4, 0.7), (0.1, 0.8)])
                     - 0.37) <= 1e-9
    worst = 0.0
    samples_per_front = 1_000_000
    for dims in (2, 3, 4, 5):
        np_rng = np.random.default_rng(dims)
        cols = [np.ascontiguousarray(c) for c in
                np_rng.random((samples_per_front, dims), dtype=np.float32).T]
        for _ in range(100):
            m = rng.randint(1, 6)
            raw = [tuple(np.float32(rng.random()).item()
                         for _ in range(dims)) for _ in range(m)]
            front = [tuple(p.values) for p in pareto_frontier(
                [ObjectivePoint(v, i) for i, v in enumerate(raw)])]
            exact = hypervolume(front)
            covered = np.zeros(samples_per_front, dtype=bool)
            for p in front:
                inside = cols[0] <= np.float32(p[0])
                for d in range(1, dims):
                    inside &= cols[d] <= np.float32(p[d])
                covered |= inside
            mc = float(covered.mean())
            se = max((exact * (1 - exact) / samples_per_front) ** 0.5, 1e-9)
            worst = max(worst, abs(mc - exact) / se)
    elapsed = time.time() - start
    report("hypervolume matches 1e6-sample Monte Carlo (400 fronts, n=2..5)",
           fixture_ok and worst <= 3.0 and elapsed < 30,
           f"worst {worst:.2f} SE, {elapsed:.1f}s")


def test_frontier_equals_brute_force_on_1000_instances():
    start = time.time()
    rng = random.Random(1)
    ok = True
    for _ in range(1000):
        dims = rng.randint(2, 5)
        pts = [ObjectivePoint(tuple(round(rng.random(), 6)
                                    for _ in range(dims)), i)
               for i in range(rng.randint(1, 40))]
        ours = {tuple(p.values) for p in pareto_frontier(pts)}
        brute = {tuple(p.values) for p in pts
                 if not any(strictly_dominates(q, p) for q in pts)}
        if ours != brute:
            ok = False
            break
    elapsed = time.time() - start
    report("frontier extraction equals O(n^2) brute force on 1000 instances",
           ok and elapsed < 10, f"{elapsed:.1f}s")


def test_selfies_decoder_is_total_on_10000_random_strings():
    start = time.time()
    alphabet = selfies_codec.default_alphabet()
    rng = random.Random(2)
    failures = 0
    for _ in range(10000):
        text = "".join(rng.choice(alphabet)
                       for _ in range(rng.randint(1, 40)))
        try:
            mol = selfies_codec.decode_selfies(text)
            if not molgraph.validate(mol).ok:
                failures += 1
        except Exception:  # noqa: BLE001 - totality means no exceptions
            failures += 1
    elapsed = time.time() - start
    report("SELFIES decoding is total on 10000 random token strings",
           failures == 0 and elapsed < 10,
           f"{failures} failures, {elapsed:.1f}s")


def test_smiles_round_trip_on_1000_molecule_corpus(corpus):
    start = time.time()
    failures = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for smiles in corpus:
            try:
                mol = molgraph.parse_smiles(smiles)
                again = molgraph.parse_smiles(molgraph.write_smiles(mol))
                if not molgraph.same_graph(mol, again):
                    failures += 1
            except Exception:  # noqa: BLE001
                failures += 1
    elapsed = time.time() - start
    report("SMILES round trip is exact on the 1000-molecule corpus",
           failures == 0 and elapsed < 5,
           f"{failures} failures, {elapsed:.1f}s")


def test_operators_closed_over_valid_molecules(corpus_mols):
    start = time.time()
    rng = random.Random(3)
    table = MutationTable()
    pool = corpus_mols[:300]
    absent = 0
    invalid = 0
    for i in range(10000):
        if i % 2 == 0:
            child = crossover(rng.choice(pool), rng.choice(pool), rng)
        else:
            child = mutate(rng.choice(pool), table, rng)
        if child is None:
            absent += 1
        elif not molgraph.validate(child).ok:
            invalid += 1
    elapsed = time.time() - start
    report("10000 operator applications yield only valid molecules, "
           "absent rate < 20%",
           invalid == 0 and absent < 2000 and elapsed < 30,
           f"{invalid} invalid, {absent/100:.1f}% absent, {elapsed:.1f}s")


def test_desk_scale_formula_matching_benchmark(pool_path):
    start = time.time()
    aucs = []
    for seed in range(5):
        task = isomer_task()
        cfg = EngineConfig(budget=10000, seed=seed)
        engine = Engine(cfg, task, OracleHandle(task, cfg.budget))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            record = engine.run(pool_path)
        aucs.append(topk_auc(record.scalars(), 10, cfg.budget))
    mean = sum(aucs) / len(aucs)
    elapsed = time.time() - start
    report("formula-matching benchmark: mean top-10 AUC over 5 seeds >= 0.80",
           mean >= 0.80 and elapsed < 600,
           f"mean {mean:.4f}, seeds {[round(a, 3) for a in aucs]}, "
           f"{elapsed:.0f}s")


def _mock_client(transport):
    return LlmClient(LlmEndpoint(base_url="mock://", model="m", rpm=10 ** 9),
                     transport=transport)


def test_mock_llm_fallback_reproduces_default_wiring(pool_path):
    start = time.time()
    records = []
    for wiring, client in (
            ("graphga", None),
            ("gpt4-style", _mock_client(lambda p: "no molecule in here"))):
        task = isomer_task()
        cfg = EngineConfig(n_c=40, num_crossovers=25, n_o=25, y_top=0,
                           budget=500, seed=9, wiring=wiring, workers=4)
        engine = Engine(cfg, task, OracleHandle(task, cfg.budget),
                        llm_client=client)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            record = engine.run(pool_path)
        records.append([e.to_json() for e in record.entries])
    elapsed = time.time() - start
    report("always-invalid LLM mock reproduces default-wiring trajectory "
           "exactly", records[0] == records[1] and elapsed < 120,
           f"{len(records[0])} calls, {elapsed:.1f}s")


def test_knowledgeable_mock_improves_over_default_wiring(pool_path):
    start = time.time()
    cheat = _mock_client(lambda p: r"\box{Cc1ccc(N)cc1[N+](=O)[O-]}")
    aucs = {}
    for wiring, client in (("graphga", None), ("gpt4-style", cheat)):
        task = isomer_task()
        cfg = EngineConfig(n_c=40, num_crossovers=25, n_o=25, y_top=0,
                           budget=500, seed=9, wiring=wiring)
        engine = Engine(cfg, task, OracleHandle(task, cfg.budget),
                        llm_client=client)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            record = engine.run(pool_path)
        aucs[wiring] = topk_auc(record.scalars(), 10, cfg.budget)
    elapsed = time.time() - start
    report("oracle-peeking LLM mock strictly beats default wiring",
           aucs["gpt4-style"] > aucs["graphga"] and elapsed < 120,
           f"mock {aucs['gpt4-style']:.4f} vs default "
           f"{aucs['graphga']:.4f}, {elapsed:.1f}s")


def test_prompt_golden_files_byte_match():
    import os

    golden_dir = os.path.join(os.path.dirname(__file__), "golden")
    task = isomer_task()
    prompt = render_prompt(
        "gpt4-crossover",
        TaskSpec("iso", task.objectives, task_text="isomer scores",
                 objective_text=("has a higher isomer score for the "
                                 "molecular formula C7H8N2O2")),
        [("CCO", 0.3), ("CCN", 0.5)])
    with open(os.path.join(golden_dir, "crossover_prompt.txt"),
              encoding="utf-8") as fh:
        ok1 = prompt + "\n" == fh.read()
    mut = render_prompt("biot5-mutation", task, ["[C][C][O]"])
    with open(os.path.join(golden_dir, "mutation_prompt.txt"),
              encoding="utf-8") as fh:
        ok2 = mut == fh.read()
    report("rendered prompts byte-match the golden templates", ok1 and ok2)


def test_budget_and_early_stop_contracts(pool_path):
    import threading

    start = time.time()
    task = TaskSpec("flat", [Objective("c", "constant",
                                       params={"value": 0.5})])
    cfg = EngineConfig(n_c=25, num_crossovers=15, n_o=15, y_top=0,
                       budget=5000, seed=0)
    engine = Engine(cfg, task, OracleHandle(task, cfg.budget))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        engine.run(pool_path)
    stop_ok = (engine.termination_reason == "early_stop"
               and engine.generation <= 6)

    overshoots = 0
    molecules = ["C" * (i + 1) for i in range(12)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mols = [molgraph.parse_smiles(s) for s in molecules]
    for trial in range(1000):
        handle = OracleHandle(isomer_task(), budget=5)

        def worker(chunk):
            for m in chunk:
                try:
                    handle.evaluate(m)
                except Exception:  # noqa: BLE001 - exhaustion expected
                    pass

        threads = [threading.Thread(target=worker, args=(mols[i::4],))
                   for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if handle.ledger.used > 5:
            overshoots += 1
    elapsed = time.time() - start
    report("stagnation stops within 6 flat generations; 1000-trial parallel "
           "fuzz never overshoots the budget",
           stop_ok and overshoots == 0 and elapsed < 120,
           f"{overshoots} overshoots, {elapsed:.1f}s")


def test_metric_fixtures_match_closed_forms():
    budget = 101
    fitnesses = [0.0] * (budget // 2) + [1.0] * (budget - budget // 2)
    step_ok = abs(topk_auc(fitnesses, 1, budget)
                  - (0.5 + 1.0 / (2 * budget))) < 1e-12
    const_ok = abs(topk_auc([0.5] * 50, 10, 50) - 0.5) < 1e-12

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mols = [molgraph.parse_smiles(s) for s in DRUG_SMILES[:10]]
    from itertools import combinations

    from molevo.fingerprint import morgan_fingerprint, tanimoto

    fps = [morgan_fingerprint(m) for m in mols]
    pairs = [1.0 - tanimoto(a, b) for a, b in combinations(fps, 2)]
    div_ok = abs(structural_diversity(mols)
                 - sum(pairs) / len(pairs)) < 1e-12

    rng = random.Random(5)
    pts = [tuple(rng.random() for _ in range(3)) for _ in range(12)]
    import math

    expected = [math.dist(a, b) for a, b in combinations(pts, 2)]
    obj_ok = abs(objective_diversity(pts)
                 - sum(expected) / len(expected)) < 1e-12
    report("metric fixtures match closed forms to 1e-12",
           step_ok and const_ok and div_ok and obj_ok)


def test_bridge_conformance_and_fault_tolerance():
    start = time.time()
    # 10,000 echo round trips with lossless ids
    proc = subprocess.Popen(
        [sys.executable, "-m", "oracle_bridge", "--oracle", "echo"],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)
    proc.stdout.readline()
    ids_ok = True
    ids = list(range(10000))
    for chunk_start in range(0, len(ids), 500):
        chunk = ids[chunk_start:chunk_start + 500]
        for i in chunk:
            proc.stdin.write(json.dumps({"id": i, "smiles": "CCO"}) + "\n")
        proc.stdin.flush()
        got = [json.loads(proc.stdout.readline())["id"] for _ in chunk]
        if got != chunk:
            ids_ok = False
            break
    proc.stdin.close()
    proc.wait(timeout=10)

    # scoring through the bridge equals the direct call, bit for bit
    from oracle_bridge import qed

    from conftest import random_valid_smiles

    molecules = DRUG_SMILES[:20] + random_valid_smiles(80, seed=55)
    client = BridgeClient([sys.executable, "-m", "oracle_bridge",
                           "--oracle", "qed"], timeout=20)
    bit_ok = True
    try:
        for smi in molecules:
            try:
                direct = qed(smi)
            except Exception:  # noqa: BLE001 - reader may reject some
                continue
            if client.score(smi) != direct:
                bit_ok = False
                break
    finally:
        client.close()

    # killing the bridge mid-run surfaces a retryable failure and leaves
    # the evaluation record untouched
    task = TaskSpec("bridged", [Objective(
        "echo", "bridge",
        params={"command": [sys.executable, "-m", "oracle_bridge",
                            "--oracle", "echo"], "timeout": 10})])
    handle = OracleHandle(task, budget=50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        handle.evaluate(molgraph.parse_smiles("CCO"))
        entries_before = len(handle.record.entries)
        bridge = handle._scorers[0].__closure__[0].cell_contents
        bridge._proc.kill()
        bridge._proc.wait()
        try:
            handle.evaluate(molgraph.parse_smiles("CCN"))
            kill_ok = False
        except BridgeFailure:
            kill_ok = True
        record_ok = len(handle.record.entries) == entries_before
        # the failure is retryable: the next call restarts the child
        retry = handle.evaluate(molgraph.parse_smiles("CCN"))
        retry_ok = retry.raw == (0.0,)
    elapsed = time.time() - start
    report("bridge conformance: 10000 lossless echo ids, bit-for-bit "
           "scoring, retryable kill mid-run",
           ids_ok and bit_ok and kill_ok and record_ok and retry_ok
           and elapsed < 120, f"{elapsed:.1f}s")
