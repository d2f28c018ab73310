import random
import warnings

import pytest

from molevo import molgraph
from molevo.genetic_ops import (MUTATION_KINDS, MutationTable, crossover,
                                derive_rng, mutate, sample_parents)
from molevo.records import Individual, ScoreVector

from conftest import DRUG_SMILES


def mol(smiles):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return molgraph.parse_smiles(smiles)


def scored(smiles, fitness):
    m = mol(smiles)
    sv = ScoreVector((fitness,), (fitness,), fitness)
    return Individual(m, molgraph.write_smiles(m), scores=sv)


class TestRngDerivation:
    def test_same_path_same_stream(self):
        a = derive_rng(7, 3, 1, "x")
        b = derive_rng(7, 3, 1, "x")
        assert [a.random() for _ in range(5)] == [b.random() for _ in range(5)]

    def test_different_paths_diverge(self):
        a = derive_rng(7, 3, 1, "x")
        b = derive_rng(7, 3, 2, "x")
        assert a.random() != b.random()


class TestParentSampling:
    def test_singleton_population_pairs_with_itself(self):
        pop = [scored("CCO", 0.5)]
        a, b = sample_parents(pop, random.Random(0))
        assert a is b is pop[0]

    def test_distinct_parents_when_possible(self):
        pop = [scored("CCO", 0.5), scored("CCN", 0.4), scored("CCC", 0.3)]
        rng = random.Random(1)
        for _ in range(50):
            a, b = sample_parents(pop, rng)
            assert a is not b

    def test_fitter_individuals_drawn_more_often(self):
        pop = [scored("CCO", 0.9), scored("CCN", 0.1)]
        rng = random.Random(2)
        counts = {0: 0, 1: 0}
        for _ in range(2000):
            a, _ = sample_parents(pop, rng)
            counts[pop.index(a)] += 1
        assert counts[0] > counts[1] * 3

    def test_negative_fitness_handled(self):
        pop = [scored("CCO", -2.0), scored("CCN", -1.0)]
        a, b = sample_parents(pop, random.Random(3))
        assert {a.smiles, b.smiles} <= {p.smiles for p in pop}


class TestCrossover:
    def test_seeded_call_is_deterministic(self):
        a, b = mol("CC(=O)Nc1ccc(O)cc1"), mol("CC(C)Cc1ccc(cc1)C(C)C(=O)O")
        c1 = crossover(a, b, derive_rng(42, "t"))
        c2 = crossover(a, b, derive_rng(42, "t"))
        assert (c1 is None) == (c2 is None)
        if c1 is not None:
            assert molgraph.write_smiles(c1) == molgraph.write_smiles(c2)

    def test_outputs_are_valid(self):
        rng = random.Random(6)
        parents = [mol(s) for s in DRUG_SMILES]
        produced = 0
        for i in range(500):
            a, b = rng.choice(parents), rng.choice(parents)
            child = crossover(a, b, rng)
            if child is not None:
                produced += 1
                assert molgraph.validate(child).ok
        assert produced > 350

    def test_ring_and_chain_modes_roughly_balanced(self):
        rng = random.Random(7)
        stats = {}
        a, b = mol("c1ccccc1CCCC"), mol("C1CCCCC1CCO")
        for _ in range(2000):
            crossover(a, b, rng, stats)
        total = stats.get("ring", 0) + stats.get("chain", 0)
        assert abs(stats.get("ring", 0) / total - 0.5) < 0.05


class TestMutation:
    def test_single_atom_delete_returns_absent(self):
        table = MutationTable({"atom_delete": 1.0})
        assert mutate(mol("C"), table, random.Random(0)) is None

    def test_atom_change_on_methane_gives_heteroatom(self):
        table = MutationTable({"atom_change": 1.0})
        child = mutate(mol("C"), table, random.Random(1))
        assert child is not None
        assert child.num_atoms() == 1
        assert child.atoms[0].element != "C"

    def test_mutations_preserve_validity(self):
        rng = random.Random(8)
        table = MutationTable()
        parents = [mol(s) for s in DRUG_SMILES]
        produced = 0
        for i in range(1000):
            child = mutate(rng.choice(parents), table, rng)
            if child is not None:
                produced += 1
                assert molgraph.validate(child).ok
        assert produced > 800

    def test_table_validation(self):
        with pytest.raises(ValueError):
            MutationTable({"atom_insert": 0.5})
        with pytest.raises(ValueError):
            MutationTable({"not_a_kind": 1.0})
        assert set(MutationTable().probabilities) == set(MUTATION_KINDS)

    def test_custom_table_only_draws_listed_kinds(self):
        rng = random.Random(9)
        stats = {}
        table = MutationTable({"atom_insert": 1.0})
        for _ in range(100):
            mutate(mol("CCO"), table, rng, stats)
        assert set(stats) <= {"atom_insert"}
