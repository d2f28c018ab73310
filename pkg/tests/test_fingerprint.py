import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from molevo import molgraph
from molevo.fingerprint import (Fingerprint, morgan_fingerprint, tanimoto,
                                tanimoto_distance)

from conftest import DRUG_SMILES


def fp(smiles, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return morgan_fingerprint(molgraph.parse_smiles(smiles), **kw)


class TestMorgan:
    def test_identical_molecules_identical_bits(self):
        assert fp("CCO") == fp("CCO")

    def test_atom_order_does_not_matter(self):
        assert fp("OCC") == fp("CCO")
        assert fp("c1ccccc1O") == fp("Oc1ccccc1")

    def test_different_molecules_differ(self):
        assert fp("CCO") != fp("CCN")

    def test_width_parameter_respected(self):
        f = fp("CCO", nbits=512)
        assert f.nbits == 512
        assert f.bits < (1 << 512)

    def test_radius_zero_sees_only_atom_types(self):
        # Same multiset of atom environments at radius 0, different at 2.
        a = fp("CCCCO", radius=0)
        b = fp("CC(C)CO", radius=0)
        assert tanimoto(a, b) > tanimoto(fp("CCCCO"), fp("CC(C)CO"))


class TestTanimoto:
    def test_self_similarity_is_one(self):
        f = fp("CC(=O)Nc1ccc(O)cc1")
        assert tanimoto(f, f) == 1.0

    def test_empty_intersection_of_empty_sets_is_one(self):
        a = Fingerprint(0, 2048, 2)
        b = Fingerprint(0, 2048, 2)
        assert tanimoto(a, b) == 1.0

    def test_width_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tanimoto(fp("CCO", nbits=512), fp("CCO", nbits=1024))

    def test_symmetry_and_range(self):
        rng = random.Random(9)
        fps = [fp(s) for s in DRUG_SMILES]
        for _ in range(100):
            a, b = rng.choice(fps), rng.choice(fps)
            s = tanimoto(a, b)
            assert s == tanimoto(b, a)
            assert 0.0 <= s <= 1.0

    def test_distance_complements_similarity(self):
        a, b = fp("CCO"), fp("CCCCCCCC")
        assert tanimoto_distance(a, b) == pytest.approx(1.0 - tanimoto(a, b))


@given(st.integers(min_value=0, max_value=(1 << 64) - 1),
       st.integers(min_value=0, max_value=(1 << 64) - 1))
@settings(max_examples=200, deadline=None)
def test_tanimoto_matches_set_arithmetic(xa, xb):
    a = Fingerprint(xa, 64, 2)
    b = Fingerprint(xb, 64, 2)
    sa = {i for i in range(64) if xa >> i & 1}
    sb = {i for i in range(64) if xb >> i & 1}
    if not sa and not sb:
        expected = 1.0
    else:
        expected = len(sa & sb) / len(sa | sb)
    assert tanimoto(a, b) == pytest.approx(expected)
