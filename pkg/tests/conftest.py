import random
import warnings

import pytest

from molevo import molgraph, selfies_codec

# Hand-picked real-world structures covering aromatics, fused rings,
# heteroaromatics, charges, branching and halogens.
DRUG_SMILES = [
    "CCO",
    "CC(=O)O",
    "c1ccccc1",
    "C1=CC=CC=C1",
    "c1ccncc1",
    "c1cc[nH]c1",
    "c1ccoc1",
    "c1ccsc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CC(=O)Nc1ccc(O)cc1",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccc2ccccc2c1",
    "c1ccc2[nH]ccc2c1",
    "OCC1OC(O)C(O)C(O)C1O",
    "C1CCCCC1",
    "C1CCOC1",
    "N#Cc1ccccc1",
    "O=S(=O)(N)c1ccccc1",
    "FC(F)(F)c1ccccc1",
    "Clc1ccccc1Cl",
    "BrCCBr",
    "CC[N+](C)(C)C",
    "[O-]C(=O)c1ccccc1",
    "C(=O)(O)CN",
    "OC(=O)C(N)Cc1ccccc1",
    "CSCCC(N)C(=O)O",
    "NC(=O)c1ccccc1",
    "COc1ccccc1OC",
    "CN1CCC(CC1)O",
]

_TOKEN_POOL = (["[C]"] * 8 + ["[=C]"] * 2 + ["[N]"] * 2 +
               ["[=N]", "[O]", "[O]", "[=O]", "[S]", "[F]", "[Cl]", "[Br]",
                "[Branch1]", "[Branch1]", "[=Branch1]", "[Branch2]",
                "[Ring1]", "[Ring1]", "[Ring2]", "[#C]", "[P]"])


def random_valid_smiles(count, seed, min_atoms=4, max_atoms=40):
    """Generate distinct canonical SMILES from random decoder strings."""
    rng = random.Random(seed)
    seen = set()
    out = []
    while len(out) < count:
        tokens = "".join(rng.choice(_TOKEN_POOL)
                         for _ in range(rng.randint(8, 32)))
        mol = selfies_codec.decode_selfies(tokens)
        if not (min_atoms <= mol.num_atoms() <= max_atoms):
            continue
        if not molgraph.validate(mol).ok:
            continue
        smi = molgraph.write_smiles(mol)
        if smi in seen:
            continue
        seen.add(smi)
        out.append(smi)
    return out


@pytest.fixture(scope="session")
def corpus():
    """1,000 distinct valid molecules: real structures plus generated ones."""
    out = list(DRUG_SMILES)
    out.extend(random_valid_smiles(1000 - len(out), seed=977))
    return out


@pytest.fixture(scope="session")
def corpus_mols(corpus):
    mols = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for smi in corpus:
            mols.append(molgraph.parse_smiles(smi))
    return mols


@pytest.fixture(scope="session")
def pool_path():
    import os

    import molevo

    return os.path.join(os.path.dirname(molevo.__file__), "data",
                        "seed_pool.smi")
